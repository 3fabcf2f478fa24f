//! Field dumps: anything accepted must survive a write/read round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use voxfp::DensityField;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(field) = DensityField::parse_csv(text) {
        let again = DensityField::parse_csv(&field.to_csv_string()).expect("own output parses");
        assert_eq!(field.values(), again.values());
        assert_eq!(field.grid(), again.grid());
    }
});

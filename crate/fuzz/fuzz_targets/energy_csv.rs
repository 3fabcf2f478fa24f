//! Energy tables with or without a label column.

#![no_main]

use libfuzzer_sys::fuzz_target;
use voxfp::analysis::{fit_decay_rate, EnergyTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = EnergyTable::parse_csv(text) {
        let again = EnergyTable::parse_csv(&table.to_csv_string()).expect("own output parses");
        assert_eq!(table.rows.len(), again.rows.len());
        for label in table.labels() {
            let _ = fit_decay_rate(&table.curve(label), None);
        }
    }
});

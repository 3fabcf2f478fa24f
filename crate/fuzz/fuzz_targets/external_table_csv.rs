//! Tabulated external potentials in the field dump layout.

#![no_main]

use libfuzzer_sys::fuzz_target;
use voxfp::ExternalPotential;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = ExternalPotential::parse_csv(text) {
        let x = [0.25, -0.25];
        let mut g = [0.0; 2];
        assert!(v.value(&x).is_finite());
        v.gradient(&x, &mut g);
        assert!(g.iter().all(|c| c.is_finite()));
    }
});

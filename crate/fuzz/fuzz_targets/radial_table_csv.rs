//! Tabulated pair potentials, including the excluded-volume integral that
//! consumes them.

#![no_main]

use libfuzzer_sys::fuzz_target;
use voxfp::potentials::RadialTable;
use voxfp::{InteractionKind, InteractionPotential};

fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let far_exponent = 2.0 + f64::from(data[0] % 8);
    let Ok(text) = std::str::from_utf8(&data[1..]) else {
        return;
    };
    if let Ok(table) = RadialTable::parse_csv(text, far_exponent) {
        if let Ok(pot) = InteractionPotential::new(InteractionKind::Tabulated(table), 0.01) {
            for d in 1..=3 {
                if let Ok(a) = pot.alpha_u(d) {
                    assert!(a.value.is_finite());
                }
            }
        }
    }
});

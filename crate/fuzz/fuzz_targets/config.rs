//! Config documents: parsing either fails cleanly or yields a config whose
//! derived quantities can be built.

#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use voxfp::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // No file references resolve under this base.
    if let Ok(cfg) = Config::parse(text, Path::new("/nonexistent-fuzz-base")) {
        let _ = cfg.grid();
        let _ = cfg.histogram_grid();
        let _ = cfg.model();
        assert!(cfg.output_times.windows(2).all(|w| w[0] < w[1]));
    }
});

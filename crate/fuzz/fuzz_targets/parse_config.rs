#![no_main]

use libfuzzer_sys::fuzz_target;
use stacklab::{ExperimentConfig, Overrides};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Validation only; nothing is run.
    let _ = ExperimentConfig::from_json_str(text, &Overrides::default());
});

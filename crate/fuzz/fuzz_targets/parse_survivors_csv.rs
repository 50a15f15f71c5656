#![no_main]

use libfuzzer_sys::fuzz_target;
use stacklab_core::spectral::{parse_survivors_csv, survivors_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(arcs) = parse_survivors_csv(text) {
        let again = parse_survivors_csv(&survivors_to_csv(&arcs)).unwrap();
        assert_eq!(again.len(), arcs.len());
    }
});

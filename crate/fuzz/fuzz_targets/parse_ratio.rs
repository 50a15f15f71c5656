#![no_main]

use libfuzzer_sys::fuzz_target;
use stacklab_core::rational::{format_ratio, parse_ratio};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(value) = parse_ratio(text) {
        // Lowest-terms output parses back to the same value.
        assert_eq!(parse_ratio(&format_ratio(&value)).unwrap(), value);
    }
});

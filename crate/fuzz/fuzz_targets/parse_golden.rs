#![no_main]

use libfuzzer_sys::fuzz_target;
use stacklab_core::ensemble::parse_golden;
use stacklab_core::OmegaDraw;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = parse_golden(text) {
        let draw = OmegaDraw { seed: 0, x };
        assert_eq!(parse_golden(&draw.to_golden()).unwrap(), draw.x);
    }
});

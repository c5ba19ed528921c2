#![no_main]

use helewave_core::harness::CurveSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = text.parse::<CurveSpec>() {
        let shown = spec.to_string();
        let again: CurveSpec = shown.parse().expect("re-parse of displayed curve spec");
        assert_eq!(again.to_string(), shown);
    }
});

#![no_main]

use helewave_core::harness::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        // Anything that parses must survive a write/read cycle unchanged.
        // Compare text, not values: NaN fields are legal until validation.
        let text = config.to_toml();
        let again = parse_config(&text).expect("re-parse of serialized config");
        assert_eq!(text, again.to_toml());
        let _ = config.validate();
    }
});

#![no_main]

use helewave_core::netparam::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = Checkpoint::from_json(text) {
        let again = Checkpoint::from_json(&ck.to_json()).expect("re-parse of serialized checkpoint");
        assert_eq!(ck.to_json(), again.to_json());
    }
});

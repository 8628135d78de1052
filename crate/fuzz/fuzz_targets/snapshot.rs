#![no_main]

use libfuzzer_sys::fuzz_target;
use slda::snapshot::{format_snapshot, parse_snapshot};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_snapshot(text) {
        let back = parse_snapshot(&format_snapshot(&s.params, s.recog.as_ref())).expect("snapshot round trip");
        assert_eq!(back, s);
    }
});

#![no_main]

use libfuzzer_sys::fuzz_target;
use slda::corpus::parse_vocabulary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(v) = parse_vocabulary(text) {
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
    }
});

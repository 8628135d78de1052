#![no_main]

use libfuzzer_sys::fuzz_target;
use slda::corpus::{format_document, parse_document_line, parse_documents};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse_documents(text, 64);
    if let Some(first) = text.lines().next() {
        if let Ok(doc) = parse_document_line(first, 64, 1) {
            let again = parse_document_line(&format_document(&doc), 64, 1).expect("formatted line parses");
            assert_eq!(again, doc);
        }
    }
});

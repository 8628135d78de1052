#![no_main]

use libfuzzer_sys::fuzz_target;
use slda::config::ConfigFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(c) = ConfigFile::parse(text) {
        let _ = c.get_parsed::<f64>("learn_rate");
        let _ = c.get_parsed::<usize>("sweeps");
    }
});

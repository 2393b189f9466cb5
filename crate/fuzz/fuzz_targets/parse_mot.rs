#![no_main]

use distilltrack::io::mot::{parse_mot, write_mot};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(frames) = parse_mot(text) {
        let again = parse_mot(&write_mot(&frames)).expect("written rows parse");
        assert_eq!(again.len(), frames.len());
    }
});

#![no_main]

use distilltrack::io::augmented::{read_text, write_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ds) = read_text(text) {
        let out = write_text(&ds).expect("write");
        assert_eq!(read_text(&out).expect("reparse"), ds);
    }
});

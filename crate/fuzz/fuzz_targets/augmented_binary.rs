#![no_main]

use distilltrack::io::augmented::{read_binary, write_binary};
use libfuzzer_sys::fuzz_target;

// read(write(x)) must reproduce x for anything the reader accepts
fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_binary(data) {
        let bytes = write_binary(&ds).expect("write");
        assert_eq!(read_binary(&bytes).expect("reparse"), ds);
    }
});

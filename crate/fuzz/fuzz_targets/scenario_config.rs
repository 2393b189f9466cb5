#![no_main]

use distilltrack::io::scenario::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::parse(text) {
        ScenarioConfig::parse(&cfg.to_text()).expect("written config parses");
    }
});

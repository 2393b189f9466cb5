use std::path::PathBuf;

use distilltrack::io::augmented::{read_binary, read_text, write_binary, write_text};
use distilltrack::io::config::RunConfig;
use distilltrack::io::mot::{parse_mot, write_mot};
use distilltrack::io::scenario::ScenarioConfig;
use proptest::prelude::*;

fn check(target: &str, data: &[u8]) {
    if target == "augmented_binary" {
        if let Ok(ds) = read_binary(data) {
            assert_eq!(read_binary(&write_binary(&ds).unwrap()).unwrap(), ds);
        }
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match target {
        "parse_mot" => {
            if let Ok(frames) = parse_mot(text) {
                assert_eq!(parse_mot(&write_mot(&frames)).unwrap().len(), frames.len());
            }
        }
        "augmented_text" => {
            if let Ok(ds) = read_text(text) {
                assert_eq!(read_text(&write_text(&ds).unwrap()).unwrap(), ds);
            }
        }
        "run_config" => {
            if let Ok(cfg) = RunConfig::parse(text) {
                RunConfig::parse(&cfg.to_text()).unwrap();
            }
        }
        "scenario_config" => {
            if let Ok(cfg) = ScenarioConfig::parse(text) {
                ScenarioConfig::parse(&cfg.to_text()).unwrap();
            }
        }
        other => panic!("unknown target {other}"),
    }
}

fn seeds() -> Vec<(String, Vec<u8>)> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut out = Vec::new();
    for dir in std::fs::read_dir(root).unwrap() {
        let dir = dir.unwrap();
        let target = dir.file_name().to_string_lossy().into_owned();
        for f in std::fs::read_dir(dir.path()).unwrap() {
            out.push((target.clone(), std::fs::read(f.unwrap().path()).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn corpus_seeds_replay() {
    let all = seeds();
    assert!(all.len() >= 10);
    for (target, data) in &all {
        check(target, data);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_seeds_never_panic(pick in any::<prop::sample::Index>(), edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>(), 0u8..3), 1..8)) {
        let all = seeds();
        let (target, mut data) = all[pick.index(all.len())].clone();
        for (at, byte, op) in edits {
            if data.is_empty() {
                data.push(byte);
                continue;
            }
            let i = at.index(data.len());
            match op {
                0 => data[i] = byte,
                1 => data.insert(i, byte),
                _ => {
                    data.remove(i);
                }
            }
        }
        check(&target, &data);
    }
}

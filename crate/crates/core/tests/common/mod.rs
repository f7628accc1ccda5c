#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use d2t_core::corpus::Corpus;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn synthetic() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| Corpus::read_jsonl(&fixture("synthetic.jsonl")).unwrap())
}

pub fn sample() -> &'static Corpus {
    static C: OnceLock<Corpus> = OnceLock::new();
    C.get_or_init(|| Corpus::read_jsonl(&fixture("sample.jsonl")).unwrap())
}

pub fn strings(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

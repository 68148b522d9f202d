#![allow(dead_code)]

pub mod mock;

use std::path::PathBuf;

use timeline_eval::annotation::{load_corpus, DocumentRecord};

pub fn fixture_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn corpus() -> Vec<DocumentRecord> {
    load_corpus(&fixture_root().join("corpus")).expect("fixture corpus loads")
}

pub fn doc(id: &str) -> DocumentRecord {
    corpus()
        .into_iter()
        .find(|d| d.id == id)
        .expect("fixture document")
}

#![allow(dead_code)]

use std::path::PathBuf;

use geodata::doc_model::parse_structured_xml;
use geodata::fsutil::{file_stem, list_files};
use geodata::StructuredDocument;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// The generated corpus, parsed, with doc ids defaulted to file stems.
pub fn corpus_docs() -> Vec<(String, StructuredDocument)> {
    let dir = fixtures().join("corpus/tei");
    list_files(&dir, "xml")
        .unwrap()
        .into_iter()
        .map(|p| {
            let xml = std::fs::read_to_string(&p).unwrap();
            (file_stem(&p), parse_structured_xml(&xml).unwrap().document)
        })
        .collect()
}

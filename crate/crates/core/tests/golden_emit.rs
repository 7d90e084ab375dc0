mod common;

use std::fs;

use geodata::doc_model::{parse_structured_xml, validate_document};
use geodata::fsutil::{file_stem, list_files};
use geodata::md_emitter::{emit_markdown, scan_spans, SpanSidecar, SpecialKind};

use common::{corpus_docs, fixtures};

#[test]
fn golden_files_match() {
    let dir = fixtures().join("golden");
    let files = list_files(&dir, "xml").unwrap();
    assert_eq!(files.len(), 3);
    for path in files {
        let ing = parse_structured_xml(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(ing.report.reconciles(), "{}", path.display());
        let e = emit_markdown(&ing.document).unwrap();
        let expected = fs::read_to_string(dir.join(format!("{}.expected.md", file_stem(&path)))).unwrap();
        assert_eq!(e.output.text, expected, "{}", path.display());
    }
}

#[test]
fn corpus_tokens_balance_and_sidecars_validate() {
    let docs = corpus_docs();
    assert_eq!(docs.len(), 50);
    for (stem, doc) in &docs {
        assert!(validate_document(doc).is_empty(), "{stem}");
        let e = emit_markdown(doc).unwrap();
        let text = &e.output.text;
        for kind in SpecialKind::ALL {
            let opens = text.matches(kind.start_token()).count();
            let closes = text.matches(kind.end_token()).count();
            assert_eq!(opens, closes, "{stem} {kind:?}");
        }
        // Figures contribute their captions, never the image reference.
        assert!(!text.contains("figures/"), "{stem}");
        let captioned = doc.figures.iter().filter(|f| !f.caption_missing).count();
        assert_eq!(text.matches(SpecialKind::Figure.start_token()).count(), captioned, "{stem}");
        for f in doc.figures.iter().filter(|f| !f.caption_missing) {
            let wrapped = format!("{}{}{}", SpecialKind::Figure.start_token(), f.caption, SpecialKind::Figure.end_token());
            assert!(text.contains(&wrapped), "{stem}");
        }
        let sidecar = SpanSidecar::new(&doc.doc_id, &e);
        let json = serde_json::to_string(&sidecar).unwrap();
        let back: SpanSidecar = serde_json::from_str(&json).unwrap();
        back.validate(text).unwrap();
        assert_eq!(scan_spans(text).unwrap(), e.output.spans, "{stem}");
    }
}

#[test]
fn sidecar_rejects_edited_text() {
    let (_, doc) = corpus_docs().swap_remove(0);
    let e = emit_markdown(&doc).unwrap();
    let sidecar = SpanSidecar::new(&doc.doc_id, &e);
    let mut edited = e.output.text.clone();
    edited.insert(0, ' ');
    assert!(sidecar.validate(&edited).is_err());
}

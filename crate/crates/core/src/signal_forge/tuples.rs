//! Signal tuples built from documents, caption pairs and encyclopedia pages.

use serde::{Deserialize, Serialize};

use super::SignalTuple;
use crate::caption_linker::{CaptionPair, SentenceSplitter};
use crate::doc_model::{ObjectKind, StructuredDocument};

/// Family of the (full text, abstract) tuple. The bundled bank has no
/// template for it, so these tuples are kept as raw signals.
pub const WIKI_SUMMARY_FAMILY: &str = "gso.wikipedia.summary";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiSectionTriple {
    pub level: u32,
    pub title: String,
    pub paragraph: String,
}

/// One title tuple per section plus one summary tuple whose input is the
/// section paragraphs joined by blank lines, in page order.
pub fn wiki_sections_to_tuples(page_title: &str, triples: &[WikiSectionTriple], abstract_text: &str) -> Vec<SignalTuple> {
    let provenance = format!("wikipedia:{page_title}");
    let mut out: Vec<SignalTuple> = triples
        .iter()
        .map(|t| {
            SignalTuple::new(
                "gso.wikipedia.title",
                [
                    ("title", t.title.as_str()),
                    ("keyword", page_title),
                    ("paragraph", t.paragraph.as_str()),
                ],
                &provenance,
            )
        })
        .collect();
    let fulltext = triples
        .iter()
        .map(|t| t.paragraph.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let mut summary = SignalTuple::new(
        WIKI_SUMMARY_FAMILY,
        [("input", fulltext.as_str()), ("output", abstract_text)],
        &provenance,
    );
    summary.allow_empty = fulltext.is_empty();
    out.push(summary);
    out
}

/// Figure pairs feed gakg.illustration and table pairs gakg.table; the
/// counterpart is the prompt input and the caption the answer.
pub fn caption_pair_tuple(pair: &CaptionPair) -> SignalTuple {
    let family = match pair.kind {
        ObjectKind::Figure => "gakg.illustration",
        ObjectKind::Table => "gakg.table",
    };
    SignalTuple::new(
        family,
        [("input", pair.counterpart.as_str()), ("output", pair.caption.as_str())],
        &format!("{}:{}:{}", pair.doc_id, pair.kind.as_str(), pair.index),
    )
}

/// deepliterature.reference.resolution tuples: the sentence around each
/// resolved citation paired with the cited entry's reference string.
/// Unresolved anchors are skipped.
pub fn citation_tuples(doc: &StructuredDocument) -> Vec<SignalTuple> {
    let splitter = SentenceSplitter::default();
    let mut out = Vec::new();
    for p in doc.paragraphs() {
        if p.anchors.is_empty() {
            continue;
        }
        let sentences = splitter.split(&p.text);
        for a in &p.anchors {
            let Some(entry) = a.anchor.bib_key.as_deref().and_then(|k| doc.bib_entry(k)) else {
                continue;
            };
            let reference = if entry.raw.trim().is_empty() { &entry.title } else { &entry.raw };
            let Some(s) = sentences.iter().find(|s| s.start <= a.start && a.end <= s.end) else {
                continue;
            };
            if reference.trim().is_empty() {
                continue;
            }
            out.push(SignalTuple::new(
                "deepliterature.reference.resolution",
                [("input", s.text.as_str()), ("output", reference.as_str())],
                &format!("{}:{}", doc.doc_id, entry.key),
            ));
        }
    }
    out
}

//! Caption/referring-sentence linking.
//!
//! A mention is a figure or table keyword followed, after at most three
//! whitespace or punctuation characters, by a number. The whole digit run is
//! the mentioned number, so searching for figure 1 never matches `Fig11`.
//! Mentions pointing past the document's object count, or followed closely by
//! the word "of", are treated as references to another paper.

mod sentences;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::doc_model::{ObjectKind, ObjectRef, StructuredDocument};
use crate::md_emitter::table_to_markdown;

pub use sentences::{split_sentences, Sentence, SentenceSplitter, DEFAULT_ABBREVIATIONS};

/// Separator used when joining paragraphs into one stream.
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

/// Maximum whitespace/punctuation characters between keyword and number.
pub const MAX_KEYWORD_GAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkerConfig {
    /// Number of tokens after the keyword searched for "of".
    pub of_window: usize,
    pub min_counterpart_len: usize,
    /// Also accept "Figure", "Figs", "Tab." and plural forms.
    pub extended_keywords: bool,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            of_window: 3,
            min_counterpart_len: 20,
            extended_keywords: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Internal,
    External,
    AmbiguousDiscarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalReason {
    /// The number exceeds the document's object count.
    ExceedsCount,
    /// "of" follows the keyword within the configured window.
    OfProximity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefMatch {
    pub kind: ObjectKind,
    pub index: u32,
    pub sentence: Sentence,
    pub classification: Classification,
    pub reason: Option<ExternalReason>,
    /// True when the keyword closed one sentence and the number opened the
    /// next, so both sentences form the referring text.
    pub spans_two_sentences: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    CaptionReferringSentence,
    CaptionContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub doc_id: String,
    pub kind: ObjectKind,
    pub index: u32,
    pub pair_kind: PairKind,
    pub caption: String,
    pub counterpart: String,
}

fn keyword_alternation(kind: ObjectKind, extended: bool) -> &'static str {
    match (kind, extended) {
        (ObjectKind::Figure, false) => "fig|Fig|FIG",
        (ObjectKind::Table, false) => "table|Table|TABLE",
        (ObjectKind::Figure, true) => {
            "Figures|figures|FIGURES|Figure|figure|FIGURE|Figs|figs|FIGS|fig|Fig|FIG"
        }
        (ObjectKind::Table, true) => "Tables|tables|TABLES|table|Table|TABLE|Tabs|tabs|Tab|tab|TAB",
    }
}

struct Patterns {
    /// keyword ... number within one sentence
    inline: Regex,
    /// keyword as the last word of a sentence
    tail: Regex,
    /// number at the start of a sentence
    head: Regex,
}

fn patterns(kind: ObjectKind, extended: bool) -> &'static Patterns {
    static CACHE: OnceLock<[Patterns; 4]> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        let build = |k, e| {
            let kw = keyword_alternation(k, e);
            Patterns {
                inline: Regex::new(&format!(
                    r"(?:^|[^A-Za-z])({kw})(?:[\s\p{{P}}]{{0,{MAX_KEYWORD_GAP}}})(\d+)"
                ))
                .unwrap(),
                tail: Regex::new(&format!(r"(?:^|[^A-Za-z])({kw})([\s\p{{P}}]*)$")).unwrap(),
                head: Regex::new(r"^(\d+)").unwrap(),
            }
        };
        [
            build(ObjectKind::Figure, false),
            build(ObjectKind::Table, false),
            build(ObjectKind::Figure, true),
            build(ObjectKind::Table, true),
        ]
    });
    let i = match (kind, extended) {
        (ObjectKind::Figure, false) => 0,
        (ObjectKind::Table, false) => 1,
        (ObjectKind::Figure, true) => 2,
        (ObjectKind::Table, true) => 3,
    };
    &all[i]
}

fn is_garbled(s: &str) -> bool {
    s.chars()
        .any(|c| c == '\u{FFFD}' || (c.is_control() && !matches!(c, '\n' | '\r' | '\t')))
}

fn of_follows(after_keyword: &str, window: usize) -> bool {
    after_keyword
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(window)
        .any(|w| w.eq_ignore_ascii_case("of"))
}

fn classify(
    number: u64,
    total_count: u32,
    after_keyword: &str,
    referring: &str,
    config: &LinkerConfig,
) -> (Classification, Option<ExternalReason>) {
    if number > u64::from(total_count) {
        (Classification::External, Some(ExternalReason::ExceedsCount))
    } else if of_follows(after_keyword, config.of_window) {
        (Classification::External, Some(ExternalReason::OfProximity))
    } else if is_garbled(referring) {
        (Classification::AmbiguousDiscarded, None)
    } else {
        (Classification::Internal, None)
    }
}

/// Every keyword-number mention of `kind`, classified, in text order.
pub fn classify_mentions(
    sentences: &[Sentence],
    kind: ObjectKind,
    total_count: u32,
    config: &LinkerConfig,
) -> Vec<RefMatch> {
    let pats = patterns(kind, config.extended_keywords);
    let mut out = Vec::new();
    for (si, s) in sentences.iter().enumerate() {
        for caps in pats.inline.captures_iter(&s.text) {
            let kw = caps.get(1).unwrap();
            let num = caps.get(2).unwrap();
            let number: u64 = num.as_str().parse().unwrap_or(u64::MAX);
            let (classification, reason) =
                classify(number, total_count, &s.text[kw.end()..], &s.text, config);
            out.push(RefMatch {
                kind,
                index: u32::try_from(number).unwrap_or(u32::MAX),
                sentence: s.clone(),
                classification,
                reason,
                spans_two_sentences: false,
            });
        }
        // Keyword closing this sentence with the number opening the next.
        let Some(next) = sentences.get(si + 1) else {
            continue;
        };
        let Some(tail) = pats.tail.captures(&s.text) else {
            continue;
        };
        let Some(head) = pats.head.captures(&next.text) else {
            continue;
        };
        let gap = tail.get(2).unwrap().as_str().chars().count()
            + next.start.saturating_sub(s.end);
        if gap > MAX_KEYWORD_GAP {
            continue;
        }
        let number: u64 = head[1].parse().unwrap_or(u64::MAX);
        let joined = Sentence {
            text: format!("{} {}", s.text, next.text),
            start: s.start,
            end: next.end,
        };
        let (classification, reason) =
            classify(number, total_count, &next.text, &joined.text, config);
        out.push(RefMatch {
            kind,
            index: u32::try_from(number).unwrap_or(u32::MAX),
            sentence: joined,
            classification,
            reason,
            spans_two_sentences: true,
        });
    }
    out
}

/// Mentions of object `index` of `kind`.
pub fn find_referring_sentences(
    sentences: &[Sentence],
    kind: ObjectKind,
    index: u32,
    total_count: u32,
    config: &LinkerConfig,
) -> Vec<RefMatch> {
    classify_mentions(sentences, kind, total_count, config)
        .into_iter()
        .filter(|m| m.index == index)
        .collect()
}

/// Paragraph texts joined by [`PARAGRAPH_SEPARATOR`].
pub fn paragraph_stream(doc: &StructuredDocument) -> String {
    doc.paragraphs()
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join(PARAGRAPH_SEPARATOR)
}

/// Sentences of the paragraph stream. Paragraph ends are always sentence
/// boundaries; offsets refer to [`paragraph_stream`].
pub fn stream_sentences(doc: &StructuredDocument) -> Vec<Sentence> {
    let splitter = SentenceSplitter::default();
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, p) in doc.paragraphs().enumerate() {
        if i > 0 {
            offset += PARAGRAPH_SEPARATOR.len();
        }
        out.extend(splitter.split(&p.text).into_iter().map(|mut s| {
            s.start += offset;
            s.end += offset;
            s
        }));
        offset += p.text.len();
    }
    out
}

fn counterpart_ok(s: &str, min_len: usize) -> bool {
    !s.trim().is_empty() && s.chars().count() >= min_len && !is_garbled(s)
}

/// Caption pairs for every figure and table of `doc`: one per internal
/// referring sentence plus one caption-content pair, minus any whose
/// counterpart is garbled or shorter than `min_counterpart_len` characters.
pub fn link_captions(doc: &StructuredDocument, config: &LinkerConfig) -> Vec<CaptionPair> {
    let sentences = stream_sentences(doc);
    let mut pairs = Vec::new();
    let push = |pairs: &mut Vec<CaptionPair>, kind, index, pair_kind, caption: &str, counterpart: String| {
        if !counterpart_ok(&counterpart, config.min_counterpart_len) {
            return;
        }
        let dup = pairs.iter().any(|p: &CaptionPair| {
            p.kind == kind && p.index == index && p.pair_kind == pair_kind && p.counterpart == counterpart
        });
        if !dup {
            pairs.push(CaptionPair {
                doc_id: doc.doc_id.clone(),
                kind,
                index,
                pair_kind,
                caption: caption.to_string(),
                counterpart,
            });
        }
    };

    let fig_mentions = classify_mentions(&sentences, ObjectKind::Figure, doc.figures.len() as u32, config);
    for f in &doc.figures {
        if f.caption_missing || f.caption.is_empty() {
            continue;
        }
        for m in fig_mentions
            .iter()
            .filter(|m| m.index == f.index && m.classification == Classification::Internal)
        {
            push(
                &mut pairs,
                ObjectKind::Figure,
                f.index,
                PairKind::CaptionReferringSentence,
                &f.caption,
                m.sentence.text.clone(),
            );
        }
        if let Some(image) = &f.image_ref {
            push(
                &mut pairs,
                ObjectKind::Figure,
                f.index,
                PairKind::CaptionContent,
                &f.caption,
                image.clone(),
            );
        }
    }

    let tab_mentions = classify_mentions(&sentences, ObjectKind::Table, doc.tables.len() as u32, config);
    for t in &doc.tables {
        if t.caption.is_empty() {
            continue;
        }
        for m in tab_mentions
            .iter()
            .filter(|m| m.index == t.index && m.classification == Classification::Internal)
        {
            push(
                &mut pairs,
                ObjectKind::Table,
                t.index,
                PairKind::CaptionReferringSentence,
                &t.caption,
                m.sentence.text.clone(),
            );
        }
        if let Ok(md) = table_to_markdown(t) {
            push(
                &mut pairs,
                ObjectKind::Table,
                t.index,
                PairKind::CaptionContent,
                &t.caption,
                md,
            );
        }
    }
    pairs
}

/// Records internal figure/table mentions on each paragraph.
pub fn annotate_object_refs(doc: &mut StructuredDocument, config: &LinkerConfig) {
    let totals = [
        (ObjectKind::Figure, doc.figures.len() as u32),
        (ObjectKind::Table, doc.tables.len() as u32),
    ];
    let splitter = SentenceSplitter::default();
    for p in doc.paragraphs_mut() {
        let sentences = splitter.split(&p.text);
        let mut refs = Vec::new();
        for (kind, total) in totals {
            for m in classify_mentions(&sentences, kind, total, config) {
                let r = ObjectRef { kind, index: m.index };
                if m.classification == Classification::Internal && !refs.contains(&r) {
                    refs.push(r);
                }
            }
        }
        p.object_refs = refs;
    }
}

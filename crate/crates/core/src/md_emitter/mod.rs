//! Special-token Markdown emission.
//!
//! Figures keep only their captions, tables become pipe tables, citations are
//! replaced by the cited paper's title and formulas keep their source markup.
//! Each of these is fenced by a `[START_K]`/`[END_K]` token pair.
//!
//! Source text that happens to contain a token literal is neutralized by
//! inserting U+200B ZERO WIDTH SPACE right after the opening `[`, so that
//! `[START_REF]` in a paragraph is emitted as `[\u{200B}START_REF]`.

mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc_model::{
    validate_document, BibEntry, Block, CitationAnchor, Paragraph, StructuredDocument, Table,
    Violation,
};

pub use table::{escape_cell, read_markdown_table, table_to_markdown, TableError};

/// Marker inserted after `[` to break special-token literals in source text.
pub const TOKEN_BREAK: char = '\u{200B}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SpecialKind {
    Figure,
    Table,
    Ref,
    Formula,
}

impl SpecialKind {
    pub const ALL: [SpecialKind; 4] = [
        SpecialKind::Figure,
        SpecialKind::Table,
        SpecialKind::Ref,
        SpecialKind::Formula,
    ];

    pub fn start_token(self) -> &'static str {
        match self {
            SpecialKind::Figure => "[START_FIGURE]",
            SpecialKind::Table => "[START_TABLE]",
            SpecialKind::Ref => "[START_REF]",
            SpecialKind::Formula => "[START_FORMULA]",
        }
    }

    pub fn end_token(self) -> &'static str {
        match self {
            SpecialKind::Figure => "[END_FIGURE]",
            SpecialKind::Table => "[END_TABLE]",
            SpecialKind::Ref => "[END_REF]",
            SpecialKind::Formula => "[END_FORMULA]",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitError {
    #[error("payload for {kind:?} contains the special token {literal}")]
    ForgedToken { kind: SpecialKind, literal: &'static str },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("document fails validation: {0:?}")]
    Invalid(Vec<Violation>),
}

/// A byte range of [`SpecialTokenText::text`] covering one fenced segment,
/// tokens included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub kind: SpecialKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpecialTokenText {
    pub text: String,
    pub spans: Vec<Span>,
}

/// Recorded when a citation could not be replaced by a title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub surface: String,
    pub bib_key: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Emission {
    pub output: SpecialTokenText,
    pub fallbacks: Vec<FallbackEvent>,
}

/// The first special-token literal found in `s`, if any.
pub fn find_special_literal(s: &str) -> Option<&'static str> {
    SpecialKind::ALL
        .iter()
        .flat_map(|k| [k.start_token(), k.end_token()])
        .find(|lit| s.contains(lit))
}

/// Breaks every special-token literal in `s` with [`TOKEN_BREAK`].
pub fn escape_special_literals(s: &str) -> String {
    if find_special_literal(s).is_none() {
        return s.to_string();
    }
    let mut out = s.to_string();
    for k in SpecialKind::ALL {
        for lit in [k.start_token(), k.end_token()] {
            let broken = format!("[{TOKEN_BREAK}{}", &lit[1..]);
            out = out.replace(lit, &broken);
        }
    }
    out
}

pub fn wrap_segment(kind: SpecialKind, payload: &str) -> Result<String, EmitError> {
    if let Some(literal) = find_special_literal(payload) {
        return Err(EmitError::ForgedToken { kind, literal });
    }
    let mut s = String::with_capacity(payload.len() + 32);
    s.push_str(kind.start_token());
    s.push_str(payload);
    s.push_str(kind.end_token());
    Ok(s)
}

/// Replaces a citation anchor with the cited title, or with the anchor's
/// surface text plus a fallback event when no usable title exists.
///
/// Trailing periods are trimmed from titles.
pub fn resolve_citation(
    anchor: &CitationAnchor,
    bibliography: &[BibEntry],
) -> (String, Option<FallbackEvent>) {
    let entry = anchor
        .bib_key
        .as_deref()
        .and_then(|k| bibliography.iter().find(|b| b.key == k));
    let title = entry.map(|e| e.title.trim().trim_end_matches('.').trim_end());
    match title {
        Some(t) if !t.is_empty() => {
            let wrapped = wrap_segment(SpecialKind::Ref, &escape_special_literals(t))
                .expect("escaped payload has no token literals");
            (wrapped, None)
        }
        _ => {
            let reason = match (&anchor.bib_key, entry) {
                (None, _) => "anchor has no bibliography key",
                (Some(_), None) => "bibliography key not found",
                (Some(_), Some(_)) => "bibliography entry has no title",
            };
            let wrapped = wrap_segment(SpecialKind::Ref, &escape_special_literals(&anchor.surface))
                .expect("escaped payload has no token literals");
            let event = FallbackEvent {
                surface: anchor.surface.clone(),
                bib_key: anchor.bib_key.clone(),
                reason: reason.to_string(),
            };
            (wrapped, Some(event))
        }
    }
}

struct Writer {
    text: String,
    spans: Vec<Span>,
    fallbacks: Vec<FallbackEvent>,
}

impl Writer {
    fn block_break(&mut self) {
        if !self.text.is_empty() {
            self.text.push_str("\n\n");
        }
    }

    fn wrapped(&mut self, kind: SpecialKind, payload: &str) -> Result<(), EmitError> {
        let start = self.text.len();
        self.text.push_str(&wrap_segment(kind, payload)?);
        self.spans.push(Span {
            kind,
            start,
            end: self.text.len(),
        });
        Ok(())
    }

    fn paragraph(&mut self, p: &Paragraph, doc: &StructuredDocument) -> Result<(), EmitError> {
        enum Inline<'a> {
            Cite(&'a CitationAnchor),
            Formula(u32),
        }
        let mut marks: Vec<(usize, usize, Inline<'_>)> = p
            .anchors
            .iter()
            .map(|a| (a.start, a.end, Inline::Cite(&a.anchor)))
            .chain(
                p.inline_formulas
                    .iter()
                    .map(|f| (f.start, f.end, Inline::Formula(f.index))),
            )
            .collect();
        marks.sort_by_key(|m| (m.0, m.1));

        let mut cursor = 0;
        for (start, end, mark) in marks {
            self.text.push_str(&escape_special_literals(&p.text[cursor..start]));
            match mark {
                Inline::Cite(anchor) => {
                    let (s, fallback) = resolve_citation(anchor, &doc.bibliography);
                    let span_start = self.text.len();
                    self.text.push_str(&s);
                    self.spans.push(Span {
                        kind: SpecialKind::Ref,
                        start: span_start,
                        end: self.text.len(),
                    });
                    self.fallbacks.extend(fallback);
                }
                Inline::Formula(index) => {
                    let src = doc
                        .formulas
                        .iter()
                        .find(|f| f.index == index)
                        .map_or(&p.text[start..end], |f| f.source_text.as_str());
                    self.wrapped(SpecialKind::Formula, &escape_special_literals(src))?;
                }
            }
            cursor = end;
        }
        self.text.push_str(&escape_special_literals(&p.text[cursor..]));
        Ok(())
    }

    fn table(&mut self, t: &Table) -> Result<(), EmitError> {
        let caption = escape_special_literals(&t.caption);
        let payload = if t.grid.is_empty() {
            caption
        } else {
            let escaped = Table {
                grid: t
                    .grid
                    .iter()
                    .map(|r| r.iter().map(|c| escape_special_literals(c)).collect())
                    .collect(),
                ..t.clone()
            };
            let grid = table_to_markdown(&escaped)?;
            if caption.is_empty() {
                grid
            } else {
                format!("{caption}\n\n{grid}")
            }
        };
        self.wrapped(SpecialKind::Table, &payload)
    }

    fn block(&mut self, b: &Block, doc: &StructuredDocument) -> Result<(), EmitError> {
        match b {
            Block::Paragraph(p) => {
                if p.text.is_empty() {
                    return Ok(());
                }
                self.block_break();
                self.paragraph(p, doc)
            }
            Block::Figure { index } => {
                let Some(f) = doc.figures.iter().find(|f| f.index == *index) else {
                    return Ok(());
                };
                if f.caption_missing || f.caption.is_empty() {
                    return Ok(());
                }
                self.block_break();
                self.wrapped(SpecialKind::Figure, &escape_special_literals(&f.caption))
            }
            Block::Table { index } => {
                let Some(t) = doc.tables.iter().find(|t| t.index == *index) else {
                    return Ok(());
                };
                if t.grid.is_empty() && t.caption.is_empty() {
                    return Ok(());
                }
                self.block_break();
                self.table(t)
            }
            Block::Formula { index } => {
                let Some(f) = doc.formulas.iter().find(|f| f.index == *index) else {
                    return Ok(());
                };
                self.block_break();
                self.wrapped(SpecialKind::Formula, &escape_special_literals(&f.source_text))
            }
        }
    }
}

/// Renders a validated document as special-token Markdown.
///
/// Level-0 sections become `#` headings, paragraphs and floats follow in
/// document order separated by blank lines, and the output ends with a
/// newline unless it is empty.
pub fn emit_markdown(doc: &StructuredDocument) -> Result<Emission, EmitError> {
    let violations = validate_document(doc);
    if !violations.is_empty() {
        return Err(EmitError::Invalid(violations));
    }
    let mut w = Writer {
        text: String::new(),
        spans: Vec::new(),
        fallbacks: Vec::new(),
    };
    for b in &doc.preamble {
        w.block(b, doc)?;
    }
    for s in &doc.sections {
        if !s.heading.is_empty() {
            w.block_break();
            w.text.push_str(&"#".repeat(s.level as usize + 1));
            w.text.push(' ');
            w.text.push_str(&escape_special_literals(&s.heading));
        }
        for b in &s.blocks {
            w.block(b, doc)?;
        }
    }
    if !w.text.is_empty() {
        w.text.push('\n');
    }
    Ok(Emission {
        output: SpecialTokenText {
            text: w.text,
            spans: w.spans,
        },
        fallbacks: w.fallbacks,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpanError {
    #[error("{token} at byte {at} has no matching start token")]
    UnmatchedEnd { token: &'static str, at: usize },
    #[error("{token} at byte {at} is never closed")]
    Unclosed { token: &'static str, at: usize },
    #[error("{token} at byte {at} opens inside another {kind:?} span")]
    Nested { token: &'static str, kind: SpecialKind, at: usize },
    #[error("span {index} is out of bounds or not on character boundaries")]
    Bounds { index: usize },
    #[error("span {index} does not start with {expected}")]
    BadStart { index: usize, expected: &'static str },
    #[error("span {index} does not end with {expected}")]
    BadEnd { index: usize, expected: &'static str },
    #[error("spans {0} and {1} partially overlap")]
    PartialOverlap(usize, usize),
    #[error("recorded spans differ from spans found in the text")]
    Mismatch,
}

/// Finds every special-token span in `text` by matching start/end tokens.
/// Spans come back ordered by start offset.
pub fn scan_spans(text: &str) -> Result<Vec<Span>, SpanError> {
    let mut open: Vec<(SpecialKind, usize)> = Vec::new();
    let mut spans = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let mut matched = false;
        for k in SpecialKind::ALL {
            if rest.starts_with(k.start_token()) {
                if let Some((kind, _)) = open.iter().find(|(kind, _)| *kind == k) {
                    return Err(SpanError::Nested {
                        token: k.start_token(),
                        kind: *kind,
                        at: i,
                    });
                }
                open.push((k, i));
                i += k.start_token().len();
                matched = true;
                break;
            }
            if rest.starts_with(k.end_token()) {
                match open.last() {
                    Some((kind, start)) if *kind == k => {
                        let end = i + k.end_token().len();
                        spans.push(Span { kind: k, start: *start, end });
                        open.pop();
                        i = end;
                    }
                    _ => {
                        return Err(SpanError::UnmatchedEnd {
                            token: k.end_token(),
                            at: i,
                        })
                    }
                }
                matched = true;
                break;
            }
        }
        if !matched {
            i += 1;
        }
    }
    if let Some((kind, at)) = open.first() {
        return Err(SpanError::Unclosed {
            token: kind.start_token(),
            at: *at,
        });
    }
    spans.sort_by_key(|s| (s.start, std::cmp::Reverse(s.end)));
    Ok(spans)
}

impl SpecialTokenText {
    /// Occurrences of `[START_K]` and `[END_K]` for a kind.
    pub fn token_counts(&self, kind: SpecialKind) -> (usize, usize) {
        (
            self.text.matches(kind.start_token()).count(),
            self.text.matches(kind.end_token()).count(),
        )
    }

    /// Checks the span invariants and that the recorded spans are exactly the
    /// spans present in the text.
    pub fn check(&self) -> Result<(), SpanError> {
        for (index, s) in self.spans.iter().enumerate() {
            if s.start > s.end
                || s.end > self.text.len()
                || !self.text.is_char_boundary(s.start)
                || !self.text.is_char_boundary(s.end)
            {
                return Err(SpanError::Bounds { index });
            }
            let seg = &self.text[s.start..s.end];
            if !seg.starts_with(s.kind.start_token()) {
                return Err(SpanError::BadStart {
                    index,
                    expected: s.kind.start_token(),
                });
            }
            if !seg.ends_with(s.kind.end_token()) {
                return Err(SpanError::BadEnd {
                    index,
                    expected: s.kind.end_token(),
                });
            }
        }
        for (i, a) in self.spans.iter().enumerate() {
            for (j, b) in self.spans.iter().enumerate().skip(i + 1) {
                let disjoint = a.end <= b.start || b.end <= a.start;
                let nested = (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
                if !disjoint && !nested {
                    return Err(SpanError::PartialOverlap(i, j));
                }
            }
        }
        let mut recorded = self.spans.clone();
        recorded.sort_by_key(|s| (s.start, std::cmp::Reverse(s.end)));
        if scan_spans(&self.text)? != recorded {
            return Err(SpanError::Mismatch);
        }
        Ok(())
    }
}

/// Audit sidecar written next to each emitted `.md` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanSidecar {
    pub doc_id: String,
    pub text_bytes: usize,
    pub spans: Vec<Span>,
    #[serde(default)]
    pub fallbacks: Vec<FallbackEvent>,
}

impl SpanSidecar {
    pub fn new(doc_id: &str, emission: &Emission) -> Self {
        SpanSidecar {
            doc_id: doc_id.to_string(),
            text_bytes: emission.output.text.len(),
            spans: emission.output.spans.clone(),
            fallbacks: emission.fallbacks.clone(),
        }
    }

    /// Validates the sidecar against the Markdown it describes.
    pub fn validate(&self, text: &str) -> Result<(), SpanError> {
        if self.text_bytes != text.len() {
            return Err(SpanError::Mismatch);
        }
        SpecialTokenText {
            text: text.to_string(),
            spans: self.spans.clone(),
        }
        .check()
    }
}

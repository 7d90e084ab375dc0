//! Normalized document model and TEI ingestion.

mod stats;
mod tei;
mod validate;

use serde::{Deserialize, Serialize};

pub use stats::{document_stats, DocStats};
pub use tei::{parse_structured_xml, IngestReport, Ingested, ParseError, SkipWarning};
pub use validate::{validate_document, InvariantKind, Violation};

/// One paper after structural parsing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuredDocument {
    pub doc_id: String,
    pub title: String,
    /// Blocks that sit in the body before the first section.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub preamble: Vec<Block>,
    pub sections: Vec<Section>,
    pub bibliography: Vec<BibEntry>,
    pub figures: Vec<Figure>,
    pub tables: Vec<Table>,
    pub formulas: Vec<Formula>,
}

/// A section heading plus its content in document order.
///
/// Sections are stored flat; `level` is the nesting depth of the `<div>`
/// that produced the section, so a child directly follows its parent with
/// `level + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Section {
    pub level: u32,
    pub heading: String,
    pub blocks: Vec<Block>,
}

/// Content unit inside a section. Floats are stored once on the document and
/// placed here by their 1-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Block {
    Paragraph(Paragraph),
    Figure { index: u32 },
    Table { index: u32 },
    Formula { index: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Figure,
    Table,
}

impl ObjectKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectKind::Figure => "figure",
            ObjectKind::Table => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Paragraph {
    pub text: String,
    /// Citation anchors, sorted by `start`.
    #[serde(default)]
    pub anchors: Vec<AnchorSpan>,
    /// Formulas that occur inside the running text, sorted by `start`.
    #[serde(default)]
    pub inline_formulas: Vec<InlineFormula>,
    /// Mentions of figures/tables, filled in by the caption linker.
    #[serde(default)]
    pub object_refs: Vec<ObjectRef>,
}

impl Paragraph {
    pub fn plain(text: impl Into<String>) -> Self {
        Paragraph {
            text: text.into(),
            ..Default::default()
        }
    }
}

/// A citation anchor occupying `text[start..end]` of its paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpan {
    pub start: usize,
    pub end: usize,
    pub anchor: CitationAnchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InlineFormula {
    pub start: usize,
    pub end: usize,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub kind: ObjectKind,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationAnchor {
    pub surface: String,
    /// `None` when the anchor could not be tied to a bibliography entry.
    pub bib_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibEntry {
    pub key: String,
    pub title: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Figure {
    pub index: u32,
    pub caption: String,
    pub image_ref: Option<String>,
    #[serde(default)]
    pub caption_missing: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub index: u32,
    pub caption: String,
    /// Row-major cells.
    pub grid: Vec<Vec<String>>,
    #[serde(default)]
    pub empty: bool,
}

impl Table {
    pub fn is_rectangular(&self) -> bool {
        match self.grid.first() {
            None => false,
            Some(first) => !first.is_empty() && self.grid.iter().all(|r| r.len() == first.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Formula {
    pub index: u32,
    pub source_text: String,
}

impl StructuredDocument {
    /// All paragraphs in document order.
    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.preamble
            .iter()
            .chain(self.sections.iter().flat_map(|s| s.blocks.iter()))
            .filter_map(|b| match b {
                Block::Paragraph(p) => Some(p),
                _ => None,
            })
    }

    pub fn paragraphs_mut(&mut self) -> impl Iterator<Item = &mut Paragraph> {
        self.preamble
            .iter_mut()
            .chain(self.sections.iter_mut().flat_map(|s| s.blocks.iter_mut()))
            .filter_map(|b| match b {
                Block::Paragraph(p) => Some(p),
                _ => None,
            })
    }

    pub fn bib_entry(&self, key: &str) -> Option<&BibEntry> {
        self.bibliography.iter().find(|b| b.key == key)
    }
}

/// Collapses whitespace runs to one space and trims the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace-normalizes a formula and repairs brace balance: unmatched
/// closing braces are dropped and missing closers are appended.
pub fn normalize_formula(s: &str) -> String {
    let collapsed = normalize_whitespace(s);
    let mut out = String::with_capacity(collapsed.len());
    let mut depth = 0usize;
    let mut escaped = false;
    for c in collapsed.chars() {
        if escaped {
            escaped = false;
            out.push(c);
            continue;
        }
        match c {
            '\\' => {
                escaped = true;
                out.push(c);
            }
            '{' => {
                depth += 1;
                out.push(c);
            }
            '}' if depth == 0 => {}
            '}' => {
                depth -= 1;
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out.extend(std::iter::repeat_n('}', depth));
    out
}

/// True when every unescaped `{` has a matching `}`.
pub fn braces_balanced(s: &str) -> bool {
    let mut depth = 0i64;
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' => escaped = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_normalization_repairs_braces() {
        assert_eq!(normalize_formula("\\frac{a}{b"), "\\frac{a}{b}");
        assert_eq!(normalize_formula("a}  + {b}"), "a + {b}");
        assert_eq!(normalize_formula("\\{ x"), "\\{ x");
        assert!(braces_balanced(&normalize_formula("}}{{{")));
    }

    #[test]
    fn whitespace_collapses() {
        assert_eq!(normalize_whitespace("  Map of\n\tstudy   area "), "Map of study area");
    }
}

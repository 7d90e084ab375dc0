use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{braces_balanced, normalize_whitespace, Block, StructuredDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    FigureIndexContiguous,
    TableIndexContiguous,
    FormulaIndexContiguous,
    SectionLevelStep,
    AnchorResolves,
    AnchorOffsets,
    FormulaSpanOffsets,
    CaptionPresent,
    CaptionNormalized,
    TableRectangular,
    FormulaBalanced,
    BibKeyUnique,
    PlacementResolves,
}

/// A broken invariant and the element it was found on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: InvariantKind,
    pub element: String,
    pub detail: String,
}

fn violation(invariant: InvariantKind, element: impl Into<String>, detail: impl Into<String>) -> Violation {
    Violation {
        invariant,
        element: element.into(),
        detail: detail.into(),
    }
}

/// Checks every document invariant. Returns an empty list iff all hold.
pub fn validate_document(doc: &StructuredDocument) -> Vec<Violation> {
    let mut out = Vec::new();

    let contiguous = |indices: Vec<u32>, kind: InvariantKind, name: &str, out: &mut Vec<Violation>| {
        for (pos, idx) in indices.into_iter().enumerate() {
            if idx as usize != pos + 1 {
                out.push(violation(
                    kind,
                    format!("{name} {idx}"),
                    format!("expected index {} at position {}", pos + 1, pos),
                ));
            }
        }
    };
    contiguous(
        doc.figures.iter().map(|f| f.index).collect(),
        InvariantKind::FigureIndexContiguous,
        "figure",
        &mut out,
    );
    contiguous(
        doc.tables.iter().map(|t| t.index).collect(),
        InvariantKind::TableIndexContiguous,
        "table",
        &mut out,
    );
    contiguous(
        doc.formulas.iter().map(|f| f.index).collect(),
        InvariantKind::FormulaIndexContiguous,
        "formula",
        &mut out,
    );

    let mut prev: Option<u32> = None;
    for (i, s) in doc.sections.iter().enumerate() {
        let max = prev.map_or(0, |p| p + 1);
        if s.level > max {
            out.push(violation(
                InvariantKind::SectionLevelStep,
                format!("section {i} {:?}", s.heading),
                format!("level {} follows level {:?}", s.level, prev),
            ));
        }
        prev = Some(s.level);
    }

    let mut keys = HashSet::new();
    for b in &doc.bibliography {
        if !keys.insert(b.key.as_str()) {
            out.push(violation(InvariantKind::BibKeyUnique, format!("bib {}", b.key), "duplicate key"));
        }
    }

    for (pi, p) in doc.paragraphs().enumerate() {
        let mut last_end = 0usize;
        for a in &p.anchors {
            let name = format!("paragraph {pi} anchor {:?}", a.anchor.surface);
            if a.start > a.end
                || a.end > p.text.len()
                || !p.text.is_char_boundary(a.start)
                || !p.text.is_char_boundary(a.end)
            {
                out.push(violation(InvariantKind::AnchorOffsets, name, "offsets outside text"));
                continue;
            }
            if a.start < last_end {
                out.push(violation(InvariantKind::AnchorOffsets, name.clone(), "overlaps previous anchor"));
            }
            last_end = a.end;
            if let Some(key) = &a.anchor.bib_key {
                if !keys.contains(key.as_str()) {
                    out.push(violation(
                        InvariantKind::AnchorResolves,
                        name,
                        format!("bib_key {key:?} not in bibliography"),
                    ));
                }
            }
        }
        let mut last_end = 0usize;
        for f in &p.inline_formulas {
            let name = format!("paragraph {pi} inline formula {}", f.index);
            if f.start > f.end || f.end > p.text.len() || f.start < last_end {
                out.push(violation(InvariantKind::FormulaSpanOffsets, name, "bad offsets"));
                continue;
            }
            if p.anchors.iter().any(|a| a.start < f.end && f.start < a.end) {
                out.push(violation(InvariantKind::FormulaSpanOffsets, name.clone(), "overlaps an anchor"));
            }
            if !doc.formulas.iter().any(|x| x.index == f.index) {
                out.push(violation(InvariantKind::PlacementResolves, name, "unknown formula index"));
            }
            last_end = f.end;
        }
    }

    for f in &doc.figures {
        let name = format!("figure {}", f.index);
        if f.caption.trim().is_empty() && !f.caption_missing {
            out.push(violation(InvariantKind::CaptionPresent, name.clone(), "empty caption not flagged"));
        }
        if normalize_whitespace(&f.caption) != f.caption {
            out.push(violation(InvariantKind::CaptionNormalized, name, "caption whitespace not normalized"));
        }
    }

    for t in &doc.tables {
        let name = format!("table {}", t.index);
        if t.grid.is_empty() {
            if !t.empty {
                out.push(violation(InvariantKind::TableRectangular, name, "empty grid not flagged"));
            }
        } else if !t.is_rectangular() {
            out.push(violation(InvariantKind::TableRectangular, name, "rows differ in column count"));
        }
    }

    for f in &doc.formulas {
        if !braces_balanced(&f.source_text) {
            out.push(violation(
                InvariantKind::FormulaBalanced,
                format!("formula {}", f.index),
                "unbalanced braces",
            ));
        }
    }

    let blocks = doc.preamble.iter().chain(doc.sections.iter().flat_map(|s| s.blocks.iter()));
    for b in blocks {
        let (kind, index, exists) = match b {
            Block::Figure { index } => ("figure", *index, doc.figures.iter().any(|f| f.index == *index)),
            Block::Table { index } => ("table", *index, doc.tables.iter().any(|t| t.index == *index)),
            Block::Formula { index } => ("formula", *index, doc.formulas.iter().any(|f| f.index == *index)),
            Block::Paragraph(_) => continue,
        };
        if !exists {
            out.push(violation(
                InvariantKind::PlacementResolves,
                format!("{kind} {index}"),
                "placed but not defined",
            ));
        }
    }
    out
}

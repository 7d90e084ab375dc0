use serde::{Deserialize, Serialize};

use super::{Block, StructuredDocument};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocStats {
    pub sections: usize,
    pub paragraphs: usize,
    pub figures: usize,
    pub tables: usize,
    pub formulas: usize,
    pub resolved_anchors: usize,
    pub unresolved_anchors: usize,
}

pub fn document_stats(doc: &StructuredDocument) -> DocStats {
    let mut stats = DocStats {
        sections: doc.sections.len(),
        figures: doc.figures.len(),
        tables: doc.tables.len(),
        formulas: doc.formulas.len(),
        ..Default::default()
    };
    let blocks = doc.preamble.iter().chain(doc.sections.iter().flat_map(|s| s.blocks.iter()));
    for b in blocks {
        if let Block::Paragraph(p) = b {
            stats.paragraphs += 1;
            for a in &p.anchors {
                if a.anchor.bib_key.is_some() {
                    stats.resolved_anchors += 1;
                } else {
                    stats.unresolved_anchors += 1;
                }
            }
        }
    }
    stats
}

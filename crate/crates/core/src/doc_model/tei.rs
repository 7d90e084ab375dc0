//! TEI ingestion.
//!
//! Supported dialect: the subset emitted by structural PDF extractors.
//! `teiHeader` supplies the title, `text/body` holds `div`/`head`/`p`,
//! `formula` and `figure` (with `type="table"` for tables), and
//! `text/back` holds `biblStruct` entries. Anything else inside the body is
//! skipped and reported as a [`SkipWarning`].

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    normalize_formula, normalize_whitespace, AnchorSpan, BibEntry, Block, CitationAnchor, Figure,
    Formula, InlineFormula, Paragraph, Section, StructuredDocument, Table,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("document has no root element")]
    NoRoot,
    #[error("structural error: missing <body> element")]
    MissingBody,
}

/// An element of the body that was not captured, with the number of elements
/// in its subtree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipWarning {
    pub element: String,
    pub line: usize,
    pub column: usize,
    pub skipped_elements: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Elements strictly inside `<body>`.
    pub body_elements: usize,
    pub captured_elements: usize,
    pub warnings: Vec<SkipWarning>,
    /// Non-lossy adjustments made during ingest (padding, dangling anchors).
    pub notes: Vec<String>,
}

impl IngestReport {
    pub fn skipped_elements(&self) -> usize {
        self.warnings.iter().map(|w| w.skipped_elements).sum()
    }

    /// Every body element is either captured or covered by a warning.
    pub fn reconciles(&self) -> bool {
        self.captured_elements + self.skipped_elements() == self.body_elements
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub document: StructuredDocument,
    pub report: IngestReport,
}

// Minimal owned DOM.

#[derive(Debug, Clone)]
enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    attrs: Vec<(String, String)>,
    children: Vec<Node>,
    line: usize,
    column: usize,
}

impl Element {
    fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key || local(k) == key)
            .map(|(_, v)| v.as_str())
    }

    fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    fn child(&self, name: &str) -> Option<&Element> {
        self.elements().find(|e| e.name == name)
    }

    fn find_descendant(&self, name: &str) -> Option<&Element> {
        for e in self.elements() {
            if e.name == name {
                return Some(e);
            }
            if let Some(found) = e.find_descendant(name) {
                return Some(found);
            }
        }
        None
    }

    fn descendants<'a>(&'a self, name: &str, out: &mut Vec<&'a Element>) {
        for e in self.elements() {
            if e.name == name {
                out.push(e);
            }
            e.descendants(name, out);
        }
    }

    fn text(&self) -> String {
        let mut s = String::new();
        self.collect_text(&mut s);
        s
    }

    fn collect_text(&self, out: &mut String) {
        for c in &self.children {
            match c {
                Node::Text(t) => out.push_str(t),
                Node::Element(e) => {
                    out.push(' ');
                    e.collect_text(out);
                    out.push(' ');
                }
            }
        }
    }

    /// Number of elements in this subtree, including self.
    fn subtree_size(&self) -> usize {
        1 + self.elements().map(Element::subtree_size).sum::<usize>()
    }
}

fn local(name: &str) -> &str {
    name.rsplit(':').next().unwrap_or(name)
}

fn line_col(src: &str, pos: usize) -> (usize, usize) {
    let pos = pos.min(src.len());
    let before = &src.as_bytes()[..pos];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    (line, column)
}

fn malformed(src: &str, pos: usize, message: impl Into<String>) -> ParseError {
    let (line, column) = line_col(src, pos);
    ParseError::Malformed {
        line,
        column,
        message: message.into(),
    }
}

fn predefined_entity(name: &str) -> Option<char> {
    Some(match name {
        "lt" => '<',
        "gt" => '>',
        "amp" => '&',
        "apos" => '\'',
        "quot" => '"',
        _ => return None,
    })
}

fn build_dom(xml: &str) -> Result<Element, ParseError> {
    let mut reader = Reader::from_str(xml);
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    let open = |start: &quick_xml::events::BytesStart<'_>, pos: usize| -> Result<Element, ParseError> {
        let name = start.name().as_ref().to_string();
        let mut attrs = Vec::new();
        for a in start.attributes() {
            let a = a.map_err(|e| malformed(xml, pos, e.to_string()))?;
            let key = a.key.as_ref().to_string();
            #[allow(deprecated)]
            let value = a
                .unescape_value()
                .map_err(|e| malformed(xml, pos, e.to_string()))?
                .into_owned();
            attrs.push((key, value));
        }
        let (line, column) = line_col(xml, pos);
        Ok(Element {
            name: local(&name).to_string(),
            attrs,
            children: Vec::new(),
            line,
            column,
        })
    };

    loop {
        let pos = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| malformed(xml, reader.error_position() as usize, e.to_string()))?;
        match event {
            Event::Start(s) => {
                if root.is_some() && stack.is_empty() {
                    return Err(malformed(xml, pos, "content after the root element"));
                }
                stack.push(open(&s, pos)?);
            }
            Event::Empty(s) => {
                let el = open(&s, pos)?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None if root.is_none() => root = Some(el),
                    None => return Err(malformed(xml, pos, "content after the root element")),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| malformed(xml, pos, "unexpected closing tag"))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(el)),
                    None => root = Some(el),
                }
            }
            Event::Text(t) => {
                let text = t.xml10_content();
                if let Some(parent) = stack.last_mut() {
                    push_text(parent, &text);
                } else if !text.trim().is_empty() {
                    return Err(malformed(xml, pos, "text outside the root element"));
                }
            }
            Event::CData(t) => {
                if let Some(parent) = stack.last_mut() {
                    push_text(parent, &t.xml10_content());
                }
            }
            Event::GeneralRef(r) => {
                let resolved = if r.is_char_ref() {
                    r.resolve_char_ref()
                        .map_err(|e| malformed(xml, pos, e.to_string()))?
                } else {
                    let name = r.as_ref().to_string();
                    Some(
                        predefined_entity(&name)
                            .ok_or_else(|| malformed(xml, pos, format!("unknown entity &{name};")))?,
                    )
                };
                if let (Some(c), Some(parent)) = (resolved, stack.last_mut()) {
                    push_text(parent, c.encode_utf8(&mut [0u8; 4]));
                }
            }
            Event::Eof => break,
            Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
        }
    }
    if let Some(open) = stack.last() {
        return Err(malformed(
            xml,
            xml.len(),
            format!("unexpected end of input, <{}> is not closed", open.name),
        ));
    }
    root.ok_or(ParseError::NoRoot)
}

fn push_text(parent: &mut Element, text: &str) {
    if let Some(Node::Text(prev)) = parent.children.last_mut() {
        prev.push_str(text);
    } else {
        parent.children.push(Node::Text(text.to_string()));
    }
}

/// Parses TEI XML into a [`StructuredDocument`] plus an ingest report.
///
/// `doc_id` is taken from a DOI `idno` in the header when present; callers
/// that name documents by file usually overwrite it.
pub fn parse_structured_xml(xml_text: &str) -> Result<Ingested, ParseError> {
    let root = build_dom(xml_text)?;
    let text_el = if root.name == "text" {
        Some(&root)
    } else {
        root.find_descendant("text")
    };
    let body = text_el
        .and_then(|t| t.child("body"))
        .ok_or(ParseError::MissingBody)?;

    let header = root.child("teiHeader");
    let title = header
        .and_then(|h| h.find_descendant("titleStmt"))
        .and_then(|t| t.child("title"))
        .map(|t| normalize_whitespace(&t.text()))
        .unwrap_or_default();
    let doc_id = header
        .and_then(|h| {
            let mut ids = Vec::new();
            h.descendants("idno", &mut ids);
            ids.into_iter()
                .find(|i| i.attr("type").is_some_and(|t| t.eq_ignore_ascii_case("doi")))
                .map(|i| normalize_whitespace(&i.text()))
        })
        .unwrap_or_default();

    let mut b = Builder::default();
    b.report.body_elements = body.subtree_size() - 1;
    b.walk_body(body);

    let mut bibliography: Vec<BibEntry> = Vec::new();
    if let Some(back) = text_el.and_then(|t| t.child("back")) {
        let mut structs = Vec::new();
        back.descendants("biblStruct", &mut structs);
        for bs in structs {
            let Some(key) = bs.attr("xml:id").or_else(|| bs.attr("id")) else {
                b.report
                    .notes
                    .push(format!("biblStruct at line {} has no xml:id", bs.line));
                continue;
            };
            if bibliography.iter().any(|e| e.key == key) {
                b.report
                    .notes
                    .push(format!("duplicate bibliography key {key:?} ignored"));
                continue;
            }
            bibliography.push(BibEntry {
                key: key.to_string(),
                title: bibl_title(bs),
                raw: normalize_whitespace(&bs.text()),
            });
        }
    }

    let mut document = StructuredDocument {
        doc_id,
        title,
        preamble: b.preamble,
        sections: b.sections,
        bibliography,
        figures: b.figures,
        tables: b.tables,
        formulas: b.formulas,
    };
    let mut notes = std::mem::take(&mut b.report.notes);
    let bib_keys: Vec<String> = document.bibliography.iter().map(|e| e.key.clone()).collect();
    for p in document.paragraphs_mut() {
        for a in &mut p.anchors {
            if let Some(key) = &a.anchor.bib_key {
                if !bib_keys.contains(key) {
                    notes.push(format!(
                        "citation {:?} targets unknown key {key:?}; kept unresolved",
                        a.anchor.surface
                    ));
                    a.anchor.bib_key = None;
                }
            }
        }
    }
    b.report.notes = notes;
    Ok(Ingested {
        document,
        report: b.report,
    })
}

fn bibl_title(bs: &Element) -> String {
    let pick = |parent: Option<&Element>| -> Option<String> {
        let parent = parent?;
        let titles: Vec<&Element> = parent.elements().filter(|e| e.name == "title").collect();
        titles
            .iter()
            .find(|t| t.attr("type") == Some("main"))
            .or_else(|| titles.first())
            .map(|t| normalize_whitespace(&t.text()))
            .filter(|t| !t.is_empty())
    };
    pick(bs.child("analytic"))
        .or_else(|| pick(bs.child("monogr")))
        .unwrap_or_default()
}

/// Inline elements whose text is kept as paragraph text.
const TRANSPARENT_INLINE: &[&str] = &[
    "ref", "hi", "emph", "s", "span", "title", "rs", "foreign", "term", "q", "num", "measure",
    "date", "name", "persName", "orgName", "placeName", "quote", "mentioned", "unclear", "sic",
];

#[derive(Default)]
struct Builder {
    preamble: Vec<Block>,
    sections: Vec<Section>,
    figures: Vec<Figure>,
    tables: Vec<Table>,
    formulas: Vec<Formula>,
    report: IngestReport,
    /// Index of the section receiving blocks, if any.
    current: Option<usize>,
}

enum Target {
    Preamble,
    Section(usize),
}

impl Builder {
    fn skip(&mut self, el: &Element, reason: &str) {
        log::warn!("skipping <{}> at {}:{}: {reason}", el.name, el.line, el.column);
        self.report.warnings.push(SkipWarning {
            element: el.name.clone(),
            line: el.line,
            column: el.column,
            skipped_elements: el.subtree_size(),
            reason: reason.to_string(),
        });
    }

    fn capture(&mut self, n: usize) {
        self.report.captured_elements += n;
    }

    fn push_block(&mut self, target: &Target, block: Block) {
        match target {
            Target::Preamble => self.preamble.push(block),
            Target::Section(i) => self.sections[*i].blocks.push(block),
        }
    }

    fn walk_body(&mut self, body: &Element) {
        for child in &body.children {
            match child {
                Node::Text(t) if !t.trim().is_empty() => {
                    self.report
                        .notes
                        .push(format!("stray body text skipped: {:?}", normalize_whitespace(t)));
                }
                Node::Text(_) => {}
                Node::Element(el) => match el.name.as_str() {
                    "div" => self.walk_div(el, 0),
                    "figure" | "formula" | "table" => {
                        let target = match self.sections.len() {
                            0 => Target::Preamble,
                            n => Target::Section(n - 1),
                        };
                        self.walk_block(el, &target);
                    }
                    "p" => {
                        // Loose paragraphs after a section get their own
                        // heading-less section so order is preserved.
                        let target = if self.sections.is_empty() {
                            Target::Preamble
                        } else {
                            let last = self.sections.len() - 1;
                            let reuse = self.current == Some(last)
                                && self.sections[last].heading.is_empty()
                                && self.sections[last].level == 0;
                            if !reuse {
                                self.sections.push(Section::default());
                                self.current = Some(self.sections.len() - 1);
                            }
                            Target::Section(self.sections.len() - 1)
                        };
                        self.walk_block(el, &target);
                    }
                    _ => self.skip(el, "unsupported body element"),
                },
            }
        }
    }

    fn walk_div(&mut self, div: &Element, level: u32) {
        self.capture(1);
        self.sections.push(Section {
            level,
            heading: String::new(),
            blocks: Vec::new(),
        });
        let mut idx = self.sections.len() - 1;
        self.current = Some(idx);
        let mut saw_head = false;
        let mut after_nested = false;
        for child in &div.children {
            let el = match child {
                Node::Element(el) => el,
                Node::Text(t) => {
                    if !t.trim().is_empty() {
                        self.report.notes.push(format!(
                            "stray text in div skipped: {:?}",
                            normalize_whitespace(t)
                        ));
                    }
                    continue;
                }
            };
            match el.name.as_str() {
                "head" if !saw_head && !after_nested && self.sections[idx].blocks.is_empty() => {
                    saw_head = true;
                    self.capture(el.subtree_size());
                    self.sections[idx].heading = normalize_whitespace(&el.text());
                }
                "div" => {
                    self.walk_div(el, level + 1);
                    after_nested = true;
                }
                _ => {
                    // Content after a nested div continues in a heading-less
                    // section at this level so document order is kept.
                    if after_nested {
                        self.sections.push(Section {
                            level,
                            heading: String::new(),
                            blocks: Vec::new(),
                        });
                        idx = self.sections.len() - 1;
                        self.current = Some(idx);
                        after_nested = false;
                    }
                    self.walk_block(el, &Target::Section(idx));
                }
            }
        }
    }

    fn walk_block(&mut self, el: &Element, target: &Target) {
        match el.name.as_str() {
            "p" => {
                self.capture(1);
                let p = self.paragraph(el);
                self.push_block(target, Block::Paragraph(p));
            }
            "formula" => {
                let index = self.formula(el);
                self.push_block(target, Block::Formula { index });
            }
            "figure" if el.attr("type") == Some("table") => {
                let index = self.table(el);
                self.push_block(target, Block::Table { index });
            }
            "figure" => {
                let index = self.figure(el);
                self.push_block(target, Block::Figure { index });
            }
            "table" => {
                self.capture(1);
                let grid = self.grid(el);
                let index = self.push_table(String::new(), grid);
                self.push_block(target, Block::Table { index });
            }
            _ => self.skip(el, "unsupported block element"),
        }
    }

    fn formula(&mut self, el: &Element) -> u32 {
        self.capture(1);
        let mut raw = String::new();
        for c in &el.children {
            match c {
                Node::Text(t) => raw.push_str(t),
                Node::Element(e) if e.name == "label" => self.capture(e.subtree_size()),
                Node::Element(e) => {
                    self.capture(e.subtree_size());
                    raw.push(' ');
                    raw.push_str(&e.text());
                }
            }
        }
        let index = self.formulas.len() as u32 + 1;
        self.formulas.push(Formula {
            index,
            source_text: normalize_formula(&raw),
        });
        index
    }

    fn figure(&mut self, el: &Element) -> u32 {
        self.capture(1);
        let mut caption_parts = Vec::new();
        let mut image_ref = None;
        for c in el.elements() {
            match c.name.as_str() {
                "figDesc" => {
                    self.capture(c.subtree_size());
                    caption_parts.push(c.text());
                }
                "graphic" => {
                    self.capture(c.subtree_size());
                    if image_ref.is_none() {
                        image_ref = c.attr("url").map(str::to_string);
                    }
                }
                "head" | "label" => self.capture(c.subtree_size()),
                _ => self.skip(c, "unsupported figure child"),
            }
        }
        let caption = normalize_whitespace(&caption_parts.join(" "));
        let index = self.figures.len() as u32 + 1;
        self.figures.push(Figure {
            index,
            caption_missing: caption.is_empty(),
            caption,
            image_ref,
        });
        index
    }

    fn table(&mut self, el: &Element) -> u32 {
        self.capture(1);
        let mut caption_parts = Vec::new();
        let mut grid = Vec::new();
        for c in el.elements() {
            match c.name.as_str() {
                "figDesc" => {
                    self.capture(c.subtree_size());
                    caption_parts.push(c.text());
                }
                "table" if grid.is_empty() => {
                    self.capture(1);
                    grid = self.grid(c);
                }
                "head" | "label" | "graphic" => self.capture(c.subtree_size()),
                _ => self.skip(c, "unsupported table child"),
            }
        }
        self.push_table(normalize_whitespace(&caption_parts.join(" ")), grid)
    }

    fn grid(&mut self, table: &Element) -> Vec<Vec<String>> {
        let mut grid = Vec::new();
        for row in table.elements() {
            if row.name != "row" {
                self.skip(row, "unsupported table content");
                continue;
            }
            self.capture(1);
            let mut cells = Vec::new();
            for cell in row.elements() {
                if cell.name == "cell" {
                    self.capture(cell.subtree_size());
                    cells.push(normalize_whitespace(&cell.text()));
                } else {
                    self.skip(cell, "unsupported row content");
                }
            }
            grid.push(cells);
        }
        grid
    }

    fn push_table(&mut self, caption: String, mut grid: Vec<Vec<String>>) -> u32 {
        let index = self.tables.len() as u32 + 1;
        grid.retain(|r| !r.is_empty());
        let width = grid.iter().map(Vec::len).max().unwrap_or(0);
        if grid.iter().any(|r| r.len() != width) {
            self.report
                .notes
                .push(format!("table {index}: ragged rows padded to {width} columns"));
            for r in &mut grid {
                r.resize(width, String::new());
            }
        }
        self.tables.push(Table {
            index,
            caption,
            empty: grid.is_empty(),
            grid,
        });
        index
    }

    fn paragraph(&mut self, el: &Element) -> Paragraph {
        let mut b = InlineBuilder::default();
        self.inline(el, &mut b);
        b.finish()
    }

    fn inline(&mut self, el: &Element, b: &mut InlineBuilder) {
        for c in &el.children {
            match c {
                Node::Text(t) => b.push_text(t),
                Node::Element(e) => match e.name.as_str() {
                    "ref" if e.attr("type") == Some("bibr") => {
                        self.capture(e.subtree_size());
                        let surface = normalize_whitespace(&e.text());
                        let key = e
                            .attr("target")
                            .map(|t| t.trim().trim_start_matches('#').to_string())
                            .filter(|k| !k.is_empty());
                        let (start, end) = b.push_span(&surface);
                        b.anchors.push(AnchorSpan {
                            start,
                            end,
                            anchor: CitationAnchor {
                                surface,
                                bib_key: key,
                            },
                        });
                    }
                    "formula" => {
                        self.capture(e.subtree_size());
                        let src = normalize_formula(&e.text());
                        let index = self.formulas.len() as u32 + 1;
                        self.formulas.push(Formula {
                            index,
                            source_text: src.clone(),
                        });
                        let (start, end) = b.push_span(&src);
                        b.formulas.push(InlineFormula { start, end, index });
                    }
                    "lb" => {
                        self.capture(e.subtree_size());
                        b.push_text(" ");
                    }
                    name if TRANSPARENT_INLINE.contains(&name) => {
                        self.capture(1);
                        self.inline(e, b);
                    }
                    _ => self.skip(e, "unsupported inline element"),
                },
            }
        }
    }
}

/// Accumulates paragraph text with whitespace collapsed on the fly so that
/// span offsets stay valid.
#[derive(Default)]
struct InlineBuilder {
    text: String,
    pending_space: bool,
    anchors: Vec<AnchorSpan>,
    formulas: Vec<InlineFormula>,
}

impl InlineBuilder {
    fn push_text(&mut self, s: &str) {
        for c in s.chars() {
            if c.is_whitespace() {
                self.pending_space = true;
            } else {
                if self.pending_space && !self.text.is_empty() {
                    self.text.push(' ');
                }
                self.pending_space = false;
                self.text.push(c);
            }
        }
    }

    fn push_span(&mut self, content: &str) -> (usize, usize) {
        if content.is_empty() {
            return (self.text.len(), self.text.len());
        }
        if self.pending_space && !self.text.is_empty() {
            self.text.push(' ');
        }
        self.pending_space = false;
        let start = self.text.len();
        self.text.push_str(content);
        (start, self.text.len())
    }

    fn finish(self) -> Paragraph {
        Paragraph {
            text: self.text,
            anchors: self.anchors,
            inline_formulas: self.formulas,
            object_refs: Vec::new(),
        }
    }
}

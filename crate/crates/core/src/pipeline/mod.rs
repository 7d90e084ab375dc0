//! End-to-end runs driven by a [`Manifest`].
//!
//! Stages run in a fixed order. A stage that is not enabled but is needed by
//! an enabled one runs in memory without writing anything. All files go to a
//! staging directory first; on success each top-level output directory is
//! swapped into place, on failure the staging directory is deleted.

mod manifest;
mod report;

pub use manifest::{BlockFormat, KnowledgeInput, Manifest, Stage};
pub use report::*;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::caption_linker::{link_captions, CaptionPair, LinkerConfig};
use crate::corpus_builder::{
    plan_batches, tokenize_stream, slice_stream, write_blocks_jsonl, write_frames, BatchPlan, SourceStats,
    TokenBlock, GEOCORPUS, SOURCE_ORDER,
};
use crate::doc_model::{parse_structured_xml, IngestReport};
use crate::fsutil::{file_stem, list_files, Staging};
use crate::md_emitter::{emit_markdown, SpanSidecar};
use crate::signal_forge::{
    caption_pair_tuple, citation_tuples, generate_signal_dataset, load_template_bank, normalize_knowledge,
    record_to_tuples, wiki_sections_to_tuples, KnowledgeError, KnowledgeRecord, SchemaKind, SignalTuple,
    TemplateBank, WikiSectionTriple,
};
use crate::tokenizer::ReferenceTokenizer;
use crate::tool_trace::{compute_loss_mask, render_tool_prompt, validate_trace, MaskPolicy, ToolDescriptor, ToolTrace};
use crate::StructuredDocument;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read manifest: {0}")]
    Manifest(String),
    #[error("invalid manifest: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
    #[error("cannot write outputs: {0}")]
    Output(#[from] std::io::Error),
}

fn fail(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage, message }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WikiPage {
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub sections: Vec<WikiSectionTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: Manifest,
    pub stages: Vec<Stage>,
    pub sources: Vec<SourceStats>,
    pub counts: IndexMap<String, u64>,
    pub warnings: Vec<String>,
    pub template_bank_digest: String,
    /// Wall-clock time per executed stage. Not serialized, so reports of
    /// equal runs are byte-identical.
    #[serde(skip)]
    pub timings: Vec<(Stage, Duration)>,
}

impl RunReport {
    pub fn stats_rows(&self) -> Vec<StatsRow> {
        let total: f64 = self.config.ratios.values().sum();
        self.sources
            .iter()
            .map(|s| StatsRow {
                source: s.source.clone(),
                block_num: s.block_num,
                token_num: s.token_num,
                item_num: s.item_num,
                batch_ratio: self.config.ratios.get(&s.source).map(|w| w / total),
            })
            .collect()
    }

    /// Stats table followed by dataset counts.
    pub fn to_text(&self) -> String {
        let mut out = report_stats(&self.stats_rows());
        out.push('\n');
        for (k, v) in &self.counts {
            let _ = writeln!(out, "{k}: {v}");
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(out, "\nwarnings: {}", self.warnings.len());
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IngestRecord {
    document: StructuredDocument,
    report: IngestReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskRecord {
    question: String,
    ids: Vec<u32>,
    mask: Vec<u8>,
    truncated: bool,
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn read_text(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    serde_json::from_str(&read_text(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn name_of(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Run<'a> {
    m: &'a Manifest,
    staging: Staging,
    tok: ReferenceTokenizer,
    report: RunReport,
    docs: Vec<(String, StructuredDocument)>,
    markdown: Vec<String>,
    pairs: Vec<CaptionPair>,
    stats: Vec<SourceStats>,
}

impl Run<'_> {
    fn write(&self, stage: Stage, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        if self.m.enabled(stage) {
            self.staging.write(rel, bytes)?;
        }
        Ok(())
    }

    fn count(&mut self, key: &str, n: usize) {
        self.report.counts.insert(key.to_string(), n as u64);
    }

    fn ingest(&mut self) -> Result<(), PipelineError> {
        let err = fail(Stage::Ingest);
        let dir = self.m.resolve(&self.m.sources[GEOCORPUS]);
        let files = list_files(&dir, "xml").map_err(|e| err(format!("{}: {e}", dir.display())))?;
        let parsed: Vec<Result<(String, IngestRecord), String>> = files
            .par_iter()
            .map(|path| {
                let xml = read_text(path)?;
                let ing = parse_structured_xml(&xml).map_err(|e| format!("{}: {e}", name_of(path)))?;
                let stem = file_stem(path);
                let mut document = ing.document;
                if document.doc_id.is_empty() {
                    document.doc_id = stem.clone();
                }
                Ok((stem, IngestRecord { document, report: ing.report }))
            })
            .collect();
        for r in parsed {
            let (stem, rec) = r.map_err(&err)?;
            for w in &rec.report.warnings {
                self.report.warnings.push(format!(
                    "{stem}: skipped <{}> at {}:{} ({})",
                    w.element, w.line, w.column, w.reason
                ));
            }
            self.write(Stage::Ingest, &format!("ingest/{stem}.json"), &pretty(&rec))?;
            self.docs.push((stem, rec.document));
        }
        self.count("documents", self.docs.len());
        Ok(())
    }

    fn emit(&mut self) -> Result<(), PipelineError> {
        let err = fail(Stage::Emit);
        let emitted: Vec<_> = self
            .docs
            .par_iter()
            .map(|(stem, doc)| emit_markdown(doc).map_err(|e| format!("{stem}: {e}")))
            .collect();
        let mut fallbacks = 0;
        for ((stem, doc), e) in self.docs.iter().zip(emitted) {
            let e = e.map_err(&err)?;
            let sidecar = SpanSidecar::new(&doc.doc_id, &e);
            sidecar.validate(&e.output.text).map_err(|x| err(format!("{stem}: {x}")))?;
            fallbacks += e.fallbacks.len();
            self.write(Stage::Emit, &format!("md/{stem}.md"), e.output.text.as_bytes())?;
            self.write(Stage::Emit, &format!("md/{stem}.spans.json"), &pretty(&sidecar))?;
            self.markdown.push(e.output.text);
        }
        self.count("markdown_files", self.markdown.len());
        self.count("citation_fallbacks", fallbacks);
        Ok(())
    }

    fn link(&mut self) -> Result<(), PipelineError> {
        let cfg = LinkerConfig {
            min_counterpart_len: self.m.min_counterpart_len,
            extended_keywords: self.m.extended_keywords,
            ..LinkerConfig::default()
        };
        let per_doc: Vec<Vec<CaptionPair>> = self.docs.par_iter().map(|(_, d)| link_captions(d, &cfg)).collect();
        self.pairs = per_doc.into_iter().flatten().collect();
        self.write(Stage::Link, "pairs/caption_pairs.jsonl", &jsonl(&self.pairs))?;
        self.count("caption_pairs", self.pairs.len());
        Ok(())
    }

    fn knowledge(&mut self) -> Result<Vec<KnowledgeRecord>, String> {
        let mut records = Vec::new();
        for input in &self.m.knowledge {
            let kind = SchemaKind::parse(&input.schema).map_err(|e| e.to_string())?;
            let path = self.m.resolve(&input.path);
            let raw: Value = read_json(&path)?;
            let items = match raw {
                Value::Array(items) => items,
                other => vec![other],
            };
            for (i, item) in items.iter().enumerate() {
                match normalize_knowledge(item, kind) {
                    Ok(r) => records.push(r),
                    Err(e @ KnowledgeError::MissingName(_)) => {
                        self.report.warnings.push(format!("{}[{i}]: {e}", name_of(&path)));
                    }
                    Err(e) => return Err(format!("{}[{i}]: {e}", name_of(&path))),
                }
            }
        }
        Ok(records)
    }

    fn signals(&mut self, bank: &TemplateBank) -> Result<(), PipelineError> {
        let err = fail(Stage::Signals);
        let mut tuples: Vec<SignalTuple> = self.pairs.iter().map(caption_pair_tuple).collect();
        for (_, doc) in &self.docs {
            tuples.extend(citation_tuples(doc));
        }
        let records = self.knowledge().map_err(&err)?;
        for r in &records {
            tuples.extend(record_to_tuples(r));
        }
        if let Some(p) = &self.m.wikipedia {
            let pages: Vec<WikiPage> = read_json(&self.m.resolve(p)).map_err(&err)?;
            for page in &pages {
                tuples.extend(wiki_sections_to_tuples(&page.title, &page.sections, &page.abstract_text));
            }
        }
        // Families without templates stay raw tuples.
        let renderable: Vec<SignalTuple> = tuples
            .iter()
            .filter(|t| bank.required_slots(&t.family).is_some())
            .cloned()
            .collect();
        let data = generate_signal_dataset(&renderable, bank, self.m.seed);
        for f in &data.failures {
            self.report.warnings.push(format!("tuple {} ({}): {}", f.index, f.provenance, f.error));
        }
        self.write(Stage::Signals, "signals/tuples.jsonl", &jsonl(&tuples))?;
        self.write(Stage::Signals, "signals/knowledge.jsonl", &jsonl(&records))?;
        self.write(Stage::Signals, "signals/instructions.jsonl", &jsonl(&data.pairs))?;
        self.write(Stage::Signals, "signals/failures.jsonl", &jsonl(&data.failures))?;
        self.count("knowledge_records", records.len());
        self.count("signal_tuples", tuples.len());
        self.count("raw_tuples", tuples.len() - renderable.len());
        self.count("instruction_pairs", data.pairs.len());
        self.count("render_failures", data.failures.len());
        Ok(())
    }

    /// Sources in the fixed order first, then any others in manifest order.
    fn source_names(&self) -> Vec<String> {
        let mut names: Vec<String> = SOURCE_ORDER
            .iter()
            .filter(|s| self.m.sources.contains_key(**s))
            .map(|s| s.to_string())
            .collect();
        let rest: Vec<String> = self.m.sources.keys().filter(|k| !names.contains(k)).cloned().collect();
        names.extend(rest);
        names
    }

    fn blocks(&mut self) -> Result<(), PipelineError> {
        let err = fail(Stage::Blocks);
        let bs = self.m.block_size;
        let mut all: Vec<TokenBlock> = Vec::new();
        for name in self.source_names() {
            let records: Vec<String> = if name == GEOCORPUS {
                self.markdown.clone()
            } else {
                let dir = self.m.resolve(&self.m.sources[&name]);
                let files = list_files(&dir, "txt").map_err(|e| err(format!("{}: {e}", dir.display())))?;
                files.iter().map(|p| read_text(p)).collect::<Result<_, _>>().map_err(&err)?
            };
            // Sequential, so ids are assigned in a fixed order.
            let (stream, starts) = tokenize_stream(&records, &self.tok);
            let (blocks, stats) = slice_stream(&stream, &starts, &name, bs);
            debug_assert_eq!(stats.block_num * bs as u64 + stats.dropped_tokens, stats.token_num);
            all.extend(blocks);
            self.stats.push(stats);
        }
        if self.m.enabled(Stage::Blocks) {
            match self.m.block_format {
                BlockFormat::Jsonl => {
                    let mut buf = Vec::new();
                    write_blocks_jsonl(&mut buf, &all)?;
                    self.staging.write("blocks/blocks.jsonl", &buf)?;
                }
                BlockFormat::Frames => {
                    let mut buf = Vec::new();
                    let index = write_frames(&mut buf, &all, bs)?;
                    self.staging.write("blocks/blocks.bin", &buf)?;
                    self.staging.write("blocks/index.json", &pretty(&index))?;
                }
            }
            self.staging.write("blocks/stats.json", &pretty(&self.stats))?;
        }
        self.report.sources = self.stats.clone();
        self.count("blocks", all.len());
        Ok(())
    }

    fn plan(&mut self) -> Result<(), PipelineError> {
        let err = fail(Stage::Plan);
        let weights: Vec<(String, f64)> = self.m.ratios.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let plan: BatchPlan = plan_batches(&self.stats, &weights, self.m.global_batch, self.m.num_batches, self.m.seed)
            .map_err(|e| err(e.to_string()))?;
        let orders: Vec<Vec<u64>> = (0..plan.sources.len()).map(|i| plan.block_order(i)).collect();
        let batches: Vec<Value> = (0..plan.num_batches)
            .map(|b| {
                let blocks: IndexMap<String, Vec<u64>> = plan.batch_blocks(b, &orders).into_iter().collect();
                serde_json::json!({ "batch": b, "blocks": blocks })
            })
            .collect();
        self.write(Stage::Plan, "plan/plan.json", &pretty(&plan))?;
        self.write(Stage::Plan, "plan/batches.jsonl", &jsonl(&batches))?;
        self.count("batches", plan.num_batches as usize);
        Ok(())
    }

    fn masks(&mut self) -> Result<(), PipelineError> {
        let err = fail(Stage::Masks);
        let tools_path = self.m.resolve(self.m.tools.as_deref().unwrap_or(Path::new("")));
        let tools: Vec<ToolDescriptor> = read_json(&tools_path).map_err(&err)?;
        let traces_path = self.m.resolve(self.m.traces.as_deref().unwrap_or(Path::new("")));
        let text = read_text(&traces_path).map_err(&err)?;
        let mut samples = Vec::new();
        let mut truncated = 0;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let where_ = format!("{}:{}", name_of(&traces_path), i + 1);
            let trace: ToolTrace = serde_json::from_str(line).map_err(|e| err(format!("{where_}: {e}")))?;
            validate_trace(&trace, Some(&tools)).map_err(|e| err(format!("{where_}: {e}")))?;
            let prompt = render_tool_prompt(&tools, &trace.question).map_err(|e| err(e.to_string()))?;
            let s = compute_loss_mask(&prompt, &trace, &self.tok, self.m.max_length, MaskPolicy::default());
            truncated += usize::from(s.truncated);
            samples.push(MaskRecord {
                question: trace.question,
                ids: s.ids,
                mask: s.mask,
                truncated: s.truncated,
            });
        }
        self.write(Stage::Masks, "masks/samples.jsonl", &jsonl(&samples))?;
        self.count("masked_samples", samples.len());
        self.count("truncated_samples", truncated);
        Ok(())
    }
}

/// Runs the manifest's stages and writes outputs plus `report.json`,
/// `report.txt` and the tokenizer vocabulary under the output directory.
pub fn run_pipeline(manifest: &Manifest) -> Result<RunReport, PipelineError> {
    manifest.validate()?;
    let bank = match &manifest.template_bank {
        Some(p) => load_template_bank(&manifest.resolve(p)).map_err(|e| PipelineError::Stage {
            stage: Stage::Signals,
            message: e.to_string(),
        })?,
        None => TemplateBank::bundled(),
    };
    let out: PathBuf = manifest.output_path();
    let mut run = Run {
        m: manifest,
        staging: Staging::new(&out)?,
        tok: ReferenceTokenizer::new(),
        report: RunReport {
            config: manifest.clone(),
            stages: manifest.needed_stages(),
            sources: Vec::new(),
            counts: IndexMap::new(),
            warnings: Vec::new(),
            template_bank_digest: bank.digest().to_string(),
            timings: Vec::new(),
        },
        docs: Vec::new(),
        markdown: Vec::new(),
        pairs: Vec::new(),
        stats: Vec::new(),
    };
    for stage in manifest.needed_stages() {
        let t0 = Instant::now();
        log::info!("stage {stage}");
        match stage {
            Stage::Ingest => run.ingest()?,
            Stage::Emit => run.emit()?,
            Stage::Link => run.link()?,
            Stage::Signals => run.signals(&bank)?,
            Stage::Blocks => run.blocks()?,
            Stage::Plan => run.plan()?,
            Stage::Masks => run.masks()?,
        }
        run.report.timings.push((stage, t0.elapsed()));
    }
    let Run {
        staging, tok, report, ..
    } = run;
    staging.write("tokenizer/vocab.json", &pretty(&tok.vocab()))?;
    staging.write("report.json", &pretty(&report))?;
    staging.write("report.txt", report.to_text().as_bytes())?;
    staging.commit_entries()?;
    Ok(report)
}

use std::fmt;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus_builder::{DEFAULT_BLOCK_SIZE, GEOCORPUS};
use crate::signal_forge::SchemaKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Emit,
    Link,
    Signals,
    Blocks,
    Plan,
    Masks,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Emit,
        Stage::Link,
        Stage::Signals,
        Stage::Blocks,
        Stage::Plan,
        Stage::Masks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Emit => "emit",
            Stage::Link => "link",
            Stage::Signals => "signals",
            Stage::Blocks => "blocks",
            Stage::Plan => "plan",
            Stage::Masks => "masks",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockFormat {
    #[default]
    Jsonl,
    Frames,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeInput {
    pub schema: String,
    pub path: PathBuf,
}

fn default_tokenizer() -> String {
    "reference".into()
}
fn default_block_size() -> usize {
    DEFAULT_BLOCK_SIZE
}
fn default_ratios() -> IndexMap<String, f64> {
    [("geocorpus", 8.0), ("arxiv", 1.0), ("code", 1.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}
fn default_global_batch() -> u64 {
    4096
}
fn default_one() -> u64 {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}
fn default_min_counterpart_len() -> usize {
    20
}
fn default_max_length() -> usize {
    2048
}

/// Pipeline configuration. Relative paths are resolved against the
/// directory holding the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// `geocorpus` points at a directory of TEI files; any other source at a
    /// directory of plain-text records, one per file.
    #[serde(default)]
    pub sources: IndexMap<String, PathBuf>,
    #[serde(default)]
    pub knowledge: Vec<KnowledgeInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wikipedia: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traces: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_bank: Option<PathBuf>,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default)]
    pub block_format: BlockFormat,
    #[serde(default = "default_ratios")]
    pub ratios: IndexMap<String, f64>,
    #[serde(default = "default_global_batch")]
    pub global_batch: u64,
    #[serde(default = "default_one")]
    pub num_batches: u64,
    #[serde(default)]
    pub seed: u64,
    /// Not echoed in the report, so runs into different directories match.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default = "default_min_counterpart_len")]
    pub min_counterpart_len: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default)]
    pub extended_keywords: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    /// Reads JSON, or TOML when the file name ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        let mut m: Manifest = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))?
        };
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn enabled(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    /// Enabled stages plus everything they need, in run order.
    pub fn needed_stages(&self) -> Vec<Stage> {
        let has_tei = self.sources.contains_key(GEOCORPUS);
        let mut need: Vec<Stage> = self.stages.clone();
        let mut changed = true;
        while changed {
            changed = false;
            let mut add: Vec<Stage> = Vec::new();
            for s in &need {
                let prereq: &[Stage] = match s {
                    Stage::Emit | Stage::Link => &[Stage::Ingest],
                    Stage::Signals if has_tei => &[Stage::Ingest, Stage::Link],
                    Stage::Blocks if has_tei => &[Stage::Emit],
                    Stage::Plan => &[Stage::Blocks],
                    _ => &[],
                };
                add.extend(prereq.iter().filter(|p| !need.contains(p)));
            }
            if !add.is_empty() {
                changed = true;
                need.extend(add);
                need.sort();
                need.dedup();
            }
        }
        need.sort();
        need.dedup();
        need
    }

    /// All problems that make the manifest unusable, checked before any work.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut errs = Vec::new();
        if self.stages.is_empty() {
            errs.push("no stages enabled".to_string());
        }
        if self.tokenizer != "reference" {
            errs.push(format!("unknown tokenizer {:?}", self.tokenizer));
        }
        if self.block_size < 2 {
            errs.push(format!("block_size must be at least 2, got {}", self.block_size));
        }
        if self.max_length == 0 {
            errs.push("max_length must be positive".into());
        }
        for (s, w) in &self.ratios {
            if !(w.is_finite() && *w > 0.0) {
                errs.push(format!("ratio for {s} must be positive, got {w}"));
            }
        }
        for k in &self.knowledge {
            if let Err(e) = SchemaKind::parse(&k.schema) {
                errs.push(e.to_string());
            }
        }
        let need = self.needed_stages();
        if need.contains(&Stage::Ingest) && !self.sources.contains_key(GEOCORPUS) {
            errs.push("ingest needs a geocorpus source".into());
        }
        if need.contains(&Stage::Blocks) && self.sources.is_empty() {
            errs.push("blocks needs at least one source".into());
        }
        if need.contains(&Stage::Plan) {
            if self.ratios.is_empty() {
                errs.push("plan needs ratios".into());
            }
            for s in self.ratios.keys() {
                if !self.sources.contains_key(s) {
                    errs.push(format!("ratio given for {s} but no such source"));
                }
            }
            if self.global_batch < self.ratios.len() as u64 {
                errs.push(format!(
                    "global_batch {} is smaller than the number of sources",
                    self.global_batch
                ));
            }
            if self.num_batches == 0 {
                errs.push("num_batches must be positive".into());
            }
        }
        if need.contains(&Stage::Masks) && (self.tools.is_none() || self.traces.is_none()) {
            errs.push("masks needs tools and traces".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Manifest {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn defaults() {
        let m = parse(r#"{"sources": {"geocorpus": "tei"}}"#);
        assert_eq!(m.block_size, 2048);
        assert_eq!(m.ratios["geocorpus"], 8.0);
        assert_eq!(m.stages.len(), 7);
    }

    #[test]
    fn negative_ratio_rejected() {
        let m = parse(r#"{"sources": {"geocorpus": "tei", "arxiv": "a", "code": "c"}, "ratios": {"geocorpus": 8, "arxiv": -1, "code": 1}, "stages": ["plan"]}"#);
        let PipelineError::Invalid(errs) = m.validate().unwrap_err() else {
            panic!("expected validation error")
        };
        assert!(errs.iter().any(|e| e.contains("arxiv")));
    }

    #[test]
    fn prerequisites_added() {
        let m = parse(r#"{"sources": {"geocorpus": "tei"}, "stages": ["blocks"]}"#);
        assert_eq!(m.needed_stages(), [Stage::Ingest, Stage::Emit, Stage::Blocks]);
        let m = parse(r#"{"sources": {"code": "c"}, "stages": ["blocks"]}"#);
        assert_eq!(m.needed_stages(), [Stage::Blocks]);
    }

    #[test]
    fn toml_and_unknown_fields() {
        let m: Manifest = toml::from_str("stages = [\"ingest\"]\n[sources]\ngeocorpus = \"tei\"\n").unwrap();
        assert_eq!(m.stages, [Stage::Ingest]);
        assert!(serde_json::from_str::<Manifest>(r#"{"bogus": 1}"#).is_err());
    }
}

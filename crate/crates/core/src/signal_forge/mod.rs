//! Instruction pairs from signal tuples.
//!
//! A signal tuple names a template family and binds the family's
//! `[placeholder]` slots. Rendering picks one of the family's five variants,
//! either fixed or drawn from a seeded per-tuple stream, and substitutes the
//! bindings in a single pass so bound text is never re-expanded.

mod knowledge;
mod tuples;

use std::collections::BTreeSet;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use knowledge::{
    formula_elements, normalize_knowledge, record_to_tuples, KnowledgeError, KnowledgeRecord,
    PropertyValue, SchemaKind, NO_INFO,
};
pub use tuples::{
    caption_pair_tuple, citation_tuples, wiki_sections_to_tuples, WikiSectionTriple,
    WIKI_SUMMARY_FAMILY,
};

pub const PLACEHOLDERS: &[&str] = &[
    "input", "output", "key", "value", "object", "parent", "child", "title", "keyword", "paragraph",
    "word", "term", "Answer",
];

pub const FAMILIES: &[&str] = &[
    "deepliterature.abstract.title",
    "deepliterature.abstract.keyword",
    "deepliterature.reference.resolution",
    "gso.wikipedia.title",
    "gso.wikipedia.entity",
    "gso.wordnet.description",
    "gso.wordnet.synonym",
    "gso.dictionary.definition",
    "gso.dictionary.synonym",
    "gso.dictionary.classification",
    "gso.taxonomy.hyponymy.child",
    "gso.taxonomy.hyponymy.parent",
    "gso.taxonomy.hyponymy.judgment.parent",
    "gso.taxonomy.hyponymy.judgment.child",
    "metaearth",
    "gakg.qa",
    "ner",
    "gakg.illustration",
    "gakg.table",
];

pub const VARIANTS_PER_FAMILY: u8 = 5;

pub const BUNDLED_BANK_JSON: &str = include_str!("../../assets/template_bank.json");

#[derive(Debug, Error)]
pub enum BankError {
    #[error("cannot read template bank: {0}")]
    Io(#[from] std::io::Error),
    #[error("template bank is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("template bank is missing family {0}")]
    MissingFamily(String),
    #[error("family {family} is missing variant {variant}")]
    MissingVariant { family: String, variant: u8 },
    #[error("family {family} has duplicate or out-of-range variant {variant}")]
    BadVariant { family: String, variant: u8 },
    #[error("family {family} variant {variant} uses unknown placeholder [{placeholder}]")]
    UnknownPlaceholder {
        family: String,
        variant: u8,
        placeholder: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("unknown template family {0}")]
    UnknownFamily(String),
    #[error("family {family} has no variant {variant}")]
    UnknownVariant { family: String, variant: u8 },
    #[error("missing binding for [{0}]")]
    MissingBinding(String),
    #[error("binding for [{0}] is empty")]
    EmptyBinding(String),
    #[error("binding [{0}] is not used by family {1}")]
    UnusedBinding(String, String),
    #[error("binding for [{0}] contains a placeholder literal")]
    PlaceholderInBinding(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub variant: u8,
    pub input_pattern: String,
    pub output_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FamilyFile {
    family: String,
    templates: Vec<PromptTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BankFile {
    families: Vec<FamilyFile>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    families: IndexMap<String, Vec<PromptTemplate>>,
    digest: String,
}

/// Placeholder names in `pattern`, in order of appearance.
pub fn slots(pattern: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        match after.find(']') {
            Some(close) if !after[..close].contains('[') => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn contains_placeholder(s: &str) -> bool {
    PLACEHOLDERS.iter().any(|p| s.contains(&format!("[{p}]")))
}

impl TemplateBank {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_BANK_JSON).expect("bundled template bank is valid")
    }

    pub fn from_json(json: &str) -> Result<Self, BankError> {
        let file: BankFile = serde_json::from_str(json)?;
        let mut families = IndexMap::new();
        for f in file.families {
            families.insert(f.family, f.templates);
        }
        for name in FAMILIES {
            if !families.contains_key(*name) {
                return Err(BankError::MissingFamily(name.to_string()));
            }
        }
        for (family, templates) in families.iter_mut() {
            let mut seen = BTreeSet::new();
            for t in templates.iter() {
                if t.variant == 0 || t.variant > VARIANTS_PER_FAMILY || !seen.insert(t.variant) {
                    return Err(BankError::BadVariant {
                        family: family.clone(),
                        variant: t.variant,
                    });
                }
                for slot in slots(&t.input_pattern).into_iter().chain(slots(&t.output_pattern)) {
                    if !PLACEHOLDERS.contains(&slot) {
                        return Err(BankError::UnknownPlaceholder {
                            family: family.clone(),
                            variant: t.variant,
                            placeholder: slot.to_string(),
                        });
                    }
                }
            }
            if let Some(v) = (1..=VARIANTS_PER_FAMILY).find(|v| !seen.contains(v)) {
                return Err(BankError::MissingVariant {
                    family: family.clone(),
                    variant: v,
                });
            }
            templates.sort_by_key(|t| t.variant);
        }
        Ok(TemplateBank {
            families,
            digest: hex::encode(Sha256::digest(json.as_bytes())),
        })
    }

    /// SHA-256 of the bank file bytes.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn families(&self) -> impl Iterator<Item = &str> {
        self.families.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.families.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn template(&self, family: &str, variant: u8) -> Option<&PromptTemplate> {
        self.families.get(family)?.iter().find(|t| t.variant == variant)
    }

    /// Union of the placeholders used by any variant of `family`.
    pub fn required_slots(&self, family: &str) -> Option<BTreeSet<&str>> {
        let ts = self.families.get(family)?;
        Some(
            ts.iter()
                .flat_map(|t| slots(&t.input_pattern).into_iter().chain(slots(&t.output_pattern)))
                .collect(),
        )
    }
}

pub fn load_template_bank(path: &Path) -> Result<TemplateBank, BankError> {
    TemplateBank::from_json(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalTuple {
    pub family: String,
    pub bindings: IndexMap<String, String>,
    pub provenance: String,
    /// Permits empty bindings, e.g. a page with no sections.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_empty: bool,
}

impl SignalTuple {
    pub fn new<K: Into<String>, V: Into<String>>(
        family: &str,
        bindings: impl IntoIterator<Item = (K, V)>,
        provenance: &str,
    ) -> Self {
        SignalTuple {
            family: family.to_string(),
            bindings: bindings.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            provenance: provenance.to_string(),
            allow_empty: false,
        }
    }
}

/// `instruction` is the fully rendered prompt. `input` repeats the text bound
/// to `[input]`, when the family has one, for consumers that keep instruction
/// and input apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub output: String,
    pub family: String,
    pub variant: u8,
    pub provenance: String,
}

impl InstructionPair {
    /// Prompt and response joined by a newline.
    pub fn concatenated(&self) -> String {
        format!("{}\n{}", self.instruction, self.output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantChoice {
    Fixed(u8),
    /// Uniform over 1..=5 from ChaCha8 seeded with `seed` on stream `index`.
    Seeded { seed: u64, index: u64 },
}

pub fn draw_variant(seed: u64, index: u64) -> u8 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random_range(1..=VARIANTS_PER_FAMILY)
}

fn substitute(pattern: &str, bindings: &IndexMap<String, String>) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find(']').map(|c| (&after[..c], c)) {
            Some((name, close)) if PLACEHOLDERS.contains(&name) => {
                out.push_str(&bindings[name]);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('[');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_pair(
    bank: &TemplateBank,
    tuple: &SignalTuple,
    choice: VariantChoice,
) -> Result<InstructionPair, RenderError> {
    let required = bank
        .required_slots(&tuple.family)
        .ok_or_else(|| RenderError::UnknownFamily(tuple.family.clone()))?;
    for slot in &required {
        match tuple.bindings.get(*slot) {
            None => return Err(RenderError::MissingBinding(slot.to_string())),
            Some(v) if v.trim().is_empty() && !tuple.allow_empty => {
                return Err(RenderError::EmptyBinding(slot.to_string()))
            }
            Some(v) if contains_placeholder(v) => {
                return Err(RenderError::PlaceholderInBinding(slot.to_string()))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = tuple.bindings.keys().find(|k| !required.contains(k.as_str())) {
        return Err(RenderError::UnusedBinding(extra.clone(), tuple.family.clone()));
    }
    let variant = match choice {
        VariantChoice::Fixed(v) => v,
        VariantChoice::Seeded { seed, index } => draw_variant(seed, index),
    };
    let t = bank
        .template(&tuple.family, variant)
        .ok_or_else(|| RenderError::UnknownVariant {
            family: tuple.family.clone(),
            variant,
        })?;
    let uses_input = slots(&t.input_pattern).contains(&"input");
    Ok(InstructionPair {
        instruction: substitute(&t.input_pattern, &tuple.bindings),
        input: uses_input.then(|| tuple.bindings["input"].clone()),
        output: substitute(&t.output_pattern, &tuple.bindings),
        family: tuple.family.clone(),
        variant,
        provenance: tuple.provenance.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleFailure {
    pub index: usize,
    pub provenance: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalDataset {
    pub pairs: Vec<InstructionPair>,
    pub failures: Vec<TupleFailure>,
}

/// Renders every tuple with a variant drawn from stream `index` of `seed`.
/// Output order follows input order; failing tuples are reported with their
/// index and skipped.
pub fn generate_signal_dataset(tuples: &[SignalTuple], bank: &TemplateBank, seed: u64) -> SignalDataset {
    use rayon::prelude::*;
    let results: Vec<_> = tuples
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            render_pair(
                bank,
                t,
                VariantChoice::Seeded {
                    seed,
                    index: i as u64,
                },
            )
        })
        .collect();
    let mut out = SignalDataset::default();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => out.pairs.push(p),
            Err(e) => out.failures.push(TupleFailure {
                index: i,
                provenance: tuples[i].provenance.clone(),
                error: e.to_string(),
            }),
        }
    }
    out
}

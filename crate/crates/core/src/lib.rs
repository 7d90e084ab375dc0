//! Data preparation for geoscience language models.
//!
//! The crate turns structurally parsed papers (TEI XML) and structured
//! knowledge snapshots into training data:
//!
//! * [`doc_model`] ingests TEI into a [`StructuredDocument`].
//! * [`md_emitter`] renders documents as Markdown with `[START_*]`/`[END_*]`
//!   special tokens around figures, tables, references and formulas.
//! * [`caption_linker`] pairs figure/table captions with the sentences that
//!   mention them.
//! * [`corpus_builder`] tokenizes per-source text, packs it into fixed-length
//!   blocks and plans mixed batches.
//! * [`signal_forge`] turns signal tuples and knowledge records into
//!   instruction pairs using the bundled prompt-template bank.
//! * [`tool_trace`] renders, parses and loss-masks ReAct-style tool traces.
//! * [`pipeline`] runs the stages end to end from a manifest.

pub mod caption_linker;
pub mod corpus_builder;
pub mod doc_model;
pub mod fsutil;
pub mod md_emitter;
pub mod pipeline;
pub mod signal_forge;
pub mod tokenizer;
pub mod tool_trace;

pub use doc_model::StructuredDocument;

//! Token blocks and batch mixing.
//!
//! Records are tokenized with an eos id appended to each, concatenated per
//! source, and cut into consecutive windows of `block_size`. The final partial
//! window is dropped. Batches draw a fixed number of blocks from every source,
//! computed by largest-remainder apportionment of the batch size.

mod output;

use std::io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{TokenId, Tokenizer};

pub use output::{read_blocks_jsonl, read_frames, write_blocks_jsonl, write_frames, FrameIndex, FrameEntry};

pub const DEFAULT_BLOCK_SIZE: usize = 2048;
pub const GEOCORPUS: &str = "geocorpus";
pub const ARXIV: &str = "arxiv";
pub const CODE: &str = "code";

/// Tie-break order for apportionment; other sources follow in input order.
pub const SOURCE_ORDER: [&str; 3] = [GEOCORPUS, ARXIV, CODE];

/// Half-open range of record indices whose tokens appear in a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBlock {
    pub source: String,
    pub ids: Vec<TokenId>,
    pub origin: RecordRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStats {
    pub source: String,
    pub item_num: u64,
    pub token_num: u64,
    pub block_num: u64,
    pub dropped_tokens: u64,
}

impl SourceStats {
    /// Stats implied by a token count, for sources that were not blocked here.
    pub fn from_counts(source: &str, item_num: u64, token_num: u64, block_size: usize) -> Self {
        let bs = block_size as u64;
        SourceStats {
            source: source.to_string(),
            item_num,
            token_num,
            block_num: token_num / bs,
            dropped_tokens: token_num % bs,
        }
    }
}

pub fn tokenize_record(text: &str, tok: &dyn Tokenizer) -> Vec<TokenId> {
    let mut ids = tok.encode(text);
    ids.push(tok.eos_id());
    ids
}

/// The concatenated token stream of `records` and the stream offset at which
/// each record starts. Records are encoded in order so vocabularies that grow
/// on first appearance stay deterministic.
pub fn tokenize_stream<S: AsRef<str>>(records: &[S], tok: &dyn Tokenizer) -> (Vec<TokenId>, Vec<usize>) {
    let mut stream = Vec::new();
    let mut starts = Vec::with_capacity(records.len());
    for r in records {
        starts.push(stream.len());
        stream.extend(tokenize_record(r.as_ref(), tok));
    }
    (stream, starts)
}

fn record_at(starts: &[usize], pos: usize) -> usize {
    starts.partition_point(|&s| s <= pos).saturating_sub(1)
}

/// Slices an already tokenized stream into blocks.
pub fn slice_stream(
    stream: &[TokenId],
    record_starts: &[usize],
    source: &str,
    block_size: usize,
) -> (Vec<TokenBlock>, SourceStats) {
    assert!(block_size >= 2, "block_size must be at least 2");
    let blocks: Vec<TokenBlock> = stream
        .chunks_exact(block_size)
        .enumerate()
        .map(|(i, ids)| {
            let first = i * block_size;
            let last = first + block_size - 1;
            TokenBlock {
                source: source.to_string(),
                ids: ids.to_vec(),
                origin: RecordRange {
                    start: record_at(record_starts, first),
                    end: record_at(record_starts, last) + 1,
                },
            }
        })
        .collect();
    let stats = SourceStats {
        source: source.to_string(),
        item_num: record_starts.len() as u64,
        token_num: stream.len() as u64,
        block_num: blocks.len() as u64,
        dropped_tokens: (stream.len() % block_size) as u64,
    };
    (blocks, stats)
}

pub fn build_blocks<S: AsRef<str>>(
    records: &[S],
    source: &str,
    tok: &dyn Tokenizer,
    block_size: usize,
) -> (Vec<TokenBlock>, SourceStats) {
    let (stream, starts) = tokenize_stream(records, tok);
    slice_stream(&stream, &starts, source, block_size)
}

/// True iff the blocks are full-size, concatenate to a prefix of `stream`,
/// and leave fewer than `block_size` tokens over.
pub fn verify_blocks(blocks: &[TokenBlock], stream: &[TokenId], block_size: usize) -> bool {
    let mut pos = 0;
    for b in blocks {
        if b.ids.len() != block_size || stream.get(pos..pos + block_size) != Some(b.ids.as_slice()) {
            return false;
        }
        pos += block_size;
    }
    stream.len() - pos < block_size
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("source {name} is exhausted at batch {batch}: needs {needed} blocks, has {available}")]
    Exhausted {
        name: String,
        batch: u64,
        needed: u64,
        available: u64,
    },
    #[error("no statistics for source {0}")]
    UnknownSource(String),
    #[error("weight for source {0} must be positive and finite")]
    BadWeight(String),
    #[error("global batch {global_batch} is smaller than the number of sources {sources}")]
    BatchTooSmall { global_batch: u64, sources: usize },
    #[error("no sources")]
    NoSources,
}

/// Orders sources geocorpus, arxiv, code, then any others in input order.
fn ordered<T>(items: Vec<(String, T)>) -> Vec<(String, T)> {
    let rank = |s: &str| SOURCE_ORDER.iter().position(|k| *k == s).unwrap_or(SOURCE_ORDER.len());
    let mut items: Vec<(usize, (String, T))> = items.into_iter().enumerate().collect();
    items.sort_by_key(|(i, (s, _))| (rank(s), *i));
    items.into_iter().map(|(_, x)| x).collect()
}

/// Largest-remainder apportionment of `total` over `weights`. Fractional
/// parts equal to nine decimal places go to the earlier entry.
pub fn apportion(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    // Quantized so near-equal remainders compare equal and fall back to order.
    let key = |i: usize| std::cmp::Reverse(((quotas[i] - quotas[i].floor()) * 1e9).round() as u64);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| (key(i), i));
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSource {
    pub source: String,
    pub weight: f64,
    pub block_num: u64,
    pub per_batch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledBatch {
    pub batch: u64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub global_batch: u64,
    pub num_batches: u64,
    pub seed: u64,
    pub sources: Vec<PlannedSource>,
    pub schedule: Vec<ScheduledBatch>,
}

pub fn plan_batches(
    stats: &[SourceStats],
    weights: &[(String, f64)],
    global_batch: u64,
    num_batches: u64,
    seed: u64,
) -> Result<BatchPlan, PlanError> {
    if weights.is_empty() {
        return Err(PlanError::NoSources);
    }
    if global_batch < weights.len() as u64 {
        return Err(PlanError::BatchTooSmall {
            global_batch,
            sources: weights.len(),
        });
    }
    let weights = ordered(weights.to_vec());
    let mut sources = Vec::with_capacity(weights.len());
    for (name, w) in &weights {
        if !(w.is_finite() && *w > 0.0) {
            return Err(PlanError::BadWeight(name.clone()));
        }
        let st = stats
            .iter()
            .find(|s| &s.source == name)
            .ok_or_else(|| PlanError::UnknownSource(name.clone()))?;
        sources.push((name.clone(), *w, st.block_num));
    }
    let ws: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let counts = apportion(&ws, global_batch);
    for ((name, _, available), &c) in sources.iter().zip(&counts) {
        if c > 0 && c * num_batches > *available {
            return Err(PlanError::Exhausted {
                name: name.clone(),
                batch: available / c,
                needed: c * num_batches,
                available: *available,
            });
        }
    }
    Ok(BatchPlan {
        global_batch,
        num_batches,
        seed,
        sources: sources
            .into_iter()
            .zip(&counts)
            .map(|((source, weight, block_num), &per_batch)| PlannedSource {
                source,
                weight,
                block_num,
                per_batch,
            })
            .collect(),
        schedule: (0..num_batches)
            .map(|batch| ScheduledBatch {
                batch,
                counts: counts.clone(),
            })
            .collect(),
    })
}

impl BatchPlan {
    /// Seeded permutation of a source's block indices. Each source draws from
    /// its own ChaCha stream so adding a source does not reorder the others.
    pub fn block_order(&self, source_pos: usize) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(source_pos as u64);
        let mut order: Vec<u64> = (0..self.sources[source_pos].block_num).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Block indices drawn from each source for `batch`, in source order.
    pub fn batch_blocks(&self, batch: u64, orders: &[Vec<u64>]) -> Vec<(String, Vec<u64>)> {
        let sched = &self.schedule[batch as usize];
        self.sources
            .iter()
            .zip(&sched.counts)
            .zip(orders)
            .map(|((s, &c), order)| {
                let start = (batch * c) as usize;
                (s.source.clone(), order[start..start + c as usize].to_vec())
            })
            .collect()
    }

    /// Fraction of all planned blocks drawn from each source.
    pub fn realized_shares(&self) -> Vec<f64> {
        let mut totals = vec![0u64; self.sources.len()];
        for b in &self.schedule {
            for (t, c) in totals.iter_mut().zip(&b.counts) {
                *t += c;
            }
        }
        let all: u64 = totals.iter().sum();
        totals.iter().map(|&t| t as f64 / all as f64).collect()
    }

    pub fn write_json<W: io::Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::ReferenceTokenizer;
    use proptest::prelude::*;

    fn stats(name: &str, blocks: u64) -> SourceStats {
        SourceStats::from_counts(name, 1, blocks * 2048, 2048)
    }

    fn mix() -> Vec<(String, f64)> {
        vec![(GEOCORPUS.into(), 8.0), (ARXIV.into(), 1.0), (CODE.into(), 1.0)]
    }

    #[test]
    fn record_gets_eos() {
        let t = ReferenceTokenizer::new();
        assert_eq!(tokenize_record("", &t), vec![2]);
        assert_eq!(tokenize_record("a b", &t), vec![3, 4, 2]);
    }

    #[test]
    fn five_thousand_tokens() {
        let stream: Vec<TokenId> = (0..5000).collect();
        let (blocks, st) = slice_stream(&stream, &[0], "arxiv", 2048);
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[1].ids[0], 2048);
        assert_eq!(blocks[1].ids[2047], 4095);
        assert_eq!(st.dropped_tokens, 904);
        assert!(verify_blocks(&blocks, &stream, 2048));
    }

    #[test]
    fn exact_block() {
        let stream: Vec<TokenId> = (0..2048).collect();
        let (blocks, st) = slice_stream(&stream, &[0], "code", 2048);
        assert_eq!((blocks.len(), st.dropped_tokens), (1, 0));
    }

    #[test]
    fn mutated_or_reordered_blocks_fail() {
        let stream: Vec<TokenId> = (0..20).collect();
        let (mut blocks, _) = slice_stream(&stream, &[0], "code", 4);
        let mut swapped = blocks.clone();
        swapped.swap(0, 1);
        assert!(!verify_blocks(&swapped, &stream, 4));
        blocks[2].ids[1] += 1;
        assert!(!verify_blocks(&blocks, &stream, 4));
    }

    #[test]
    fn origin_spans_records() {
        let t = ReferenceTokenizer::new();
        let (blocks, st) = build_blocks(&["a b c", "d", "e f g h"], "arxiv", &t, 4);
        // stream: a b c <eos> | d <eos> e f | g h <eos>
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].origin, RecordRange { start: 0, end: 1 });
        assert_eq!(blocks[1].origin, RecordRange { start: 1, end: 3 });
        assert_eq!((st.item_num, st.token_num, st.dropped_tokens), (3, 11, 3));
    }

    #[test]
    fn apportionment_examples() {
        assert_eq!(apportion(&[8.0, 1.0, 1.0], 10), vec![8, 1, 1]);
        assert_eq!(apportion(&[8.0, 1.0, 1.0], 4096), vec![3277, 410, 409]);
        assert_eq!(apportion(&[8.0, 1.0, 1.0], 3), vec![3, 0, 0]);
    }

    #[test]
    fn sources_are_reordered_for_ties() {
        let w = vec![(CODE.into(), 1.0), (ARXIV.into(), 1.0), (GEOCORPUS.into(), 8.0)];
        let st = [stats(CODE, 1000), stats(ARXIV, 1000), stats(GEOCORPUS, 8000)];
        let plan = plan_batches(&st, &w, 4096, 1, 0).unwrap();
        let names: Vec<_> = plan.sources.iter().map(|s| (s.source.as_str(), s.per_batch)).collect();
        assert_eq!(names, [(GEOCORPUS, 3277), (ARXIV, 410), (CODE, 409)]);
    }

    #[test]
    fn exhaustion_names_source_and_batch() {
        let st = [stats(GEOCORPUS, 100), stats(ARXIV, 100), stats(CODE, 5)];
        let err = plan_batches(&st, &mix(), 10, 8, 1).unwrap_err();
        assert_eq!(
            err,
            PlanError::Exhausted {
                name: CODE.into(),
                batch: 5,
                needed: 8,
                available: 5
            }
        );
        assert!(err.to_string().contains("code") && err.to_string().contains("batch 5"));
    }

    #[test]
    fn seeded_orders_are_stable() {
        let st = [stats(GEOCORPUS, 80), stats(ARXIV, 10), stats(CODE, 10)];
        let a = plan_batches(&st, &mix(), 10, 10, 42).unwrap();
        let b = plan_batches(&st, &mix(), 10, 10, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.block_order(0), b.block_order(0));
        let c = plan_batches(&st, &mix(), 10, 10, 43).unwrap();
        assert_ne!(a.block_order(0), c.block_order(0));
        let orders: Vec<_> = (0..3).map(|i| a.block_order(i)).collect();
        let mut seen: Vec<u64> = (0..10).flat_map(|b| a.batch_blocks(b, &orders)[0].1.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..80).collect::<Vec<_>>());
    }

    fn lr_oracle(weights: &[u64], total: u64) -> Vec<u64> {
        // Exact integer largest remainder: quota_i = total * w_i / W.
        let sum: u64 = weights.iter().sum();
        let mut counts: Vec<u64> = weights.iter().map(|w| total * w / sum).collect();
        let mut rems: Vec<(u64, usize)> = weights.iter().enumerate().map(|(i, w)| (total * w % sum, i)).collect();
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let left = total - counts.iter().sum::<u64>();
        for &(_, i) in rems.iter().take(left as usize) {
            counts[i] += 1;
        }
        counts
    }

    proptest! {
        #[test]
        fn blocks_preserve_prefix(len in 0usize..5000, bs in 2usize..300) {
            let stream: Vec<TokenId> = (0..len as u32).map(|i| i.wrapping_mul(2654435761) % 997).collect();
            let (blocks, st) = slice_stream(&stream, &[0], "geocorpus", bs);
            prop_assert!(verify_blocks(&blocks, &stream, bs));
            prop_assert!(blocks.iter().all(|b| b.ids.len() == bs));
            prop_assert_eq!(st.block_num * bs as u64 + st.dropped_tokens, st.token_num);
            prop_assert!(st.dropped_tokens < bs as u64);
        }

        #[test]
        fn apportion_matches_integer_oracle(ws in proptest::collection::vec(1u64..50, 1..6), total in 1u64..10_000) {
            let f: Vec<f64> = ws.iter().map(|&w| w as f64).collect();
            let got = apportion(&f, total);
            prop_assert_eq!(got.iter().sum::<u64>(), total);
            prop_assert_eq!(got, lr_oracle(&ws, total));
        }
    }
}

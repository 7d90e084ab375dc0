//! Loss masks over prompt + transcript.
//!
//! Mask values are decided on bytes first: every byte of a trained payload
//! is 1, everything else 0. A token gets 1 iff more than half of its bytes
//! are 1, so the rule does not depend on where a tokenizer puts boundaries.

use serde::{Deserialize, Serialize};

use super::{render_with_segments, SegmentKind, ToolTrace};
use crate::tokenizer::{TokenId, Tokenizer};

pub const DEFAULT_MAX_LENGTH: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskPolicy {
    /// Also train on the labels of trained payloads ("Thought:", "Action:",
    /// "Action Input:", "Final Answer:").
    pub train_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub ids: Vec<TokenId>,
    pub mask: Vec<u8>,
    pub truncated: bool,
}

/// Prompt and transcript joined. A prompt ending in the open `Thought:`
/// label loses it, because the transcript supplies its own.
pub(crate) fn assemble(prompt: &str, trace: &ToolTrace) -> (String, Vec<super::Segment>) {
    let (body, segs) = render_with_segments(trace, false);
    let head = prompt.strip_suffix("Thought:").unwrap_or(prompt);
    let sep = if head.is_empty() || head.ends_with('\n') { "" } else { "\n" };
    let offset = head.len() + sep.len();
    let segs = segs
        .into_iter()
        .map(|mut s| {
            s.start += offset;
            s.end += offset;
            s
        })
        .collect();
    (format!("{head}{sep}{body}"), segs)
}

pub fn compute_loss_mask(
    prompt: &str,
    trace: &ToolTrace,
    tok: &dyn Tokenizer,
    max_length: usize,
    policy: MaskPolicy,
) -> MaskedSample {
    let (text, segs) = assemble(prompt, trace);
    let mut byte_mask = vec![false; text.len()];
    for s in &segs {
        let trained = s.kind.is_trained() || (policy.train_labels && s.kind == SegmentKind::Label && s.field.is_trained());
        if trained {
            byte_mask[s.start..s.end].iter_mut().for_each(|b| *b = true);
        }
    }
    let tokens = tok.encode_with_offsets(&text);
    let truncated = tokens.len() > max_length;
    let (ids, mask) = tokens
        .iter()
        .take(max_length)
        .map(|t| {
            let on = byte_mask[t.start..t.end].iter().filter(|b| **b).count();
            (t.id, u8::from(2 * on > t.end - t.start))
        })
        .unzip();
    MaskedSample { ids, mask, truncated }
}

/// Number of trained tokens obtained by encoding each trained payload on its
/// own. Equals the mask sum of an untruncated sample whenever token
/// boundaries fall on payload boundaries.
pub fn mask_oracle_sum(trace: &ToolTrace, tok: &dyn Tokenizer) -> usize {
    let mut payloads: Vec<&str> = Vec::new();
    for s in &trace.steps {
        payloads.extend([s.thought.as_str(), &s.action, &s.action_input]);
    }
    payloads.push(&trace.final_thought);
    payloads.push(&trace.final_answer);
    payloads.iter().map(|p| tok.encode(p).len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::ReferenceTokenizer;
    use crate::tool_trace::{TraceStep, FINAL_THOUGHT};

    fn trace(final_thought: &str, answer: &str) -> ToolTrace {
        ToolTrace {
            question: "ignored".into(),
            steps: vec![],
            final_thought: final_thought.into(),
            final_answer: answer.into(),
        }
    }

    #[test]
    fn zero_steps_counts_answer_tokens() {
        let tok = ReferenceTokenizer::new();
        let s = compute_loss_mask("Question: q\nThought:", &trace("", "three word answer"), &tok, 2048, MaskPolicy::default());
        assert_eq!(s.mask.iter().map(|&m| m as usize).sum::<usize>(), 3);
        let s = compute_loss_mask("Question: q\nThought:", &trace(FINAL_THOUGHT, "three word answer"), &tok, 2048, MaskPolicy::default());
        assert_eq!(s.mask.iter().map(|&m| m as usize).sum::<usize>(), 9);
        assert!(!s.truncated);
    }

    #[test]
    fn observation_is_never_trained() {
        let tok = ReferenceTokenizer::new();
        let t = ToolTrace {
            question: String::new(),
            steps: vec![TraceStep {
                thought: "search it".into(),
                action: "search".into(),
                action_input: "{\"q\": \"basalt\"}".into(),
                observation: "zzobs yyobs".into(),
            }],
            final_thought: FINAL_THOUGHT.into(),
            final_answer: "done".into(),
        };
        let s = compute_loss_mask("P", &t, &tok, 2048, MaskPolicy::default());
        let obs: Vec<TokenId> = tok.encode("zzobs yyobs");
        for (id, m) in s.ids.iter().zip(&s.mask) {
            if obs.contains(id) {
                assert_eq!(*m, 0);
            }
        }
        assert_eq!(s.mask.iter().map(|&m| m as usize).sum::<usize>(), mask_oracle_sum(&t, &tok));
    }

    #[test]
    fn labels_trained_under_policy() {
        let tok = ReferenceTokenizer::new();
        let s = compute_loss_mask("", &trace("", "x"), &tok, 2048, MaskPolicy { train_labels: true });
        // "Final", "Answer", ":" and "x"
        assert_eq!(s.mask, vec![1, 1, 1, 1]);
    }

    #[test]
    fn long_prompt_truncates() {
        let tok = ReferenceTokenizer::new();
        let prompt = "w ".repeat(3000);
        let s = compute_loss_mask(&prompt, &trace("", "a"), &tok, 2048, MaskPolicy::default());
        assert!(s.truncated);
        assert_eq!(s.ids.len(), 2048);
        assert_eq!(s.mask.len(), 2048);
        assert!(s.mask.iter().all(|&m| m == 0));
    }
}

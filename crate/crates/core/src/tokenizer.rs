//! Tokenizer interface and the bundled reference tokenizer.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub type TokenId = u32;

pub const PAD_ID: TokenId = 0;
pub const UNK_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const EOS_TOKEN: &str = "<eos>";

/// A token id together with the byte range of the text it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OffsetToken {
    pub id: TokenId,
    pub start: usize,
    pub end: usize,
}

pub trait Tokenizer: Send + Sync {
    fn encode_with_offsets(&self, text: &str) -> Vec<OffsetToken>;
    fn decode(&self, ids: &[TokenId]) -> String;
    fn eos_id(&self) -> TokenId;

    fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_with_offsets(text).into_iter().map(|t| t.id).collect()
    }
}

/// Splits text into maximal runs of alphanumerics/underscore and single
/// punctuation or symbol characters; whitespace is dropped.
pub fn pre_tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut word: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let wordy = c.is_alphanumeric() || c == '_';
        if wordy {
            word.get_or_insert(i);
            continue;
        }
        if let Some(s) = word.take() {
            out.push((s, i));
        }
        if !c.is_whitespace() {
            out.push((i, i + c.len_utf8()));
        }
    }
    if let Some(s) = word {
        out.push((s, text.len()));
    }
    out
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Vocab {
    /// Tokens by id; ids 0..3 are reserved.
    pub tokens: Vec<String>,
}

#[derive(Debug)]
struct VocabState {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

/// Deterministic reference tokenizer. Ids are assigned in order of first
/// appearance, so the same inputs encoded in the same order give the same ids.
#[derive(Debug)]
pub struct ReferenceTokenizer {
    state: Mutex<VocabState>,
}

impl Default for ReferenceTokenizer {
    fn default() -> Self {
        Self::new()
    }
}

impl ReferenceTokenizer {
    pub fn new() -> Self {
        let tokens = vec!["<pad>".to_string(), "<unk>".to_string(), EOS_TOKEN.to_string()];
        Self::from_vocab(Vocab { tokens })
    }

    pub fn from_vocab(vocab: Vocab) -> Self {
        let index = vocab
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        ReferenceTokenizer {
            state: Mutex::new(VocabState {
                tokens: vocab.tokens,
                index,
            }),
        }
    }

    pub fn vocab(&self) -> Vocab {
        Vocab {
            tokens: self.state.lock().unwrap().tokens.clone(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.state.lock().unwrap().tokens.len()
    }
}

impl Tokenizer for ReferenceTokenizer {
    fn encode_with_offsets(&self, text: &str) -> Vec<OffsetToken> {
        let spans = pre_tokenize(text);
        let mut st = self.state.lock().unwrap();
        spans
            .into_iter()
            .map(|(start, end)| {
                let piece = &text[start..end];
                let id = match st.index.get(piece) {
                    Some(&id) => id,
                    None => {
                        let id = st.tokens.len() as TokenId;
                        st.tokens.push(piece.to_string());
                        st.index.insert(piece.to_string(), id);
                        id
                    }
                };
                OffsetToken { id, start, end }
            })
            .collect()
    }

    fn decode(&self, ids: &[TokenId]) -> String {
        let st = self.state.lock().unwrap();
        ids.iter()
            .map(|&id| st.tokens.get(id as usize).map_or("<unk>", String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn eos_id(&self) -> TokenId {
        EOS_ID
    }
}

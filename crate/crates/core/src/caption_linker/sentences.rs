use serde::{Deserialize, Serialize};

/// A sentence and its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "Fig.", "fig.", "FIG.", "Figs.", "figs.", "et al.", "e.g.", "i.e.", "No.", "no.", "Nos.",
    "Eq.", "eq.", "Eqs.", "Tab.", "tab.", "Ref.", "Refs.", "cf.", "vs.", "ca.", "approx.", "resp.",
    "Dr.", "Prof.", "Mr.", "Mrs.", "Ms.", "St.", "Mt.", "Vol.", "vol.", "pp.",
];

#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    abbreviations: Vec<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        SentenceSplitter::new(DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()))
    }
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}')
}

impl SentenceSplitter {
    pub fn new(abbreviations: impl IntoIterator<Item = String>) -> Self {
        SentenceSplitter {
            abbreviations: abbreviations.into_iter().collect(),
        }
    }

    fn is_abbreviation(&self, head: &str) -> bool {
        self.abbreviations.iter().any(|abbr| {
            head.ends_with(abbr.as_str())
                && head[..head.len() - abbr.len()]
                    .chars()
                    .next_back()
                    .is_none_or(|c| !c.is_alphanumeric())
        })
    }

    /// Splits on `.`, `?` and `!` followed by whitespace or end of text.
    /// A period that closes a known abbreviation does not split, and a period
    /// between digits never splits because no whitespace follows it.
    pub fn split(&self, text: &str) -> Vec<Sentence> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        let mut iter = text.char_indices().peekable();
        while let Some((i, c)) = iter.next() {
            if start.is_none() {
                if c.is_whitespace() {
                    continue;
                }
                start = Some(i);
            }
            if !matches!(c, '.' | '?' | '!') {
                continue;
            }
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if matches!(d, '.' | '?' | '!') || is_closer(d) {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let at_break = iter.peek().is_none_or(|&(_, d)| d.is_whitespace());
            if !at_break {
                continue;
            }
            if c == '.' && end == i + 1 && self.is_abbreviation(&text[..end]) {
                continue;
            }
            let s = start.take().expect("sentence start set");
            out.push(Sentence {
                text: text[s..end].to_string(),
                start: s,
                end,
            });
        }
        if let Some(s) = start {
            let end = s + text[s..].trim_end().len();
            if end > s {
                out.push(Sentence {
                    text: text[s..end].to_string(),
                    start: s,
                    end,
                });
            }
        }
        out
    }
}

pub fn split_sentences(text: &str) -> Vec<Sentence> {
    SentenceSplitter::default().split(text)
}

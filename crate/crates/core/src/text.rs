//! Demo-grade handling of raw documents: sentence splitting, tokenization
//! and a right-branching tree in place of a real parse.
//!
//! Models trained on parser output see different trees here, so detection
//! quality on raw text is lower than on pre-parsed input.

use serde::{Deserialize, Serialize};

use crate::corpus::ParseTree;
use crate::error::Result;

/// A sentence and its `[start, end)` span in the document, counted in
/// Unicode scalar values (`char`s).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Split after `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter, or by the end of input. Abbreviations are not
/// recognized: `"Dr. Smith left."` yields two sentences.
pub fn split_raw_text(document: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = document.chars().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    let push = |out: &mut Vec<SentenceSpan>, s: usize, e: usize| {
        let mut s = s;
        let mut e = e;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            out.push(SentenceSpan {
                text: chars[s..e].iter().collect(),
                start: s,
                end: e,
            });
        }
    };
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let boundary = j == chars.len() || (j > i + 1 && chars[j].is_uppercase());
            if boundary {
                push(&mut out, start, i + 1);
                start = i + 1;
            }
        }
        i += 1;
    }
    push(&mut out, start, chars.len());
    out
}

const PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')'];

/// Whitespace tokenization with leading and trailing punctuation split off.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.split_whitespace() {
        let mut w = word;
        let mut lead = Vec::new();
        while let Some(c) = w.chars().next().filter(|c| PUNCT.contains(c)) {
            lead.push(c.to_string());
            w = &w[c.len_utf8()..];
        }
        let mut trail = Vec::new();
        while let Some(c) = w.chars().next_back().filter(|c| PUNCT.contains(c)) {
            trail.push(c.to_string());
            w = &w[..w.len() - c.len_utf8()];
        }
        out.extend(lead);
        if !w.is_empty() {
            out.push(w.to_string());
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

/// Right-branching tree labeled `X` over `tokens`.
pub fn fallback_tree<S: AsRef<str>>(tokens: &[S]) -> Result<ParseTree> {
    ParseTree::right_branching(tokens)
}

//! Rule-based sentence segmentation and tokenization with exact byte-offset
//! preservation, and alignment of character spans to tokens.
//!
//! Sentences end at every newline, and after `.`, `?` or `!` followed by
//! whitespace and an uppercase letter or digit, unless the word before the
//! punctuation is a single letter or a known abbreviation. Tokens are
//! whitespace-separated chunks with leading and trailing punctuation split off
//! one character at a time; a period followed by a digit stays attached.

use std::ops::Range;

use thiserror::Error;

use crate::event::Span;

const ABBREVIATIONS: &[&str] = &["Dr", "Mr", "St", "vs", "approx"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub range: Range<usize>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub range: Range<usize>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlignError {
    #[error("span {0} covers no token")]
    NoTokens(Span),
    #[error("span {0} crosses a sentence boundary")]
    CrossSentence(Span),
}

fn is_sentence_punct(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

/// Splits `text` into trimmed, non-empty sentence ranges.
pub fn segment(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut push = |start: usize, end: usize| {
        let piece = &text[start..end];
        let lead = piece.len() - piece.trim_start().len();
        let trimmed = piece.trim();
        if !trimmed.is_empty() {
            out.push(start + lead..start + lead + trimmed.len());
        }
    };

    let mut line_start = 0;
    for line in text.split('\n') {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut sent_start = 0;
        for (k, &(pos, c)) in chars.iter().enumerate() {
            if !is_sentence_punct(c) {
                continue;
            }
            let Some(&(_, after)) = chars.get(k + 1) else {
                continue;
            };
            if !after.is_whitespace() {
                continue;
            }
            let next = chars[k + 1..]
                .iter()
                .map(|&(_, c)| c)
                .find(|c| !c.is_whitespace());
            if !matches!(next, Some(n) if n.is_uppercase() || n.is_ascii_digit()) {
                continue;
            }
            let word = line[..pos]
                .rsplit(char::is_whitespace)
                .next()
                .unwrap_or("")
                .trim_start_matches(|c: char| !c.is_alphanumeric());
            if word.chars().count() == 1 && word.chars().all(char::is_alphabetic) {
                continue;
            }
            if ABBREVIATIONS.contains(&word) {
                continue;
            }
            let end = pos + c.len_utf8();
            push(line_start + sent_start, line_start + end);
            sent_start = end;
        }
        push(line_start + sent_start, line_start + line.len());
        line_start += line.len() + 1;
    }
    out
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Tokenizes one sentence; token ranges are offset by `base_offset`.
pub fn tokenize(sentence_text: &str, base_offset: usize) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut emit = |s: usize, e: usize| {
        tokens.push(Token {
            range: base_offset + s..base_offset + e,
            text: sentence_text[s..e].to_string(),
        });
    };
    let mut chunks = Vec::new();
    let mut start = None;
    for (i, c) in sentence_text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                chunks.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        chunks.push((s, sentence_text.len()));
    }

    for (mut s, mut e) in chunks {
        // leading punctuation, except a period opening a number (".5")
        while s < e {
            let mut it = sentence_text[s..e].chars();
            let c = it.next().unwrap();
            let next_is_digit = it.next().is_some_and(|n| n.is_ascii_digit());
            if is_punct(c) && !(c == '.' && next_is_digit) {
                emit(s, s + c.len_utf8());
                s += c.len_utf8();
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while s < e {
            let c = sentence_text[s..e].chars().next_back().unwrap();
            if is_punct(c) {
                trailing.push((e - c.len_utf8(), e));
                e -= c.len_utf8();
            } else {
                break;
            }
        }
        if s < e {
            emit(s, e);
        }
        for &(a, b) in trailing.iter().rev() {
            emit(a, b);
        }
    }
    tokens
}

/// A tokenized report whose sentences have been merged wherever an entity
/// crosses a sentence boundary.
#[derive(Clone, Debug)]
pub struct TokenizedDoc {
    pub sentences: Vec<Sentence>,
    /// Number of sentence boundaries removed to keep entities whole.
    pub merged: usize,
    /// Global index of each sentence's first token.
    offsets: Vec<usize>,
    /// Global token ranges, in document order.
    ranges: Vec<Range<usize>>,
    sentence_of: Vec<usize>,
}

/// Token-level position of an entity inside one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Aligned {
    pub sentence: usize,
    /// Sentence-local token indices, sorted.
    pub tokens: Vec<usize>,
}

fn covered(ranges: &[Range<usize>], span: &Span) -> Vec<usize> {
    let mut out = Vec::new();
    for f in span.fragments() {
        // first token whose end lies past the fragment start
        let first = ranges.partition_point(|r| r.end <= f.start);
        for (i, r) in ranges.iter().enumerate().skip(first) {
            if r.start >= f.end {
                break;
            }
            out.push(i);
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

impl TokenizedDoc {
    pub fn new<'a>(text: &str, entity_spans: impl IntoIterator<Item = &'a Span>) -> Self {
        let raw: Vec<Sentence> = segment(text)
            .into_iter()
            .map(|r| Sentence {
                tokens: tokenize(&text[r.clone()], r.start),
                range: r,
            })
            .collect();
        let mut ranges = Vec::new();
        let mut raw_sentence_of = Vec::new();
        for (si, s) in raw.iter().enumerate() {
            for t in &s.tokens {
                ranges.push(t.range.clone());
                raw_sentence_of.push(si);
            }
        }
        // join[i] == true merges raw sentence i with i + 1
        let mut join = vec![false; raw.len()];
        for span in entity_spans {
            let toks = covered(&ranges, span);
            if let (Some(&a), Some(&b)) = (toks.first(), toks.last()) {
                for flag in &mut join[raw_sentence_of[a]..raw_sentence_of[b]] {
                    *flag = true;
                }
            }
        }
        let merged = join.iter().filter(|&&j| j).count();
        let mut sentences: Vec<Sentence> = Vec::new();
        let mut open = false;
        for (si, s) in raw.into_iter().enumerate() {
            if open {
                let last = sentences.last_mut().unwrap();
                last.range.end = s.range.end;
                last.tokens.extend(s.tokens);
            } else {
                sentences.push(s);
            }
            open = join[si];
        }
        let mut offsets = Vec::with_capacity(sentences.len());
        let mut sentence_of = Vec::with_capacity(ranges.len());
        for (si, s) in sentences.iter().enumerate() {
            offsets.push(sentence_of.len());
            sentence_of.extend(std::iter::repeat_n(si, s.tokens.len()));
        }
        TokenizedDoc {
            sentences,
            merged,
            offsets,
            ranges,
            sentence_of,
        }
    }

    pub fn token_count(&self) -> usize {
        self.ranges.len()
    }

    /// Global indices of every token the span touches, even partially.
    pub fn global_tokens(&self, span: &Span) -> Vec<usize> {
        covered(&self.ranges, span)
    }

    pub fn align(&self, span: &Span) -> Result<Aligned, AlignError> {
        let toks = self.global_tokens(span);
        let (Some(&first), Some(&last)) = (toks.first(), toks.last()) else {
            return Err(AlignError::NoTokens(span.clone()));
        };
        let sentence = self.sentence_of[first];
        if self.sentence_of[last] != sentence {
            return Err(AlignError::CrossSentence(span.clone()));
        }
        let base = self.offsets[sentence];
        Ok(Aligned {
            sentence,
            tokens: toks.into_iter().map(|t| t - base).collect(),
        })
    }

    pub fn sentence_offset(&self, sentence: usize) -> usize {
        self.offsets[sentence]
    }
}

//! Whitespace/punctuation tokenizer with character offsets, and span alignment.

use crate::data::squad::SquadExample;
use crate::metrics::normalize_answer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Lowercased surface form.
    pub text: String,
    /// Character offset of the first character in the raw text.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Lowercases, splits on whitespace and makes every punctuation character a
/// token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut len = 0;
    let flush = |tokens: &mut Vec<Token>, current: &mut String, start: usize, len: &mut usize| {
        if *len > 0 {
            tokens.push(Token {
                text: std::mem::take(current),
                start,
                end: start + *len,
            });
            *len = 0;
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut tokens, &mut current, start, &mut len);
        } else if is_punct(c) {
            flush(&mut tokens, &mut current, start, &mut len);
            tokens.push(Token {
                text: c.to_lowercase().collect(),
                start: i,
                end: i + 1,
            });
        } else {
            if len == 0 {
                start = i;
            }
            current.extend(c.to_lowercase());
            len += 1;
        }
    }
    flush(&mut tokens, &mut current, start, &mut len);
    tokens
}

/// Raw text covered by tokens `first..=last`.
pub fn detokenize(context: &str, tokens: &[Token], first: usize, last: usize) -> String {
    let (s, e) = (tokens[first].start, tokens[last].end);
    context.chars().skip(s).take(e - s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    NoAnswer,
    Span(usize, usize),
    /// The gold characters do not map onto whole tokens.
    Unalignable,
}

/// Smallest token window covering the first gold answer's character span.
pub fn align_span(example: &SquadExample, tokens: &[Token]) -> Alignment {
    let Some(answer) = example.answers.first().filter(|_| !example.is_impossible) else {
        return Alignment::NoAnswer;
    };
    let (s, e) = (answer.start, answer.start + answer.text.chars().count());
    let mut covering = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.end > s && t.start < e)
        .map(|(i, _)| i);
    let Some(first) = covering.next() else {
        return Alignment::Unalignable;
    };
    let last = covering.last().unwrap_or(first);
    let recovered = detokenize(&example.context, tokens, first, last);
    if normalize_answer(&recovered) != normalize_answer(&answer.text) {
        return Alignment::Unalignable;
    }
    Alignment::Span(first, last)
}

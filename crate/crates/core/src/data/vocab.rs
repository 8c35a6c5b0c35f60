use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::glove::EmbeddingMatrix;

pub const PAD: usize = 0;
pub const OOV: usize = 1;
pub const NULL: usize = 2;

/// Fixed number of character slots per word; longer words are truncated.
pub const MAX_WORD_LEN: usize = 16;

const RESERVED: [&str; 3] = ["<pad>", "<oov>", "<null>"];

/// Word vocabulary. Ids 0, 1 and 2 are PAD, OOV and the NULL sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Frequency-descending, then lexicographic.
fn ranked<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> Vec<String> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in items {
        *counts.entry(t.as_ref().to_string()).or_default() += 1;
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.into_iter().map(|(t, _)| t).collect()
}

impl Vocabulary {
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_ordered(ranked(tokens).into_iter().filter(|t| !RESERVED.contains(&t.as_str())))
    }

    /// Vocabulary over `tokens` in the given order, after the reserved ids.
    pub fn from_ordered<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocabulary {
            tokens: RESERVED.iter().map(|s| s.to_string()).collect(),
            index: HashMap::new(),
        };
        for t in tokens {
            if !v.index.contains_key(&t) && !RESERVED.contains(&t.as_str()) {
                v.tokens.push(t);
            }
        }
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.reindex();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Non-reserved tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// Drops tokens without a pretrained vector so they map to OOV, keeping
    /// the matrix rows aligned with the new ids.
    pub fn retain_found(&self, matrix: &EmbeddingMatrix) -> (Vocabulary, EmbeddingMatrix) {
        let kept: Vec<usize> = (RESERVED.len()..self.len())
            .filter(|&i| matrix.found[i])
            .collect();
        let vocab = Vocabulary::from_ordered(kept.iter().map(|&i| self.tokens[i].clone()));
        let dim = matrix.dim;
        let mut values = vec![0.0; vocab.len() * dim];
        let mut found = vec![false; vocab.len()];
        for (new, &old) in kept.iter().enumerate() {
            let row = new + RESERVED.len();
            values[row * dim..(row + 1) * dim].copy_from_slice(&matrix.values[old * dim..(old + 1) * dim]);
            found[row] = true;
        }
        (vocab, EmbeddingMatrix { dim, values, found })
    }
}

pub const CHAR_PAD: usize = 0;
pub const CHAR_OOV: usize = 1;

/// Character vocabulary; id 0 pads, id 1 stands for unseen characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(words: I) -> Self {
        let ranked = ranked(words.into_iter().flat_map(|w| w.chars().map(|c| c.to_string())));
        let chars: Vec<char> = ranked.iter().filter_map(|s| s.chars().next()).collect();
        let mut v = CharVocab {
            chars,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + 2))
            .collect();
    }

    /// Number of ids including PAD and OOV.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, word: &str) -> [usize; MAX_WORD_LEN] {
        let mut ids = [CHAR_PAD; MAX_WORD_LEN];
        for (slot, c) in ids.iter_mut().zip(word.chars()) {
            *slot = self.index.get(&c).copied().unwrap_or(CHAR_OOV);
        }
        ids
    }
}

//! Vocabulary and feature construction for a train/dev pair.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::batch::{encode_examples, EncodeStats, EncodedExample};
use crate::data::glove::{load_glove_vectors, EmbeddingMatrix};
use crate::data::squad::SquadExample;
use crate::data::tokenize::tokenize;
use crate::data::vocab::{CharVocab, Vocabulary};
use crate::error::{Error, Result};

/// Token tables needed to rebuild a model's inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabs {
    pub words: Vocabulary,
    pub chars: CharVocab,
}

impl Vocabs {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v: Vocabs = serde_json::from_str(&text)?;
        v.words.rebuild_index();
        v.chars.rebuild_index();
        Ok(v)
    }
}

/// A split with its encoded form.
#[derive(Debug, Clone)]
pub struct Split {
    pub examples: Vec<SquadExample>,
    pub encoded: Vec<EncodedExample>,
    pub stats: EncodeStats,
}

impl Split {
    pub fn new(examples: Vec<SquadExample>, vocabs: &Vocabs) -> Self {
        let (encoded, stats) = encode_examples(&examples, &vocabs.words, &vocabs.chars);
        Split {
            examples,
            encoded,
            stats,
        }
    }

    /// Source examples that survived encoding, in encoded order.
    pub fn kept_examples(&self) -> Vec<SquadExample> {
        self.encoded.iter().map(|e| self.examples[e.source].clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocabs: Vocabs,
    pub vectors: EmbeddingMatrix,
    pub train: Split,
    pub dev: Split,
}

fn all_tokens(examples: &[SquadExample]) -> Vec<String> {
    examples
        .iter()
        .flat_map(|e| tokenize(&e.context).into_iter().chain(tokenize(&e.question)))
        .map(|t| t.text)
        .collect()
}

impl Dataset {
    /// Word vocabulary over train and dev, restricted to tokens with a vector;
    /// character vocabulary over train.
    pub fn build(
        train: Vec<SquadExample>,
        dev: Vec<SquadExample>,
        lookup: impl FnOnce(&Vocabulary) -> Result<EmbeddingMatrix>,
    ) -> Result<Self> {
        let mut tokens = all_tokens(&train);
        let train_tokens = tokens.clone();
        tokens.extend(all_tokens(&dev));
        let full = Vocabulary::build(&tokens);
        let matrix = lookup(&full)?;
        let (words, vectors) = full.retain_found(&matrix);
        let chars = CharVocab::build(train_tokens.iter().map(String::as_str));
        let vocabs = Vocabs { words, chars };
        Ok(Dataset {
            train: Split::new(train, &vocabs),
            dev: Split::new(dev, &vocabs),
            vocabs,
            vectors,
        })
    }

    pub fn from_vector_file(train: Vec<SquadExample>, dev: Vec<SquadExample>, path: &Path, dim: usize) -> Result<Self> {
        Self::build(train, dev, |v| load_glove_vectors(path, dim, v))
    }

    pub fn from_vectors(train: Vec<SquadExample>, dev: Vec<SquadExample>, vectors: &[(String, Vec<f64>)], dim: usize) -> Result<Self> {
        let map: HashMap<&str, &Vec<f64>> = vectors.iter().map(|(w, v)| (w.as_str(), v)).collect();
        Self::build(train, dev, |vocab| {
            let mut values = vec![0.0; vocab.len() * dim];
            let mut found = vec![false; vocab.len()];
            for w in vocab.words() {
                let id = vocab.id(w);
                if let Some(v) = map.get(w.as_str()) {
                    if v.len() != dim {
                        return Err(Error::MalformedVectors {
                            line: id,
                            msg: format!("vector for `{w}` has {} values, expected {dim}", v.len()),
                        });
                    }
                    values[id * dim..(id + 1) * dim].copy_from_slice(v);
                    found[id] = true;
                }
            }
            Ok(EmbeddingMatrix { dim, values, found })
        })
    }
}

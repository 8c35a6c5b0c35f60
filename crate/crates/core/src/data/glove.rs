//! GloVe text format: `token v1 v2 ... vd` per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::data::vocab::{Vocabulary, NULL, OOV, PAD};
use crate::error::{Error, Result};

/// Row-aligned with a [`Vocabulary`]; rows without a vector are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub dim: usize,
    pub values: Vec<f64>,
    /// Whether the row came from the vector file.
    pub found: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn rows(&self) -> usize {
        self.found.len()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.values[id * self.dim..(id + 1) * self.dim]
    }
}

/// Reads vectors for the tokens of `vocab`. Every line is validated even when
/// its token is not needed.
pub fn load_glove_vectors(path: impl AsRef<Path>, dim: usize, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_glove(BufReader::new(file), dim, vocab, path)
}

pub fn read_glove<R: BufRead>(reader: R, dim: usize, vocab: &Vocabulary, origin: &Path) -> Result<EmbeddingMatrix> {
    let mut values = vec![0.0; vocab.len() * dim];
    let mut found = vec![false; vocab.len()];
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let token = parts.next().unwrap_or_default();
        let fields: Vec<&str> = parts.collect();
        if fields.len() != dim {
            return Err(Error::MalformedVectors {
                line: lineno,
                msg: format!("expected {dim} values, found {}", fields.len()),
            });
        }
        let id = vocab.id(token);
        if id == OOV && token != vocab.token(OOV) {
            continue;
        }
        if id == PAD || id == NULL || id == OOV || found[id] {
            continue;
        }
        for (k, f) in fields.iter().enumerate() {
            values[id * dim + k] = f.parse::<f64>().map_err(|_| Error::MalformedVectors {
                line: lineno,
                msg: format!("value {f:?} is not a number"),
            })?;
        }
        found[id] = true;
    }
    Ok(EmbeddingMatrix { dim, values, found })
}

pub fn write_glove(path: impl AsRef<Path>, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for (token, vec) in rows {
        let mut line = token.clone();
        for v in vec {
            line.push(' ');
            line.push_str(&format!("{v:.6}"));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Parses a whole vector file into a map; convenient for small files.
pub fn read_glove_map(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    let mut dim = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let vals = vals.map_err(|_| Error::MalformedVectors {
            line: n + 1,
            msg: "non-numeric value".into(),
        })?;
        if *dim.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::MalformedVectors {
                line: n + 1,
                msg: format!("expected {} values, found {}", dim.unwrap(), vals.len()),
            });
        }
        map.insert(token.to_string(), vals);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn load(text: &str, dim: usize, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
        read_glove(Cursor::new(text.to_string()), dim, vocab, Path::new("<mem>"))
    }

    #[test]
    fn reads_rows_for_known_tokens() {
        let vocab = Vocabulary::build(["cat", "dog"]);
        let m = load("cat 1.0 2.0\nbird 3 4\n", 2, &vocab).unwrap();
        assert_eq!(m.row(vocab.id("cat")), &[1.0, 2.0]);
        assert_eq!(m.row(vocab.id("dog")), &[0.0, 0.0]);
        assert!(!m.found[vocab.id("dog")]);
        assert_eq!(m.row(PAD), &[0.0, 0.0]);
        assert_eq!(m.row(NULL), &[0.0, 0.0]);
    }

    #[test]
    fn wrong_width_names_the_line() {
        let vocab = Vocabulary::build(["cat"]);
        let err = load("cat 1.0\n", 2, &vocab).unwrap_err();
        assert!(matches!(err, Error::MalformedVectors { line: 1, .. }), "{err}");
        let err = load("cat 1 2\ndog 1 2 3\n", 2, &vocab).unwrap_err();
        assert!(matches!(err, Error::MalformedVectors { line: 2, .. }), "{err}");
    }

    #[test]
    fn retain_found_remaps_missing_tokens_to_oov() {
        let vocab = Vocabulary::build(["cat", "dog", "cat"]);
        let m = load("dog 5 6\n", 2, &vocab).unwrap();
        let (v2, m2) = vocab.retain_found(&m);
        assert_eq!(v2.id("cat"), OOV);
        assert_eq!(m2.row(v2.id("dog")), &[5.0, 6.0]);
        assert_eq!(m2.rows(), v2.len());
    }
}

//! Pretrained word vectors in the whitespace-separated text format
//! (`word f1 f2 ... fd`, one word per line, no header).

use std::collections::HashMap;
use std::io::BufRead;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Word vectors with a total lookup: exact match, then lowercase, then the
/// unknown-word vector (the mean of all rows).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    index: HashMap<String, usize>,
    words: Vec<String>,
    vectors: Array2<f64>,
    unk: Array1<f64>,
}

impl EmbeddingTable {
    /// Build from `(word, vector)` pairs. Later duplicates are ignored.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut flat = Vec::new();
        let mut dim = None;
        for (i, (w, v)) in rows.into_iter().enumerate() {
            let d = *dim.get_or_insert(v.len());
            if v.len() != d {
                return Err(Error::Embedding {
                    line: i + 1,
                    msg: format!("expected {d} components, found {}", v.len()),
                });
            }
            let w = w.into();
            if index.contains_key(&w) {
                continue;
            }
            index.insert(w.clone(), words.len());
            words.push(w);
            flat.extend(v);
        }
        let dim = match dim {
            Some(0) => return Err(Error::invalid("embedding dimension must be positive")),
            Some(d) => d,
            None => return Err(Error::insufficient("no embedding rows")),
        };
        let vectors =
            Array2::from_shape_vec((words.len(), dim), flat).expect("row lengths checked above");
        let unk = vectors.mean_axis(Axis(0)).expect("at least one row");
        Ok(EmbeddingTable {
            index,
            words,
            vectors,
            unk,
        })
    }

    /// Read the text format; the dimension is taken from the first line.
    pub fn load_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Embedding { line: i + 1, msg };
            let mut parts = line.split(' ');
            let word = parts.next().unwrap_or_default();
            let vec = parts
                .map(|p| {
                    p.parse::<f64>()
                        .map_err(|_| err(format!("non-numeric component {p:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let d = *dim.get_or_insert(vec.len());
            if vec.len() != d {
                return Err(err(format!("expected {d} components, found {}", vec.len())));
            }
            if d == 0 {
                return Err(err("line has no vector components".into()));
            }
            rows.push((word.to_string(), vec));
        }
        if rows.is_empty() {
            return Err(Error::insufficient("embedding file is empty"));
        }
        Self::from_rows(rows)
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk(&self) -> ArrayView1<'_, f64> {
        self.unk.view()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Row index for `token`, `None` if it resolves to the unknown vector.
    pub fn resolve(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().or_else(|| {
            let lower = token.to_lowercase();
            if lower != token {
                self.index.get(&lower).copied()
            } else {
                None
            }
        })
    }

    pub fn lookup(&self, token: &str) -> ArrayView1<'_, f64> {
        match self.resolve(token) {
            Some(i) => self.vectors.row(i),
            None => self.unk.view(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl Serialize for EmbeddingTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TableRepr {
            dim: self.dim(),
            words: self.words.clone(),
            vectors: self
                .vectors
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmbeddingTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TableRepr::deserialize(d)?;
        if r.vectors.iter().any(|v| v.len() != r.dim) {
            return Err(serde::de::Error::custom(
                "embedding row length differs from dim",
            ));
        }
        EmbeddingTable::from_rows(r.words.into_iter().zip(r.vectors))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_mean_unk() {
        let t = EmbeddingTable::load_text("a 1 2 3\nb 3 4 5\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.unk().to_vec(), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let e = EmbeddingTable::load_text("a 1 2 3\nb 3 4\n".as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Embedding { line: 2, .. }), "{e}");
        assert!(EmbeddingTable::load_text("a 1 x 3\n".as_bytes()).is_err());
        assert!(EmbeddingTable::load_text("".as_bytes()).is_err());
        assert!(EmbeddingTable::load_text("a\n".as_bytes()).is_err());
    }

    #[test]
    fn zero_sum_unk() {
        let t = EmbeddingTable::load_text("a 1 -2\nb -1 2\n".as_bytes()).unwrap();
        assert_eq!(t.unk().to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn duplicates_keep_first() {
        let t = EmbeddingTable::load_text("a 1 1\na 9 9\nb 0 0\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("a").to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn lookup_policy() {
        let t = EmbeddingTable::load_text("the 1 0\nDeal 0 1\n".as_bytes()).unwrap();
        assert_eq!(t.lookup("the").to_vec(), vec![1.0, 0.0]);
        assert_eq!(t.lookup("The").to_vec(), vec![1.0, 0.0]);
        assert_eq!(t.lookup("Deal").to_vec(), vec![0.0, 1.0]);
        // no upper-casing fallback
        assert_eq!(t.lookup("deal"), t.unk());
        assert_eq!(t.lookup("May-02"), t.unk());
    }

    #[test]
    fn serde_round_trip() {
        let t = EmbeddingTable::load_text("a 0.1 0.2\nb 0.3 0.7\n".as_bytes()).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: EmbeddingTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}

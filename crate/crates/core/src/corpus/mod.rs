//! Labeled sentence corpora: record I/O, cleaning, silver-label sampling and
//! splitting, plus annotation agreement statistics.

mod agreement;
mod tree;

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use agreement::{fleiss_kappa, majority_label, mean_pairwise_spearman, AnnotationSet};
pub use tree::ParseTree;

use crate::error::{Error, Result};

/// Info types used by the released Enron and Monsanto datasets.
pub const KNOWN_INFO_TYPES: [&str; 8] = [
    "PPAY", "FAS", "FCAST", "EDENCE", "GHOST", "TOXIC", "CHEMI", "REGUL",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub doc_id: String,
    pub info_type: String,
    /// 1 = sensitive, 0 = non-sensitive.
    pub label: u8,
    pub tokens: Vec<String>,
    /// Binarized tree; its leaves spell out `tokens`.
    pub tree: ParseTree,
}

impl LabeledSentence {
    /// Build a sentence from a parsed tree, binarizing it.
    pub fn new(
        id: impl Into<String>,
        doc_id: impl Into<String>,
        info_type: impl Into<String>,
        label: u8,
        tree: &ParseTree,
    ) -> Result<Self> {
        if label > 1 {
            return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
        }
        let tree = tree.binarize()?;
        Ok(LabeledSentence {
            id: id.into(),
            doc_id: doc_id.into(),
            info_type: info_type.into(),
            label,
            tokens: tree.tokens(),
            tree,
        })
    }

    /// Serialize as one dataset-file line (without the trailing newline).
    pub fn to_record(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            self.label, self.info_type, self.doc_id, self.tree
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub info_type: String,
    pub splits: Splits,
}

impl Dataset {
    /// A dataset with everything in `train`.
    pub fn unsplit(
        name: impl Into<String>,
        info_type: impl Into<String>,
        sentences: Vec<LabeledSentence>,
    ) -> Self {
        Dataset {
            name: name.into(),
            info_type: info_type.into(),
            splits: Splits {
                train: sentences,
                ..Default::default()
            },
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &LabeledSentence> {
        self.splits
            .train
            .iter()
            .chain(&self.splits.dev)
            .chain(&self.splits.test)
    }

    pub fn len(&self) -> usize {
        self.splits.train.len() + self.splits.dev.len() + self.splits.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Check split disjointness and info-type consistency.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in self.all() {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!(
                    "sentence id {} appears twice",
                    s.id
                )));
            }
            if s.info_type != self.info_type {
                return Err(Error::invalid(format!(
                    "sentence {} has info type {}, dataset is {}",
                    s.id, s.info_type, self.info_type
                )));
            }
        }
        Ok(())
    }
}

/// One parsed dataset-file record, tree not yet binarized.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub label: u8,
    pub info_type: String,
    pub doc_id: String,
    pub tree: ParseTree,
}

/// Parse `<label>\t<info_type>\t<doc_id>\t<s-expression>`.
///
/// ```
/// use taboo_core::corpus::parse_tree_record;
/// let r = parse_tree_record("1\tPPAY\td7\t(S (NP (DT the) (NN deal)) (VP (VBZ closes)))").unwrap();
/// assert_eq!(r.label, 1);
/// assert_eq!(r.tree.tokens(), ["the", "deal", "closes"]);
/// ```
pub fn parse_tree_record(line: &str) -> Result<Record> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut fields = line.splitn(4, '\t');
    let (Some(label), Some(info_type), Some(doc_id), Some(sexpr)) =
        (fields.next(), fields.next(), fields.next(), fields.next())
    else {
        return Err(Error::Record {
            line: 0,
            msg: "expected 4 tab-separated fields".into(),
        });
    };
    let label = match label {
        "0" => 0,
        "1" => 1,
        other => {
            return Err(Error::Record {
                line: 0,
                msg: format!("label must be 0 or 1, got {other:?}"),
            })
        }
    };
    if info_type.is_empty() || doc_id.is_empty() {
        return Err(Error::Record {
            line: 0,
            msg: "empty info_type or doc_id".into(),
        });
    }
    Ok(Record {
        label,
        info_type: info_type.to_string(),
        doc_id: doc_id.to_string(),
        tree: ParseTree::parse(sexpr)?,
    })
}

/// Result of reading a dataset file.
#[derive(Debug, Default)]
pub struct Ingest {
    pub sentences: Vec<LabeledSentence>,
    /// Line numbers (1-based) of records with fewer than two tokens.
    pub rejected_short: Vec<usize>,
}

/// Read a dataset file.
///
/// Sentence ids are `<doc_id>#<k>`, `k` counting that document's records in
/// file order. Malformed records abort with their line number; single-token
/// sentences are skipped and reported.
pub fn read_records<R: BufRead>(reader: R) -> Result<Ingest> {
    let mut out = Ingest::default();
    let mut per_doc: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let rec = parse_tree_record(&line).map_err(|e| Error::Record {
            line: lineno,
            msg: match e {
                Error::Record { msg, .. } => msg,
                other => other.to_string(),
            },
        })?;
        let k = per_doc.entry(rec.doc_id.clone()).or_insert(0);
        let id = format!("{}#{}", rec.doc_id, k);
        *k += 1;
        if rec.tree.leaf_count() < 2 {
            out.rejected_short.push(lineno);
            continue;
        }
        out.sentences.push(LabeledSentence::new(
            id,
            rec.doc_id,
            rec.info_type,
            rec.label,
            &rec.tree,
        )?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(mut w: W, sentences: &[LabeledSentence]) -> Result<()> {
    for s in sentences {
        writeln!(w, "{}", s.to_record())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub too_short: usize,
    pub too_long: usize,
    pub ambiguous: usize,
    pub kept: usize,
}

/// Keep sentences with `min_len..=max_len` tokens and drop every copy of a
/// token sequence that occurs with both labels.
pub fn clean_sentences(
    sentences: Vec<LabeledSentence>,
    min_len: usize,
    max_len: usize,
) -> (Vec<LabeledSentence>, CleanReport) {
    let mut report = CleanReport::default();
    let mut by_length = Vec::with_capacity(sentences.len());
    for s in sentences {
        let n = s.tokens.len();
        if n < min_len {
            report.too_short += 1;
        } else if n > max_len {
            report.too_long += 1;
        } else {
            by_length.push(s);
        }
    }

    // bit 0: seen with label 0, bit 1: seen with label 1
    let mut labels_seen: HashMap<&[String], u8> = HashMap::new();
    for s in &by_length {
        *labels_seen.entry(s.tokens.as_slice()).or_insert(0) |= 1 << s.label;
    }
    let conflicting: HashSet<Vec<String>> = labels_seen
        .into_iter()
        .filter(|&(_, mask)| mask == 0b11)
        .map(|(toks, _)| toks.to_vec())
        .collect();

    let kept: Vec<LabeledSentence> = by_length
        .into_iter()
        .filter(|s| {
            let drop = conflicting.contains(&s.tokens);
            if drop {
                report.ambiguous += 1;
            }
            !drop
        })
        .collect();
    report.kept = kept.len();
    (kept, report)
}

/// Build a balanced silver-label dataset for `info_type`.
///
/// Every sentence from a document labeled `info_type` becomes a positive; an
/// equal number of negatives is drawn without replacement from sentences of
/// documents with any other label.
pub fn make_silver(sentences: &[LabeledSentence], info_type: &str, seed: u64) -> Result<Dataset> {
    let (pos, pool): (Vec<&LabeledSentence>, Vec<&LabeledSentence>) =
        sentences.iter().partition(|s| s.info_type == info_type);
    if pos.is_empty() {
        return Err(Error::insufficient(format!(
            "no sentences with info type {info_type}"
        )));
    }
    if pool.len() < pos.len() {
        return Err(Error::insufficient(format!(
            "negative pool has {} sentences, {} needed (short by {})",
            pool.len(),
            pos.len(),
            pos.len() - pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, pool.len(), pos.len()).into_vec();
    picked.sort_unstable();

    let relabel = |s: &LabeledSentence, label: u8| LabeledSentence {
        label,
        info_type: info_type.to_string(),
        ..s.clone()
    };
    let mut out: Vec<LabeledSentence> = pos.iter().map(|s| relabel(s, 1)).collect();
    out.extend(picked.into_iter().map(|i| relabel(pool[i], 0)));
    Ok(Dataset::unsplit(
        format!("{info_type}-silver"),
        info_type,
        out,
    ))
}

/// Shuffle all sentences of `dataset` and partition them into
/// train/dev/test by `fractions`.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Dataset> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid(format!(
            "split fractions must be in [0,1] and sum to 1, got {fractions:?}"
        )));
    }
    let mut all: Vec<LabeledSentence> = dataset.all().cloned().collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);

    let n = all.len();
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_dev = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = all.split_off(n_train + n_dev);
    let dev = all.split_off(n_train);
    Ok(Dataset {
        name: dataset.name.clone(),
        info_type: dataset.info_type.clone(),
        splits: Splits {
            train: all,
            dev,
            test,
        },
    })
}

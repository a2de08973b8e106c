use std::collections::BTreeMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Per-sentence labels from a fixed panel of annotators.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    annotators: usize,
    items: BTreeMap<String, Vec<u8>>,
}

impl AnnotationSet {
    pub fn new(annotators: usize) -> Result<Self> {
        if annotators < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 annotators, got {annotators}"
            )));
        }
        Ok(AnnotationSet {
            annotators,
            items: BTreeMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, labels: Vec<u8>) -> Result<()> {
        let id = id.into();
        if labels.len() != self.annotators {
            return Err(Error::invalid(format!(
                "item {id}: expected {} labels, got {}",
                self.annotators,
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("item {id}: label {l} is not 0/1")));
        }
        self.items.insert(id, labels);
        Ok(())
    }

    /// Parse `<sentence_id>\t<l1>,<l2>,...` lines; the first line fixes the
    /// annotator count.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut set: Option<AnnotationSet> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::Record { line: i + 1, msg };
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| err("expected <id>\\t<labels>".into()))?;
            let labels = rest
                .split(',')
                .map(|l| match l.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(err(format!("bad label {other:?}"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            let s = match &mut set {
                Some(s) => s,
                None => {
                    set.insert(AnnotationSet::new(labels.len()).map_err(|e| err(e.to_string()))?)
                }
            };
            s.insert(id, labels).map_err(|e| err(e.to_string()))?;
        }
        set.ok_or_else(|| Error::insufficient("annotation file is empty"))
    }

    pub fn annotators(&self) -> usize {
        self.annotators
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.items.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Majority label for every item.
    pub fn golden_labels(&self) -> Result<BTreeMap<String, u8>> {
        self.items
            .iter()
            .map(|(k, v)| Ok((k.clone(), majority_label(v)?)))
            .collect()
    }
}

/// Label chosen by more than half of an odd-sized panel.
pub fn majority_label(labels: &[u8]) -> Result<u8> {
    if labels.len() < 3 || labels.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "majority vote needs an odd number (>= 3) of labels, got {}",
            labels.len()
        )));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    Ok(u8::from(2 * ones > labels.len()))
}

/// Fleiss' kappa for binary labels.
pub fn fleiss_kappa(set: &AnnotationSet) -> Result<f64> {
    if set.len() < 2 {
        return Err(Error::insufficient(format!(
            "Fleiss kappa needs at least 2 items, got {}",
            set.len()
        )));
    }
    let n = set.annotators() as f64;
    let items = set.len() as f64;
    let mut p_bar = 0.0;
    let mut ones_total = 0.0;
    for (_, labels) in set.iter() {
        let ones = labels.iter().filter(|&&l| l == 1).count() as f64;
        let zeros = n - ones;
        p_bar += (ones * ones + zeros * zeros - n) / (n * (n - 1.0));
        ones_total += ones;
    }
    p_bar /= items;
    let p1 = ones_total / (items * n);
    let p_e = p1 * p1 + (1.0 - p1) * (1.0 - p1);
    if (1.0 - p_e).abs() < f64::EPSILON {
        // every label identical: perfect agreement
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Mean Spearman rho over all annotator pairs.
///
/// Pairs where one annotator gave the same label to every item have no
/// defined correlation and are left out of the mean.
pub fn mean_pairwise_spearman(set: &AnnotationSet) -> Result<f64> {
    let a = set.annotators();
    let columns: Vec<Vec<f64>> = (0..a)
        .map(|j| set.iter().map(|(_, l)| f64::from(l[j])).collect())
        .collect();
    let mut rhos = Vec::new();
    for i in 0..a {
        for j in i + 1..a {
            if let Some(r) = spearman(&columns[i], &columns[j]) {
                rhos.push(r);
            }
        }
    }
    if rhos.is_empty() {
        return Err(Error::insufficient(
            "no annotator pair has a defined rank correlation",
        ));
    }
    Ok(rhos.iter().sum::<f64>() / rhos.len() as f64)
}

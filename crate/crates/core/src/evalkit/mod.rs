//! Classification metrics, model comparison, and synthetic corpora.
//!
//! Two precision conventions are in use. [`ConfusionCounts::precision`] is
//! the usual `tp / (tp + fp)`. The per-class "precision" figures reported
//! for the Monsanto experiments are [`ConfusionCounts::prec_sen`] =
//! `tp / (tp + fn)` (numerically the recall) and
//! [`ConfusionCounts::prec_nonsen`] = `tn / (tn + fp)`. Both are kept under
//! separate names.
//!
//! Metrics with a zero denominator are `None` and print as `N/A`.

mod synth;

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

pub use synth::{
    gen_context_synthetic, gen_keyword_synthetic, gen_redundant_synthetic, synthetic_embeddings,
    ContextSynth, INFO_TYPE, NEGATOR, TRIGGER,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[u8], truths: &[u8]) -> Result<Self> {
        if predictions.len() != truths.len() {
            return Err(Error::invalid(format!(
                "{} predictions for {} truths",
                predictions.len(),
                truths.len()
            )));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &t) in predictions.iter().zip(truths) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (0, 1) => c.fn_ += 1,
                _ => {
                    return Err(Error::invalid(format!(
                        "labels must be 0/1, got ({p}, {t})"
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`.
    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Share of truly sensitive sentences predicted sensitive.
    pub fn acc_sen(&self) -> Option<f64> {
        self.recall()
    }

    pub fn prec_sen(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn prec_nonsen(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// Fraction of ground-truth-sensitive sentences predicted sensitive.
pub fn class_accuracy_sensitive(predictions: &[u8], truths: &[u8]) -> Result<Option<f64>> {
    Ok(ConfusionCounts::from_predictions(predictions, truths)?.acc_sen())
}

/// `|C1 \ C2| / |C1|` where `Ci` is the set of sentences model `i` gets right.
pub fn only_identified_fraction(preds_1: &[u8], preds_2: &[u8], truths: &[u8]) -> Result<f64> {
    if preds_1.len() != truths.len() || preds_2.len() != truths.len() {
        return Err(Error::invalid(
            "prediction and truth vectors differ in length",
        ));
    }
    let mut c1 = 0usize;
    let mut only = 0usize;
    for ((a, b), t) in preds_1.iter().zip(preds_2).zip(truths) {
        if a == t {
            c1 += 1;
            if b != t {
                only += 1;
            }
        }
    }
    if c1 == 0 {
        return Err(Error::insufficient(
            "the first model classifies nothing correctly",
        ));
    }
    Ok(only as f64 / c1 as f64)
}

fn na<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("N/A"),
    }
}

/// `0.1234` or `N/A`.
pub fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.4}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub n: usize,
    pub counts: ConfusionCounts,
    #[serde(serialize_with = "na")]
    pub accuracy: Option<f64>,
    #[serde(serialize_with = "na")]
    pub precision: Option<f64>,
    #[serde(serialize_with = "na")]
    pub recall: Option<f64>,
    #[serde(serialize_with = "na")]
    pub f1: Option<f64>,
    #[serde(serialize_with = "na")]
    pub acc_sen: Option<f64>,
    #[serde(serialize_with = "na")]
    pub prec_sen: Option<f64>,
    #[serde(serialize_with = "na")]
    pub prec_nonsen: Option<f64>,
}

impl MetricsReport {
    pub fn new(model: impl Into<String>, predictions: &[u8], truths: &[u8]) -> Result<Self> {
        let c = ConfusionCounts::from_predictions(predictions, truths)?;
        Ok(MetricsReport {
            model: model.into(),
            n: c.total(),
            counts: c,
            accuracy: c.accuracy(),
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            acc_sen: c.acc_sen(),
            prec_sen: c.prec_sen(),
            prec_nonsen: c.prec_nonsen(),
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("acc_sen", self.acc_sen),
            ("prec_sen", self.prec_sen),
            ("prec_nonsen", self.prec_nonsen),
        ];
        writeln!(f, "model        {}", self.model)?;
        writeln!(f, "n            {}", self.n)?;
        writeln!(
            f,
            "tp/fp/tn/fn  {}/{}/{}/{}",
            self.counts.tp, self.counts.fp, self.counts.tn, self.counts.fn_
        )?;
        for (name, v) in rows {
            writeln!(f, "{name:<12} {}", fmt_metric(v))?;
        }
        Ok(())
    }
}

/// Pairwise comparison of two models on the same labeled sentences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub model_a: String,
    pub model_b: String,
    pub n: usize,
    /// `|C_a \ C_b| / |C_a|`
    #[serde(serialize_with = "na")]
    pub only_a: Option<f64>,
    /// `|C_b \ C_a| / |C_b|`
    #[serde(serialize_with = "na")]
    pub only_b: Option<f64>,
    pub both_correct: usize,
    /// Sentences both models get wrong.
    pub shared_errors: usize,
    pub errors_only_a: usize,
    pub errors_only_b: usize,
}

impl CompareReport {
    pub fn new(
        model_a: impl Into<String>,
        model_b: impl Into<String>,
        preds_a: &[u8],
        preds_b: &[u8],
        truths: &[u8],
    ) -> Result<Self> {
        if preds_a.len() != truths.len() || preds_b.len() != truths.len() {
            return Err(Error::invalid(
                "prediction and truth vectors differ in length",
            ));
        }
        let mut r = CompareReport {
            model_a: model_a.into(),
            model_b: model_b.into(),
            n: truths.len(),
            only_a: only_identified_fraction(preds_a, preds_b, truths).ok(),
            only_b: only_identified_fraction(preds_b, preds_a, truths).ok(),
            both_correct: 0,
            shared_errors: 0,
            errors_only_a: 0,
            errors_only_b: 0,
        };
        for ((a, b), t) in preds_a.iter().zip(preds_b).zip(truths) {
            match (a == t, b == t) {
                (true, true) => r.both_correct += 1,
                (false, false) => r.shared_errors += 1,
                (false, true) => r.errors_only_a += 1,
                (true, false) => r.errors_only_b += 1,
            }
        }
        Ok(r)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "a            {}", self.model_a)?;
        writeln!(f, "b            {}", self.model_b)?;
        writeln!(f, "n            {}", self.n)?;
        writeln!(f, "only_a       {}", fmt_metric(self.only_a))?;
        writeln!(f, "only_b       {}", fmt_metric(self.only_b))?;
        writeln!(f, "both_correct {}", self.both_correct)?;
        writeln!(f, "shared_err   {}", self.shared_errors)?;
        writeln!(f, "err_only_a   {}", self.errors_only_a)?;
        writeln!(f, "err_only_b   {}", self.errors_only_b)
    }
}

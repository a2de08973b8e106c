use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ngrams, term_key, CountStore};
use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};
use crate::serde_util::ext_f64;

/// Single-word inference rules `w -> sensitive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfRuleModel {
    pub min_support_count: usize,
    pub min_confidence: f64,
    /// word -> confidence
    pub rules: BTreeMap<String, f64>,
}

impl InfRuleModel {
    /// Keep every word seen in at least `min_support_count` sentences whose
    /// confidence reaches `min_confidence`.
    pub fn mine(store: &CountStore, min_support_count: usize, min_confidence: f64) -> Self {
        let rules = store
            .unigrams()
            .filter(|(_, c)| c.all >= min_support_count && c.all > 0)
            .map(|(w, c)| (w.to_string(), c.sensitive as f64 / c.all as f64))
            .filter(|&(_, conf)| conf >= min_confidence)
            .collect();
        InfRuleModel {
            min_support_count,
            min_confidence,
            rules,
        }
    }

    /// Highest confidence among the sentence's matching rules.
    pub fn best_match<S: AsRef<str>>(&self, tokens: &[S]) -> Option<f64> {
        tokens
            .iter()
            .filter_map(|t| self.rules.get(t.as_ref()).copied())
            .reduce(f64::max)
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> u8 {
        u8::from(self.best_match(tokens).is_some())
    }
}

/// PMI thresholding: a sentence is sensitive when one of its words reaches
/// `PMI >= IC / alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsanModel {
    pub alpha: f64,
    #[serde(with = "ext_f64")]
    pub ic: f64,
    /// Words seen in at least one sensitive sentence; everything else has
    /// PMI of negative infinity and is omitted.
    pub word_pmi: BTreeMap<String, f64>,
}

impl CsanModel {
    pub fn fit(store: &CountStore, alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::invalid(format!("alpha must be >= 1, got {alpha}")));
        }
        let ic = store.information_content();
        let word_pmi = store
            .unigrams()
            .filter(|(_, c)| c.sensitive > 0)
            .map(|(w, _)| (w.to_string(), store.pmi(w).expect("seen word")))
            .collect();
        Ok(CsanModel {
            alpha,
            ic,
            word_pmi,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.ic / self.alpha
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> u8 {
        let th = self.threshold();
        u8::from(
            tokens
                .iter()
                .filter_map(|t| self.word_pmi.get(t.as_ref()))
                .any(|&p| p >= th),
        )
    }
}

/// Max-sensitivity thresholding with the threshold picked on a labeled set:
/// an upper bound for what keyword scores alone can reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordMaxModel {
    /// Longest n-gram used for scoring.
    pub order: usize,
    /// Sentences with score `>= threshold` are sensitive. Infinite when the
    /// best choice is to predict nothing sensitive.
    #[serde(with = "ext_f64")]
    pub threshold: f64,
    /// Accuracy on the set the threshold was fitted on.
    pub fit_accuracy: f64,
    /// n-gram key -> `Pr(L=1 | term)`
    pub sensitivity: BTreeMap<String, f64>,
}

impl KeywordMaxModel {
    pub fn fit(store: &CountStore, eval: &[LabeledSentence], order: usize) -> Result<Self> {
        if eval.is_empty() {
            return Err(Error::insufficient(
                "Keyword-Max needs a non-empty labeled set",
            ));
        }
        if order == 0 || order > store.n_max() {
            return Err(Error::invalid(format!(
                "order {order} outside 1..={}",
                store.n_max()
            )));
        }
        let sensitivity = store
            .terms()
            .filter(|(t, _)| t.len() <= order)
            .map(|(t, c)| (term_key(t), c.sensitive as f64 / c.all as f64))
            .collect();
        let mut model = KeywordMaxModel {
            order,
            threshold: f64::INFINITY,
            fit_accuracy: 0.0,
            sensitivity,
        };

        let scored: Vec<(f64, u8)> = eval
            .iter()
            .map(|s| (model.score(&s.tokens), s.label))
            .collect();
        let mut candidates: BTreeSet<u64> = scored.iter().map(|(s, _)| s.to_bits()).collect();
        candidates.insert(f64::INFINITY.to_bits());
        let mut sorted: Vec<f64> = candidates.into_iter().map(f64::from_bits).collect();
        sorted.sort_by(f64::total_cmp);

        let mut best: Option<(f64, usize)> = None;
        // Scan thresholds from high to low so that ties keep the larger one.
        for &th in sorted.iter().rev() {
            let correct = scored
                .iter()
                .filter(|&&(s, l)| u8::from(s >= th) == l)
                .count();
            if best.is_none_or(|(_, c)| correct > c) {
                best = Some((th, correct));
            }
        }
        let (threshold, correct) = best.expect("at least the infinite candidate");
        model.threshold = threshold;
        model.fit_accuracy = correct as f64 / eval.len() as f64;
        Ok(model)
    }

    /// Maximum conditional sensitivity over the sentence's n-grams; unseen
    /// n-grams score 0.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        (1..=self.order)
            .flat_map(|n| ngrams(tokens, n))
            .filter_map(|g| self.sensitivity.get(&term_key(&g)).copied())
            .fold(0.0, f64::max)
    }

    pub fn predict<S: AsRef<str>>(&self, tokens: &[S]) -> u8 {
        u8::from(self.score(tokens) >= self.threshold)
    }
}

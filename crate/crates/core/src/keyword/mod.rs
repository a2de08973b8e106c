//! Context-less baselines built on n-gram occurrence counts.
//!
//! Every statistic here is a ratio of counts over training sentences, where
//! a term counts at most once per sentence. Given `C(t)` sentences containing
//! term `t` and `C(t, L=1)` of those labeled sensitive:
//!
//! * conditional sensitivity `Pr(L=1 | t) = C(t, L=1) / C(t)`,
//! * support `Supp(t) = C(t) / |D|`, confidence `Conf(t -> L=1) = Pr(L=1 | t)`,
//! * information content `IC = -log2 Pr(L=1)`,
//! * pointwise mutual information `PMI(t) = log2(Pr(L=1 | t) / Pr(L=1))`.
//!
//! Because `Pr(L=1)` is fixed for a dataset, PMI orders terms exactly like
//! the conditional sensitivity does, and `PMI(t) <= IC` with equality only for
//! perfect predictors.

mod models;

use std::collections::{HashMap, HashSet};

pub use models::{CsanModel, InfRuleModel, KeywordMaxModel};

use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};

/// Contiguous n-grams of `tokens` of length `n`, as owned vectors.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> impl Iterator<Item = Vec<String>> + '_ {
    let count = if n == 0 || tokens.len() < n {
        0
    } else {
        tokens.len() - n + 1
    };
    (0..count).map(move |i| {
        tokens[i..i + n]
            .iter()
            .map(|t| t.as_ref().to_string())
            .collect()
    })
}

/// Join an n-gram into the space-separated key used by serialized models.
pub fn term_key<S: AsRef<str>>(term: &[S]) -> String {
    term.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TermCount {
    /// Sentences containing the term.
    pub all: usize,
    /// Sentences containing the term that are labeled sensitive.
    pub sensitive: usize,
}

/// Presence counts of every n-gram up to `n_max` over a training set.
#[derive(Debug, Clone)]
pub struct CountStore {
    n_max: usize,
    total: usize,
    total_sensitive: usize,
    counts: HashMap<Vec<String>, TermCount>,
}

impl CountStore {
    pub fn count_terms(train: &[LabeledSentence], n_max: usize) -> Result<Self> {
        Self::count_token_lists(train.iter().map(|s| (s.tokens.as_slice(), s.label)), n_max)
    }

    /// Count over arbitrary `(tokens, label)` pairs.
    pub fn count_token_lists<'a, I>(sentences: I, n_max: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [String], u8)>,
    {
        if n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        let mut store = CountStore {
            n_max,
            total: 0,
            total_sensitive: 0,
            counts: HashMap::new(),
        };
        for (tokens, label) in sentences {
            store.total += 1;
            let sensitive = label == 1;
            if sensitive {
                store.total_sensitive += 1;
            }
            let mut present: HashSet<Vec<String>> = HashSet::new();
            for n in 1..=n_max {
                present.extend(ngrams(tokens, n));
            }
            for term in present {
                let c = store.counts.entry(term).or_default();
                c.all += 1;
                if sensitive {
                    c.sensitive += 1;
                }
            }
        }
        if store.total == 0 {
            return Err(Error::insufficient("training set is empty"));
        }
        Ok(store)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `|D|`, the number of training sentences.
    pub fn total(&self) -> usize {
        self.total
    }

    /// `C(L=1)`.
    pub fn total_sensitive(&self) -> usize {
        self.total_sensitive
    }

    pub fn get<S: AsRef<str>>(&self, term: &[S]) -> TermCount {
        let key: Vec<String> = term.iter().map(|t| t.as_ref().to_string()).collect();
        self.counts.get(&key).copied().unwrap_or_default()
    }

    /// `C(term)`.
    pub fn term_count<S: AsRef<str>>(&self, term: &[S]) -> usize {
        self.get(term).all
    }

    /// `C(term, L=1)`.
    pub fn joint_count<S: AsRef<str>>(&self, term: &[S]) -> usize {
        self.get(term).sensitive
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[String], TermCount)> {
        self.counts.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    /// Unigram vocabulary with counts.
    pub fn unigrams(&self) -> impl Iterator<Item = (&str, TermCount)> {
        self.terms()
            .filter(|(t, _)| t.len() == 1)
            .map(|(t, c)| (t[0].as_str(), c))
    }

    /// `Pr(L=1)`.
    pub fn base_rate(&self) -> f64 {
        self.total_sensitive as f64 / self.total as f64
    }

    /// `IC = -log2 Pr(L=1)`, in bits. Infinite when no sentence is sensitive.
    pub fn information_content(&self) -> f64 {
        -self.base_rate().log2()
    }

    /// `Supp(term) = C(term) / |D|`.
    pub fn support<S: AsRef<str>>(&self, term: &[S]) -> f64 {
        self.term_count(term) as f64 / self.total as f64
    }

    /// `Pr(L=1 | term)`; also the confidence of the rule `term -> sensitive`.
    pub fn cond_sensitivity<S: AsRef<str>>(&self, term: &[S]) -> Result<f64> {
        let c = self.get(term);
        if c.all == 0 {
            return Err(Error::invalid(format!("unseen term {:?}", term_key(term))));
        }
        Ok(c.sensitive as f64 / c.all as f64)
    }

    /// `Pr(word | context)`: how often `context` is immediately followed by
    /// `word`, among all continuations of `context`.
    pub fn ngram_cond_prob<S: AsRef<str>>(&self, word: &str, context: &[S]) -> Result<f64> {
        let n = context.len() + 1;
        if n > self.n_max {
            return Err(Error::invalid(format!(
                "context of length {} needs n-grams of order {n}, store has {}",
                context.len(),
                self.n_max
            )));
        }
        let ctx: Vec<&str> = context.iter().map(AsRef::as_ref).collect();
        let mut numer = 0usize;
        let mut denom = 0usize;
        for (term, c) in self.terms() {
            if term.len() == n
                && term[..n - 1]
                    .iter()
                    .map(String::as_str)
                    .eq(ctx.iter().copied())
            {
                denom += c.all;
                if term[n - 1] == word {
                    numer += c.all;
                }
            }
        }
        if denom == 0 {
            return Err(Error::invalid(format!(
                "context {:?} has no observed continuation",
                term_key(context)
            )));
        }
        Ok(numer as f64 / denom as f64)
    }

    /// `PMI(word, L=1)` in bits. Words never seen in a sensitive sentence get
    /// negative infinity.
    pub fn pmi(&self, word: &str) -> Result<f64> {
        let cond = self.cond_sensitivity(&[word])?;
        // log2(cond) + IC rather than log2(cond / base): a perfect predictor
        // then lands exactly on IC.
        Ok(cond.log2() + self.information_content())
    }
}

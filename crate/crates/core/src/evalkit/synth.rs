//! Synthetic corpora with known labeling functions.
//!
//! * keyword corpus: a sentence is sensitive iff it contains [`TRIGGER`], so
//!   one word's count statistics separate the classes perfectly;
//! * context corpus: a sentence is sensitive iff it contains [`TRIGGER`]
//!   XOR a [`NEGATOR`] occurs before the trigger (or anywhere, when there is
//!   no trigger). Every word is as frequent in sensitive as in
//!   non-sensitive sentences, so no per-word statistic helps;
//! * redundant corpus: two fixed templates with constant labels plus a
//!   context-corpus remainder.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, LabeledSentence, ParseTree};
use crate::embeddings::EmbeddingTable;
use crate::error::Result;

pub const TRIGGER: &str = "confidential";
pub const NEGATOR: &str = "not";
const FILLERS: usize = 8;
const MIN_LEN: usize = 5;
const MAX_LEN: usize = 9;
pub const INFO_TYPE: &str = "SYNTH";

fn filler<R: Rng>(rng: &mut R) -> String {
    format!("f{}", rng.random_range(0..FILLERS))
}

fn sentence(id: usize, label: u8, tokens: &[String]) -> LabeledSentence {
    let tree = ParseTree::right_branching(tokens).expect("synthetic sentences have >= 2 tokens");
    LabeledSentence::new(
        format!("syn{id}"),
        format!("doc{}", id / 10),
        INFO_TYPE,
        label,
        &tree,
    )
    .expect("valid synthetic sentence")
}

/// Filler tokens with `specials` placed at distinct random positions in the
/// given left-to-right order.
fn build<R: Rng>(rng: &mut R, specials: &[&str]) -> Vec<String> {
    let len = rng.random_range(MIN_LEN..=MAX_LEN);
    let mut toks: Vec<String> = (0..len).map(|_| filler(rng)).collect();
    let mut slots: Vec<usize> = rand::seq::index::sample(rng, len, specials.len()).into_vec();
    slots.sort_unstable();
    for (slot, w) in slots.into_iter().zip(specials) {
        toks[slot] = (*w).to_string();
    }
    toks
}

/// Sensitive iff the trigger word is present; labels alternate so any
/// prefix is balanced within one.
pub fn gen_keyword_synthetic(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let toks = if label == 1 {
                build(&mut rng, &[TRIGGER])
            } else {
                build(&mut rng, &[])
            };
            sentence(i, label, &toks)
        })
        .collect();
    Dataset::unsplit("keyword-synthetic", INFO_TYPE, sentences)
}

/// The five context patterns and their labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextSynth {
    /// trigger, no negator: sensitive
    TriggerOnly,
    /// negator before trigger: not sensitive
    NegatedTrigger,
    /// negator, no trigger: sensitive
    NegatorOnly,
    /// neither: not sensitive
    Neither,
    /// negator after trigger: sensitive
    TriggerThenNegator,
}

impl ContextSynth {
    pub fn label(self) -> u8 {
        match self {
            ContextSynth::TriggerOnly
            | ContextSynth::NegatorOnly
            | ContextSynth::TriggerThenNegator => 1,
            ContextSynth::NegatedTrigger | ContextSynth::Neither => 0,
        }
    }

    fn specials(self) -> &'static [&'static str] {
        match self {
            ContextSynth::TriggerOnly => &[TRIGGER],
            ContextSynth::NegatedTrigger => &[NEGATOR, TRIGGER],
            ContextSynth::NegatorOnly => &[NEGATOR],
            ContextSynth::Neither => &[],
            ContextSynth::TriggerThenNegator => &[TRIGGER, NEGATOR],
        }
    }

    /// Labeling function applied to any token sequence.
    pub fn label_of<S: AsRef<str>>(tokens: &[S]) -> u8 {
        let t = tokens.iter().position(|w| w.as_ref() == TRIGGER);
        let neg = tokens.iter().position(|w| w.as_ref() == NEGATOR);
        let negated = match (t, neg) {
            (Some(t), Some(n)) => n < t,
            (None, Some(_)) => true,
            (_, None) => false,
        };
        u8::from(t.is_some() != negated)
    }
}

// Per 10 sentences: 2 TriggerOnly, 3 NegatedTrigger, 2 NegatorOnly,
// 2 Neither, 1 TriggerThenNegator. Then Pr(L=1 | trigger) = 3/6 and
// Pr(L=1 | negator) = 3/6; labels alternate 1,0,1,0,...
const CONTEXT_CYCLE: [ContextSynth; 10] = [
    ContextSynth::TriggerOnly,
    ContextSynth::NegatedTrigger,
    ContextSynth::NegatorOnly,
    ContextSynth::Neither,
    ContextSynth::TriggerOnly,
    ContextSynth::NegatedTrigger,
    ContextSynth::TriggerThenNegator,
    ContextSynth::NegatedTrigger,
    ContextSynth::NegatorOnly,
    ContextSynth::Neither,
];

fn context_sentence<R: Rng>(rng: &mut R, i: usize) -> LabeledSentence {
    let kind = CONTEXT_CYCLE[i % CONTEXT_CYCLE.len()];
    let toks = build(rng, kind.specials());
    debug_assert_eq!(ContextSynth::label_of(&toks), kind.label());
    sentence(i, kind.label(), &toks)
}

pub fn gen_context_synthetic(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n).map(|i| context_sentence(&mut rng, i)).collect();
    Dataset::unsplit("context-synthetic", INFO_TYPE, sentences)
}

const TEMPLATE_SENSITIVE: [&str; 7] = ["the", "wire", "to", "account", "SLOT", "is", "approved"];
const TEMPLATE_PLAIN: [&str; 6] = ["join", "us", "for", "lunch", "on", "SLOT"];
const SLOTS: [&str; 4] = ["monday", "tuesday", "friday", "today"];

/// `template_fraction` of the sentences come from two fixed templates
/// (half labeled 1, half 0); the rest are context-corpus sentences. The
/// output is shuffled.
pub fn gen_redundant_synthetic(seed: u64, n: usize, template_fraction: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_templates = ((n as f64) * template_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut sentences = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i < n_templates {
            let (template, label): (&[&str], u8) = if i % 2 == 0 {
                (&TEMPLATE_SENSITIVE, 1)
            } else {
                (&TEMPLATE_PLAIN, 0)
            };
            let slot = SLOTS[rng.random_range(0..SLOTS.len())];
            let toks: Vec<String> = template
                .iter()
                .map(|w| {
                    if *w == "SLOT" {
                        slot.to_string()
                    } else {
                        w.to_string()
                    }
                })
                .collect();
            sentence(i, label, &toks)
        } else {
            let mut s = context_sentence(&mut rng, i - n_templates);
            s.id = format!("syn{i}");
            s
        };
        sentences.push(s);
    }
    sentences.shuffle(&mut rng);
    Dataset::unsplit("redundant-synthetic", INFO_TYPE, sentences)
}

/// Random vectors, uniform in `[-1, 1]`, for every token in `dataset`.
pub fn synthetic_embeddings(dataset: &Dataset, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let vocab: BTreeSet<&str> = dataset
        .all()
        .flat_map(|s| s.tokens.iter().map(String::as_str))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingTable::from_rows(vocab.into_iter().map(|w| {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        (w.to_string(), v)
    }))
}

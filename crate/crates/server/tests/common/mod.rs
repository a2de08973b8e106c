#![allow(dead_code)]

use std::path::Path;

use taboo_core::container::{EmbeddingSource, Metadata, ModelContainer, Payload, RecnnPayload};
use taboo_core::corpus::{write_records, LabeledSentence, ParseTree};
use taboo_core::evalkit::{gen_keyword_synthetic, synthetic_embeddings, INFO_TYPE};
use taboo_core::keyword::{CountStore, InfRuleModel, KeywordMaxModel};
use taboo_core::recnn::{Activation, RecnnModel};

/// A never-sensitive model.
pub fn constant_zero() -> ModelContainer {
    ModelContainer::new(
        INFO_TYPE,
        Metadata::new(),
        Payload::KeywordMax(KeywordMaxModel {
            order: 1,
            threshold: f64::INFINITY,
            fit_accuracy: 0.0,
            sensitivity: Default::default(),
        }),
    )
}

/// Writes `rules.json` (fires on "confidential"), `never.json` and a
/// seeded untrained `net.json` into `dir`.
pub fn write_models(dir: &Path) {
    let data = gen_keyword_synthetic(1, 200);
    let store = CountStore::count_terms(&data.splits.train, 1).unwrap();
    let rules = InfRuleModel::mine(&store, 2, 0.6);
    ModelContainer::new(INFO_TYPE, Metadata::new(), Payload::InfRule(rules))
        .save(dir.join("rules.json"))
        .unwrap();
    constant_zero().save(dir.join("never.json")).unwrap();
    let emb = synthetic_embeddings(&data, 4, 3).unwrap();
    let net = RecnnModel::init(4, 5, Activation::Tanh, 7).unwrap();
    ModelContainer::new(
        INFO_TYPE,
        Metadata::new(),
        Payload::Recnn(RecnnPayload {
            network: net,
            embeddings: EmbeddingSource::Inline(emb),
        }),
    )
    .save(dir.join("net.json"))
    .unwrap();
}

pub fn sentence(id: &str, info_type: &str, label: u8, words: &[&str]) -> LabeledSentence {
    let tree = ParseTree::right_branching(words).unwrap();
    LabeledSentence::new(id, format!("d{id}"), info_type, label, &tree).unwrap()
}

pub fn write_sentences(path: &Path, sentences: &[LabeledSentence]) {
    let mut f = std::fs::File::create(path).unwrap();
    write_records(&mut f, sentences).unwrap();
}

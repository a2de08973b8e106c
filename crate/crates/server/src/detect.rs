use serde::{Deserialize, Serialize};
use taboo_core::container::Detector;
use taboo_core::text::{fallback_tree, split_raw_text, tokenize};
use taboo_core::Result;

/// Decision for one sentence of a submitted document. `start` and `end`
/// count `char`s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub label: u8,
    pub probability: f64,
    /// False for sentences under two tokens, which get label 0 and
    /// probability 0.5 without consulting the model.
    pub scored: bool,
}

/// Split `text` into sentences and classify each one.
pub fn detect(detector: &Detector, text: &str) -> Result<Vec<DetectionResult>> {
    split_raw_text(text)
        .into_iter()
        .map(|span| {
            let tokens = tokenize(&span.text);
            let (label, probability, scored) = if tokens.len() < 2 {
                (0, 0.5, false)
            } else {
                let p = detector.predict_tree(&fallback_tree(&tokens)?)?;
                (p.label, p.probability, true)
            };
            Ok(DetectionResult {
                text: span.text,
                start: span.start,
                end: span.end,
                label,
                probability,
                scored,
            })
        })
        .collect()
}

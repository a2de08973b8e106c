//! Selective training: pretrain, cluster root representations, drop
//! near-pure clusters, resume training on the rest, and route predictions
//! for the dropped clusters to their dominant label.
//!
//! A cluster's impurity is measured by
//!
//! ```text
//! MFO  = max(f, 1 - f)          f = fraction of label-1 sentences
//! ΔMFO = -log10(1 - MFO)        (+inf for a pure cluster)
//! ```
//!
//! and clusters with `ΔMFO >= cutoff` are removed from training.

mod kmeans;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, nearest_centroid, Kmeans};

use crate::corpus::{Dataset, LabeledSentence};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::recnn::{
    line_search, loss, node_loss, prepare, CurvePoint, DevScore, Example, RecnnModel, StopReason,
    StopRule, TrainConfig, Trainer,
};
use crate::serde_util::{ext_f64, matrix};

/// Most-frequent-class ratio for a label-1 fraction `f`.
pub fn mfo(f: f64) -> f64 {
    f.max(1.0 - f)
}

/// `-log10(1 - mfo)`, `+inf` when `mfo >= 1`.
///
/// The result is rounded to 12 decimals so that decimal inputs such as
/// `0.99` give exact powers of ten (`1 - 0.99` is not exactly `0.01` in
/// binary).
pub fn delta_mfo(mfo: f64) -> f64 {
    if mfo >= 1.0 {
        return f64::INFINITY;
    }
    let d = -(1.0 - mfo).log10();
    (d * 1e12).round() / 1e12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub size: usize,
    /// Label-1 members.
    pub sensitive: usize,
    /// `sensitive / size`.
    pub f: f64,
    pub mfo: f64,
    #[serde(with = "ext_f64")]
    pub delta_mfo: f64,
    /// Majority label; an even split counts as 0.
    pub dominant_label: u8,
    /// Removed from training; predictions in this cluster use
    /// `dominant_label`.
    pub filtered: bool,
}

impl ClusterStats {
    fn from_counts(size: usize, sensitive: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("empty cluster"));
        }
        let f = sensitive as f64 / size as f64;
        let minority = sensitive.min(size - sensitive);
        let m = mfo(f);
        let d = if minority == 0 {
            f64::INFINITY
        } else {
            delta_mfo(1.0 - minority as f64 / size as f64)
        };
        Ok(ClusterStats {
            size,
            sensitive,
            f,
            mfo: m,
            delta_mfo: d,
            dominant_label: u8::from(2 * sensitive > size),
            filtered: false,
        })
    }

    /// `Pr(sensitive)` implied by routing to this cluster.
    pub fn sensitive_probability(&self) -> f64 {
        if self.dominant_label == 1 {
            self.mfo
        } else {
            1.0 - self.mfo
        }
    }
}

/// K-means clusters of training sentences with per-cluster label statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub k: usize,
    /// One row per cluster, `N_h` columns.
    #[serde(with = "matrix")]
    pub centroids: Array2<f64>,
    /// Sentence id to cluster index.
    pub assignment: BTreeMap<String, usize>,
    pub clusters: Vec<ClusterStats>,
    /// Final total sum of squared distances.
    pub total_sum: f64,
}

impl ClusterPartition {
    /// Nearest centroid; equidistant centroids resolve to the lowest index.
    pub fn nearest(&self, point: ArrayView1<'_, f64>) -> Result<usize> {
        if point.len() != self.centroids.ncols() {
            return Err(Error::Dimension {
                expected: self.centroids.ncols(),
                got: point.len(),
            });
        }
        Ok(nearest_centroid(self.centroids.view(), point).0)
    }

    pub fn filtered_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.filtered).count()
    }

    /// Sentences in filtered clusters.
    pub fn removed_sentences(&self) -> usize {
        self.clusters
            .iter()
            .filter(|c| c.filtered)
            .map(|c| c.size)
            .sum()
    }

    pub fn is_kept(&self, id: &str) -> Option<bool> {
        self.assignment.get(id).map(|&c| !self.clusters[c].filtered)
    }
}

/// Attach label statistics to a clustering of the sentences `ids`.
pub fn score_clusters(km: &Kmeans, ids: &[String], labels: &[u8]) -> Result<ClusterPartition> {
    if ids.len() != km.assignment.len() || labels.len() != km.assignment.len() {
        return Err(Error::invalid(format!(
            "{} points clustered but {} ids and {} labels given",
            km.assignment.len(),
            ids.len(),
            labels.len()
        )));
    }
    let k = km.k();
    let mut size = vec![0usize; k];
    let mut sensitive = vec![0usize; k];
    let mut assignment = BTreeMap::new();
    for ((id, &label), &c) in ids.iter().zip(labels).zip(&km.assignment) {
        if label > 1 {
            return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
        }
        size[c] += 1;
        sensitive[c] += usize::from(label);
        if assignment.insert(id.clone(), c).is_some() {
            return Err(Error::invalid(format!("duplicate sentence id {id}")));
        }
    }
    let clusters = size
        .iter()
        .zip(&sensitive)
        .map(|(&n, &s)| ClusterStats::from_counts(n, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusterPartition {
        k,
        centroids: km.centroids.clone(),
        assignment,
        clusters,
        total_sum: km.total_sum(),
    })
}

/// Mark clusters with `ΔMFO >= cutoff` as filtered (optionally only those
/// whose dominant label is `only_class`). Fails if nothing would be kept.
pub fn filter_clusters(
    partition: &mut ClusterPartition,
    cutoff: f64,
    only_class: Option<u8>,
) -> Result<()> {
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::invalid(format!("cutoff must be > 0, got {cutoff}")));
    }
    for c in &mut partition.clusters {
        c.filtered = c.delta_mfo >= cutoff && only_class.is_none_or(|l| l == c.dominant_label);
    }
    if partition.clusters.iter().all(|c| c.filtered) {
        for c in &mut partition.clusters {
            c.filtered = false;
        }
        return Err(Error::invalid(format!(
            "cutoff {cutoff} filters every cluster; nothing left to train on"
        )));
    }
    Ok(())
}

/// Apply [`filter_clusters`] and return the sentences of the kept clusters.
pub fn filter_dataset(
    partition: &mut ClusterPartition,
    sentences: &[LabeledSentence],
    cutoff: f64,
    only_class: Option<u8>,
) -> Result<Vec<LabeledSentence>> {
    filter_clusters(partition, cutoff, only_class)?;
    let mut kept = Vec::new();
    for s in sentences {
        match partition.is_kept(&s.id) {
            Some(true) => kept.push(s.clone()),
            Some(false) => {}
            None => {
                return Err(Error::invalid(format!(
                    "sentence {} is not in the partition",
                    s.id
                )))
            }
        }
    }
    Ok(kept)
}

/// Curve point for bend detection: `(minibatches, dev_accuracy)`.
pub type Probe = (usize, f64);

/// First probe index `i >= window` where the slope over the last `window`
/// probes drops below `fraction` times the largest such slope so far.
pub fn find_bend(curve: &[Probe], window: usize, fraction: f64) -> Option<usize> {
    if window == 0 {
        return None;
    }
    let mut max_slope = f64::NEG_INFINITY;
    for i in window..curve.len() {
        let (x0, y0) = curve[i - window];
        let (x1, y1) = curve[i];
        let dx = x1.saturating_sub(x0).max(1) as f64;
        let slope = (y1 - y0) / dx;
        max_slope = max_slope.max(slope);
        if max_slope > 0.0 && slope < fraction * max_slope {
            return Some(i);
        }
    }
    None
}

/// Minibatch count at which pretraining should stop: the bend found by
/// [`find_bend`], or the last probe if the curve never bends.
pub fn detect_pretrain_stop(curve: &[Probe], window: usize, fraction: f64) -> Result<usize> {
    if window == 0 {
        return Err(Error::invalid("window must be >= 1"));
    }
    if curve.len() < 2 * window {
        return Err(Error::insufficient(format!(
            "bend detection needs {} probes, got {}",
            2 * window,
            curve.len()
        )));
    }
    let i = find_bend(curve, window, fraction).unwrap_or(curve.len() - 1);
    Ok(curve[i].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainBudget {
    /// Stop at the bend of the dev-accuracy curve.
    Auto,
    Minibatches(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectiveConfig {
    pub k: usize,
    /// Clusters with `ΔMFO >= cutoff` are removed.
    #[serde(with = "ext_f64")]
    pub cutoff: f64,
    pub pretrain: PretrainBudget,
    /// Bend-detection window in probes.
    pub window: usize,
    pub slope_fraction: f64,
    pub max_iter: usize,
    /// Relative change of the K-means total sum that ends clustering.
    pub tol: f64,
    pub seed: u64,
    /// Filter only clusters whose dominant label is this class.
    pub only_class: Option<u8>,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        SelectiveConfig {
            k: 35,
            cutoff: 1.9,
            pretrain: PretrainBudget::Auto,
            window: 5,
            slope_fraction: 0.2,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            only_class: None,
        }
    }
}

impl SelectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {}", self.k)));
        }
        if self.cutoff.is_nan() || self.cutoff <= 0.0 {
            return Err(Error::invalid(format!(
                "cutoff must be > 0, got {}",
                self.cutoff
            )));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be >= 1"));
        }
        if !(self.slope_fraction > 0.0 && self.slope_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "slope fraction must be in (0,1), got {}",
                self.slope_fraction
            )));
        }
        if self.only_class.is_some_and(|c| c > 1) {
            return Err(Error::invalid("only_class must be 0 or 1"));
        }
        Ok(())
    }
}

/// A trained network plus the partition used to route its inputs.
///
/// `router` is the network as it was when the training sentences were
/// clustered; centroids live in its representation space, so it stays fixed
/// while `model` keeps training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveModel {
    pub model: RecnnModel,
    pub router: RecnnModel,
    pub partition: ClusterPartition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub cluster: usize,
    pub filtered: bool,
    pub label: u8,
    /// `Pr(sensitive)`.
    pub sensitive_probability: f64,
}

impl SelectiveModel {
    pub fn cluster_of(&self, ex: &Example) -> Result<usize> {
        self.partition.nearest(self.router.embed(ex)?.view())
    }

    pub fn route(&self, ex: &Example) -> Result<Route> {
        let cluster = self.cluster_of(ex)?;
        let stats = &self.partition.clusters[cluster];
        if stats.filtered {
            Ok(Route {
                cluster,
                filtered: true,
                label: stats.dominant_label,
                sensitive_probability: stats.sensitive_probability(),
            })
        } else {
            let (label, p) = self.model.predict(ex)?;
            Ok(Route {
                cluster,
                filtered: false,
                label,
                sensitive_probability: p,
            })
        }
    }
}

/// `(label, probability)`: for a filtered cluster the dominant label and the
/// cluster's MFO, otherwise the network's prediction and `Pr(sensitive)`.
pub fn route_predict(model: &SelectiveModel, ex: &Example) -> Result<(u8, f64)> {
    let r = model.route(ex)?;
    if r.filtered {
        Ok((r.label, model.partition.clusters[r.cluster].mfo))
    } else {
        Ok((r.label, r.sensitive_probability))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveReport {
    pub learning_rate: f64,
    pub line_search_minibatches: usize,
    pub pretrain_minibatches: usize,
    pub resume_minibatches: usize,
    /// `pretrain_minibatches + resume_minibatches`.
    pub total_minibatches: usize,
    pub kmeans_iterations: usize,
    pub ts_history: Vec<f64>,
    pub clustered: usize,
    pub kept: usize,
    pub removed: usize,
    pub filtered_clusters: usize,
    /// Routed dev score of the returned model.
    pub best_dev: DevScore,
    pub stopped_by: StopReason,
    /// Pretraining probes (plain dev score) followed by resume probes
    /// (routed dev score); minibatch counts are cumulative.
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone)]
pub struct SelectiveOutcome {
    pub model: SelectiveModel,
    pub report: SelectiveReport,
}

/// Probes every tenth of an epoch when the config does not set a cadence;
/// bend detection needs a curve.
fn pretrain_probe_interval(config: &TrainConfig, train_len: usize) -> usize {
    if config.probe_interval > 0 {
        config.probe_interval
    } else {
        (train_len.div_ceil(config.batch_size) / 10).max(1)
    }
}

/// Full selective training on `dataset`'s train and dev splits.
pub fn selective_train(
    dataset: &Dataset,
    init: &RecnnModel,
    config: &TrainConfig,
    sel: &SelectiveConfig,
    embeddings: &EmbeddingTable,
) -> Result<SelectiveOutcome> {
    config.validate()?;
    sel.validate()?;
    let train_s = &dataset.splits.train;
    let dev_s = &dataset.splits.dev;
    if train_s.is_empty() || dev_s.is_empty() {
        return Err(Error::insufficient(
            "train and dev splits must be non-empty",
        ));
    }
    let train = prepare(train_s, embeddings)?;
    let dev = prepare(dev_s, embeddings)?;
    let w = config.sensitive_weight;

    let (lr, line_search_minibatches) = line_search(init, &train, &dev, config)?;

    // (1) pretrain
    let pre_config = TrainConfig {
        probe_interval: pretrain_probe_interval(config, train.len()),
        ..config.clone()
    };
    let mut trainer = Trainer::new(init.clone(), &pre_config, lr);
    let (rule, auto) = match sel.pretrain {
        PretrainBudget::Minibatches(n) => (StopRule::Budget(n), false),
        PretrainBudget::Auto => (StopRule::Converge, true),
    };
    if !matches!(sel.pretrain, PretrainBudget::Minibatches(0)) {
        trainer.run(
            &train,
            |m| crate::recnn::evaluate(m, &dev, w),
            rule,
            |curve| {
                auto && {
                    let probes: Vec<Probe> = curve
                        .iter()
                        .map(|p| (p.minibatches, p.dev_accuracy))
                        .collect();
                    probes.len() >= 2 * sel.window
                        && find_bend(&probes, sel.window, sel.slope_fraction).is_some()
                }
            },
        )?;
    }
    let pretrain_minibatches = trainer.minibatches;
    let router = trainer.model.clone();

    // (2) embed, (3) cluster and score
    let n_h = router.n_h();
    let mut points = Array2::zeros((train.len(), n_h));
    for (mut row, ex) in points.rows_mut().into_iter().zip(&train) {
        row.assign(&router.embed(ex)?);
    }
    let k = sel.k.min(train.len());
    let km = kmeans(points.view(), k, sel.seed, sel.max_iter, sel.tol)?;
    let ids: Vec<String> = train_s.iter().map(|s| s.id.clone()).collect();
    let labels: Vec<u8> = train_s.iter().map(|s| s.label).collect();
    let mut partition = score_clusters(&km, &ids, &labels)?;

    // (4) filter
    filter_clusters(&mut partition, sel.cutoff, sel.only_class)?;
    let reduced: Vec<Example> = train
        .iter()
        .zip(&km.assignment)
        .filter(|(_, &c)| !partition.clusters[c].filtered)
        .map(|(ex, _)| ex.clone())
        .collect();

    // (5) resume on the reduced set, scoring dev through the router
    let mut dev_routes: Vec<Option<(u8, f64)>> = Vec::with_capacity(dev.len());
    for ex in &dev {
        let c = partition.nearest(router.embed(ex)?.view())?;
        let stats = &partition.clusters[c];
        dev_routes.push(
            stats
                .filtered
                .then(|| (stats.dominant_label, stats.sensitive_probability())),
        );
    }
    let routed_eval = |m: &RecnnModel| routed_score(m, &dev, &dev_routes, w);

    let mut resume = Trainer::new(trainer.model.clone(), config, lr);
    resume.minibatches = pretrain_minibatches;
    let report = resume.run(&reduced, routed_eval, StopRule::Converge, |_| false)?;
    let resume_minibatches = report.minibatches;

    let kept = reduced.len();
    let removed = train.len() - kept;
    let filtered_clusters = partition.filtered_count();
    Ok(SelectiveOutcome {
        model: SelectiveModel {
            model: report.best,
            router,
            partition,
        },
        report: SelectiveReport {
            learning_rate: lr,
            line_search_minibatches,
            pretrain_minibatches,
            resume_minibatches,
            total_minibatches: pretrain_minibatches + resume_minibatches,
            kmeans_iterations: km.iterations,
            ts_history: km.ts_history,
            clustered: train.len(),
            kept,
            removed,
            filtered_clusters,
            best_dev: report.best_score,
            stopped_by: report.stopped_by,
            curve: trainer.curve.iter().chain(&resume.curve).copied().collect(),
        },
    })
}

fn routed_score(
    model: &RecnnModel,
    dev: &[Example],
    routes: &[Option<(u8, f64)>],
    weight: f64,
) -> Result<DevScore> {
    let mut correct = 0usize;
    let mut total = 0.0;
    for (ex, route) in dev.iter().zip(routes) {
        let (label, l) = match route {
            Some((label, p)) => (*label, node_loss(1.0 - p, *p, ex.label, weight)),
            None => {
                let states = model.forward(ex)?;
                let o = states.root_output();
                (u8::from(o[1] > o[0]), loss(&states, ex.label, weight))
            }
        };
        correct += usize::from(label == ex.label);
        total += l;
    }
    let n = dev.len() as f64;
    Ok(DevScore {
        accuracy: correct as f64 / n,
        loss: total / n,
    })
}

/// Routed accuracy and loss of a selective model on `examples`.
pub fn evaluate_selective(
    model: &SelectiveModel,
    examples: &[Example],
    weight: f64,
) -> Result<DevScore> {
    if examples.is_empty() {
        return Err(Error::insufficient("evaluation set is empty"));
    }
    let mut routes = Vec::with_capacity(examples.len());
    for ex in examples {
        let c = model.cluster_of(ex)?;
        let stats = &model.partition.clusters[c];
        routes.push(
            stats
                .filtered
                .then(|| (stats.dominant_label, stats.sensitive_probability())),
        );
    }
    routed_score(&model.model, examples, &routes, weight)
}

#[cfg(test)]
mod tests;

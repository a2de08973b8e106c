use ndarray::{array, Array1};
use proptest::prelude::*;

use super::*;
use crate::corpus::{split, ParseTree};
use crate::evalkit::{gen_redundant_synthetic, synthetic_embeddings};
use crate::recnn::{Activation, Example};

#[test]
fn delta_mfo_values() {
    assert_eq!(delta_mfo(0.9), 1.0);
    assert_eq!(delta_mfo(0.99), 2.0);
    assert_eq!(delta_mfo(0.999), 3.0);
    assert!((delta_mfo(0.9867) - 1.88).abs() <= 0.005);
    assert_eq!(delta_mfo(1.0), f64::INFINITY);
    assert!((delta_mfo(0.5) - 2f64.log10()).abs() < 1e-12);
}

fn one_cluster(labels: &[u8]) -> ClusterPartition {
    let km = Kmeans {
        centroids: array![[0.0]],
        assignment: vec![0; labels.len()],
        ts_history: vec![0.0],
        iterations: 0,
    };
    let ids: Vec<String> = (0..labels.len()).map(|i| format!("s{i}")).collect();
    score_clusters(&km, &ids, labels).unwrap()
}

#[test]
fn scores_by_enumeration() {
    let p = one_cluster(&[1, 1, 0]);
    let c = &p.clusters[0];
    assert_eq!((c.size, c.sensitive, c.dominant_label), (3, 2, 1));
    assert_eq!(c.f, 2.0 / 3.0);
    assert_eq!(c.mfo, 2.0 / 3.0);
    // 1 - MFO = 1/3, so ΔMFO = log10(3)
    assert!((c.delta_mfo - 3f64.ln() / 10f64.ln()).abs() < 1e-12);
    assert!((c.delta_mfo - 0.4771).abs() < 1e-4);

    let pure = one_cluster(&[0, 0, 0, 0]);
    assert_eq!(pure.clusters[0].mfo, 1.0);
    assert_eq!(pure.clusters[0].delta_mfo, f64::INFINITY);
    assert_eq!(pure.clusters[0].dominant_label, 0);

    let even = one_cluster(&[0, 1]);
    assert_eq!(even.clusters[0].dominant_label, 0);
    assert_eq!(even.clusters[0].mfo, 0.5);
}

#[test]
fn score_rejects_mismatch() {
    let km = Kmeans {
        centroids: array![[0.0]],
        assignment: vec![0; 2],
        ts_history: vec![0.0],
        iterations: 0,
    };
    assert!(score_clusters(&km, &["a".into()], &[0, 1]).is_err());
    assert!(score_clusters(&km, &["a".into(), "a".into()], &[0, 1]).is_err());
    assert!(score_clusters(&km, &["a".into(), "b".into()], &[0, 2]).is_err());
}

/// Two clusters: 1000 sentences with one minority label, and 10 at 6/4.
fn mixed() -> (ClusterPartition, Vec<LabeledSentence>) {
    let mut assignment = Vec::new();
    let mut labels = Vec::new();
    for i in 0..1000 {
        assignment.push(0);
        labels.push(u8::from(i == 0));
    }
    for i in 0..10 {
        assignment.push(1);
        labels.push(u8::from(i < 6));
    }
    let km = Kmeans {
        centroids: array![[0.0], [1.0]],
        assignment,
        ts_history: vec![0.0],
        iterations: 0,
    };
    let tree = ParseTree::right_branching(&["a", "b"]).unwrap();
    let sentences: Vec<LabeledSentence> = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| LabeledSentence::new(format!("s{i}"), "d", "T", l, &tree).unwrap())
        .collect();
    let ids: Vec<String> = sentences.iter().map(|s| s.id.clone()).collect();
    (score_clusters(&km, &ids, &labels).unwrap(), sentences)
}

#[test]
fn filter_examples() {
    let (mut p, sentences) = mixed();
    assert_eq!(p.clusters[0].mfo, 0.999);
    assert_eq!(p.clusters[0].delta_mfo, 3.0);
    assert!((p.clusters[1].delta_mfo - 0.398).abs() < 1e-3);

    let kept = filter_dataset(&mut p, &sentences, 1.9, None).unwrap();
    assert!(p.clusters[0].filtered && !p.clusters[1].filtered);
    assert_eq!(kept.len(), 10);
    assert_eq!(p.removed_sentences(), 1000);

    let kept = filter_dataset(&mut p, &sentences, f64::INFINITY, None).unwrap();
    assert_eq!(kept.len(), sentences.len());
    assert_eq!(p.filtered_count(), 0);

    // restricting to label 1 leaves the label-0 cluster alone
    let kept = filter_dataset(&mut p, &sentences, 1.9, Some(1)).unwrap();
    assert_eq!(kept.len(), sentences.len());

    assert!(filter_dataset(&mut p, &sentences, 0.0, None).is_err());
    assert!(filter_dataset(&mut p, &sentences, 0.3, None).is_err());
}

#[test]
fn all_pure_clusters_cannot_be_filtered() {
    let km = Kmeans {
        centroids: array![[0.0], [1.0]],
        assignment: vec![0, 0, 1, 1],
        ts_history: vec![0.0],
        iterations: 0,
    };
    let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
    let mut p = score_clusters(&km, &ids, &[0, 0, 1, 1]).unwrap();
    assert!(filter_clusters(&mut p, 1.5, None).is_err());
    assert_eq!(p.filtered_count(), 0);
}

fn curve(values: &[f64], step: usize) -> Vec<Probe> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) * step, v))
        .collect()
}

#[test]
fn bend_at_knee() {
    let knee = 20;
    let ys: Vec<f64> = (0..40).map(|i| 0.5 + 0.02 * (i.min(knee) as f64)).collect();
    let c = curve(&ys, 10);
    let i = find_bend(&c, 5, 0.2).unwrap();
    assert!(i.abs_diff(knee) <= 5, "{i}");
    assert_eq!(detect_pretrain_stop(&c, 5, 0.2).unwrap(), c[i].0);
}

#[test]
fn linear_curve_never_bends() {
    let ys: Vec<f64> = (0..30).map(|i| 0.01 * i as f64).collect();
    let c = curve(&ys, 7);
    assert_eq!(find_bend(&c, 5, 0.2), None);
    assert_eq!(detect_pretrain_stop(&c, 5, 0.2).unwrap(), 30 * 7);
}

#[test]
fn geometric_slope_decay() {
    // per-probe increments halve every 5 probes: 1, 1/2, 1/4, 1/8, ...
    let mut ys = vec![0.0];
    for i in 0..40 {
        let inc = 0.5f64.powi(i / 5);
        ys.push(ys.last().unwrap() + inc);
    }
    let c = curve(&ys, 1);
    let i = find_bend(&c, 5, 0.2).unwrap();
    // the window slope first drops below 0.2 once it holds more 1/8 steps
    // than 1/4 steps; it never does while only 1/4 steps or larger remain
    let window_slope = |i: usize| (ys[i] - ys[i - 5]) / 5.0;
    assert!(window_slope(i) < 0.2);
    assert!((5..i).all(|j| window_slope(j) >= 0.2));
    assert!((15..=20).contains(&(i - 1)), "{i}");
}

#[test]
fn short_curve_rejected() {
    let c = curve(&[0.1; 9], 1);
    assert!(detect_pretrain_stop(&c, 5, 0.2).is_err());
    assert!(detect_pretrain_stop(&curve(&[0.1; 10], 1), 5, 0.2).is_ok());
}

fn zero_router() -> (SelectiveModel, Example) {
    let model = RecnnModel::zeros(2, 3, Activation::Tanh);
    let emb = EmbeddingTable::from_rows([("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]).unwrap();
    let ex = Example::new(&ParseTree::right_branching(&["a", "b"]).unwrap(), 0, &emb).unwrap();
    let partition = ClusterPartition {
        k: 2,
        centroids: array![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        assignment: BTreeMap::new(),
        clusters: vec![
            ClusterStats::from_counts(4, 0).unwrap(),
            ClusterStats::from_counts(5, 3).unwrap(),
        ],
        total_sum: 0.0,
    };
    (
        SelectiveModel {
            model: model.clone(),
            router: model,
            partition,
        },
        ex,
    )
}

#[test]
fn routes_to_filtered_cluster() {
    let (mut m, ex) = zero_router();
    // the zero network embeds everything at the origin: a tie, so cluster 0
    assert_eq!(m.router.embed(&ex).unwrap(), Array1::<f64>::zeros(3));
    assert_eq!(m.cluster_of(&ex).unwrap(), 0);

    m.partition.clusters[0].filtered = true;
    assert_eq!(route_predict(&m, &ex).unwrap(), (0, 1.0));
    let r = m.route(&ex).unwrap();
    assert!(r.filtered);
    assert_eq!(r.sensitive_probability, 0.0);

    m.partition.clusters[0].filtered = false;
    assert_eq!(
        route_predict(&m, &ex).unwrap(),
        m.model.predict(&ex).unwrap()
    );
}

#[test]
fn unfiltered_route_matches_network() {
    let emb = EmbeddingTable::from_rows([("a", vec![0.3, -0.2]), ("b", vec![-0.5, 0.9])]).unwrap();
    let model = RecnnModel::init(2, 3, Activation::Tanh, 5).unwrap();
    let ex = Example::new(
        &ParseTree::parse("(S (A a) (B (C b) (D a)))").unwrap(),
        1,
        &emb,
    )
    .unwrap();
    let e = model.embed(&ex).unwrap();
    let far = &e + 10.0;
    let mut centroids = Array2::zeros((2, 3));
    centroids.row_mut(0).assign(&far);
    centroids.row_mut(1).assign(&e);
    let mut clusters = vec![
        ClusterStats::from_counts(3, 3).unwrap(),
        ClusterStats::from_counts(3, 3).unwrap(),
    ];
    clusters[0].filtered = true;
    let m = SelectiveModel {
        model: model.clone(),
        router: model.clone(),
        partition: ClusterPartition {
            k: 2,
            centroids,
            assignment: BTreeMap::new(),
            clusters,
            total_sum: 0.0,
        },
    };
    assert_eq!(m.cluster_of(&ex).unwrap(), 1);
    assert_eq!(route_predict(&m, &ex).unwrap(), model.predict(&ex).unwrap());
}

#[test]
fn config_validation() {
    SelectiveConfig::default().validate().unwrap();
    for bad in [
        SelectiveConfig {
            k: 1,
            ..Default::default()
        },
        SelectiveConfig {
            cutoff: 0.0,
            ..Default::default()
        },
        SelectiveConfig {
            window: 0,
            ..Default::default()
        },
        SelectiveConfig {
            slope_fraction: 1.0,
            ..Default::default()
        },
        SelectiveConfig {
            only_class: Some(2),
            ..Default::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
}

fn small_run(cutoff: f64) -> SelectiveOutcome {
    let d = split(&gen_redundant_synthetic(1, 240, 0.7), [0.7, 0.15, 0.15], 3).unwrap();
    let emb = synthetic_embeddings(&d, 4, 2).unwrap();
    let init = RecnnModel::init(4, 5, Activation::Tanh, 1).unwrap();
    let config = TrainConfig {
        learning_rates: vec![0.1],
        max_epochs: 3,
        probe_interval: 2,
        dropout: 0.0,
        ..Default::default()
    };
    let sel = SelectiveConfig {
        k: 6,
        cutoff,
        pretrain: PretrainBudget::Minibatches(10),
        ..Default::default()
    };
    selective_train(&d, &init, &config, &sel, &emb).unwrap()
}

#[test]
fn selective_bookkeeping() {
    let out = small_run(1.9);
    let r = &out.report;
    assert_eq!(r.pretrain_minibatches, 10);
    assert_eq!(
        r.total_minibatches,
        r.pretrain_minibatches + r.resume_minibatches
    );
    assert_eq!(r.kept + r.removed, r.clustered);
    assert_eq!(r.removed, out.model.partition.removed_sentences());
    let sizes: usize = out.model.partition.clusters.iter().map(|c| c.size).sum();
    assert_eq!(sizes, r.clustered);
    assert_eq!(out.model.partition.assignment.len(), r.clustered);
    for w in r.ts_history.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn infinite_cutoff_keeps_everything() {
    let out = small_run(f64::INFINITY);
    assert_eq!(out.report.removed, 0);
    assert_eq!(out.report.kept, out.report.clustered);
    assert_eq!(out.model.partition.filtered_count(), 0);
}

proptest! {
    #[test]
    fn cluster_scores_consistent(labels in prop::collection::vec(0u8..2, 1..60), k in 1usize..5, seed in 0u64..1000) {
        let n = labels.len();
        let assignment: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % k).collect();
        let used = assignment.iter().copied().collect::<std::collections::BTreeSet<_>>();
        prop_assume!(used.len() == k);
        let km = Kmeans {
            centroids: Array2::zeros((k, 1)),
            assignment,
            ts_history: vec![0.0],
            iterations: 0,
        };
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let mut p = score_clusters(&km, &ids, &labels).unwrap();
        prop_assert_eq!(p.clusters.iter().map(|c| c.size).sum::<usize>(), n);
        for c in &p.clusters {
            prop_assert!(c.mfo >= 0.5 && c.mfo <= 1.0);
            prop_assert!(c.delta_mfo >= 0.301);
        }
        let cutoff = 1.0 + (seed % 3) as f64;
        if filter_clusters(&mut p, cutoff, None).is_ok() {
            let kept = ids.iter().filter(|id| p.is_kept(id) == Some(true)).count();
            let removed = ids.iter().filter(|id| p.is_kept(id) == Some(false)).count();
            prop_assert_eq!(kept + removed, n);
            prop_assert_eq!(removed, p.removed_sentences());
        }
    }
}

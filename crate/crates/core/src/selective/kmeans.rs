use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kmeans {
    /// One row per cluster.
    pub centroids: Array2<f64>,
    /// Cluster index of every input point.
    pub assignment: Vec<usize>,
    /// Total sum of squared L2 distances after each assignment step; the
    /// first entry is the initial assignment.
    pub ts_history: Vec<f64>,
    /// Centroid updates performed.
    pub iterations: usize,
}

impl Kmeans {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Final total sum of squared distances.
    pub fn total_sum(&self) -> f64 {
        *self.ts_history.last().expect("at least one assignment")
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid and the squared distance to it. Ties go to
/// the lowest index.
pub fn nearest_centroid(
    centroids: ArrayView2<'_, f64>,
    point: ArrayView1<'_, f64>,
) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, point);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(
    points: ArrayView2<'_, f64>,
    centroids: &Array2<f64>,
    assignment: &mut [usize],
    dist: &mut [f64],
) {
    for (i, p) in points.rows().into_iter().enumerate() {
        let (j, d) = nearest_centroid(centroids.view(), p);
        assignment[i] = j;
        dist[i] = d;
    }
}

/// Give every empty cluster the point farthest from its current centroid,
/// taken from a cluster that keeps at least one other point.
fn reseed_empty(
    points: ArrayView2<'_, f64>,
    centroids: &mut Array2<f64>,
    assignment: &mut [usize],
    dist: &mut [f64],
) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let far = (0..assignment.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
            .expect("n >= k leaves a cluster with two or more points");
        sizes[assignment[far]] -= 1;
        sizes[j] = 1;
        assignment[far] = j;
        dist[far] = 0.0;
        centroids.row_mut(j).assign(&points.row(far));
    }
}

/// Lloyd's algorithm on the rows of `points`.
///
/// Initial centroids are `k` points with pairwise distinct coordinates drawn
/// with `seed`. Iteration stops after `max_iter` centroid updates or when
/// the relative decrease of the total sum falls below `tol`.
pub fn kmeans(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Kmeans> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if n < k {
        return Err(Error::insufficient(format!(
            "{n} points cannot form {k} clusters"
        )));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if chosen.iter().all(|&c| points.row(c) != points.row(i)) {
            chosen.push(i);
            if chosen.len() == k {
                break;
            }
        }
    }
    if chosen.len() < k {
        return Err(Error::insufficient(format!(
            "only {} distinct points for {k} clusters",
            chosen.len()
        )));
    }
    let mut centroids = points.select(Axis(0), &chosen);

    let mut assignment = vec![0usize; n];
    let mut dist = vec![0.0; n];
    assign(points, &centroids, &mut assignment, &mut dist);
    let mut ts_history = vec![dist.iter().sum::<f64>()];
    let mut iterations = 0;

    while iterations < max_iter {
        // update step
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, p) in points.rows().into_iter().enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &p);
            counts[assignment[i]] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let mean = &sums.row(j) / c as f64;
                centroids.row_mut(j).assign(&mean);
            }
        }
        iterations += 1;

        assign(points, &centroids, &mut assignment, &mut dist);
        reseed_empty(points, &mut centroids, &mut assignment, &mut dist);
        let ts: f64 = dist.iter().sum();
        let prev = *ts_history.last().expect("non-empty");
        ts_history.push(ts);
        if prev == 0.0 || (prev - ts) / prev < tol {
            break;
        }
    }

    Ok(Kmeans {
        centroids,
        assignment,
        ts_history,
        iterations,
    })
}

//! Two-centroid mini-batch k-means (per-center learning rate `1 / count`)
//! with k-means++ seeding.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Algorithm, BinaryAssignment};
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

const K: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub batch_size: usize,
    pub max_iters: usize,
    /// Independent seedings; the one with the lowest inertia wins.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            batch_size: 1024,
            max_iters: 300,
            n_init: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KMeansModel<T> {
    pub centroids: Vec<Vec<T>>,
    /// Points absorbed by each centroid over all updates.
    pub counts: Vec<usize>,
    pub inertia: T,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
}

fn row<T: Scalar>(x: &ArrayView2<'_, T>, i: usize) -> Vec<T> {
    x.row(i).to_vec()
}

/// Index of the nearest centroid and its squared distance; ties go to the lower index.
fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, squared_distance(p, &centroids[0]));
    for (c, cen) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn contiguous<'a, T: Scalar>(x: &ArrayView2<'a, T>, i: usize) -> std::borrow::Cow<'a, [T]> {
    let r = (*x).index_axis_move(ndarray::Axis(0), i);
    match r.to_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(r.to_vec()),
    }
}

fn kmeans_pp<T: Scalar>(x: &ArrayView2<'_, T>, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = x.nrows();
    let first = rng.random_range(0..n);
    let c0 = row(x, first);
    let d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(&contiguous(x, i), &c0).to_f64_lossy())
        .collect();
    let total: f64 = d2.iter().sum();
    let second = if total > 0.0 {
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        pick
    } else {
        farthest(&d2)
    };
    vec![c0, row(x, second)]
}

fn farthest(d2: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in d2.iter().enumerate() {
        if d > d2[best] {
            best = i;
        }
    }
    best
}

fn inertia<T: Scalar>(x: &ArrayView2<'_, T>, centroids: &[Vec<T>]) -> T {
    let parts: Vec<T> = (0..x.nrows())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| nearest(&contiguous(x, i), centroids).1)
        .collect();
    parts.into_iter().sum()
}

fn run_once<T: Scalar>(x: &ArrayView2<'_, T>, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> (Vec<Vec<T>>, Vec<usize>) {
    let n = x.nrows();
    let mut centroids = kmeans_pp(x, rng);
    let mut counts = vec![0usize; K];
    let full = cfg.batch_size >= n;
    for _ in 0..cfg.max_iters {
        let batch: Vec<usize> = if full {
            (0..n).collect()
        } else {
            index::sample(rng, n, cfg.batch_size).into_vec()
        };
        let assigned: Vec<(usize, T)> = batch
            .iter()
            .map(|&i| nearest(&contiguous(x, i), &centroids))
            .collect();

        // a centroid that has never absorbed a point is moved onto the batch
        // point farthest from its current nearest centroid
        for c in 0..K {
            if counts[c] == 0 && !assigned.iter().any(|&(a, _)| a == c) {
                let d2: Vec<f64> = assigned.iter().map(|&(_, d)| d.to_f64_lossy()).collect();
                let far = batch[farthest(&d2)];
                centroids[c] = row(x, far);
            }
        }
        let assigned: Vec<usize> = batch
            .iter()
            .map(|&i| nearest(&contiguous(x, i), &centroids).0)
            .collect();

        for (&i, &c) in batch.iter().zip(&assigned) {
            counts[c] += 1;
            let eta = T::one() / T::of_usize(counts[c]);
            let p = contiguous(x, i);
            for (cv, &pv) in centroids[c].iter_mut().zip(p.iter()) {
                *cv = *cv + eta * (pv - *cv);
            }
        }
    }
    (centroids, counts)
}

/// Fits two centroids with mini-batch k-means.
pub fn mbk_fit<T: Scalar>(x: ArrayView2<'_, T>, cfg: &KMeansConfig) -> Result<KMeansModel<T>> {
    let n = x.nrows();
    if n < K {
        return Err(Error::TooFewRows { needed: K, actual: n });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input"));
    }
    if cfg.batch_size == 0 || cfg.n_init == 0 {
        return Err(Error::invalid("batch_size and n_init must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<Vec<T>>, Vec<usize>, T)> = None;
    for _ in 0..cfg.n_init {
        let (c, counts) = run_once(&x, cfg, &mut rng);
        let score = inertia(&x, &c);
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((c, counts, score));
        }
    }
    let (centroids, counts, inertia) = best.expect("n_init > 0");
    Ok(KMeansModel {
        centroids,
        counts,
        inertia,
        batch_size: cfg.batch_size,
        max_iters: cfg.max_iters,
        seed: cfg.seed,
    })
}

/// Nearest-centroid assignment (centroid index = label).
pub fn mbk_predict<T: Scalar>(model: &KMeansModel<T>, x: ArrayView2<'_, T>) -> Result<BinaryAssignment> {
    let d = model.centroids[0].len();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.ncols(),
        });
    }
    let labels = (0..x.nrows())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| nearest(&contiguous(&x, i), &model.centroids).0 as u8)
        .collect();
    BinaryAssignment::new(labels, Algorithm::MiniBatchKMeans)
}

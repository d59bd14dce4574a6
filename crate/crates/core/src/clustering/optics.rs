//! OPTICS with exact pairwise distances, plus reduction of the reachability
//! ordering to a two-sided assignment.
//!
//! The core distance of a point is the distance to its `min_pts`-th nearest
//! neighbour counting the point itself. The next point expanded is the
//! unprocessed point with the smallest reachability, ties going to the lower
//! row index; when no unprocessed point is reachable the lowest-index
//! unprocessed row starts a new component.

use log::warn;
use ndarray::{ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Algorithm, BinaryAssignment};
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, total_cmp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OpticsResult<T> {
    /// Row indices in visit order.
    pub ordering: Vec<usize>,
    /// Reachability per row (infinite for component starts).
    pub reachability: Vec<T>,
    /// Core distance per row (infinite when fewer than `min_pts` points lie within `max_eps`).
    pub core_distance: Vec<T>,
    pub min_pts: usize,
    pub max_eps: T,
}

fn distances_from<T: Scalar>(flat: &[T], d: usize, p: usize, out: &mut [T]) {
    let pr = &flat[p * d..(p + 1) * d];
    let f = |(i, o): (usize, &mut T)| *o = squared_distance(pr, &flat[i * d..(i + 1) * d]).sqrt();
    if out.len() > 4096 {
        out.par_iter_mut().enumerate().with_min_len(1024).for_each(f);
    } else {
        out.iter_mut().enumerate().for_each(f);
    }
}

pub fn optics_run<T: Scalar>(x: ArrayView2<'_, T>, min_pts: usize, max_eps: T) -> Result<OpticsResult<T>> {
    let n = x.nrows();
    if min_pts < 2 {
        return Err(Error::invalid(format!("min_pts must be at least 2, got {min_pts}")));
    }
    if n < min_pts {
        return Err(Error::TooFewRows {
            needed: min_pts,
            actual: n,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("OPTICS input"));
    }
    let standard = x.as_standard_layout();
    let flat = standard.as_slice().expect("standard layout");
    let d = x.ncols();
    let inf = T::infinity();
    let mut reach = vec![inf; n];
    let mut core = vec![inf; n];
    let mut processed = vec![false; n];
    let mut ordering = Vec::with_capacity(n);
    let mut dist = vec![T::zero(); n];
    let mut scratch = Vec::with_capacity(n);
    let mut next_start = 0;

    while ordering.len() < n {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if !processed[i] && reach[i] < inf && pick.is_none_or(|p| reach[i] < reach[p]) {
                pick = Some(i);
            }
        }
        let p = match pick {
            Some(p) => p,
            None => {
                while processed[next_start] {
                    next_start += 1;
                }
                next_start
            }
        };
        processed[p] = true;
        ordering.push(p);

        distances_from(flat, d, p, &mut dist);
        scratch.clear();
        scratch.extend(dist.iter().copied().filter(|&d| d <= max_eps));
        if scratch.len() >= min_pts {
            let (_, kth, _) = scratch.select_nth_unstable_by(min_pts - 1, total_cmp);
            core[p] = *kth;
        }
        if core[p] < inf {
            for o in 0..n {
                if !processed[o] && dist[o] <= max_eps {
                    let r = core[p].max(dist[o]);
                    if r < reach[o] {
                        reach[o] = r;
                    }
                }
            }
        }
    }
    Ok(OpticsResult {
        ordering,
        reachability: reach,
        core_distance: core,
        min_pts,
        max_eps,
    })
}

/// How the reachability cutoff for cluster extraction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Cutoff {
    /// Fixed reachability threshold.
    Fixed { value: f64 },
    /// Percentile (0-100, linear interpolation) of the finite reachabilities.
    Percentile { p: f64 },
    /// Cut inside the widest multiplicative gap between consecutive sorted
    /// finite reachabilities at or above the `floor` percentile. When that gap
    /// ratio is below `min_contrast` the data is treated as one cluster.
    LargestGap { floor: f64, min_contrast: f64 },
}

impl Default for Cutoff {
    fn default() -> Self {
        Cutoff::LargestGap {
            floor: 90.0,
            min_contrast: 2.0,
        }
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summary of a cluster extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    /// `None` when no density structure was found.
    pub threshold: Option<f64>,
    /// Cluster id per row, -1 for noise.
    pub cluster: Vec<i64>,
    pub n_clusters: usize,
    pub largest: Option<i64>,
    pub noise: usize,
    pub warning: Option<String>,
}

fn resolve_threshold(finite: &mut [f64], cutoff: Cutoff) -> std::result::Result<f64, String> {
    if finite.is_empty() {
        return Err("all reachabilities are infinite; no density structure".into());
    }
    finite.sort_by(f64::total_cmp);
    match cutoff {
        Cutoff::Fixed { value } => Ok(value),
        Cutoff::Percentile { p } => Ok(percentile(finite, p)),
        Cutoff::LargestGap { floor, min_contrast } => {
            let start = finite.partition_point(|&r| r < percentile(finite, floor));
            let mut best: Option<(f64, f64)> = None;
            for w in finite[start..].windows(2) {
                let (a, b) = (w[0], w[1]);
                let ratio = if a > 0.0 {
                    b / a
                } else if b > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                };
                if best.is_none_or(|(r, _)| ratio > r) {
                    let cut = if a > 0.0 { (a * b).sqrt() } else { b / 2.0 };
                    best = Some((ratio, cut));
                }
            }
            match best {
                Some((ratio, cut)) if ratio >= min_contrast => Ok(cut),
                Some((ratio, _)) => Err(format!(
                    "largest reachability contrast {ratio:.3} below {min_contrast}; no density structure"
                )),
                None => Err("too few reachabilities to locate a gap; no density structure".into()),
            }
        }
    }
}

/// Extracts density clusters at a reachability cutoff and splits the rows into
/// the largest cluster (0) and everything else including noise (1).
pub fn optics_binarize<T: Scalar>(result: &OpticsResult<T>, cutoff: Cutoff) -> (BinaryAssignment, Extraction) {
    let n = result.ordering.len();
    let mut finite: Vec<f64> = result
        .reachability
        .iter()
        .filter(|r| r.is_finite())
        .map(|r| r.to_f64_lossy())
        .collect();
    let threshold = match resolve_threshold(&mut finite, cutoff) {
        Ok(t) => t,
        Err(msg) => {
            warn!("OPTICS: {msg}; all rows assigned to one side");
            let assignment = BinaryAssignment {
                labels: vec![0; n],
                source: Algorithm::Optics,
                aligned: false,
            };
            return (
                assignment,
                Extraction {
                    threshold: None,
                    cluster: vec![0; n],
                    n_clusters: 1,
                    largest: Some(0),
                    noise: 0,
                    warning: Some(msg),
                },
            );
        }
    };

    let mut cluster = vec![-1i64; n];
    let mut current = -1i64;
    let mut sizes: Vec<usize> = Vec::new();
    for &p in &result.ordering {
        let r = result.reachability[p].to_f64_lossy();
        if !r.is_finite() || r > threshold {
            if result.core_distance[p].to_f64_lossy() <= threshold {
                current += 1;
                sizes.push(1);
                cluster[p] = current;
            }
        } else if current >= 0 {
            cluster[p] = current;
            sizes[current as usize] += 1;
        }
    }
    let largest = (0..sizes.len())
        .max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .map(|c| c as i64);
    let labels = cluster
        .iter()
        .map(|&c| u8::from(Some(c) != largest || c < 0))
        .collect();
    let noise = cluster.iter().filter(|&&c| c < 0).count();
    (
        BinaryAssignment {
            labels,
            source: Algorithm::Optics,
            aligned: false,
        },
        Extraction {
            threshold: Some(threshold),
            cluster,
            n_clusters: sizes.len(),
            largest,
            noise,
            warning: None,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpticsConfig {
    pub min_pts: usize,
    /// Neighbourhood radius; unbounded when absent.
    pub max_eps: Option<f64>,
    pub cutoff: Cutoff,
    /// Run on a seeded sample of this many rows when the input is larger;
    /// held-out rows take the side of the nearer side centroid.
    pub subsample: Option<usize>,
    pub seed: u64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            min_pts: 5,
            max_eps: None,
            cutoff: Cutoff::default(),
            subsample: None,
            seed: 0,
        }
    }
}

/// Runs OPTICS (optionally on a subsample) and returns the unaligned two-sided assignment.
pub fn optics_label<T: Scalar>(x: ArrayView2<'_, T>, cfg: &OpticsConfig) -> Result<(BinaryAssignment, Extraction)> {
    let n = x.nrows();
    let eps = cfg.max_eps.map_or_else(T::infinity, T::of);
    let sample = match cfg.subsample {
        Some(m) if m < n => {
            let mut idx = index::sample(&mut ChaCha8Rng::seed_from_u64(cfg.seed), n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => {
            let res = optics_run(x, cfg.min_pts, eps)?;
            return Ok(optics_binarize(&res, cfg.cutoff));
        }
    };
    let xs = x.select(Axis(0), &sample);
    let res = optics_run(xs.view(), cfg.min_pts, eps)?;
    let (sub, extraction) = optics_binarize(&res, cfg.cutoff);

    let d = x.ncols();
    let mut sums = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut counts = [0usize; 2];
    for (r, &l) in xs.outer_iter().zip(&sub.labels) {
        counts[l as usize] += 1;
        for (s, v) in sums[l as usize].iter_mut().zip(r.iter()) {
            *s += v.to_f64_lossy();
        }
    }
    let cents: Vec<Option<Vec<T>>> = (0..2)
        .map(|s| (counts[s] > 0).then(|| sums[s].iter().map(|&v| T::of(v / counts[s] as f64)).collect()))
        .collect();
    let mut labels = vec![0u8; n];
    let mut in_sample = vec![None; n];
    for (k, &i) in sample.iter().enumerate() {
        in_sample[i] = Some(sub.labels[k]);
    }
    for (i, r) in x.outer_iter().enumerate() {
        labels[i] = match in_sample[i] {
            Some(l) => l,
            None => match (&cents[0], &cents[1]) {
                (Some(c0), Some(c1)) => {
                    let p = r.to_vec();
                    u8::from(squared_distance(&p, c1) < squared_distance(&p, c0))
                }
                (Some(_), None) => 0,
                _ => 1,
            },
        };
    }
    Ok((
        BinaryAssignment {
            labels,
            source: Algorithm::Optics,
            aligned: false,
        },
        extraction,
    ))
}

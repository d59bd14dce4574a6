//! Two-cluster fuzzy c-means.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Algorithm, BinaryAssignment};
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

const C: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcmConfig {
    /// Fuzzifier, must exceed 1.
    pub m: f64,
    /// Stop when no membership moves by more than this.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            m: 2.0,
            tol: 1e-5,
            max_iters: 300,
            seed: 0,
        }
    }
}

/// Centroid 1 is the malicious side: it lies farther from the global mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FcmModel<T> {
    pub centroids: Vec<Vec<T>>,
    pub m: f64,
    pub tol: f64,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every membership update, starting from the initial partition.
    pub objective: Vec<T>,
    /// Training memberships, one row per point (columns follow `centroids`).
    #[serde(skip)]
    pub membership: Array2<T>,
}

/// Memberships of every row against `centroids`. A point coinciding with
/// centroids shares membership equally among them.
pub fn fcm_memberships<T: Scalar>(x: ArrayView2<'_, T>, centroids: &[Vec<T>], m: f64) -> Array2<T> {
    let exp = T::of(1.0 / (m - 1.0));
    let mut u = Array2::<T>::zeros((x.nrows(), centroids.len()));
    let mut d2 = vec![T::zero(); centroids.len()];
    for (i, p) in x.outer_iter().enumerate() {
        let p = p.to_vec();
        for (c, cen) in centroids.iter().enumerate() {
            d2[c] = squared_distance(&p, cen);
        }
        let zeros = d2.iter().filter(|&&d| d == T::zero()).count();
        if zeros > 0 {
            let share = T::one() / T::of_usize(zeros);
            for c in 0..centroids.len() {
                u[[i, c]] = if d2[c] == T::zero() { share } else { T::zero() };
            }
            continue;
        }
        for c in 0..centroids.len() {
            let s: T = d2.iter().map(|&dk| (d2[c] / dk).powf(exp)).sum();
            u[[i, c]] = T::one() / s;
        }
    }
    u
}

/// `sum_ij u_ij^m * |x_i - c_j|^2`
pub fn fcm_objective<T: Scalar>(x: ArrayView2<'_, T>, u: &Array2<T>, centroids: &[Vec<T>], m: f64) -> T {
    let mm = T::of(m);
    let mut j = T::zero();
    for (i, p) in x.outer_iter().enumerate() {
        let p = p.to_vec();
        for (c, cen) in centroids.iter().enumerate() {
            j += u[[i, c]].powf(mm) * squared_distance(&p, cen);
        }
    }
    j
}

fn centroids_from<T: Scalar>(x: ArrayView2<'_, T>, u: &Array2<T>, m: f64) -> Vec<Vec<T>> {
    let mm = T::of(m);
    let w = u.mapv(|v| v.powf(mm));
    (0..C)
        .map(|c| {
            let wc = w.column(c);
            let total = wc.sum();
            if total > T::zero() {
                (x.t().dot(&wc) / total).to_vec()
            } else {
                vec![T::zero(); x.ncols()]
            }
        })
        .collect()
}

pub fn fcm_fit<T: Scalar>(x: ArrayView2<'_, T>, cfg: &FcmConfig) -> Result<FcmModel<T>> {
    if !(cfg.m > 1.0) {
        return Err(Error::invalid(format!("fuzzifier must exceed 1, got {}", cfg.m)));
    }
    if x.nrows() < C {
        return Err(Error::TooFewRows {
            needed: C,
            actual: x.nrows(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fuzzy c-means input"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = Array2::<T>::zeros((x.nrows(), C));
    for mut r in u.outer_iter_mut() {
        let a: f64 = rng.random_range(0.0..1.0);
        r[0] = T::of(a);
        r[1] = T::one() - T::of(a);
    }
    let mut centroids = centroids_from(x, &u, cfg.m);
    let mut objective = vec![fcm_objective(x, &u, &centroids, cfg.m)];
    let tol = T::of(cfg.tol);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let next = fcm_memberships(x, &centroids, cfg.m);
        let shift = (&next - &u).iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        u = next;
        objective.push(fcm_objective(x, &u, &centroids, cfg.m));
        if shift < tol {
            converged = true;
            break;
        }
        centroids = centroids_from(x, &u, cfg.m);
    }

    // orient: centroid farther from the global mean becomes index 1
    let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    if squared_distance(&centroids[0], &mean) > squared_distance(&centroids[1], &mean) {
        centroids.swap(0, 1);
        for mut r in u.outer_iter_mut() {
            r.swap(0, 1);
        }
    }
    Ok(FcmModel {
        centroids,
        m: cfg.m,
        tol: cfg.tol,
        seed: cfg.seed,
        iterations,
        converged,
        objective,
        membership: u,
    })
}

/// Argmax-membership labels (ties go to 0) and the membership matrix.
pub fn fcm_predict<T: Scalar>(model: &FcmModel<T>, x: ArrayView2<'_, T>) -> Result<(BinaryAssignment, Array2<T>)> {
    let d = model.centroids[0].len();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.ncols(),
        });
    }
    let u = fcm_memberships(x, &model.centroids, model.m);
    let labels = u.outer_iter().map(|r| u8::from(r[1] > r[0])).collect();
    let mut a = BinaryAssignment::new(labels, Algorithm::FuzzyCMeans)?;
    a.aligned = true;
    Ok((a, u))
}

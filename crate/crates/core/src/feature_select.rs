//! Label-driven feature selection: the union of features whose absolute
//! Pearson correlation with the label exceeds a threshold and features kept by
//! an L1-penalized least-squares fit whose penalty is chosen by k-fold CV.
//!
//! The LASSO objective is the unnormalized form
//! `sum_i (y_i - b - x_i . beta)^2 + alpha * sum_j |beta_j|`, so the
//! soft-threshold constant in each coordinate update is `alpha / 2`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pearson correlation with population moments; 0 when either side has zero variance.
pub fn pearson_cof<T: Scalar>(x: ArrayView1<'_, T>, labels: ArrayView1<'_, T>) -> Result<T> {
    if x.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: labels.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            actual: x.len(),
        });
    }
    let n = T::of_usize(x.len());
    let mx = x.sum() / n;
    let ml = labels.sum() / n;
    let (mut cov, mut vx, mut vl) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(labels.iter()) {
        let (da, db) = (a - mx, b - ml);
        cov += da * db;
        vx += da * da;
        vl += db * db;
    }
    if vx <= T::zero() || vl <= T::zero() {
        return Ok(T::zero());
    }
    let r = cov / (vx * vl).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

fn label_vector<T: Scalar>(labels: &[u8]) -> ndarray::Array1<T> {
    labels.iter().map(|&l| T::of_usize(l as usize)).collect()
}

/// Correlation of every column with the label.
pub fn correlation_scores<T: Scalar>(x: ArrayView2<'_, T>, labels: &[u8]) -> Result<Vec<T>> {
    let l = label_vector::<T>(labels);
    (0..x.ncols())
        .into_par_iter()
        .map(|j| pearson_cof(x.column(j), l.view()))
        .collect()
}

/// Indices with `|cof| > delta` (strict).
pub fn select_by_correlation<T: Scalar>(scores: &[T], delta: T) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > delta)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// Stop when the largest coefficient change in a sweep is below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Fit an unpenalized intercept (centers the data).
    pub fit_intercept: bool,
    /// Coefficients with smaller magnitude count as zero when selecting.
    pub zero_tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 1000,
            fit_intercept: true,
            zero_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LassoFit<T> {
    pub coefficients: Vec<T>,
    pub intercept: T,
    pub alpha: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Sufficient statistics of a row subset, taken about a fixed shift.
#[derive(Debug, Clone)]
struct Moments<T> {
    n: usize,
    sx: Vec<T>,
    sy: T,
    sxx: Array2<T>,
    sxy: Vec<T>,
    syy: T,
}

impl<T: Scalar> Moments<T> {
    fn of(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Self {
        Self {
            n: x.nrows(),
            sx: x.sum_axis(Axis(0)).to_vec(),
            sy: y.sum(),
            sxx: x.t().dot(&x),
            sxy: x.t().dot(&y).to_vec(),
            syy: y.dot(&y),
        }
    }

    fn minus(&self, other: &Self) -> Self {
        Self {
            n: self.n - other.n,
            sx: self.sx.iter().zip(&other.sx).map(|(&a, &b)| a - b).collect(),
            sy: self.sy - other.sy,
            sxx: &self.sxx - &other.sxx,
            sxy: self.sxy.iter().zip(&other.sxy).map(|(&a, &b)| a - b).collect(),
            syy: self.syy - other.syy,
        }
    }

    /// Gram matrix and correlation vector of the (optionally centered) problem,
    /// with the subset means.
    fn system(&self, fit_intercept: bool) -> (Array2<T>, Vec<T>, Vec<T>, T) {
        let d = self.sx.len();
        if !fit_intercept || self.n == 0 {
            return (self.sxx.clone(), self.sxy.clone(), vec![T::zero(); d], T::zero());
        }
        let n = T::of_usize(self.n);
        let mx: Vec<T> = self.sx.iter().map(|&s| s / n).collect();
        let my = self.sy / n;
        let mut gram = self.sxx.clone();
        for i in 0..d {
            for j in 0..d {
                gram[[i, j]] -= n * mx[i] * mx[j];
            }
        }
        let c = (0..d).map(|j| self.sxy[j] - n * mx[j] * my).collect();
        (gram, c, mx, my)
    }

    /// Residual sum of squares of `b + x . beta` over the subset.
    fn sse(&self, beta: &[T], b: T) -> T {
        let d = beta.len();
        let n = T::of_usize(self.n);
        let mut quad = T::zero();
        for i in 0..d {
            if beta[i] == T::zero() {
                continue;
            }
            let mut row = T::zero();
            for j in 0..d {
                row += self.sxx[[i, j]] * beta[j];
            }
            quad += beta[i] * row;
        }
        let bx: T = beta.iter().zip(&self.sx).map(|(&w, &s)| w * s).sum();
        let bxy: T = beta.iter().zip(&self.sxy).map(|(&w, &s)| w * s).sum();
        let v = self.syy - T::two() * b * self.sy - T::two() * bxy + n * b * b + T::two() * b * bx + quad;
        v.max(T::zero())
    }
}

fn soft_threshold<T: Scalar>(z: T, gamma: T) -> T {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        T::zero()
    }
}

/// Cyclic coordinate descent on `beta' G beta - 2 c' beta + alpha |beta|_1`.
fn coordinate_descent<T: Scalar>(
    gram: &Array2<T>,
    c: &[T],
    alpha: T,
    warm: Option<&[T]>,
    cfg: &LassoConfig,
) -> (Vec<T>, usize, bool) {
    let d = c.len();
    let mut beta = warm.map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); d]);
    let gamma = alpha * T::half();
    let tol = T::of(cfg.tol);
    // g[j] = (G beta)_j, kept current as coefficients move
    let mut g: Vec<T> = (0..d)
        .map(|j| (0..d).map(|k| gram[[j, k]] * beta[k]).sum())
        .collect();
    let mut sweeps = 0;
    let mut converged = d == 0;
    while sweeps < cfg.max_sweeps && !converged {
        sweeps += 1;
        let mut max_delta = T::zero();
        for j in 0..d {
            let gjj = gram[[j, j]];
            let new = if gjj > T::zero() {
                let rho = c[j] - (g[j] - gjj * beta[j]);
                soft_threshold(rho, gamma) / gjj
            } else {
                T::zero()
            };
            let delta = new - beta[j];
            if delta != T::zero() {
                for k in 0..d {
                    g[k] += gram[[k, j]] * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        converged = max_delta < tol;
    }
    (beta, sweeps, converged)
}

fn check_finite<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>) -> Result<()> {
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input"));
    }
    Ok(())
}

fn shift_of<T: Scalar>(x: ArrayView2<'_, T>, y: ArrayView1<'_, T>, fit_intercept: bool) -> (ndarray::Array1<T>, T) {
    if fit_intercept && x.nrows() > 0 {
        (x.mean_axis(Axis(0)).unwrap(), y.mean().unwrap())
    } else {
        (ndarray::Array1::zeros(x.ncols()), T::zero())
    }
}

/// Fits the penalized regression of `y` on the columns of `x`.
pub fn lasso_fit<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    alpha: T,
    cfg: &LassoConfig,
) -> Result<LassoFit<T>> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if !(alpha >= T::zero()) {
        return Err(Error::invalid(format!("alpha must be nonnegative, got {alpha}")));
    }
    check_finite(x, y)?;
    let (sx, sy) = shift_of(x, y, cfg.fit_intercept);
    let xs = &x - &sx;
    let ys = y.mapv(|v| v - sy);
    let m = Moments::of(xs.view(), ys.view());
    let (gram, c, mx, my) = m.system(cfg.fit_intercept);
    let (beta, iterations, converged) = coordinate_descent(&gram, &c, alpha, None, cfg);
    let intercept = if cfg.fit_intercept {
        let b = my - beta.iter().zip(&mx).map(|(&w, &m)| w * m).sum::<T>();
        b + sy - beta.iter().zip(sx.iter()).map(|(&w, &s)| w * s).sum::<T>()
    } else {
        T::zero()
    };
    Ok(LassoFit {
        coefficients: beta,
        intercept,
        alpha,
        iterations,
        converged,
    })
}

/// Indices whose coefficient magnitude is at least `zero_tol`.
pub fn select_by_lasso<T: Scalar>(fit: &LassoFit<T>, zero_tol: f64) -> Vec<usize> {
    let tol = T::of(zero_tol);
    fit.coefficients
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() >= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Evenly spaced penalty values `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            start: 0.1,
            stop: 8.0,
            step: 0.01,
        }
    }
}

impl AlphaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || self.start < 0.0 {
            return Err(Error::invalid(format!("bad alpha grid {self:?}")));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub alphas: Vec<f64>,
    pub mean_loss: Vec<f64>,
    pub best_alpha: f64,
    pub best_loss: f64,
    pub folds: usize,
}

/// Seeded k-fold assignment: fold id per row.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &row) in idx.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

/// Mean held-out squared error for every penalty in `alphas`; the minimizer
/// wins, ties going to the larger penalty.
pub fn cross_validate_alpha<T: Scalar>(
    x: ArrayView2<'_, T>,
    y: ArrayView1<'_, T>,
    alphas: &[f64],
    k: usize,
    seed: u64,
    cfg: &LassoConfig,
) -> Result<CvResult> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::TooFewRows { needed: k, actual: n });
    }
    if alphas.is_empty() {
        return Err(Error::invalid("empty alpha grid"));
    }
    check_finite(x, y)?;
    let (sx, sy) = shift_of(x, y, cfg.fit_intercept);
    let xs = &x - &sx;
    let ys = y.mapv(|v| v - sy);
    let fold = fold_assignment(n, k, seed);

    let fold_moments: Vec<Moments<T>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let rows: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let xf = xs.select(Axis(0), &rows);
            let yf = ys.select(Axis(0), &rows);
            Moments::of(xf.view(), yf.view())
        })
        .collect();
    let total = fold_moments.iter().skip(1).fold(fold_moments[0].clone(), |mut acc, m| {
        acc.n += m.n;
        acc.sx.iter_mut().zip(&m.sx).for_each(|(a, &b)| *a += b);
        acc.sy += m.sy;
        acc.sxx += &m.sxx;
        acc.sxy.iter_mut().zip(&m.sxy).for_each(|(a, &b)| *a += b);
        acc.syy += m.syy;
        acc
    });

    // descending order so each fit warm-starts from a sparser neighbour
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));

    let per_fold: Vec<Vec<f64>> = fold_moments
        .par_iter()
        .map(|test| {
            let train = total.minus(test);
            let (gram, c, mx, my) = train.system(cfg.fit_intercept);
            let mut losses = vec![0.0; alphas.len()];
            let mut warm: Option<Vec<T>> = None;
            for &ai in &order {
                let (beta, _, _) = coordinate_descent(&gram, &c, T::of(alphas[ai]), warm.as_deref(), cfg);
                let b = if cfg.fit_intercept {
                    my - beta.iter().zip(&mx).map(|(&w, &m)| w * m).sum::<T>()
                } else {
                    T::zero()
                };
                losses[ai] = test.sse(&beta, b).to_f64_lossy() / test.n.max(1) as f64;
                warm = Some(beta);
            }
            losses
        })
        .collect();

    let mean_loss: Vec<f64> = (0..alphas.len())
        .map(|ai| per_fold.iter().map(|l| l[ai]).sum::<f64>() / k as f64)
        .collect();
    let mut best = 0;
    for ai in 1..alphas.len() {
        let better = mean_loss[ai] < mean_loss[best]
            || (mean_loss[ai] == mean_loss[best] && alphas[ai] > alphas[best]);
        if better {
            best = ai;
        }
    }
    Ok(CvResult {
        alphas: alphas.to_vec(),
        best_alpha: alphas[best],
        best_loss: mean_loss[best],
        mean_loss,
        folds: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Correlation,
    Lasso,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeature {
    pub index: usize,
    pub name: String,
    pub provenance: Provenance,
    pub cof: f64,
    pub beta: f64,
}

/// Result of feature selection, persisted for the labeling and training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Vec<SelectedFeature>,
    pub total_features: usize,
    pub delta: f64,
    pub alpha: f64,
    pub frr: f64,
    /// Correlation and coefficient for every candidate, by column index.
    pub cof: Vec<f64>,
    pub beta: Vec<f64>,
    pub cv_best_loss: Option<f64>,
}

impl FeatureSet {
    pub fn indices(&self) -> Vec<usize> {
        self.features.iter().map(|f| f.index).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Union of two index sets with per-index provenance, sorted by index.
pub fn union_with_provenance(sf1: &[usize], sf2: &[usize]) -> Vec<(usize, Provenance)> {
    let mut all: Vec<usize> = sf1.iter().chain(sf2).copied().collect();
    all.sort_unstable();
    all.dedup();
    all.into_iter()
        .map(|i| {
            let p = match (sf1.contains(&i), sf2.contains(&i)) {
                (true, true) => Provenance::Both,
                (true, false) => Provenance::Correlation,
                _ => Provenance::Lasso,
            };
            (i, p)
        })
        .collect()
}

/// `1 - selected / total`.
pub fn feature_reduction_rate(selected: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::invalid("total feature count is zero"));
    }
    if selected > total {
        return Err(Error::invalid(format!("{selected} selected of {total} features")));
    }
    Ok(1.0 - selected as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub delta: f64,
    pub alpha_grid: AlphaGrid,
    /// Skip cross-validation and use this penalty.
    pub alpha: Option<f64>,
    pub folds: usize,
    pub seed: u64,
    pub lasso: LassoConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            delta: 0.4,
            alpha_grid: AlphaGrid::default(),
            alpha: None,
            folds: 10,
            seed: 0,
            lasso: LassoConfig::default(),
        }
    }
}

/// Runs correlation and LASSO selection on a labeled matrix and returns their union.
pub fn select_features<T: Scalar>(x: &FeatureMatrix<T>, cfg: &SelectionConfig) -> Result<FeatureSet> {
    let labels = x
        .labels
        .as_deref()
        .ok_or_else(|| Error::LabelsRequired("feature selection needs class labels".into()))?;
    if !(0.0..=1.0).contains(&cfg.delta) {
        return Err(Error::invalid(format!("delta must lie in [0, 1], got {}", cfg.delta)));
    }
    let cof = correlation_scores(x.data.view(), labels)?;
    let sf1 = select_by_correlation(&cof, T::of(cfg.delta));

    let y = label_vector::<T>(labels);
    let (alpha, cv_best_loss) = match cfg.alpha {
        Some(a) => (a, None),
        None => {
            let cv = cross_validate_alpha(
                x.data.view(),
                y.view(),
                &cfg.alpha_grid.values()?,
                cfg.folds,
                cfg.seed,
                &cfg.lasso,
            )?;
            (cv.best_alpha, Some(cv.best_loss))
        }
    };
    let fit = lasso_fit(x.data.view(), y.view(), T::of(alpha), &cfg.lasso)?;
    let sf2 = select_by_lasso(&fit, cfg.lasso.zero_tol);

    let features: Vec<SelectedFeature> = union_with_provenance(&sf1, &sf2)
        .into_iter()
        .map(|(i, provenance)| SelectedFeature {
            index: i,
            name: x.names[i].clone(),
            provenance,
            cof: cof[i].to_f64_lossy(),
            beta: fit.coefficients[i].to_f64_lossy(),
        })
        .collect();
    Ok(FeatureSet {
        frr: feature_reduction_rate(features.len(), x.n_cols())?,
        features,
        total_features: x.n_cols(),
        delta: cfg.delta,
        alpha,
        cof: cof.iter().map(|c| c.to_f64_lossy()).collect(),
        beta: fit.coefficients.iter().map(|b| b.to_f64_lossy()).collect(),
        cv_best_loss,
    })
}

//! Weighted voting over the three clusterers' aligned assignments.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    align_polarity, fcm_fit, fcm_predict, mbk_fit, mbk_predict, optics_label, Algorithm, BinaryAssignment,
    Extraction, FcmConfig, FcmModel, KMeansConfig, KMeansModel, OpticsConfig,
};
use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::feature_select::FeatureSet;
use crate::scalar::Scalar;

const WEIGHT_TOL: f64 = 1e-12;

/// Vote weights for mini-batch k-means, OPTICS and fuzzy c-means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteWeights {
    pub kmeans: f64,
    pub optics: f64,
    pub fcm: f64,
}

impl Default for VoteWeights {
    fn default() -> Self {
        Self {
            kmeans: 0.25,
            optics: 0.25,
            fcm: 0.5,
        }
    }
}

impl VoteWeights {
    pub fn new(kmeans: f64, optics: f64, fcm: f64) -> Result<Self> {
        let w = Self { kmeans, optics, fcm };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.kmeans, self.optics, self.fcm];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("vote weights must be nonnegative: {ws:?}")));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("vote weights sum to {sum}, expected 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.kmeans, self.optics, self.fcm]
    }
}

/// `V = P1 W1 + P2 W2 + P3 W3` with votes ordered (k-means, OPTICS, FCM).
pub fn weighted_vote(votes: [u8; 3], w: &VoteWeights) -> Result<f64> {
    w.validate()?;
    if let Some(v) = votes.iter().find(|&&v| v > 1) {
        return Err(Error::NonBinary(v.to_string()));
    }
    Ok(votes
        .iter()
        .zip(w.as_array())
        .map(|(&p, w)| f64::from(p) * w)
        .sum())
}

/// 1 iff `v > 0.5`.
pub fn threshold_label(v: f64) -> Result<u8> {
    if !(-WEIGHT_TOL..=1.0 + WEIGHT_TOL).contains(&v) {
        return Err(Error::invalid(format!("vote score {v} outside [0, 1]")));
    }
    Ok(u8::from(v > 0.5))
}

/// Per-row vote scores and labels from three aligned assignments
/// ordered (k-means, OPTICS, FCM).
pub fn combine_votes(assignments: [&BinaryAssignment; 3], w: &VoteWeights) -> Result<(Vec<f64>, Vec<u8>)> {
    w.validate()?;
    let n = assignments[0].len();
    for a in assignments {
        if a.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: a.len(),
            });
        }
        if !a.aligned {
            return Err(Error::Unaligned(a.source.to_string()));
        }
    }
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v = weighted_vote(
            [assignments[0].labels[i], assignments[1].labels[i], assignments[2].labels[i]],
            w,
        )?;
        scores.push(v);
        labels.push(threshold_label(v)?);
    }
    Ok((scores, labels))
}

/// Feature rows paired with ensemble labels, the raw vote score and each
/// algorithm's aligned vote.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    /// Selected features; `labels` holds the voted labels.
    pub features: FeatureMatrix<T>,
    pub scores: Vec<f64>,
    pub kmeans: Vec<u8>,
    pub optics: Vec<u8>,
    pub fcm: Vec<u8>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn labels(&self) -> &[u8] {
        self.features.labels.as_deref().unwrap_or(&[])
    }

    pub fn summary(&self) -> LabelSummary {
        let labels = self.labels();
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let mut histogram = vec![0usize; 10];
        for &s in &self.scores {
            histogram[((s * 10.0).floor() as usize).min(9)] += 1;
        }
        let votes = [&self.kmeans, &self.optics, &self.fcm];
        let n = labels.len().max(1) as f64;
        let agreement = votes
            .iter()
            .map(|a| {
                votes
                    .iter()
                    .map(|b| a.iter().zip(b.iter()).filter(|(x, y)| x == y).count() as f64 / n)
                    .collect()
            })
            .collect();
        LabelSummary {
            rows: labels.len(),
            malicious: positives,
            benign: labels.len() - positives,
            score_histogram: histogram,
            algorithms: vec![Algorithm::MiniBatchKMeans, Algorithm::Optics, Algorithm::FuzzyCMeans],
            agreement,
            malicious_votes: votes.iter().map(|v| v.iter().filter(|&&l| l == 1).count()).collect(),
        }
    }

    /// Per-row audit table: `kmeans,optics,fcm,score,label`.
    pub fn write_votes_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kmeans", "optics", "fcm", "score", "label"])?;
        for i in 0..self.scores.len() {
            w.write_record([
                self.kmeans[i].to_string(),
                self.optics[i].to_string(),
                self.fcm[i].to_string(),
                self.scores[i].to_string(),
                self.labels()[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub rows: usize,
    pub malicious: usize,
    pub benign: usize,
    /// Vote scores in ten equal bins over [0, 1].
    pub score_histogram: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// Fraction of rows on which each pair of algorithms agrees.
    pub agreement: Vec<Vec<f64>>,
    pub malicious_votes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EnsembleConfig {
    pub weights: VoteWeights,
    pub kmeans: KMeansConfig,
    pub fcm: FcmConfig,
    pub optics: OpticsConfig,
}

/// Everything produced by one labeling run.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome<T> {
    pub dataset: LabeledDataset<T>,
    pub kmeans_model: KMeansModel<T>,
    pub fcm_model: FcmModel<T>,
    pub optics: Extraction,
    /// Wall-clock seconds for (k-means, OPTICS, FCM).
    pub seconds: [f64; 3],
}

/// Projects `data` onto the feature set (all columns when `None`), runs the
/// three clusterers concurrently, aligns their polarity to FCM and votes.
///
/// With `reference` labels, FCM's polarity follows them instead of the
/// distance-from-mean rule.
pub fn label_dataset<T: Scalar>(
    data: &FeatureMatrix<T>,
    features: Option<&FeatureSet>,
    cfg: &EnsembleConfig,
    reference: Option<&[u8]>,
) -> Result<EnsembleOutcome<T>> {
    cfg.weights.validate()?;
    let x = match features {
        Some(fs) => {
            if fs.is_empty() {
                return Err(Error::invalid("feature set is empty"));
            }
            data.select_named(&fs.names())?
        }
        None => data.clone(),
    };
    if let Some(r) = reference {
        if r.len() != x.n_rows() {
            return Err(Error::LengthMismatch {
                expected: x.n_rows(),
                actual: r.len(),
            });
        }
    }
    let view = x.data.view();
    let (km, op, fc) = std::thread::scope(|s| {
        let km = s.spawn(|| {
            let t = Instant::now();
            let model = mbk_fit(view, &cfg.kmeans)?;
            let a = mbk_predict(&model, view)?;
            Ok::<_, Error>((model, a, t.elapsed().as_secs_f64()))
        });
        let op = s.spawn(|| {
            let t = Instant::now();
            let (a, e) = optics_label(view, &cfg.optics)?;
            Ok::<_, Error>((a, e, t.elapsed().as_secs_f64()))
        });
        let fc = s.spawn(|| {
            let t = Instant::now();
            let model = fcm_fit(view, &cfg.fcm)?;
            let (a, _) = fcm_predict(&model, view)?;
            Ok::<_, Error>((model, a, t.elapsed().as_secs_f64()))
        });
        (
            km.join().expect("k-means thread panicked"),
            op.join().expect("OPTICS thread panicked"),
            fc.join().expect("FCM thread panicked"),
        )
    });
    let (kmeans_model, km_raw, km_s) = km?;
    let (op_raw, extraction, op_s) = op?;
    let (fcm_model, mut fcm_a, fc_s) = fc?;

    if let Some(r) = reference {
        fcm_a = align_polarity(&fcm_a, r)?;
    }
    let km_a = align_polarity(&km_raw, &fcm_a.labels)?;
    let op_a = align_polarity(&op_raw, &fcm_a.labels)?;
    let (scores, labels) = combine_votes([&km_a, &op_a, &fcm_a], &cfg.weights)?;
    info!(
        "ensemble labeled {} rows, {} malicious",
        labels.len(),
        labels.iter().filter(|&&l| l == 1).count()
    );

    let mut features = x;
    features.labels = Some(labels);
    Ok(EnsembleOutcome {
        dataset: LabeledDataset {
            features,
            scores,
            kmeans: km_a.labels,
            optics: op_a.labels,
            fcm: fcm_a.labels,
        },
        kmeans_model,
        fcm_model,
        optics: extraction,
        seconds: [km_s, op_s, fc_s],
    })
}

//! Confusion-matrix metrics, external clustering indices and ROC/PR curves.
//! Positive class is 1 (malicious).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::check_binary;
use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub const fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Swaps the roles of the two classes.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fp, self.fn_, self.tp)
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    check_binary(y_true)?;
    check_binary(y_pred)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (1, _) => cm.fn_ += 1,
            (_, 1) => cm.fp += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassificationReport<T> {
    pub accuracy: T,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub far: T,
    pub specificity: T,
    pub mcc: T,
    /// Metrics whose denominator was zero and were reported as 0.
    pub degenerate: Vec<String>,
}

pub fn classification_report<T: Scalar>(cm: &ConfusionMatrix) -> Result<ClassificationReport<T>> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let f = |v: u64| T::of(v as f64);
    let (tp, fn_, fp, tn) = (f(cm.tp), f(cm.fn_), f(cm.fp), f(cm.tn));
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: T, den: T| {
        if den == T::zero() {
            degenerate.push(name.to_string());
            T::zero()
        } else {
            num / den
        }
    };
    let accuracy = ratio("accuracy", tp + tn, tp + fn_ + fp + tn);
    let precision = ratio("precision", tp, tp + fp);
    let recall = ratio("recall", tp, tp + fn_);
    let f1 = ratio("f1", T::two() * tp, T::two() * tp + fp + fn_);
    let far = ratio("far", fp, tn + fp);
    let specificity = ratio("specificity", tn, tn + fp);
    let den = ((tp + fn_) * (tp + fp) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio("mcc", tp * tn - fp * fn_, den);
    Ok(ClassificationReport {
        accuracy,
        precision,
        recall,
        f1,
        far,
        specificity,
        mcc,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusteringReport<T> {
    pub homogeneity: T,
    pub completeness: T,
    pub v_measure: T,
    pub ari: T,
    pub ami: T,
}

struct Contingency {
    n: usize,
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Contingency {
    fn new(a: &[u8], b: &[u8]) -> Self {
        let ids = |v: &[u8]| -> BTreeMap<u8, usize> {
            let mut m = BTreeMap::new();
            for &x in v {
                let k = m.len();
                m.entry(x).or_insert(k);
            }
            m
        };
        let (ia, ib) = (ids(a), ids(b));
        let mut table = vec![vec![0usize; ib.len()]; ia.len()];
        for (x, y) in a.iter().zip(b) {
            table[ia[x]][ib[y]] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..ib.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Self {
            n: a.len(),
            table,
            rows,
            cols,
        }
    }

    fn entropy(counts: &[usize], n: usize) -> f64 {
        let n = n as f64;
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, r) in self.table.iter().enumerate() {
            for (j, &nij) in r.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// Expected mutual information under the permutation (hypergeometric) model.
    fn expected_mutual_information(&self) -> f64 {
        let n = self.n;
        let mut lnfact = vec![0.0f64; n + 1];
        for k in 1..=n {
            lnfact[k] = lnfact[k - 1] + (k as f64).ln();
        }
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                let fixed = lnfact[a] + lnfact[b] + lnfact[n - a] + lnfact[n - b] - lnfact[n];
                for nij in lo..=hi {
                    let term = nij as f64 / nf * (nf * nij as f64 / (a as f64 * b as f64)).ln();
                    let lp = fixed - lnfact[nij] - lnfact[a - nij] - lnfact[b - nij] - lnfact[n + nij - a - b];
                    emi += term * lp.exp();
                }
            }
        }
        emi
    }

    /// Pair-counting adjusted Rand index.
    fn ari(&self) -> f64 {
        let c2 = |v: usize| (v as f64) * (v as f64 - 1.0) / 2.0;
        let index: f64 = self.table.iter().flatten().map(|&v| c2(v)).sum();
        let a: f64 = self.rows.iter().map(|&v| c2(v)).sum();
        let b: f64 = self.cols.iter().map(|&v| c2(v)).sum();
        let total = c2(self.n);
        let expected = if total > 0.0 { a * b / total } else { 0.0 };
        let max = (a + b) / 2.0;
        if max == expected {
            1.0
        } else {
            (index - expected) / (max - expected)
        }
    }
}

/// Homogeneity, completeness and V-measure (natural-log entropies), ARI, and
/// AMI normalized by the arithmetic mean of the two entropies.
pub fn clustering_report<T: Scalar>(y_true: &[u8], y_pred: &[u8]) -> Result<ClusteringReport<T>> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ct = Contingency::new(y_true, y_pred);
    let h_true = Contingency::entropy(&ct.rows, ct.n);
    let h_pred = Contingency::entropy(&ct.cols, ct.n);
    let mi = ct.mutual_information();
    // H(true | pred) = H(true) - MI and H(pred | true) = H(pred) - MI
    let homogeneity = if h_true == 0.0 { 1.0 } else { 1.0 - (h_true - mi) / h_true };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - (h_pred - mi) / h_pred };
    let v_measure = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    let ami = if ct.rows.len() == 1 && ct.cols.len() == 1 {
        1.0
    } else {
        let emi = ct.expected_mutual_information();
        let mut den = (h_true + h_pred) / 2.0 - emi;
        den = if den < 0.0 {
            den.min(-f64::EPSILON)
        } else {
            den.max(f64::EPSILON)
        };
        (mi - emi) / den
    };
    Ok(ClusteringReport {
        homogeneity: T::of(homogeneity.clamp(0.0, 1.0)),
        completeness: T::of(completeness.clamp(0.0, 1.0)),
        v_measure: T::of(v_measure.clamp(0.0, 1.0)),
        ari: T::of(ct.ari()),
        ami: T::of(ami),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// Curve points: (FPR, TPR) for ROC, (recall, precision) for PR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveData {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    /// Score threshold that produced each point after the first.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

impl CurveData {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match self.kind {
            CurveKind::Roc => w.write_record(["fpr", "tpr"])?,
            CurveKind::Pr => w.write_record(["recall", "precision"])?,
        }
        for &(x, y) in &self.points {
            w.write_record([x.to_string(), y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Trapezoidal area under a polyline.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>()
        .abs()
}

/// Cumulative (tp, fp) after each distinct score, scores descending.
fn sweep<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<(Vec<(u64, u64)>, Vec<f64>, u64, u64)> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            expected: y_true.len(),
            actual: scores.len(),
        });
    }
    check_binary(y_true)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| total_cmp(&scores[b], &scores[a]));
    let pos = y_true.iter().filter(|&&v| v == 1).count() as u64;
    let neg = y_true.len() as u64 - pos;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut steps = Vec::new();
    let mut thresholds = Vec::new();
    for (k, &i) in idx.iter().enumerate() {
        if y_true[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = k + 1 == idx.len() || scores[idx[k + 1]] != scores[i];
        if last_of_group {
            steps.push((tp, fp));
            thresholds.push(scores[i].to_f64_lossy());
        }
    }
    Ok((steps, thresholds, pos, neg))
}

pub fn roc_curve<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<CurveData> {
    let (steps, thresholds, pos, neg) = sweep(y_true, scores)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both positive and negative samples"));
    }
    let mut points = vec![(0.0, 0.0)];
    points.extend(steps.iter().map(|&(tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)));
    Ok(CurveData {
        kind: CurveKind::Roc,
        auc: auc(&points),
        points,
        thresholds,
    })
}

pub fn pr_curve<T: Scalar>(y_true: &[u8], scores: &[T]) -> Result<CurveData> {
    let (steps, thresholds, pos, _) = sweep(y_true, scores)?;
    if pos == 0 {
        return Err(Error::invalid("PR curve needs at least one positive sample"));
    }
    let mut points = vec![(0.0, 1.0)];
    points.extend(
        steps
            .iter()
            .map(|&(tp, fp)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64)),
    );
    Ok(CurveData {
        kind: CurveKind::Pr,
        auc: auc(&points),
        points,
        thresholds,
    })
}

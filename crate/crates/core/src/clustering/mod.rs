//! The three base learners of the labeling ensemble. Each reduces its output
//! to a per-row 0/1 assignment; [`align_polarity`] then maps the anonymous
//! cluster ids onto benign (0) / malicious (1).

mod fcm;
mod kmeans;
mod optics;

pub use fcm::{fcm_fit, fcm_memberships, fcm_objective, fcm_predict, FcmConfig, FcmModel};
pub use kmeans::{mbk_fit, mbk_predict, KMeansConfig, KMeansModel};
pub use optics::{
    optics_binarize, optics_label, optics_run, Cutoff, Extraction, OpticsConfig, OpticsResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MiniBatchKMeans,
    Optics,
    FuzzyCMeans,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::MiniBatchKMeans => "mini-batch-kmeans",
            Algorithm::Optics => "optics",
            Algorithm::FuzzyCMeans => "fuzzy-cmeans",
        })
    }
}

/// Per-row binary output of one clusterer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    pub labels: Vec<u8>,
    pub source: Algorithm,
    /// Whether 1 has been mapped to the malicious side.
    pub aligned: bool,
}

impl BinaryAssignment {
    pub fn new(labels: Vec<u8>, source: Algorithm) -> Result<Self> {
        crate::dataset::check_binary(&labels)?;
        Ok(Self {
            labels,
            source,
            aligned: false,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self {
            labels: self.labels.iter().map(|&l| 1 - l).collect(),
            ..self.clone()
        }
    }
}

/// Returns `assignment` or its complement, whichever agrees with `reference`
/// on more rows (ties keep the original). The result is marked aligned.
pub fn align_polarity(assignment: &BinaryAssignment, reference: &[u8]) -> Result<BinaryAssignment> {
    if assignment.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: assignment.len(),
        });
    }
    let agree = assignment
        .labels
        .iter()
        .zip(reference)
        .filter(|(a, b)| a == b)
        .count();
    let mut out = if 2 * agree < assignment.len() {
        assignment.complement()
    } else {
        assignment.clone()
    };
    out.aligned = true;
    Ok(out)
}

//! Seeded synthetic data: the bundled two-class flow fixture and
//! separated Gaussian blobs.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{RawTable, LABEL_COLUMN};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ATTACK_TOKEN: &str = "attack";
pub const NORMAL_TOKEN: &str = "normal";
const PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureSpec {
    pub rows: usize,
    /// Total feature columns, including the categorical one.
    pub features: usize,
    /// The first `informative` columns carry a class-dependent mean shift.
    pub informative: usize,
    pub attack_fraction: f64,
    pub shift: f64,
    pub informative_std: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            rows: 1000,
            features: 12,
            informative: 4,
            attack_fraction: 0.4,
            shift: 4.0,
            informative_std: 0.5,
            seed: 2024,
        }
    }
}

/// Builds the fixture table. Columns `f00..` are numeric, one noise column
/// `proto` is categorical, and the final `label` column holds
/// `normal`/`attack`. Also returns the generating labels (1 = attack).
pub fn generate_fixture(spec: &FixtureSpec) -> Result<(RawTable, Vec<u8>)> {
    if spec.informative == 0 || spec.informative >= spec.features || spec.rows < 2 {
        return Err(Error::invalid("fixture needs 0 < informative < features and at least 2 rows"));
    }
    if !(0.0..=1.0).contains(&spec.attack_fraction) {
        return Err(Error::invalid("attack fraction must lie in [0, 1]"));
    }
    let informative = Normal::new(0.0, spec.informative_std).map_err(|e| Error::invalid(e.to_string()))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let proto_col = spec.informative;

    let mut header: Vec<String> = (0..spec.features)
        .map(|j| if j == proto_col { "proto".to_string() } else { format!("f{j:02}") })
        .collect();
    header.push(LABEL_COLUMN.to_string());

    let mut rows = Vec::with_capacity(spec.rows);
    let mut truth = Vec::with_capacity(spec.rows);
    for _ in 0..spec.rows {
        let y = u8::from(rng.random::<f64>() < spec.attack_fraction);
        let mut row = Vec::with_capacity(spec.features + 1);
        for j in 0..spec.features {
            if j < spec.informative {
                let v = informative.sample(&mut rng) + f64::from(y) * spec.shift;
                row.push(format!("{v:.6}"));
            } else if j == proto_col {
                row.push(PROTOCOLS[rng.random_range(0..PROTOCOLS.len())].to_string());
            } else {
                // noise columns on assorted scales
                let scale = 1.0 + (j % 4) as f64 * 5.0;
                let v = noise.sample(&mut rng) * scale;
                row.push(format!("{v:.6}"));
            }
        }
        row.push(if y == 1 { ATTACK_TOKEN } else { NORMAL_TOKEN }.to_string());
        rows.push(row);
        truth.push(y);
    }
    Ok((RawTable::new(header, rows)?, truth))
}

/// The fixture rendered as CSV text with a header row.
pub fn fixture_csv(spec: &FixtureSpec) -> Result<String> {
    let (table, _) = generate_fixture(spec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Two isotropic unit-variance blobs in `d` dimensions whose centres are
/// `separation` apart; roughly half the rows come from each.
pub fn two_gaussians<T: Scalar>(n: usize, d: usize, separation: f64, seed: u64) -> (Array2<T>, Vec<u8>) {
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / (d.max(1) as f64).sqrt();
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<bool>())).collect();
    let mut x = Array2::zeros((n, d));
    for (i, mut row) in x.outer_iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = T::of(noise.sample(&mut rng) + f64::from(labels[i]) * offset);
        }
    }
    (x, labels)
}

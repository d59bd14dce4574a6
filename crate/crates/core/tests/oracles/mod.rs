//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Drops digits past `places` decimals (printed tables truncate).
pub fn truncate(v: f64, places: i32) -> f64 {
    let s = 10f64.powi(places);
    // nudge guards against representation error just below a boundary
    ((v * s) + 1e-9).floor() / s
}

/// Orthonormal columns via modified Gram-Schmidt on an `n x d` random matrix.
pub fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..n {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    // back to row-major
    (0..n).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

/// Minimizer of `|y - X b|^2 + alpha |b|_1` when `X^T X = I`.
pub fn soft_threshold_solution(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Vec<f64> {
    let d = x[0].len();
    (0..d)
        .map(|j| {
            let z: f64 = x.iter().zip(y).map(|(r, &t)| r[j] * t).sum();
            z.signum() * (z.abs() - alpha / 2.0).max(0.0)
        })
        .collect()
}

/// Least squares through the normal equations, solved by Gaussian elimination
/// with partial pivoting.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = x[0].len();
    let mut a = vec![vec![0.0; d + 1]; d];
    for (r, &t) in x.iter().zip(y) {
        for i in 0..d {
            for j in 0..d {
                a[i][j] += r[i] * r[j];
            }
            a[i][d] += r[i] * t;
        }
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in 0..d {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..=d {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Textbook OPTICS with an infinite radius, written against a full distance
/// matrix. Returns (ordering, reachability by row).
pub fn brute_force_optics(points: &[Vec<f64>], min_pts: usize) -> (Vec<usize>, Vec<f64>) {
    let n = points.len();
    let dm: Vec<Vec<f64>> = points.iter().map(|p| points.iter().map(|q| dist(p, q)).collect()).collect();
    let core: Vec<f64> = dm
        .iter()
        .map(|row| {
            let mut s = row.clone();
            s.sort_by(f64::total_cmp);
            s[min_pts - 1]
        })
        .collect();
    let mut reach = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut order = vec![];
    while order.len() < n {
        let candidates: Vec<usize> = (0..n).filter(|&i| !done[i]).collect();
        let reachable: Vec<usize> = candidates.iter().copied().filter(|&i| reach[i].is_finite()).collect();
        let p = if reachable.is_empty() {
            candidates[0]
        } else {
            // lowest reachability, then lowest index
            *reachable
                .iter()
                .min_by(|&&a, &&b| reach[a].total_cmp(&reach[b]).then(a.cmp(&b)))
                .unwrap()
        };
        done[p] = true;
        order.push(p);
        for o in 0..n {
            if !done[o] {
                reach[o] = reach[o].min(core[p].max(dm[p][o]));
            }
        }
    }
    (order, reach)
}

/// Smallest within-cluster sum of squares over every split into two non-empty groups.
pub fn best_two_partition_sse(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    // fix point 0 on side 0 to skip mirrored splits
    for mask in 1u32..(1 << (n - 1)) {
        let side = |i: usize| i > 0 && (mask >> (i - 1)) & 1 == 1;
        best = best.min(partition_sse(points, &(0..n).map(|i| u8::from(side(i))).collect::<Vec<_>>()));
    }
    best
}

pub fn partition_sse(points: &[Vec<f64>], labels: &[u8]) -> f64 {
    let d = points[0].len();
    let mut total = 0.0;
    for g in 0..2u8 {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == g).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members.iter().map(|p| dist(p, &mean).powi(2)).sum::<f64>();
    }
    total
}

/// Adjusted Rand index from explicit pair enumeration.
pub fn ari_by_pairs(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len();
    let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (ss * dd - sd * ds) / den
    }
}

/// Probability that a random positive outscores a random negative (ties count half).
pub fn mann_whitney_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// The twelve printed confusion matrices: (tp, fn, fp, tn) with the printed
/// precision, recall, FAR and accuracy (when printed) and their decimals.
pub struct PrintedMatrix {
    pub name: &'static str,
    pub counts: (u64, u64, u64, u64),
    pub precision: f64,
    pub recall: f64,
    pub far: Option<(f64, i32)>,
    pub accuracy: Option<f64>,
}

pub const PRINTED: [PrintedMatrix; 12] = [
    PrintedMatrix { name: "nsl mbk", counts: (40951, 17679, 1803, 65540), precision: 0.957, recall: 0.698, far: None, accuracy: None },
    PrintedMatrix { name: "nsl optics", counts: (56711, 1919, 20187, 47156), precision: 0.737, recall: 0.967, far: None, accuracy: None },
    PrintedMatrix { name: "nsl fcm", counts: (43906, 14724, 176, 67167), precision: 0.996, recall: 0.748, far: None, accuracy: None },
    PrintedMatrix { name: "ton mbk", counts: (112483, 48560, 8032, 291968), precision: 0.933, recall: 0.698, far: None, accuracy: None },
    PrintedMatrix { name: "ton optics", counts: (155772, 5271, 89929, 210071), precision: 0.633, recall: 0.967, far: None, accuracy: None },
    PrintedMatrix { name: "ton fcm", counts: (120600, 40443, 784, 299216), precision: 0.993, recall: 0.748, far: None, accuracy: None },
    PrintedMatrix { name: "nsl lstm", counts: (54505, 4125, 2442, 64901), precision: 0.957, recall: 0.929, far: Some((0.036, 3)), accuracy: None },
    PrintedMatrix { name: "nsl mlp", counts: (55469, 3161, 1293, 66050), precision: 0.977, recall: 0.946, far: Some((0.019, 3)), accuracy: None },
    PrintedMatrix { name: "nsl dbn", counts: (57253, 1377, 1596, 65747), precision: 0.972, recall: 0.976, far: Some((0.023, 3)), accuracy: Some(0.976) },
    PrintedMatrix { name: "ton lstm", counts: (149713, 11330, 10879, 289121), precision: 0.932, recall: 0.929, far: Some((0.036, 3)), accuracy: None },
    PrintedMatrix { name: "ton mlp", counts: (152360, 8683, 5760, 294240), precision: 0.963, recall: 0.946, far: Some((0.019, 3)), accuracy: None },
    PrintedMatrix { name: "ton dbn", counts: (157261, 3782, 7110, 292890), precision: 0.956, recall: 0.976, far: Some((0.0237, 4)), accuracy: None },
];

/// Central-difference gradient of `f` at `params`, coordinate `k`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], k: usize, h: f64) -> f64 {
    let mut p = params.to_vec();
    p[k] = params[k] + h;
    let up = f(&p);
    p[k] = params[k] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

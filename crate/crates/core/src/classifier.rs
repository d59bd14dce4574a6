//! Fully connected binary classifier trained with mini-batch SGD on binary
//! cross-entropy.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Probabilities are kept this far from 0 and 1 (or machine epsilon, if larger).
pub const PROBA_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn clamp_eps<T: Scalar>() -> T {
    T::of(PROBA_CLAMP).max(T::epsilon())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: 11,
            hidden: vec![64, 32],
            learning_rate: 0.001,
            epochs: 40,
            batch_size: 200,
            seed: 0,
            hidden_activation: Activation::Relu,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }

    /// Widths from input to the single output unit.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.input_dim];
        v.extend(&self.hidden);
        v.push(1);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `fan_in x fan_out`
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub layers: Vec<Layer<T>>,
    pub config: MlpConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainingLog {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "loss"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.loss.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init<T: Scalar>(config: &MlpConfig) -> Result<MlpModel<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sizes = config.layer_sizes();
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || T::of(rng.random_range(-bound..bound)));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpModel {
        layers,
        config: config.clone(),
    })
}

struct Gradients<T> {
    weights: Vec<Array2<T>>,
    bias: Vec<Array1<T>>,
}

impl<T: Scalar> MlpModel<T> {
    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    fn check_input(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first; the last holds the probabilities.
    fn forward(&self, x: ArrayView2<'_, T>) -> Vec<Array2<T>> {
        let last = self.layers.len() - 1;
        let mut acts = vec![x.to_owned()];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = acts[k].dot(&layer.weights);
            z += &layer.bias;
            let act = if k == last {
                Activation::Sigmoid
            } else {
                self.config.hidden_activation
            };
            z.mapv_inplace(|v| act.apply(v));
            acts.push(z);
        }
        acts
    }

    /// Mean clamped binary cross-entropy over the rows.
    pub fn loss(&self, x: ArrayView2<'_, T>, y: &[T]) -> Result<T> {
        self.check_input(&x)?;
        let p = self.forward(x).pop().expect("output layer");
        Ok(bce(p.column(0).iter().copied(), y))
    }

    fn backward(&self, x: ArrayView2<'_, T>, y: &[T]) -> (T, Gradients<T>) {
        let acts = self.forward(x);
        let n = T::of_usize(x.nrows());
        let out = acts.last().expect("output layer");
        let loss = bce(out.column(0).iter().copied(), y);
        // sigmoid + cross-entropy: dL/dz = (p - y) / n
        let mut delta = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| (out[[i, 0]] - y[i]) / n);
        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            gw.push(acts[k].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if k > 0 {
                let act = self.config.hidden_activation;
                let mut next = delta.dot(&self.layers[k].weights.t());
                next.zip_mut_with(&acts[k], |d, &a| *d *= act.derivative(a));
                delta = next;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, bias: gb })
    }

    pub fn to_document(&self) -> ModelDocument<T> {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    weights: l.weights.outer_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: ModelDocument<T>) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported model format {}", doc.format_version)));
        }
        doc.config.validate()?;
        let sizes = doc.config.layer_sizes();
        if doc.layers.len() != sizes.len() - 1 {
            return Err(Error::invalid("layer count does not match configuration"));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, w) in doc.layers.into_iter().zip(sizes.windows(2)) {
            let (fan_in, fan_out) = (w[0], w[1]);
            if l.weights.len() != fan_in || l.weights.iter().any(|r| r.len() != fan_out) || l.bias.len() != fan_out {
                return Err(Error::invalid("layer shape does not match configuration"));
            }
            let flat: Vec<T> = l.weights.into_iter().flatten().collect();
            if flat.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
            layers.push(Layer {
                weights: Array2::from_shape_vec((fan_in, fan_out), flat).expect("checked shape"),
                bias: Array1::from_vec(l.bias),
            });
        }
        Ok(Self {
            layers,
            config: doc.config,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(s)?)
    }

    /// Flattened parameters (weights then bias, layer by layer).
    pub fn parameters(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[T]) {
        let mut it = params.iter();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = *it.next().expect("parameter count");
            }
        }
    }

    /// Analytic gradient of the mean loss, flattened like [`MlpModel::parameters`].
    pub fn gradient(&self, x: ArrayView2<'_, T>, y: &[T]) -> Result<Vec<T>> {
        self.check_input(&x)?;
        let (_, g) = self.backward(x, y);
        Ok(g.weights
            .iter()
            .zip(&g.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect())
    }
}

fn bce<T: Scalar>(p: impl Iterator<Item = T>, y: &[T]) -> T {
    let eps = clamp_eps::<T>();
    let mut total = T::zero();
    let mut n = 0usize;
    for (p, &t) in p.zip(y) {
        if p.is_nan() {
            return T::nan();
        }
        let p = p.max(eps).min(T::one() - eps);
        total -= t * p.ln() + (T::one() - t) * (T::one() - p).ln();
        n += 1;
    }
    total / T::of_usize(n.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerDocument<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

/// Persisted form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelDocument<T> {
    pub format_version: u32,
    pub config: MlpConfig,
    pub layers: Vec<LayerDocument<T>>,
}

/// Trains with shuffled mini-batch SGD; the shuffle is seeded from the config.
pub fn mlp_train<T: Scalar>(
    mut model: MlpModel<T>,
    x: ArrayView2<'_, T>,
    y: &[u8],
    config: &MlpConfig,
) -> Result<(MlpModel<T>, TrainingLog)> {
    config.validate()?;
    model.check_input(&x)?;
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    crate::dataset::check_binary(y)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    let yt: Vec<T> = y.iter().map(|&v| T::of_usize(v as usize)).collect();
    let lr = T::of(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut log = TrainingLog::default();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<T> = chunk.iter().map(|&i| yt[i]).collect();
            let (loss, g) = model.backward(xb.view(), &yb);
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * chunk.len() as f64;
            for (layer, (gw, gb)) in model.layers.iter_mut().zip(g.weights.iter().zip(&g.bias)) {
                layer.weights.scaled_add(-lr, gw);
                layer.bias.scaled_add(-lr, gb);
            }
        }
        let mean = total / x.nrows().max(1) as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: mean,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// Scores in (0, 1), evaluated in chunks.
pub fn mlp_predict_proba<T: Scalar>(model: &MlpModel<T>, x: ArrayView2<'_, T>) -> Result<Vec<T>> {
    model.check_input(&x)?;
    let eps = clamp_eps::<T>();
    let mut out = Vec::with_capacity(x.nrows());
    let step = 8192;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + step).min(x.nrows());
        let p = model.forward(x.slice(s![start..end, ..])).pop().expect("output layer");
        out.extend(p.column(0).iter().map(|&v| v.max(eps).min(T::one() - eps)));
        start = end;
    }
    Ok(out)
}

/// 1 iff score > threshold.
pub fn mlp_predict<T: Scalar>(model: &MlpModel<T>, x: ArrayView2<'_, T>, threshold: T) -> Result<Vec<u8>> {
    Ok(mlp_predict_proba(model, x)?
        .into_iter()
        .map(|p| u8::from(p > threshold))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn default_architecture_shapes() {
        let m: MlpModel<f64> = mlp_init(&MlpConfig::default()).unwrap();
        let shapes: Vec<_> = m.layers.iter().map(|l| l.weights.dim()).collect();
        assert_eq!(shapes, vec![(11, 64), (64, 32), (32, 1)]);
        assert!(m.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = (6.0f64 / 75.0).sqrt();
        assert!(m.layers[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_is_seeded() {
        let c = MlpConfig::default();
        assert_eq!(mlp_init::<f32>(&c).unwrap(), mlp_init::<f32>(&c).unwrap());
        let other = MlpConfig { seed: 1, ..c.clone() };
        assert_ne!(mlp_init::<f32>(&c).unwrap(), mlp_init::<f32>(&other).unwrap());
    }

    #[test]
    fn zero_hidden_layers_is_logistic_regression() {
        let c = MlpConfig {
            input_dim: 3,
            hidden: vec![],
            ..MlpConfig::default()
        };
        let m: MlpModel<f64> = mlp_init(&c).unwrap();
        assert_eq!(m.layers.len(), 1);
        assert_eq!(m.layers[0].weights.dim(), (3, 1));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            MlpConfig { input_dim: 0, ..MlpConfig::default() },
            MlpConfig { learning_rate: 0.0, ..MlpConfig::default() },
            MlpConfig { batch_size: 0, ..MlpConfig::default() },
            MlpConfig { hidden: vec![4, 0], ..MlpConfig::default() },
        ];
        for c in bad {
            assert!(mlp_init::<f64>(&c).is_err());
        }
    }

    #[test]
    fn zero_model_scores_half_and_labels_zero() {
        let c = MlpConfig { input_dim: 2, hidden: vec![3], ..MlpConfig::default() };
        let mut m: MlpModel<f64> = mlp_init(&c).unwrap();
        let zeros = vec![0.0; m.parameters().len()];
        m.set_parameters(&zeros);
        let x = array![[1.0, -2.0], [3.0, 4.0]];
        assert_eq!(mlp_predict_proba(&m, x.view()).unwrap(), vec![0.5, 0.5]);
        assert_eq!(mlp_predict(&m, x.view(), 0.5).unwrap(), vec![0, 0]);
    }

    #[test]
    fn single_input_model_is_monotone() {
        let c = MlpConfig { input_dim: 1, hidden: vec![1], ..MlpConfig::default() };
        let mut m: MlpModel<f64> = mlp_init(&c).unwrap();
        // w1 = 2, b1 = 0.5, w2 = 1.5, b2 = -1
        m.set_parameters(&[2.0, 0.5, 1.5, -1.0]);
        let x = Array2::from_shape_fn((50, 1), |(i, _)| i as f64 * 0.2 - 5.0);
        let p = mlp_predict_proba(&m, x.view()).unwrap();
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let c = MlpConfig { input_dim: 2, hidden: vec![4], epochs: 0, ..MlpConfig::default() };
        let m: MlpModel<f64> = mlp_init(&c).unwrap();
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let (trained, log) = mlp_train(m.clone(), x.view(), &[0, 1], &c).unwrap();
        assert_eq!(trained, m);
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let m: MlpModel<f64> = mlp_init(&MlpConfig::default()).unwrap();
        let x = Array2::<f64>::zeros((2, 3));
        assert!(matches!(mlp_predict_proba(&m, x.view()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn exploding_training_reports_epoch() {
        let c = MlpConfig {
            input_dim: 2,
            hidden: vec![],
            learning_rate: 1e300,
            epochs: 5,
            batch_size: 1,
            ..MlpConfig::default()
        };
        let m: MlpModel<f64> = mlp_init(&c).unwrap();
        // weights overflow to infinity, then 0 * inf poisons the forward pass
        let x = array![[1e300, 0.0], [0.0, 1e300]];
        let err = mlp_train(m, x.view(), &[0, 1], &c).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn document_round_trip_and_corruption() {
        let m: MlpModel<f64> = mlp_init(&MlpConfig { input_dim: 3, hidden: vec![2], ..MlpConfig::default() }).unwrap();
        let json = m.to_json().unwrap();
        assert_eq!(MlpModel::<f64>::from_json(&json).unwrap(), m);
        assert!(MlpModel::<f64>::from_json(&json[..json.len() / 2]).is_err());
        let mut doc = m.to_document();
        doc.layers[0].bias.pop();
        assert!(MlpModel::from_document(doc).is_err());
    }
}

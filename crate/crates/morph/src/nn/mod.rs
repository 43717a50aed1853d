//! From-scratch dense feed-forward network for the binary classifier.
//!
//! Fixed topology: ReLU hidden layers, two-logit softmax output, inverted
//! dropout after each hidden activation (training only). Everything is `f64`
//! and deterministic given the seeds handed in.

mod adam;
mod train;

pub use adam::{adam_step, AdamParams, OptimizerState};
pub use train::{
    loss_and_grad, train, train_early_stop, EarlyStopSpec, Gradients, TrainBatch, TrainConfig,
    TrainReport, TrainSet,
};

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense MLP parameters. Weight matrix `k` has shape
/// `(layer_dims[k+1], layer_dims[k])`; the last layer emits exactly 2 logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    dropout_rate: f64,
}

/// Initialize a model with fan-in-scaled uniform weights (`±sqrt(6/fan_in)`)
/// and zero biases. Deterministic for a fixed seed.
pub fn init_model(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<MlpModel> {
    validate_dims(layer_dims)?;
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!(
            "dropout_rate must be in [0, 1), got {dropout_rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for k in 0..layer_dims.len() - 1 {
        let (fan_in, fan_out) = (layer_dims[k], layer_dims[k + 1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound));
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
        dropout_rate,
    })
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "layer_dims needs at least input and output entries, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!(
            "layer_dims entries must be positive, got {dims:?}"
        )));
    }
    if *dims.last().unwrap() != 2 {
        return Err(Error::Config(format!(
            "final layer dim must be 2 (two-class softmax), got {dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub(crate) fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub(crate) fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Softmax class probabilities, dropout disabled.
    ///
    /// Each output row is a distribution: entries in (0, 1), summing to 1.
    pub fn predict_proba(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(inputs)?;
        let logits = self.forward_logits(inputs, None);
        Ok(softmax_rows(&logits))
    }

    /// Predicted hard labels; ties (exactly equal probabilities) go to benign.
    pub fn predict_labels(&self, inputs: &Array2<f64>) -> Result<Vec<u8>> {
        let probs = self.predict_proba(inputs)?;
        Ok(probs
            .axis_iter(Axis(0))
            .map(|row| u8::from(row[1] > row[0]))
            .collect())
    }

    fn check_inputs(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("inputs contain non-finite values".into()));
        }
        Ok(())
    }

    /// Forward pass to raw logits. `dropout` carries per-hidden-layer masks
    /// already scaled by 1/keep; `None` means inference.
    fn forward_logits(&self, inputs: &Array2<f64>, dropout: Option<&[Array2<f64>]>) -> Array2<f64> {
        let mut a = inputs.clone();
        let last = self.weights.len() - 1;
        for k in 0..=last {
            let mut z = a.dot(&self.weights[k].t());
            z += &self.biases[k];
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
                if let Some(masks) = dropout {
                    z *= &masks[k];
                }
                a = z;
            } else {
                return z;
            }
        }
        unreachable!()
    }

    /// Forward pass retaining the per-layer caches needed by backprop.
    fn forward_cached(
        &self,
        inputs: &Array2<f64>,
        dropout: Option<&[Array2<f64>]>,
    ) -> ForwardCache {
        let last = self.weights.len() - 1;
        let mut pre = Vec::with_capacity(last);
        let mut post = Vec::with_capacity(last);
        let mut a = inputs.clone();
        for k in 0..last {
            let mut z = a.dot(&self.weights[k].t());
            z += &self.biases[k];
            pre.push(z.clone());
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(masks) = dropout {
                z *= &masks[k];
            }
            post.push(z.clone());
            a = z;
        }
        let mut logits = a.dot(&self.weights[last].t());
        logits += &self.biases[last];
        ForwardCache { pre, post, logits }
    }

    /// Sample inverted-dropout masks for each hidden layer.
    fn sample_dropout_masks(&self, batch: usize, seed: u64) -> Option<Vec<Array2<f64>>> {
        if self.dropout_rate == 0.0 {
            return None;
        }
        let keep = 1.0 - self.dropout_rate;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masks = self.layer_dims[1..self.layer_dims.len() - 1]
            .iter()
            .map(|&dim| {
                Array2::from_shape_fn((batch, dim), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Some(masks)
    }
}

/// Hidden pre-activations, dropped activations, and output logits.
struct ForwardCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

/// Row-wise softmax with max-logit subtraction.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Versioned checkpoint of a model's topology and parameters.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    layer_dims: Vec<usize>,
    dropout_rate: f64,
    /// Row-major entries per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

const CHECKPOINT_VERSION: u32 = 1;

impl MlpModel {
    /// Serialize to the JSON checkpoint format. `f64` values round-trip
    /// exactly (shortest-representation encoding).
    pub fn to_checkpoint_json(&self) -> String {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_dims: self.layer_dims.clone(),
            dropout_rate: self.dropout_rate,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().cloned().collect())
                .collect(),
            biases: self
                .biases
                .iter()
                .map(|b| b.to_vec())
                .collect(),
        };
        serde_json::to_string_pretty(&ckpt).expect("checkpoint serialization cannot fail")
    }

    /// Parse and validate a JSON checkpoint.
    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<MlpModel> {
        let ckpt: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::parse(e.line(), format!("bad checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        validate_dims(&ckpt.layer_dims)?;
        if !(0.0..1.0).contains(&ckpt.dropout_rate) {
            return Err(Error::Input(format!(
                "checkpoint dropout_rate out of range: {}",
                ckpt.dropout_rate
            )));
        }
        let layers = ckpt.layer_dims.len() - 1;
        if ckpt.weights.len() != layers || ckpt.biases.len() != layers {
            return Err(Error::Shape(format!(
                "checkpoint has {} weight / {} bias layers, topology needs {layers}",
                ckpt.weights.len(),
                ckpt.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for k in 0..layers {
            let (rows, cols) = (ckpt.layer_dims[k + 1], ckpt.layer_dims[k]);
            let expected = rows.checked_mul(cols).ok_or_else(|| {
                Error::Shape(format!("layer {k} dimension product overflows: {rows}x{cols}"))
            })?;
            if ckpt.weights[k].len() != expected {
                return Err(Error::Shape(format!(
                    "layer {k} weights have {} entries, expected {expected}",
                    ckpt.weights[k].len()
                )));
            }
            if ckpt.biases[k].len() != rows {
                return Err(Error::Shape(format!(
                    "layer {k} bias has {} entries, expected {rows}",
                    ckpt.biases[k].len()
                )));
            }
            let w = Array2::from_shape_vec((rows, cols), ckpt.weights[k].clone())
                .expect("shape checked above");
            if w.iter().any(|v| !v.is_finite()) || ckpt.biases[k].iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "layer {k} contains non-finite parameters"
                )));
            }
            weights.push(w);
            biases.push(Array1::from_vec(ckpt.biases[k].clone()));
        }
        Ok(MlpModel {
            layer_dims: ckpt.layer_dims,
            weights,
            biases,
            dropout_rate: ckpt.dropout_rate,
        })
    }

    /// Zero all parameters. Mostly useful in tests (uniform softmax output).
    pub fn zeroed(mut self) -> MlpModel {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(init_model(&[4], 0.0, 7), Err(Error::Config(_))));
        assert!(matches!(
            init_model(&[4, 0, 2], 0.0, 7),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_model(&[4, 3, 3], 0.0, 7),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_model(&[4, 3, 2], 1.0, 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn init_zero_biases_and_determinism() {
        let m1 = init_model(&[4, 3, 2], 0.2, 7).unwrap();
        let m2 = init_model(&[4, 3, 2], 0.2, 7).unwrap();
        assert!(m1.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert_eq!(m1, m2);
        let m3 = init_model(&[4, 3, 2], 0.2, 8).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let m = init_model(&[9, 4, 2], 0.0, 1).unwrap();
        let bound = (6.0 / 9.0_f64).sqrt();
        assert!(m.weights[0].iter().all(|&v| v.abs() < bound));
    }

    #[test]
    fn zero_weight_model_is_uniform() {
        let m = init_model(&[3, 4, 2], 0.0, 1).unwrap().zeroed();
        let x = arr2(&[[0.3, -0.7, 2.0], [10.0, 5.0, -3.0]]);
        let p = m.predict_proba(&x).unwrap();
        for row in p.axis_iter(Axis(0)) {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_softmax_on_forced_logits() {
        // Single linear layer [2 -> 2], identity weights: logits = inputs.
        let mut m = init_model(&[2, 2], 0.0, 1).unwrap().zeroed();
        m.weights_mut()[0] = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        let p = m.predict_proba(&arr2(&[[1.0, 0.0]])).unwrap();
        let e = std::f64::consts::E;
        assert!((p[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[[0, 1]] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut m = init_model(&[2, 2], 0.0, 3).unwrap();
        let x = arr2(&[[0.4, -1.2], [2.0, 0.1]]);
        let p1 = m.predict_proba(&x).unwrap();
        // Adding a constant to both output logits via the biases.
        m.biases_mut()[0] += 3.7;
        let p2 = m.predict_proba(&x).unwrap();
        for (a, b) in p1.iter().zip(p2.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let m = init_model(&[5, 7, 3, 2], 0.3, 11).unwrap();
        let x = Array2::from_shape_fn((6, 5), |(i, j)| (i as f64 - j as f64) * 0.7);
        let p = m.predict_proba(&x).unwrap();
        for row in p.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn predict_rejects_bad_inputs() {
        let m = init_model(&[3, 2], 0.0, 1).unwrap();
        let wrong = Array2::zeros((2, 4));
        assert!(matches!(m.predict_proba(&wrong), Err(Error::Shape(_))));
        let mut nan = Array2::zeros((2, 3));
        nan[[0, 0]] = f64::NAN;
        assert!(matches!(m.predict_proba(&nan), Err(Error::Input(_))));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let m = init_model(&[4, 5, 2], 0.25, 99).unwrap();
        let json = m.to_checkpoint_json();
        let back = MlpModel::from_checkpoint_bytes(json.as_bytes()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn checkpoint_rejects_malformed() {
        assert!(MlpModel::from_checkpoint_bytes(b"not json").is_err());
        let m = init_model(&[3, 2], 0.0, 1).unwrap();
        let tampered = m.to_checkpoint_json().replace("\"version\": 1", "\"version\": 9");
        assert!(MlpModel::from_checkpoint_bytes(tampered.as_bytes()).is_err());
    }
}

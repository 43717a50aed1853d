//! Loss, backpropagation, and the (semi-)supervised training loop.
//!
//! The objective is `L = L_s + lambda * L_u`: mean cross-entropy over the
//! labeled minibatch plus a weighted mean cross-entropy over an equally sized
//! pseudo-labeled minibatch. The two gradients are summed before each
//! optimizer step.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, AdamParams, MlpModel, OptimizerState};
use crate::error::{Error, Result};
use crate::seed;

/// An owned training pool: one feature row per sample plus class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    inputs: Array2<f64>,
    targets: Vec<u8>,
}

impl TrainSet {
    pub fn new(inputs: Array2<f64>, targets: Vec<u8>) -> Result<Self> {
        if inputs.nrows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if targets.iter().any(|&t| t > 1) {
            return Err(Error::Input("targets must be class indices 0 or 1".into()));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("inputs contain non-finite values".into()));
        }
        Ok(TrainSet { inputs, targets })
    }

    pub fn from_rows(rows: &[(&[f64], u8)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Input("cannot build an empty train set".into()));
        }
        let dim = rows[0].0.len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        let mut targets = Vec::with_capacity(rows.len());
        for (feat, label) in rows {
            if feat.len() != dim {
                return Err(Error::Shape(format!(
                    "ragged feature rows: {} vs {dim}",
                    feat.len()
                )));
            }
            flat.extend_from_slice(feat);
            targets.push(*label);
        }
        let inputs = Array2::from_shape_vec((rows.len(), dim), flat).expect("shape follows input");
        TrainSet::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    /// Append samples in place (active-learning annotations joining the pool).
    pub fn extend(&mut self, other: &TrainSet) -> Result<()> {
        if other.inputs.ncols() != self.inputs.ncols() {
            return Err(Error::Shape(format!(
                "feature dim mismatch: {} vs {}",
                other.inputs.ncols(),
                self.inputs.ncols()
            )));
        }
        self.inputs = ndarray::concatenate(Axis(0), &[self.inputs.view(), other.inputs.view()])
            .expect("column counts checked above");
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }

    /// Materialize a weighted minibatch from row indices.
    pub fn batch(&self, idx: &[usize], weight: f64) -> TrainBatch {
        TrainBatch {
            inputs: self.inputs.select(Axis(0), idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            weight,
        }
    }

    /// The whole pool as a single batch.
    pub fn full_batch(&self, weight: f64) -> TrainBatch {
        TrainBatch {
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
            weight,
        }
    }
}

/// One minibatch with the multiplier applied to its loss (and gradients).
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub inputs: Array2<f64>,
    pub targets: Vec<u8>,
    pub weight: f64,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases().iter().map(|b| Array1::zeros(b.dim())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub(crate) fn check_shapes(&self, model: &MlpModel) -> Result<()> {
        let same = self.weights.len() == model.weights().len()
            && self
                .weights
                .iter()
                .zip(model.weights())
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .biases
                .iter()
                .zip(model.biases())
                .all(|(g, b)| g.dim() == b.dim());
        if same {
            Ok(())
        } else {
            Err(Error::Shape("gradient shapes do not match parameters".into()))
        }
    }

    pub fn max_abs(&self) -> f64 {
        let w = self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        self.biases
            .iter()
            .flat_map(|b| b.iter())
            .fold(w, |acc, v| acc.max(v.abs()))
    }
}

/// Mean cross-entropy (times `batch.weight`) and its gradients.
///
/// Dropout masks for the hidden layers are drawn from `dropout_mask_seed`,
/// so a fixed seed gives a bit-identical loss and gradient.
pub fn loss_and_grad(
    model: &MlpModel,
    batch: &TrainBatch,
    dropout_mask_seed: u64,
) -> Result<(f64, Gradients)> {
    let n = batch.inputs.nrows();
    if n == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    if batch.targets.len() != n {
        return Err(Error::Shape(format!(
            "{} input rows but {} targets",
            n,
            batch.targets.len()
        )));
    }
    if batch.inputs.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} columns, model expects {}",
            batch.inputs.ncols(),
            model.input_dim()
        )));
    }
    if batch.inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("batch inputs contain non-finite values".into()));
    }
    if batch.targets.iter().any(|&t| t > 1) {
        return Err(Error::Input("targets must be class indices 0 or 1".into()));
    }

    let masks = model.sample_dropout_masks(n, dropout_mask_seed);
    let cache = model.forward_cached(&batch.inputs, masks.as_deref());

    // Loss via log-sum-exp; softmax via max subtraction.
    let mut loss = 0.0;
    let mut delta = cache.logits.clone();
    for (i, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
        let target = batch.targets[i] as usize;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[target];
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        row[target] -= 1.0;
    }
    let scale = batch.weight / n as f64;
    loss = loss * scale;
    delta *= scale;

    // Backprop. delta holds dL/dz for the layer being processed.
    let last = model.weights().len() - 1;
    let mut grads = Gradients::zeros_like(model);
    for k in (0..=last).rev() {
        let a_prev = if k == 0 { &batch.inputs } else { &cache.post[k - 1] };
        grads.weights[k] = delta.t().dot(a_prev);
        grads.biases[k] = delta.sum_axis(Axis(0));
        if k > 0 {
            let mut da = delta.dot(&model.weights()[k]);
            if let Some(masks) = &masks {
                da *= &masks[k - 1];
            }
            // ReLU gate on the pre-activation.
            da.zip_mut_with(&cache.pre[k - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = da;
        }
    }
    Ok((loss, grads))
}

/// Training-loop configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the pseudo-label loss term.
    pub lambda_u: f64,
    pub adam: AdamParams,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lambda_u >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_u must be >= 0, got {}",
                self.lambda_u
            )));
        }
        Ok(())
    }
}

/// Reshuffles and cycles the pseudo pool so every step gets a full-size half.
struct PseudoCycler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl PseudoCycler {
    fn new(len: usize, seed: u64) -> Self {
        let mut c = PseudoCycler {
            order: (0..len).collect(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        c.reshuffle();
        c
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn draw(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Per-epoch trace plus early-stopping bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-step total loss for each epoch run.
    pub loss_trace: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept. Equals the last epoch when
    /// early stopping is off.
    pub best_epoch: usize,
    /// Dev F1 of the kept parameters; NaN when early stopping is off.
    pub best_dev_f1: f64,
}

/// Early-stopping evaluation data: held-out inputs with ground truth.
pub struct EarlyStopSpec<'a> {
    pub dev_inputs: &'a Array2<f64>,
    pub dev_truths: &'a [u8],
    pub patience: usize,
}

/// Train for a fixed number of epochs. One epoch is one full pass over the
/// labeled pool; when `pseudo` is present every optimizer step pairs one
/// labeled minibatch (weight 1) with one equal-size pseudo minibatch
/// (weight `lambda_u`), summing their gradients.
pub fn train(
    model: MlpModel,
    labeled: &TrainSet,
    pseudo: Option<&TrainSet>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpModel, Vec<f64>)> {
    let (model, report) = train_inner(model, labeled, pseudo, cfg, None, seed)?;
    Ok((model, report.loss_trace))
}

/// Train with early stopping on dev F1: stop after `patience` epochs without
/// improvement and restore the best parameters seen.
pub fn train_early_stop(
    model: MlpModel,
    labeled: &TrainSet,
    pseudo: Option<&TrainSet>,
    cfg: &TrainConfig,
    early: EarlyStopSpec<'_>,
    seed: u64,
) -> Result<(MlpModel, TrainReport)> {
    train_inner(model, labeled, pseudo, cfg, Some(early), seed)
}

fn train_inner(
    mut model: MlpModel,
    labeled: &TrainSet,
    pseudo: Option<&TrainSet>,
    cfg: &TrainConfig,
    early: Option<EarlyStopSpec<'_>>,
    seed: u64,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::Input("labeled pool is empty".into()));
    }
    if let Some(p) = pseudo {
        if p.is_empty() {
            return Err(Error::Input("pseudo pool is present but empty".into()));
        }
    }

    let mut opt = OptimizerState::new(&model, cfg.adam)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "shuffle_labeled"));
    let mut cycler = pseudo.map(|p| PseudoCycler::new(p.len(), seed::derive(seed, "shuffle_pseudo")));

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut best_model = model.clone();
    let mut best_epoch = 0usize;
    let mut best_f1 = f64::NAN;
    let mut since_best = 0usize;
    let mut step: u64 = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut steps_in_epoch = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let lb = labeled.batch(chunk, 1.0);
            let (l_s, mut grads) = loss_and_grad(&model, &lb, seed::derive_n(seed, "dropout_l", step))?;
            let mut step_loss = l_s;
            if let (Some(p), Some(cyc)) = (pseudo, cycler.as_mut()) {
                let idx = cyc.draw(chunk.len());
                let ub = p.batch(&idx, cfg.lambda_u);
                let (l_u, g_u) = loss_and_grad(&model, &ub, seed::derive_n(seed, "dropout_u", step))?;
                grads.add_assign(&g_u);
                step_loss += l_u;
            }
            adam_step(&mut model, &mut opt, &grads)?;
            loss_sum += step_loss;
            steps_in_epoch += 1;
            step += 1;
        }
        trace.push(loss_sum / steps_in_epoch as f64);

        if let Some(es) = &early {
            let preds = model.predict_labels(es.dev_inputs)?;
            let f1 = crate::metrics::compute_metrics(0, &preds, es.dev_truths)?.f1;
            if best_f1.is_nan() || f1 > best_f1 {
                best_f1 = f1;
                best_epoch = epoch;
                best_model = model.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= es.patience {
                    break;
                }
            }
        } else {
            best_epoch = epoch;
        }
    }

    let final_model = if early.is_some() { best_model } else { model };
    Ok((
        final_model,
        TrainReport {
            loss_trace: trace,
            best_epoch,
            best_dev_f1: best_f1,
        },
    ))
}

//! Linear online-learning ensemble baseline with pseudo-label retraining.
//!
//! Five passive-aggressive models vote by weighted sign of their decision
//! scores. Members whose label deviates from the fixed ensemble label are
//! "aging" for that sample and get a PA update toward the ensemble label —
//! the ensemble's own prediction stands in for ground truth, which is what
//! makes this baseline prone to self-poisoning once the ensemble drifts
//! wrong. Labels here are -1 (benign) / +1 (malware).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MonthBatch;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ConfidenceRow, MetricsRecord};
use crate::nn::TrainSet;
use crate::seed;

/// One linear member: decision score `s(x) = w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Cap on the PA step size (the PA-I aggressiveness constant).
    pub aggressiveness: f64,
}

impl LinearModel {
    pub fn new(dim: usize, aggressiveness: f64) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            aggressiveness,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Sign of the decision score; an exact zero counts as benign.
    pub fn label(&self, x: &[f64]) -> i8 {
        if self.decision(x) > 0.0 {
            1
        } else {
            -1
        }
    }
}

/// One passive-aggressive step toward label `y` in {-1, +1}. The bias is
/// folded in as a constant-1 feature, so the step denominator is
/// `||x||^2 + 1` and stays positive even for a zero vector.
pub fn pa_update(model: &mut LinearModel, x: &[f64], y: i8) -> Result<()> {
    if x.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "input has {} features, model has {}",
            x.len(),
            model.weights.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("input contains non-finite values".into()));
    }
    if y != 1 && y != -1 {
        return Err(Error::Input(format!("label must be -1 or +1, got {y}")));
    }
    let yf = y as f64;
    let loss = (1.0 - yf * model.decision(x)).max(0.0);
    if loss == 0.0 {
        return Ok(());
    }
    let norm_sq: f64 = x.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let tau = (loss / norm_sq).min(model.aggressiveness);
    for (w, &v) in model.weights.iter_mut().zip(x) {
        *w += tau * yf * v;
    }
    model.bias += tau * yf;
    Ok(())
}

/// Ensemble of five linear online learners with normalized vote weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEEnsemble {
    pub models: Vec<LinearModel>,
    pub model_weights: Vec<f64>,
    /// Minimum trailing agreement rate a member needs to keep vote weight.
    pub aging_threshold: f64,
}

/// The outcome of one ensemble vote.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    /// Final label in {-1, +1}; a zero score breaks toward benign.
    pub label: i8,
    /// Weighted sum of member sign votes, in [-1, 1].
    pub score: f64,
    pub member_labels: Vec<i8>,
}

/// Baseline configuration. The five distinct aggressiveness constants (plus
/// per-member shuffle seeds during initial training) stand in for the pool
/// diversity of heterogeneous learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub aggressiveness: Vec<f64>,
    pub train_epochs: usize,
    pub aging_threshold: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            aggressiveness: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            train_epochs: 5,
            aging_threshold: 0.5,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aggressiveness.len() != 5 {
            return Err(Error::Config(format!(
                "the ensemble takes exactly 5 members, got {}",
                self.aggressiveness.len()
            )));
        }
        if self.aggressiveness.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("aggressiveness constants must be > 0".into()));
        }
        if self.train_epochs < 1 {
            return Err(Error::Config("train_epochs must be >= 1".into()));
        }
        if !(self.aging_threshold > 0.0 && self.aging_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "aging_threshold must be in (0, 1], got {}",
                self.aging_threshold
            )));
        }
        Ok(())
    }
}

impl DEEnsemble {
    /// Train all five members on the labeled pool, each with its own shuffle
    /// order. Weights start uniform.
    pub fn train(pool: &TrainSet, cfg: &DeConfig, root_seed: u64) -> Result<Self> {
        cfg.validate()?;
        if pool.is_empty() {
            return Err(Error::Input("training pool is empty".into()));
        }
        let dim = pool.inputs().ncols();
        let mut models = Vec::with_capacity(5);
        for (k, &c) in cfg.aggressiveness.iter().enumerate() {
            let mut model = LinearModel::new(dim, c);
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::derive_n(root_seed, "de_member", k as u64));
            let mut order: Vec<usize> = (0..pool.len()).collect();
            for _ in 0..cfg.train_epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let x: Vec<f64> = pool.inputs().row(i).to_vec();
                    let y = if pool.targets()[i] == 1 { 1 } else { -1 };
                    pa_update(&mut model, &x, y)?;
                }
            }
            models.push(model);
        }
        Ok(DEEnsemble {
            models,
            model_weights: vec![0.2; 5],
            aging_threshold: cfg.aging_threshold,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() != 5 || self.model_weights.len() != 5 {
            return Err(Error::Invariant("ensemble must have exactly 5 members".into()));
        }
        let sum: f64 = self.model_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.model_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Invariant(format!(
                "model weights must be a probability vector, got {:?}",
                self.model_weights
            )));
        }
        Ok(())
    }

    /// Weighted sign vote. Deviating members are identified by the caller
    /// *after* this label is fixed.
    pub fn predict(&self, x: &[f64]) -> EnsemblePrediction {
        let member_labels: Vec<i8> = self.models.iter().map(|m| m.label(x)).collect();
        let score: f64 = member_labels
            .iter()
            .zip(&self.model_weights)
            .map(|(&l, &w)| w * l as f64)
            .sum();
        EnsemblePrediction {
            label: if score > 0.0 { 1 } else { -1 },
            score,
            member_labels,
        }
    }

    /// One month: score every sample against hidden ground truth first, then
    /// (optionally) retrain deviating members toward the fixed ensemble
    /// labels and refresh vote weights from trailing agreement.
    pub fn update_month(
        &mut self,
        batch: &MonthBatch,
        apply_updates: bool,
    ) -> Result<(MetricsRecord, Vec<ConfidenceRow>)> {
        self.validate()?;
        let truths = batch.truths()?;

        // Evaluation pass with frozen models.
        let predictions: Vec<EnsemblePrediction> = batch
            .samples
            .iter()
            .map(|s| self.predict(&s.features))
            .collect();
        let preds01: Vec<u8> = predictions.iter().map(|p| u8::from(p.label == 1)).collect();
        let record = compute_metrics(batch.month, &preds01, &truths)?;
        let confidence = predictions
            .iter()
            .zip(&truths)
            .map(|(p, &t)| ConfidenceRow {
                month: batch.month,
                // Vote margin mapped onto [0.5, 1] so the export schema
                // matches the probabilistic scenarios.
                max_prob: 0.5 + p.score.abs() / 2.0,
                correct: u8::from(p.label == 1) == t,
                true_label: t,
                pred_label: u8::from(p.label == 1),
            })
            .collect();

        if apply_updates {
            // Aging members (frozen disagreement pattern) retrain toward the
            // ensemble labels, sequentially.
            for (s, pred) in batch.samples.iter().zip(&predictions) {
                for (k, model) in self.models.iter_mut().enumerate() {
                    if pred.member_labels[k] != pred.label {
                        pa_update(model, &s.features, pred.label)?;
                    }
                }
            }
            // Vote weights from trailing agreement with the ensemble; members
            // below the aging threshold are dropped from the vote.
            let n = batch.samples.len() as f64;
            let agreement: Vec<f64> = (0..5)
                .map(|k| {
                    predictions
                        .iter()
                        .filter(|p| p.member_labels[k] == p.label)
                        .count() as f64
                        / n
                })
                .collect();
            let raw: Vec<f64> = agreement
                .iter()
                .map(|&a| if a >= self.aging_threshold { a } else { 0.0 })
                .collect();
            let total: f64 = raw.iter().sum();
            self.model_weights = if total > 0.0 {
                raw.iter().map(|&r| r / total).collect()
            } else {
                vec![0.2; 5]
            };
        }
        self.validate()?;
        Ok((record, confidence))
    }
}

/// Replay a standardized stream's test months through the baseline.
pub fn run_de(
    train_pool: &TrainSet,
    test_months: &[MonthBatch],
    cfg: &DeConfig,
    apply_updates: bool,
    root_seed: u64,
) -> Result<(DEEnsemble, Vec<MetricsRecord>, Vec<ConfidenceRow>)> {
    let mut ens = DEEnsemble::train(train_pool, cfg, root_seed)?;
    let mut history = Vec::with_capacity(test_months.len());
    let mut confidence = Vec::new();
    let mut last_month = None;
    for batch in test_months {
        if let Some(last) = last_month {
            if batch.month <= last {
                return Err(Error::Sequencing(format!(
                    "month {} re-played after month {last}",
                    batch.month
                )));
            }
        }
        last_month = Some(batch.month);
        let (rec, conf) = ens.update_month(batch, apply_updates)?;
        history.push(rec);
        confidence.extend(conf);
    }
    Ok((ens, history, confidence))
}

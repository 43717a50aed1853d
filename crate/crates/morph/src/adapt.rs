//! Self-training adaptation: thresholded pseudo-labeling, asymmetric
//! malware/benign sample selection, and the monthly fine-tuning driver.
//!
//! The selection asymmetry is the heart of the method. Drifted malware tends
//! to sit in the low-confidence tail while false positives stay rare, so
//! predicted malware is sampled *randomly* above a low floor `tau_m` to pull
//! drifted samples in. Predicted benign skews the other way (false negatives
//! hide among low-confidence benign calls), so only the top-confidence benign
//! predictions are taken, the same number as the malware side.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::MonthBatch;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, confidence_rows, ConfidenceRow, MetricsRecord};
use crate::nn::{train, AdamParams, MlpModel, TrainConfig, TrainSet};
use crate::seed;

/// Self-training knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    /// Confidence floor for predicted-malware candidates.
    pub tau_m: f64,
    /// Optional confidence floor for predicted-benign candidates. Usually
    /// omitted: taking only the top-N benign predictions already drives the
    /// effective floor toward 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_b: Option<f64>,
    /// Cap on the number of pseudo-labeled samples per class and month.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_m_cap: Option<usize>,
    /// Weight of the pseudo-label loss.
    pub lambda_u: f64,
    /// Fine-tuning epochs per month.
    pub fine_tune_epochs: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            tau_m: 0.6,
            tau_b: None,
            n_m_cap: None,
            lambda_u: 1.0,
            fine_tune_epochs: 10,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.5 && self.tau_m < 1.0) {
            return Err(Error::Config(format!(
                "tau_m must be in (0.5, 1), got {}",
                self.tau_m
            )));
        }
        if let Some(tb) = self.tau_b {
            if !(tb > 0.5 && tb <= 1.0) {
                return Err(Error::Config(format!("tau_b must be in (0.5, 1], got {tb}")));
            }
            if self.tau_m >= tb {
                return Err(Error::Config(format!(
                    "tau_m ({}) must be smaller than tau_b ({tb})",
                    self.tau_m
                )));
            }
        }
        if let Some(cap) = self.n_m_cap {
            if cap < 1 {
                return Err(Error::Config("n_m_cap must be >= 1".into()));
            }
        }
        if !(self.lambda_u >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_u must be >= 0, got {}",
                self.lambda_u
            )));
        }
        if self.fine_tune_epochs < 1 {
            return Err(Error::Config("fine_tune_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fine-tuning plumbing shared by every monthly update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneParams {
    pub batch_size: usize,
    pub adam: AdamParams,
}

impl Default for TuneParams {
    fn default() -> Self {
        TuneParams {
            batch_size: 32,
            adam: AdamParams::default(),
        }
    }
}

/// The pseudo-labeled subsets chosen for one month. Index sets are disjoint
/// and the two sides always have equal size.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub month: u32,
    /// (sample index, confidence) pairs pseudo-labeled malware.
    pub malware: Vec<(usize, f64)>,
    /// (sample index, confidence) pairs pseudo-labeled benign.
    pub benign: Vec<(usize, f64)>,
}

impl PseudoLabelSet {
    pub fn is_empty(&self) -> bool {
        self.malware.is_empty() && self.benign.is_empty()
    }
}

fn check_prob_rows(probs: &Array2<f64>) -> Result<()> {
    if probs.ncols() != 2 {
        return Err(Error::Input(format!(
            "probability rows must have 2 entries, got {}",
            probs.ncols()
        )));
    }
    for (i, row) in probs.axis_iter(Axis(0)).enumerate() {
        let valid = row.iter().all(|&p| (0.0..=1.0).contains(&p))
            && (row.sum() - 1.0).abs() <= 1e-6;
        if !valid {
            return Err(Error::Input(format!(
                "row {i} is not a probability distribution: ({}, {})",
                row[0], row[1]
            )));
        }
    }
    Ok(())
}

/// Threshold-based pseudo-labels: the argmax class iff the max probability
/// reaches `tau` (boundary inclusive), otherwise unlabeled. Exact ties
/// between the two classes resolve to benign.
pub fn pseudo_label(probs: &Array2<f64>, tau: f64) -> Result<Vec<Option<u8>>> {
    if !(tau > 0.5 && tau <= 1.0) {
        return Err(Error::Config(format!("tau must be in (0.5, 1], got {tau}")));
    }
    check_prob_rows(probs)?;
    Ok(probs
        .axis_iter(Axis(0))
        .map(|row| {
            let label = u8::from(row[1] > row[0]);
            let conf = row[label as usize];
            (conf >= tau).then_some(label)
        })
        .collect())
}

/// Asymmetric per-month selection over prediction rows.
///
/// Predicted malware above `tau_m` (strict) forms the eligible pool; `N_M`
/// of them are drawn uniformly at random (seeded). The benign side takes the
/// top `N_M` predicted-benign confidences (above `tau_b` when present,
/// strict), ties broken by ascending index. If either side runs short, both
/// truncate to the smaller count, keeping the sides balanced. Empty pools
/// yield an empty set; that is a signal, not a failure.
pub fn select_samples(
    month: u32,
    probs: &Array2<f64>,
    config: &MorphConfig,
    selection_seed: u64,
) -> Result<PseudoLabelSet> {
    select_samples_excluding(month, probs, &BTreeSet::new(), config, selection_seed)
}

pub(crate) fn select_samples_excluding(
    month: u32,
    probs: &Array2<f64>,
    excluded: &BTreeSet<usize>,
    config: &MorphConfig,
    selection_seed: u64,
) -> Result<PseudoLabelSet> {
    config.validate()?;
    check_prob_rows(probs)?;

    let mut eligible_malware: Vec<(usize, f64)> = Vec::new();
    let mut benign_candidates: Vec<(usize, f64)> = Vec::new();
    for (i, row) in probs.axis_iter(Axis(0)).enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        if row[1] > row[0] {
            if row[1] > config.tau_m {
                eligible_malware.push((i, row[1]));
            }
        } else {
            let conf = row[0];
            if config.tau_b.is_none_or(|tb| conf > tb) {
                benign_candidates.push((i, conf));
            }
        }
    }

    // Highest confidence first; ties by ascending sample index.
    benign_candidates
        .sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite confs").then(a.0.cmp(&b.0)));

    let n_m = eligible_malware.len().min(config.n_m_cap.unwrap_or(usize::MAX));
    let n = n_m.min(benign_candidates.len());

    let mut rng = ChaCha8Rng::seed_from_u64(selection_seed);
    let picked = rand::seq::index::sample(&mut rng, eligible_malware.len(), n);
    let mut malware: Vec<(usize, f64)> = picked.iter().map(|k| eligible_malware[k]).collect();
    malware.sort_by_key(|&(i, _)| i);

    let benign = benign_candidates[..n].to_vec();
    Ok(PseudoLabelSet {
        month,
        malware,
        benign,
    })
}

/// The evolving state of one adaptation experiment.
#[derive(Debug, Clone)]
pub struct AdaptationState {
    pub model: MlpModel,
    /// Original training data plus accumulated ground-truth annotations.
    /// Pseudo-labels never enter this pool.
    pub labeled_pool: TrainSet,
    pub history: Vec<MetricsRecord>,
    pub confidence: Vec<ConfidenceRow>,
    original_pool_len: usize,
    last_month: Option<u32>,
}

impl AdaptationState {
    pub fn new(model: MlpModel, labeled_pool: TrainSet) -> Self {
        let original_pool_len = labeled_pool.len();
        AdaptationState {
            model,
            labeled_pool,
            history: Vec::new(),
            confidence: Vec::new(),
            original_pool_len,
            last_month: None,
        }
    }

    /// The pool only ever grows, so retaining the original training data is
    /// equivalent to never shrinking below its initial size.
    pub fn retains_original_training_data(&self) -> bool {
        self.labeled_pool.len() >= self.original_pool_len
    }

    pub(crate) fn check_month_order(&mut self, month: u32) -> Result<()> {
        if let Some(last) = self.last_month {
            if month <= last {
                return Err(Error::Sequencing(format!(
                    "month {month} re-played after month {last}"
                )));
            }
        }
        self.last_month = Some(month);
        Ok(())
    }

    /// Score the batch with the *current* model and append the prequential
    /// record. Returns the probabilities for the update step.
    pub(crate) fn evaluate(&mut self, batch: &MonthBatch) -> Result<Array2<f64>> {
        let probs = self.model.predict_proba(&batch.features())?;
        let truths = batch.truths()?;
        let preds: Vec<u8> = probs
            .axis_iter(Axis(0))
            .map(|row| u8::from(row[1] > row[0]))
            .collect();
        self.history
            .push(compute_metrics(batch.month, &preds, &truths)?);
        self.confidence
            .extend(confidence_rows(batch.month, &probs, &truths));
        Ok(probs)
    }

    /// One semi-supervised fine-tuning pass over the labeled pool (plus an
    /// optional pseudo pool), continuing from the current parameters.
    pub(crate) fn fine_tune(
        &mut self,
        pseudo: Option<&TrainSet>,
        morph: &MorphConfig,
        tune: &TuneParams,
        train_seed: u64,
    ) -> Result<()> {
        let cfg = TrainConfig {
            epochs: morph.fine_tune_epochs,
            batch_size: tune.batch_size,
            lambda_u: morph.lambda_u,
            adam: tune.adam,
        };
        let (model, _) = train(self.model.clone(), &self.labeled_pool, pseudo, &cfg, train_seed)?;
        self.model = model;
        Ok(())
    }
}

/// Materialize the selected pseudo-labels as a training pool (malware picks
/// become target 1, benign picks target 0).
pub(crate) fn pseudo_train_set(
    batch: &MonthBatch,
    selection: &PseudoLabelSet,
) -> Result<Option<TrainSet>> {
    if selection.is_empty() {
        return Ok(None);
    }
    let rows: Vec<(&[f64], u8)> = selection
        .malware
        .iter()
        .map(|&(i, _)| (batch.samples[i].features.as_slice(), 1u8))
        .chain(
            selection
                .benign
                .iter()
                .map(|&(i, _)| (batch.samples[i].features.as_slice(), 0u8)),
        )
        .collect();
    TrainSet::from_rows(&rows).map(Some)
}

/// One month of self-training: score the batch (prequential record), select
/// pseudo-labels, and fine-tune on `labeled_pool + selection`. Pseudo-labels
/// are transient; they never join the labeled pool.
pub fn adapt_month(
    state: &mut AdaptationState,
    batch: &MonthBatch,
    config: &MorphConfig,
    tune: &TuneParams,
    root_seed: u64,
) -> Result<()> {
    config.validate()?;
    state.check_month_order(batch.month)?;
    let probs = state.evaluate(batch)?;

    let sel_seed = seed::derive_n(root_seed, "select", batch.month as u64);
    let selection = select_samples(batch.month, &probs, config, sel_seed)?;
    let rec = state.history.last_mut().expect("evaluate just pushed");
    rec.pseudo_malware = selection.malware.len() as u64;
    rec.pseudo_benign = selection.benign.len() as u64;

    let pseudo = pseudo_train_set(batch, &selection)?;
    let train_seed = seed::derive_n(root_seed, "adapt_train", batch.month as u64);
    state.fine_tune(pseudo.as_ref(), config, tune, train_seed)?;
    debug_assert!(state.retains_original_training_data());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::nn::init_model;
    use ndarray::arr2;

    fn probs_from_malware_conf(confs: &[f64]) -> Array2<f64> {
        let rows: Vec<[f64; 2]> = confs.iter().map(|&c| [1.0 - c, c]).collect();
        Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap()
    }

    #[test]
    fn threshold_labeling_examples() {
        let probs = arr2(&[[0.7, 0.3], [0.55, 0.45], [0.6, 0.4]]);
        let labels = pseudo_label(&probs, 0.6).unwrap();
        assert_eq!(labels[0], Some(0));
        assert_eq!(labels[1], None);
        // Boundary inclusive: max prob exactly tau still labels.
        assert_eq!(labels[2], Some(0));
    }

    #[test]
    fn labeling_rejects_bad_rows() {
        let probs = arr2(&[[0.9, 0.2]]);
        assert!(matches!(pseudo_label(&probs, 0.6), Err(Error::Input(_))));
        let probs = arr2(&[[0.5, 0.5]]);
        assert!(matches!(pseudo_label(&probs, 0.4), Err(Error::Config(_))));
    }

    #[test]
    fn malware_picks_respect_floor_and_cap() {
        // Malware confidences 0.55, 0.62, 0.70, 0.90 plus enough benign rows.
        let mut rows = vec![
            [0.45, 0.55],
            [0.38, 0.62],
            [0.30, 0.70],
            [0.10, 0.90],
        ];
        rows.extend([[0.99, 0.01], [0.95, 0.05], [0.80, 0.20]]);
        let probs = Array2::from_shape_vec((7, 2), rows.concat()).unwrap();
        let cfg = MorphConfig {
            n_m_cap: Some(2),
            ..Default::default()
        };
        for seed in 0..50 {
            let sel = select_samples(0, &probs, &cfg, seed).unwrap();
            assert_eq!(sel.malware.len(), 2);
            assert_eq!(sel.benign.len(), 2);
            for &(i, conf) in &sel.malware {
                assert!(conf > 0.6, "confidence {conf} below tau_m");
                assert_ne!(i, 0, "0.55 must never be selected");
            }
        }
    }

    #[test]
    fn benign_picks_are_top_confidence() {
        // Two eligible malware rows force N_M = 2.
        let rows = vec![
            [0.30, 0.70],
            [0.20, 0.80],
            [0.99, 0.01],
            [0.95, 0.05],
            [0.80, 0.20],
            [0.61, 0.39],
        ];
        let probs = Array2::from_shape_vec((6, 2), rows.concat()).unwrap();
        let sel = select_samples(0, &probs, &MorphConfig::default(), 7).unwrap();
        let picked: Vec<usize> = sel.benign.iter().map(|&(i, _)| i).collect();
        assert_eq!(picked, vec![2, 3], "expected exactly the 0.99 and 0.95 rows");
    }

    #[test]
    fn no_eligible_malware_gives_empty_balanced_set() {
        let probs = probs_from_malware_conf(&[0.55, 0.58, 0.2, 0.1]);
        let sel = select_samples(0, &probs, &MorphConfig::default(), 1).unwrap();
        assert!(sel.is_empty());
    }

    #[test]
    fn scarce_benign_truncates_both_sides() {
        let rows = vec![[0.1, 0.9], [0.2, 0.8], [0.3, 0.7], [0.9, 0.1]];
        let probs = Array2::from_shape_vec((4, 2), rows.concat()).unwrap();
        let sel = select_samples(0, &probs, &MorphConfig::default(), 3).unwrap();
        assert_eq!(sel.malware.len(), 1);
        assert_eq!(sel.benign.len(), 1);
    }

    #[test]
    fn selection_is_deterministic() {
        let probs = probs_from_malware_conf(&[0.9, 0.8, 0.75, 0.7, 0.65, 0.3, 0.2, 0.1]);
        let cfg = MorphConfig {
            n_m_cap: Some(3),
            ..Default::default()
        };
        assert_eq!(
            select_samples(2, &probs, &cfg, 99).unwrap(),
            select_samples(2, &probs, &cfg, 99).unwrap()
        );
    }

    #[test]
    fn tau_ordering_enforced() {
        let cfg = MorphConfig {
            tau_m: 0.8,
            tau_b: Some(0.7),
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    fn tiny_batch(month: u32) -> MonthBatch {
        let mut samples = Vec::new();
        for i in 0..30 {
            let malware = i % 2 == 0;
            let x = if malware { 1.0 } else { -1.0 };
            samples.push(Sample {
                features: vec![x + (i as f64) * 0.01, 0.3],
                label: Some(u8::from(malware)),
                month,
                family: None,
            });
        }
        MonthBatch { month, samples }
    }

    fn tiny_state(seed: u64) -> AdaptationState {
        let model = init_model(&[2, 8, 2], 0.0, seed).unwrap();
        let rows: Vec<(Vec<f64>, u8)> = (0..40)
            .map(|i| {
                let malware = i % 2 == 0;
                let x: f64 = if malware { 1.0 } else { -1.0 };
                (vec![x * (1.0 + (i as f64) * 0.002), -0.1], u8::from(malware))
            })
            .collect();
        let borrowed: Vec<(&[f64], u8)> = rows.iter().map(|(f, l)| (f.as_slice(), *l)).collect();
        let pool = TrainSet::from_rows(&borrowed).unwrap();
        // Pre-train so month-1 predictions clear tau_m and selection is
        // non-trivial.
        let cfg = crate::nn::TrainConfig {
            epochs: 60,
            batch_size: 8,
            lambda_u: 1.0,
            adam: Default::default(),
        };
        let (model, _) = train(model, &pool, None, &cfg, seed ^ 0xA5).unwrap();
        AdaptationState::new(model, pool)
    }

    #[test]
    fn metrics_precede_adaptation() {
        let mut state = tiny_state(1);
        let pre_model = state.model.clone();
        let batch = tiny_batch(1);
        adapt_month(&mut state, &batch, &MorphConfig::default(), &TuneParams::default(), 5)
            .unwrap();

        // Recompute from the pre-adaptation checkpoint: identical record.
        let probs = pre_model.predict_proba(&batch.features()).unwrap();
        let preds: Vec<u8> = probs
            .axis_iter(Axis(0))
            .map(|r| u8::from(r[1] > r[0]))
            .collect();
        let expect = compute_metrics(1, &preds, &batch.truths().unwrap()).unwrap();
        let got = &state.history[0];
        assert_eq!((got.tp, got.fp, got.tn, got.fn_), (expect.tp, expect.fp, expect.tn, expect.fn_));
        assert!(state.retains_original_training_data());
    }

    #[test]
    fn month_ordering_enforced() {
        let mut state = tiny_state(1);
        let cfg = MorphConfig::default();
        let tune = TuneParams::default();
        adapt_month(&mut state, &tiny_batch(2), &cfg, &tune, 5).unwrap();
        let err = adapt_month(&mut state, &tiny_batch(2), &cfg, &tune, 5);
        assert!(matches!(err, Err(Error::Sequencing(_))));
    }

    #[test]
    fn lambda_zero_equals_supervised_fine_tune() {
        let batch = tiny_batch(1);
        let run = |lambda: f64, pseudo_off: bool| {
            let mut state = tiny_state(3);
            let cfg = MorphConfig {
                lambda_u: lambda,
                // An unreachable floor empties the selection when asked.
                tau_m: if pseudo_off { 0.999_999 } else { 0.6 },
                ..Default::default()
            };
            adapt_month(&mut state, &batch, &cfg, &TuneParams::default(), 5).unwrap();
            state
        };
        let with_zero = run(0.0, false);
        // Sanity: pseudo labels were actually selected in the lambda=0 run.
        assert!(with_zero.history[0].pseudo_malware > 0);

        let supervised = run(0.0, true);
        assert_eq!(supervised.history[0].pseudo_malware, 0);
        for (a, b) in with_zero
            .model
            .weights()
            .iter()
            .zip(supervised.model.weights())
        {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

//! Uncertainty-sampling active learning and the monthly update schedules.
//!
//! Annotation reveals a sample's hidden ground truth and moves it into the
//! labeled pool permanently. Within the same month an annotated sample is no
//! longer a pseudo-label candidate.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::adapt::{
    pseudo_train_set, select_samples_excluding, AdaptationState, MorphConfig, TuneParams,
};
use crate::data::MonthBatch;
use crate::error::{Error, Result};
use crate::nn::TrainSet;
use crate::seed;

/// Monthly update policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Evaluate only; the model never changes.
    Static,
    /// Self-training every month, no annotations.
    MorphOnly,
    /// Annotate the budget and fine-tune supervised, every month.
    AlEveryMonth,
    /// Odd test months annotate, even test months self-train (the first test
    /// month is an annotation month).
    AlternateAlMorph,
    /// Annotate the budget, then self-train on the residual unannotated
    /// samples in the same month.
    AlPlusMorphResidual,
}

impl Schedule {
    pub fn uses_annotations(self) -> bool {
        matches!(
            self,
            Schedule::AlEveryMonth | Schedule::AlternateAlMorph | Schedule::AlPlusMorphResidual
        )
    }
}

/// Active-learning settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ALConfig {
    /// Samples annotated per annotation event.
    pub budget_per_update: usize,
    pub schedule: Schedule,
}

impl ALConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.uses_annotations() && self.budget_per_update < 1 {
            return Err(Error::Config(
                "budget_per_update must be >= 1 for schedules that annotate".into(),
            ));
        }
        Ok(())
    }
}

/// One annotation event: which samples were revealed and what they were.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub month: u32,
    pub indices: Vec<usize>,
    pub labels: Vec<u8>,
}

/// Indices of the `budget` samples with the smallest max-class probability
/// (the most uncertain softmax outputs), ties broken by ascending index.
/// When the batch is not larger than the budget, every index in original
/// order.
pub fn select_uncertain(probs: &Array2<f64>, budget: usize) -> Vec<usize> {
    let n = probs.nrows();
    if budget >= n {
        return (0..n).collect();
    }
    let mut by_conf: Vec<(usize, f64)> = probs
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| (i, row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
        .collect();
    by_conf.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite probs").then(a.0.cmp(&b.0)));
    by_conf[..budget].iter().map(|&(i, _)| i).collect()
}

/// Reveal ground truth for the selected indices and move those samples into
/// the labeled pool.
fn annotate(
    state: &mut AdaptationState,
    batch: &MonthBatch,
    probs: &Array2<f64>,
    budget: usize,
) -> Result<AnnotationEvent> {
    let indices = select_uncertain(probs, budget);
    let truths = batch.truths()?;
    let labels: Vec<u8> = indices.iter().map(|&i| truths[i]).collect();
    let rows: Vec<(&[f64], u8)> = indices
        .iter()
        .zip(&labels)
        .map(|(&i, &l)| (batch.samples[i].features.as_slice(), l))
        .collect();
    state.labeled_pool.extend(&TrainSet::from_rows(&rows)?)?;
    Ok(AnnotationEvent {
        month: batch.month,
        indices,
        labels,
    })
}

/// Select pseudo-labels over the non-annotated samples and record the counts.
fn build_pseudo(
    state: &mut AdaptationState,
    batch: &MonthBatch,
    probs: &Array2<f64>,
    excluded: &BTreeSet<usize>,
    morph: &MorphConfig,
    root_seed: u64,
) -> Result<Option<TrainSet>> {
    let sel_seed = seed::derive_n(root_seed, "select", batch.month as u64);
    let selection = select_samples_excluding(batch.month, probs, excluded, morph, sel_seed)?;
    let rec = state.history.last_mut().expect("evaluate precedes updates");
    rec.pseudo_malware = selection.malware.len() as u64;
    rec.pseudo_benign = selection.benign.len() as u64;
    pseudo_train_set(batch, &selection)
}

/// Replay the test months under a schedule. Evaluation always precedes the
/// month's update; annotation events are returned for the audit log.
pub fn run_schedule(
    state: &mut AdaptationState,
    test_months: &[MonthBatch],
    al: &ALConfig,
    morph: &MorphConfig,
    tune: &TuneParams,
    root_seed: u64,
) -> Result<Vec<AnnotationEvent>> {
    al.validate()?;
    morph.validate()?;
    let mut events = Vec::new();

    for (pos, batch) in test_months.iter().enumerate() {
        state.check_month_order(batch.month)?;
        let probs = state.evaluate(batch)?;
        let train_seed = seed::derive_n(root_seed, "adapt_train", batch.month as u64);

        match al.schedule {
            Schedule::Static => {}
            Schedule::MorphOnly => {
                let pseudo = build_pseudo(state, batch, &probs, &BTreeSet::new(), morph, root_seed)?;
                state.fine_tune(pseudo.as_ref(), morph, tune, train_seed)?;
            }
            Schedule::AlEveryMonth => {
                let ev = annotate(state, batch, &probs, al.budget_per_update)?;
                record_annotations(state, &ev);
                events.push(ev);
                state.fine_tune(None, morph, tune, train_seed)?;
            }
            Schedule::AlternateAlMorph => {
                if pos % 2 == 0 {
                    let ev = annotate(state, batch, &probs, al.budget_per_update)?;
                    record_annotations(state, &ev);
                    events.push(ev);
                    state.fine_tune(None, morph, tune, train_seed)?;
                } else {
                    let pseudo =
                        build_pseudo(state, batch, &probs, &BTreeSet::new(), morph, root_seed)?;
                    state.fine_tune(pseudo.as_ref(), morph, tune, train_seed)?;
                }
            }
            Schedule::AlPlusMorphResidual => {
                let ev = annotate(state, batch, &probs, al.budget_per_update)?;
                record_annotations(state, &ev);
                let excluded: BTreeSet<usize> = ev.indices.iter().copied().collect();
                events.push(ev);
                let pseudo = build_pseudo(state, batch, &probs, &excluded, morph, root_seed)?;
                state.fine_tune(pseudo.as_ref(), morph, tune, train_seed)?;
            }
        }
        debug_assert!(state.retains_original_training_data());
    }
    Ok(events)
}

fn record_annotations(state: &mut AdaptationState, ev: &AnnotationEvent) {
    let rec = state.history.last_mut().expect("evaluate precedes updates");
    rec.annotations_used = ev.indices.len() as u64;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, Sample, SyntheticConfig};
    use crate::metrics::summarize;
    use crate::nn::init_model;
    use ndarray::arr2;

    #[test]
    fn uncertainty_picks_lowest_max_prob() {
        let probs = arr2(&[[0.51, 0.49], [0.99, 0.01], [0.60, 0.40]]);
        assert_eq!(select_uncertain(&probs, 2), vec![0, 2]);
    }

    #[test]
    fn budget_exhaustion_keeps_original_order() {
        let probs = arr2(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]);
        assert_eq!(select_uncertain(&probs, 3), vec![0, 1, 2]);
        assert_eq!(select_uncertain(&probs, 10), vec![0, 1, 2]);
    }

    #[test]
    fn equal_probs_tie_break_by_index() {
        let probs = arr2(&[[0.7, 0.3], [0.7, 0.3], [0.7, 0.3], [0.7, 0.3]]);
        assert_eq!(select_uncertain(&probs, 2), vec![0, 1]);
    }

    fn small_stream(months: u32) -> crate::data::DriftStream {
        gen_synthetic(
            &SyntheticConfig {
                feature_dim: 4,
                months,
                rotation_deg_per_month: 15.0,
                sigma: 0.1,
                samples_per_month: 80,
                train_samples: 120,
                dev_samples: 60,
                ..Default::default()
            },
            99,
        )
        .unwrap()
    }

    fn initial_state(stream: &crate::data::DriftStream, seed: u64) -> AdaptationState {
        let rows: Vec<(&[f64], u8)> = stream
            .train
            .iter()
            .map(|s: &Sample| (s.features.as_slice(), s.label.unwrap()))
            .collect();
        let pool = TrainSet::from_rows(&rows).unwrap();
        let model = init_model(&[stream.feature_dim, 8, 2], 0.0, seed).unwrap();
        // A handful of supervised epochs stands in for full initial training.
        let cfg = crate::nn::TrainConfig {
            epochs: 30,
            batch_size: 16,
            lambda_u: 1.0,
            adam: Default::default(),
        };
        let (model, _) = crate::nn::train(model, &pool, None, &cfg, seed ^ 1).unwrap();
        AdaptationState::new(model, pool)
    }

    fn run(
        stream: &crate::data::DriftStream,
        schedule: Schedule,
        budget: usize,
    ) -> (AdaptationState, Vec<AnnotationEvent>) {
        let mut state = initial_state(stream, 5);
        let al = ALConfig {
            budget_per_update: budget,
            schedule,
        };
        let events = run_schedule(
            &mut state,
            &stream.test_months,
            &al,
            &MorphConfig::default(),
            &TuneParams {
                batch_size: 16,
                ..Default::default()
            },
            77,
        )
        .unwrap();
        (state, events)
    }

    #[test]
    fn static_schedule_never_updates() {
        let stream = small_stream(3);
        let mut state = initial_state(&stream, 5);
        let params_before = state.model.clone();
        let pool_before = state.labeled_pool.len();
        let al = ALConfig {
            budget_per_update: 10,
            schedule: Schedule::Static,
        };
        let events = run_schedule(
            &mut state,
            &stream.test_months,
            &al,
            &MorphConfig::default(),
            &TuneParams::default(),
            77,
        )
        .unwrap();
        assert!(events.is_empty());
        assert_eq!(state.model, params_before);
        assert_eq!(state.labeled_pool.len(), pool_before);
        assert_eq!(state.history.len(), 3);
    }

    #[test]
    fn alternate_schedule_annotates_every_other_month() {
        let stream = small_stream(5);
        let (state, events) = run(&stream, Schedule::AlternateAlMorph, 10);
        // ceil(5/2) = 3 events, on the 1st, 3rd, and 5th test months.
        assert_eq!(events.len(), 3);
        let months: Vec<u32> = events.iter().map(|e| e.month).collect();
        assert_eq!(months, vec![1, 3, 5]);
        // Annotated samples joined the pool permanently.
        assert_eq!(state.labeled_pool.len(), 120 + 30);
        // Odd (0-based) months did pseudo-labeling instead.
        assert_eq!(state.history[0].annotations_used, 10);
        assert_eq!(state.history[1].annotations_used, 0);
    }

    #[test]
    fn annotations_never_exceed_budget_and_reveal_true_labels() {
        let stream = small_stream(4);
        let (_, events) = run(&stream, Schedule::AlEveryMonth, 7);
        assert_eq!(events.len(), 4);
        for ev in &events {
            assert!(ev.indices.len() <= 7);
            let batch = stream
                .test_months
                .iter()
                .find(|b| b.month == ev.month)
                .unwrap();
            for (&i, &l) in ev.indices.iter().zip(&ev.labels) {
                assert_eq!(batch.samples[i].label, Some(l));
            }
        }
    }

    #[test]
    fn full_budget_al_dominates_morph_only() {
        let stream = small_stream(4);
        let (al_state, _) = run(&stream, Schedule::AlEveryMonth, 80);
        let (morph_state, _) = run(&stream, Schedule::MorphOnly, 0);
        let al_f1 = summarize(&al_state.history).unwrap().mean_f1;
        let morph_f1 = summarize(&morph_state.history).unwrap().mean_f1;
        assert!(
            al_f1 >= morph_f1 - 1e-9,
            "full supervision {al_f1} vs pseudo-labels {morph_f1}"
        );
    }

    #[test]
    fn residual_schedule_excludes_annotated_from_pseudo() {
        // All rows are confident malware; annotating the 2 least confident
        // leaves 3 candidates, and balance against 0 benign empties the set.
        let probs = arr2(&[
            [0.1, 0.9],
            [0.2, 0.8],
            [0.3, 0.7],
            [0.35, 0.65],
            [0.05, 0.95],
        ]);
        let annotated: BTreeSet<usize> = select_uncertain(&probs, 2).into_iter().collect();
        assert_eq!(annotated, BTreeSet::from([2, 3]));
        let sel = select_samples_excluding(1, &probs, &annotated, &MorphConfig::default(), 3)
            .unwrap();
        assert!(sel.malware.iter().all(|&(i, _)| !annotated.contains(&i)));
    }

    #[test]
    fn budget_required_when_annotating() {
        let al = ALConfig {
            budget_per_update: 0,
            schedule: Schedule::AlEveryMonth,
        };
        assert!(al.validate().is_err());
        let ok = ALConfig {
            budget_per_update: 0,
            schedule: Schedule::MorphOnly,
        };
        assert!(ok.validate().is_ok());
    }
}

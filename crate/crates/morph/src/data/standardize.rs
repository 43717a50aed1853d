//! Per-feature standardization fit once on the training split.
//!
//! Statistics are never refit mid-stream: every later month is transformed
//! with the training-time mean and deviation so the model's input space stays
//! fixed while it is fine-tuned.

use serde::{Deserialize, Serialize};

use super::{DriftStream, MonthBatch, Sample};
use crate::error::{Error, Result};

/// Per-feature mean and standard deviation (population form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Fit on training samples. Features with (numerically) zero variance get
    /// their deviation clamped to 1, so they map to 0 after centering.
    pub fn fit(train: &[Sample]) -> Result<Self> {
        let first = train
            .first()
            .ok_or_else(|| Error::Input("cannot fit a standardizer on an empty split".into()))?;
        let dim = first.features.len();
        let n = train.len() as f64;

        let mut mean = vec![0.0; dim];
        for s in train {
            for (m, &v) in mean.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }

        let mut var = vec![0.0; dim];
        for s in train {
            for ((v, &x), &m) in var.iter_mut().zip(&s.features).zip(&mean) {
                let d = x - m;
                *v += d * d;
            }
        }
        let std = var
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| {
                let s = (v / n).sqrt();
                if s <= 1e-12 * m.abs().max(1.0) {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn transform_features(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect()
    }

    pub fn invert_features(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&z, &m), &s)| z * s + m)
            .collect()
    }

    pub fn transform_samples(&self, samples: &[Sample]) -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample {
                features: self.transform_features(&s.features),
                ..s.clone()
            })
            .collect()
    }

    /// Transform a whole stream with the training statistics.
    pub fn transform_stream(&self, stream: &DriftStream) -> DriftStream {
        DriftStream {
            feature_dim: stream.feature_dim,
            train: self.transform_samples(&stream.train),
            dev: self.transform_samples(&stream.dev),
            test_months: stream
                .test_months
                .iter()
                .map(|b| MonthBatch {
                    month: b.month,
                    samples: self.transform_samples(&b.samples),
                })
                .collect(),
        }
    }
}

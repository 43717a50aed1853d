//! Dataset ingestion, standardization, monthly-batch streams, and the
//! synthetic gradual-drift generator.

mod io;
mod standardize;
mod synthetic;

pub use io::{
    load_stream, parse_csv_stream, parse_ndjson_stream, write_csv_stream, write_ndjson_stream,
    write_stream, StreamFormat,
};
pub use standardize::Standardizer;
pub use synthetic::{gen_synthetic, FamilyMix, SyntheticConfig};

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One application: a feature vector plus optional ground truth and tags.
/// Labels are 0 = benign, 1 = malware.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Option<u8>,
    pub month: u32,
    pub family: Option<String>,
}

/// All test samples arriving in one month.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthBatch {
    pub month: u32,
    pub samples: Vec<Sample>,
}

impl MonthBatch {
    /// Feature matrix, one row per sample.
    pub fn features(&self) -> Array2<f64> {
        features_matrix(&self.samples)
    }

    /// Ground-truth labels. Errors if any sample lacks one — metrics and
    /// annotation need replayed truth even though the model never sees it.
    pub fn truths(&self) -> Result<Vec<u8>> {
        labels_of(&self.samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A train/dev split plus ordered monthly test batches.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftStream {
    pub feature_dim: usize,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test_months: Vec<MonthBatch>,
}

impl DriftStream {
    /// Check the structural invariants: consistent feature dimension,
    /// strictly increasing non-empty test months.
    pub fn validate(&self) -> Result<()> {
        if self.test_months.is_empty() {
            return Err(Error::Input("no test months".into()));
        }
        for pair in self.test_months.windows(2) {
            if pair[1].month <= pair[0].month {
                return Err(Error::Input(format!(
                    "test months not strictly increasing: {} then {}",
                    pair[0].month, pair[1].month
                )));
            }
        }
        let all = self
            .train
            .iter()
            .chain(&self.dev)
            .chain(self.test_months.iter().flat_map(|m| &m.samples));
        for s in all {
            if s.features.len() != self.feature_dim {
                return Err(Error::Shape(format!(
                    "sample has {} features, stream declares {}",
                    s.features.len(),
                    self.feature_dim
                )));
            }
        }
        for b in &self.test_months {
            if b.samples.is_empty() {
                return Err(Error::Input(format!("test month {} is empty", b.month)));
            }
            if b.samples.iter().any(|s| s.month != b.month) {
                return Err(Error::Input(format!(
                    "month batch {} contains samples from other months",
                    b.month
                )));
            }
        }
        Ok(())
    }
}

/// Stack sample features into a matrix, one row per sample.
pub fn features_matrix(samples: &[Sample]) -> Array2<f64> {
    let dim = samples.first().map_or(0, |s| s.features.len());
    let mut m = Array2::zeros((samples.len(), dim));
    for (i, s) in samples.iter().enumerate() {
        for (j, &v) in s.features.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

/// Collect ground-truth labels, erroring on any unlabeled sample.
pub fn labels_of(samples: &[Sample]) -> Result<Vec<u8>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label
                .ok_or_else(|| Error::Input(format!("sample {i} has no ground-truth label")))
        })
        .collect()
}

/// Restrict training malware to the `top_k` most frequent families (ties
/// broken lexicographically). Benign training samples, the dev split, and
/// all test months are untouched.
pub fn limit_families(stream: &DriftStream, top_k: usize) -> Result<DriftStream> {
    if top_k < 1 {
        return Err(Error::Config("top_k must be >= 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &stream.train {
        if s.label == Some(1) {
            let fam = s.family.as_deref().ok_or_else(|| {
                Error::Input("training malware sample lacks a family tag".into())
            })?;
            *counts.entry(fam).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic, so a stable sort by count
    // leaves ties in lexicographic order.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    let keep: Vec<&str> = ranked.iter().take(top_k).map(|(f, _)| *f).collect();

    let train = stream
        .train
        .iter()
        .filter(|s| {
            s.label != Some(1) || s.family.as_deref().is_some_and(|f| keep.contains(&f))
        })
        .cloned()
        .collect();
    Ok(DriftStream {
        feature_dim: stream.feature_dim,
        train,
        dev: stream.dev.clone(),
        test_months: stream.test_months.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(label: u8, family: Option<&str>) -> Sample {
        Sample {
            features: vec![0.0, 0.0],
            label: Some(label),
            month: 0,
            family: family.map(str::to_owned),
        }
    }

    fn family_stream() -> DriftStream {
        let mut train = Vec::new();
        for _ in 0..5 {
            train.push(sample(1, Some("A")));
        }
        for _ in 0..3 {
            train.push(sample(1, Some("B")));
        }
        train.push(sample(1, Some("C")));
        for _ in 0..4 {
            train.push(sample(0, None));
        }
        let test = MonthBatch {
            month: 1,
            samples: vec![Sample {
                month: 1,
                ..sample(1, Some("C"))
            }],
        };
        DriftStream {
            feature_dim: 2,
            train,
            dev: vec![sample(0, None)],
            test_months: vec![test],
        }
    }

    #[test]
    fn frequency_cut_keeps_top_k() {
        let s = family_stream();
        let cut = limit_families(&s, 2).unwrap();
        let fams: Vec<&str> = cut
            .train
            .iter()
            .filter(|x| x.label == Some(1))
            .map(|x| x.family.as_deref().unwrap())
            .collect();
        assert_eq!(fams.len(), 8);
        assert!(fams.iter().all(|f| *f == "A" || *f == "B"));
        // Benign untouched.
        assert_eq!(cut.train.iter().filter(|x| x.label == Some(0)).count(), 4);
        // Test months untouched.
        assert_eq!(cut.test_months, s.test_months);
    }

    #[test]
    fn top_k_at_least_family_count_is_noop() {
        let s = family_stream();
        let cut = limit_families(&s, 10).unwrap();
        assert_eq!(cut, s);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut s = family_stream();
        // Make B and C tie at 3; the cut at k=2 must keep A and B (B < C).
        s.train.push(sample(1, Some("C")));
        s.train.push(sample(1, Some("C")));
        let cut = limit_families(&s, 2).unwrap();
        assert!(cut
            .train
            .iter()
            .filter(|x| x.label == Some(1))
            .all(|x| x.family.as_deref() != Some("C")));
    }

    #[test]
    fn missing_family_tag_is_an_error() {
        let mut s = family_stream();
        s.train.push(sample(1, None));
        assert!(matches!(limit_families(&s, 2), Err(Error::Input(_))));
        assert!(matches!(limit_families(&s, 0), Err(Error::Config(_))));
    }

    #[test]
    fn validate_rejects_disorder() {
        let mut s = family_stream();
        s.test_months.push(MonthBatch {
            month: 1,
            samples: vec![Sample {
                month: 1,
                ..sample(0, None)
            }],
        });
        assert!(s.validate().is_err());
    }
}

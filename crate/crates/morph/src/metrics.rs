//! Per-month prequential metrics and confidence exports.
//!
//! Malware is the positive class (label 1) everywhere in this crate. FNR is
//! therefore missed malware and FPR is benign flagged as malicious.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts and derived rates for one evaluated month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub month: u32,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// Ground-truth labels revealed by active learning this month.
    pub annotations_used: u64,
    /// Pseudo-labeled malware samples selected this month.
    pub pseudo_malware: u64,
    /// Pseudo-labeled benign samples selected this month.
    pub pseudo_benign: u64,
}

/// Tally predictions against ground truth for one month.
///
/// Zero-denominator convention: F1 = 0 when 2TP+FP+FN = 0, FPR = 0 when there
/// are no negatives, FNR = 0 when there are no positives. Degenerate months
/// must not poison run averages.
pub fn compute_metrics(month: u32, predictions: &[u8], truths: &[u8]) -> Result<MetricsRecord> {
    if predictions.len() != truths.len() {
        return Err(Error::Input(format!(
            "predictions ({}) and truths ({}) differ in length",
            predictions.len(),
            truths.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in predictions.iter().zip(truths) {
        if p > 1 || t > 1 {
            return Err(Error::Input(format!("labels must be 0 or 1, got ({p}, {t})")));
        }
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(MetricsRecord {
        month,
        tp,
        fp,
        tn,
        fn_,
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        fpr: ratio(fp, fp + tn),
        fnr: ratio(fn_, fn_ + tp),
        annotations_used: 0,
        pseudo_malware: 0,
        pseudo_benign: 0,
    })
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One evaluated sample's confidence row, for downstream KDE / histogram plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub month: u32,
    pub max_prob: f64,
    pub correct: bool,
    pub true_label: u8,
    pub pred_label: u8,
}

/// Build confidence rows from probability rows and ground truth. Ties between
/// the two classes predict benign, matching prediction everywhere else.
pub fn confidence_rows(
    month: u32,
    probs: &ndarray::Array2<f64>,
    truths: &[u8],
) -> Vec<ConfidenceRow> {
    probs
        .axis_iter(ndarray::Axis(0))
        .zip(truths)
        .map(|(row, &t)| {
            let pred = u8::from(row[1] > row[0]);
            ConfidenceRow {
                month,
                max_prob: row[pred as usize],
                correct: pred == t,
                true_label: t,
                pred_label: pred,
            }
        })
        .collect()
}

/// Score samples with a model and export one confidence row per sample.
/// Samples must carry ground truth.
pub fn export_confidence(
    model: &crate::nn::MlpModel,
    month: u32,
    samples: &[crate::data::Sample],
) -> Result<Vec<ConfidenceRow>> {
    let probs = model.predict_proba(&crate::data::features_matrix(samples))?;
    let truths = crate::data::labels_of(samples)?;
    Ok(confidence_rows(month, &probs, &truths))
}

/// Arithmetic means over a run's test months.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub months: usize,
    pub mean_f1: f64,
    pub mean_fpr: f64,
    pub mean_fnr: f64,
}

/// Month-unweighted means over a history.
pub fn summarize(history: &[MetricsRecord]) -> Result<Summary> {
    if history.is_empty() {
        return Err(Error::Input("cannot summarize an empty history".into()));
    }
    let n = history.len() as f64;
    Ok(Summary {
        months: history.len(),
        mean_f1: history.iter().map(|r| r.f1).sum::<f64>() / n,
        mean_fpr: history.iter().map(|r| r.fpr).sum::<f64>() / n,
        mean_fnr: history.iter().map(|r| r.fnr).sum::<f64>() / n,
    })
}

/// Summary deltas of a run against a reference covering identical months.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryDelta {
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Means plus deltas (`run - reference`). Errors if the two histories do not
/// cover the same months in the same order.
pub fn summarize_vs(
    history: &[MetricsRecord],
    reference: &[MetricsRecord],
) -> Result<(Summary, SummaryDelta)> {
    let run_months: Vec<u32> = history.iter().map(|r| r.month).collect();
    let ref_months: Vec<u32> = reference.iter().map(|r| r.month).collect();
    if run_months != ref_months {
        return Err(Error::Input(format!(
            "month mismatch with reference: run {run_months:?} vs reference {ref_months:?}"
        )));
    }
    let s = summarize(history)?;
    let r = summarize(reference)?;
    Ok((
        s,
        SummaryDelta {
            f1: s.mean_f1 - r.mean_f1,
            fpr: s.mean_fpr - r.mean_fpr,
            fnr: s.mean_fnr - r.mean_fnr,
        },
    ))
}

const METRICS_HEADER: [&str; 11] = [
    "month",
    "tp",
    "fp",
    "tn",
    "fn",
    "f1",
    "fpr",
    "fnr",
    "annotations_used",
    "pseudo_malware",
    "pseudo_benign",
];

/// Write a metrics history as CSV. Float formatting is the shortest exact
/// round-trip representation, so equal histories serialize byte-identically.
pub fn write_metrics_csv<W: Write>(w: W, history: &[MetricsRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(METRICS_HEADER)
        .map_err(|e| Error::Input(e.to_string()))?;
    for r in history {
        wtr.write_record([
            r.month.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.tn.to_string(),
            r.fn_.to_string(),
            r.f1.to_string(),
            r.fpr.to_string(),
            r.fnr.to_string(),
            r.annotations_used.to_string(),
            r.pseudo_malware.to_string(),
            r.pseudo_benign.to_string(),
        ])
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, history: &[MetricsRecord]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_metrics_csv(std::io::BufWriter::new(f), history)
}

/// Read a metrics history CSV written by [`write_metrics_csv`].
pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<MetricsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    {
        let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != METRICS_HEADER {
            return Err(Error::parse(1, format!("unexpected header {got:?}")));
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
        let field = |idx: usize| -> Result<&str> {
            rec.get(idx)
                .ok_or_else(|| Error::parse(line, format!("missing column {idx}")))
        };
        let int = |idx: usize| -> Result<u64> {
            field(idx)?
                .parse()
                .map_err(|e| Error::parse(line, format!("bad integer: {e}")))
        };
        let real = |idx: usize| -> Result<f64> {
            field(idx)?
                .parse()
                .map_err(|e| Error::parse(line, format!("bad float: {e}")))
        };
        out.push(MetricsRecord {
            month: int(0)? as u32,
            tp: int(1)?,
            fp: int(2)?,
            tn: int(3)?,
            fn_: int(4)?,
            f1: real(5)?,
            fpr: real(6)?,
            fnr: real(7)?,
            annotations_used: int(8)?,
            pseudo_malware: int(9)?,
            pseudo_benign: int(10)?,
        });
    }
    Ok(out)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRecord>> {
    let f = std::fs::File::open(path)?;
    read_metrics_csv(std::io::BufReader::new(f))
}

const CONFIDENCE_HEADER: [&str; 5] = ["month", "max_prob", "correct", "true_label", "pred_label"];

pub fn write_confidence_csv<W: Write>(w: W, rows: &[ConfidenceRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CONFIDENCE_HEADER)
        .map_err(|e| Error::Input(e.to_string()))?;
    for r in rows {
        wtr.write_record([
            r.month.to_string(),
            r.max_prob.to_string(),
            r.correct.to_string(),
            r.true_label.to_string(),
            r.pred_label.to_string(),
        ])
        .map_err(|e| Error::Input(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_confidence_file(path: &Path, rows: &[ConfidenceRow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_confidence_csv(std::io::BufWriter::new(f), rows)
}

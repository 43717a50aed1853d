//! Stream file formats.
//!
//! CSV: `split,month,label,family,f0..f{d-1}` with one sample per row.
//! NDJSON: a header line `{"feature_dim": d}` followed by one object per
//! sample carrying either a `dense` array or a `sparse` index list (value 1
//! implied), which keeps high-dimensional binary feature sets compact.
//!
//! Both parsers reject malformed input with the offending line number and
//! never panic on untrusted bytes (see `fuzz/`).

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{DriftStream, MonthBatch, Sample};

/// On-disk stream encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Csv,
    Ndjson,
}

impl FromStr for StreamFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(StreamFormat::Csv),
            "ndjson" => Ok(StreamFormat::Ndjson),
            other => Err(Error::Config(format!(
                "unknown stream format {other:?} (expected csv or ndjson)"
            ))),
        }
    }
}

impl fmt::Display for StreamFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StreamFormat::Csv => "csv",
            StreamFormat::Ndjson => "ndjson",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Dev,
    Test,
}

fn parse_split(s: &str, line: usize) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "dev" => Ok(Split::Dev),
        "test" => Ok(Split::Test),
        other => Err(Error::parse(
            line,
            format!("unknown split {other:?} (expected train, dev, or test)"),
        )),
    }
}

fn parse_label(s: &str, line: usize) -> Result<Option<u8>> {
    match s {
        "" => Ok(None),
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        other => Err(Error::parse(
            line,
            format!("unknown label value {other:?} (expected 0, 1, or empty)"),
        )),
    }
}

/// Check split/label rules and push the sample into its split.
fn place(
    split: Split,
    sample: Sample,
    line: usize,
    train: &mut Vec<Sample>,
    dev: &mut Vec<Sample>,
    test: &mut Vec<Sample>,
) -> Result<()> {
    if sample.label.is_none() && matches!(split, Split::Train | Split::Dev) {
        return Err(Error::parse(line, "train/dev samples must carry a label"));
    }
    match split {
        Split::Train => train.push(sample),
        Split::Dev => dev.push(sample),
        Split::Test => test.push(sample),
    }
    Ok(())
}

fn assemble(
    feature_dim: usize,
    train: Vec<Sample>,
    dev: Vec<Sample>,
    test: Vec<Sample>,
) -> Result<DriftStream> {
    if test.is_empty() {
        return Err(Error::Input("no test months".into()));
    }
    let mut by_month: std::collections::BTreeMap<u32, Vec<Sample>> = Default::default();
    for s in test {
        by_month.entry(s.month).or_default().push(s);
    }
    let stream = DriftStream {
        feature_dim,
        train,
        dev,
        test_months: by_month
            .into_iter()
            .map(|(month, samples)| MonthBatch { month, samples })
            .collect(),
    };
    stream.validate()?;
    Ok(stream)
}

/// Parse the CSV stream format.
pub fn parse_csv_stream<R: Read>(reader: R) -> Result<DriftStream> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    let feature_dim = {
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(csv_line(&e).unwrap_or(1), e.to_string()))?;
        let fields: Vec<&str> = headers.iter().collect();
        if fields.len() < 5 || fields[..4] != ["split", "month", "label", "family"] {
            return Err(Error::parse(
                1,
                "header must be split,month,label,family,f0..f{d-1}",
            ));
        }
        for (i, name) in fields[4..].iter().enumerate() {
            if *name != format!("f{i}") {
                return Err(Error::parse(
                    1,
                    format!("feature column {} should be named f{i}", name),
                ));
            }
        }
        fields.len() - 4
    };

    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record.map_err(|e| Error::parse(csv_line(&e).unwrap_or(0), e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        if record.len() != feature_dim + 4 {
            return Err(Error::parse(
                line,
                format!(
                    "expected {} fields, found {}",
                    feature_dim + 4,
                    record.len()
                ),
            ));
        }
        let split = parse_split(&record[0], line)?;
        let month: u32 = record[1]
            .parse()
            .map_err(|e| Error::parse(line, format!("bad month: {e}")))?;
        let label = parse_label(&record[2], line)?;
        let family = if record[3].is_empty() {
            None
        } else {
            Some(record[3].to_string())
        };
        let mut features = Vec::with_capacity(feature_dim);
        for j in 0..feature_dim {
            let v: f64 = record[4 + j]
                .parse()
                .map_err(|e| Error::parse(line, format!("bad feature f{j}: {e}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("feature f{j} is not finite")));
            }
            features.push(v);
        }
        place(
            split,
            Sample {
                features,
                label,
                month,
                family,
            },
            line,
            &mut train,
            &mut dev,
            &mut test,
        )?;
    }
    assemble(feature_dim, train, dev, test)
}

fn csv_line(e: &csv::Error) -> Option<usize> {
    e.position().map(|p| p.line() as usize)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NdjsonHeader {
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NdjsonRecord {
    split: String,
    month: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    family: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sparse: Option<Vec<usize>>,
}

/// Parse the NDJSON stream format.
pub fn parse_ndjson_stream<R: Read>(reader: R) -> Result<DriftStream> {
    let mut lines = BufReader::new(reader).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing feature_dim header line"))?
        .map_err(|e| Error::parse(1, e.to_string()))?;
    let header: NdjsonHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    let feature_dim = header.feature_dim;
    if feature_dim == 0 {
        return Err(Error::parse(1, "feature_dim must be positive"));
    }
    // Sparse rows materialize feature_dim zeros from a few bytes of input;
    // bound the declared dimension so a hostile header cannot amplify
    // allocation. Real feature sets top out around 17k dimensions.
    const MAX_FEATURE_DIM: usize = 1_000_000;
    if feature_dim > MAX_FEATURE_DIM {
        return Err(Error::parse(
            1,
            format!("feature_dim {feature_dim} exceeds the {MAX_FEATURE_DIM} limit"),
        ));
    }

    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let text = line.map_err(|e| Error::parse(line_no, e.to_string()))?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: NdjsonRecord = serde_json::from_str(&text)
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        let split = parse_split(&rec.split, line_no)?;
        if let Some(l) = rec.label {
            if l > 1 {
                return Err(Error::parse(line_no, format!("unknown label value {l}")));
            }
        }
        let features = match (rec.dense, rec.sparse) {
            (Some(d), None) => {
                if d.len() != feature_dim {
                    return Err(Error::parse(
                        line_no,
                        format!("dense row has {} values, expected {feature_dim}", d.len()),
                    ));
                }
                if let Some(j) = d.iter().position(|v| !v.is_finite()) {
                    return Err(Error::parse(line_no, format!("feature {j} is not finite")));
                }
                d
            }
            (None, Some(idx)) => {
                let mut f = vec![0.0; feature_dim];
                for &j in &idx {
                    if j >= feature_dim {
                        return Err(Error::parse(
                            line_no,
                            format!("sparse index {j} out of range (dim {feature_dim})"),
                        ));
                    }
                    if f[j] == 1.0 {
                        return Err(Error::parse(line_no, format!("duplicate sparse index {j}")));
                    }
                    f[j] = 1.0;
                }
                f
            }
            (Some(_), Some(_)) => {
                return Err(Error::parse(line_no, "record has both dense and sparse"))
            }
            (None, None) => {
                return Err(Error::parse(line_no, "record has neither dense nor sparse"))
            }
        };
        place(
            split,
            Sample {
                features,
                label: rec.label,
                month: rec.month,
                family: rec.family,
            },
            line_no,
            &mut train,
            &mut dev,
            &mut test,
        )?;
    }
    assemble(feature_dim, train, dev, test)
}

/// Load a stream from disk in the given format.
pub fn load_stream(path: &Path, format: StreamFormat) -> Result<DriftStream> {
    let file = std::fs::File::open(path)?;
    match format {
        StreamFormat::Csv => parse_csv_stream(BufReader::new(file)),
        StreamFormat::Ndjson => parse_ndjson_stream(BufReader::new(file)),
    }
}

fn ordered_samples(stream: &DriftStream) -> impl Iterator<Item = (&'static str, &Sample)> {
    stream
        .train
        .iter()
        .map(|s| ("train", s))
        .chain(stream.dev.iter().map(|s| ("dev", s)))
        .chain(
            stream
                .test_months
                .iter()
                .flat_map(|b| b.samples.iter().map(|s| ("test", s))),
        )
}

/// Write the CSV stream format. Floats use the shortest exact representation,
/// so loading the output reproduces the stream value for value.
pub fn write_csv_stream<W: Write>(w: W, stream: &DriftStream) -> Result<()> {
    stream.validate()?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "split".to_string(),
        "month".to_string(),
        "label".to_string(),
        "family".to_string(),
    ];
    header.extend((0..stream.feature_dim).map(|i| format!("f{i}")));
    wtr.write_record(&header)
        .map_err(|e| Error::Input(e.to_string()))?;

    for (split, s) in ordered_samples(stream) {
        let mut rec = vec![
            split.to_string(),
            s.month.to_string(),
            s.label.map(|l| l.to_string()).unwrap_or_default(),
            s.family.clone().unwrap_or_default(),
        ];
        rec.extend(s.features.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)
            .map_err(|e| Error::Input(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Write the NDJSON stream format (dense rows).
pub fn write_ndjson_stream<W: Write>(mut w: W, stream: &DriftStream) -> Result<()> {
    stream.validate()?;
    writeln!(w, "{{\"feature_dim\":{}}}", stream.feature_dim)?;
    for (split, s) in ordered_samples(stream) {
        let rec = NdjsonRecord {
            split: split.to_string(),
            month: s.month,
            label: s.label,
            family: s.family.clone(),
            dense: Some(s.features.clone()),
            sparse: None,
        };
        let json = serde_json::to_string(&rec).expect("record serialization cannot fail");
        writeln!(w, "{json}")?;
    }
    Ok(())
}

/// Write a stream to disk in the given format.
pub fn write_stream(path: &Path, format: StreamFormat, stream: &DriftStream) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let buf = std::io::BufWriter::new(file);
    match format {
        StreamFormat::Csv => write_csv_stream(buf, stream),
        StreamFormat::Ndjson => write_ndjson_stream(buf, stream),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str = "\
split,month,label,family,f0,f1
train,0,1,famA,0.5,-1.25
train,0,0,,1,2
test,1,1,famB,0.25,0.75
";

    #[test]
    fn csv_direct_mapping() {
        let s = parse_csv_stream(SMALL.as_bytes()).unwrap();
        assert_eq!(s.feature_dim, 2);
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.dev.len(), 0);
        assert_eq!(s.test_months.len(), 1);
        assert_eq!(s.train[0].family.as_deref(), Some("famA"));
        assert_eq!(s.train[1].features, vec![1.0, 2.0]);
    }

    #[test]
    fn csv_wrong_arity_names_line() {
        let bad = "split,month,label,family,f0,f1\ntrain,0,1,,0.5\ntest,1,0,,1,2\n";
        match parse_csv_stream(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_bad_label_names_line() {
        let bad = "split,month,label,family,f0\ntrain,0,2,,0.5\ntest,1,0,,1\n";
        match parse_csv_stream(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_test_split_is_an_error() {
        let bad = "split,month,label,family,f0\ntrain,0,1,,0.5\n";
        match parse_csv_stream(bad.as_bytes()) {
            Err(Error::Input(msg)) => assert!(msg.contains("no test months")),
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn unlabeled_train_rejected() {
        let bad = "split,month,label,family,f0\ntrain,0,,,0.5\ntest,1,0,,1\n";
        assert!(matches!(
            parse_csv_stream(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn ndjson_sparse_and_dense() {
        let text = r#"{"feature_dim":4}
{"split":"train","month":0,"label":1,"family":"famA","sparse":[0,2]}
{"split":"train","month":0,"label":0,"dense":[0.1,0.2,0.3,0.4]}
{"split":"test","month":3,"label":1,"sparse":[]}
"#;
        let s = parse_ndjson_stream(text.as_bytes()).unwrap();
        assert_eq!(s.train[0].features, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.train[1].features, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(s.test_months[0].month, 3);
    }

    #[test]
    fn ndjson_rejects_bad_rows() {
        let cases = [
            (r#"{"split":"train","month":0,"label":1,"dense":[0.1]}"#, "short dense"),
            (r#"{"split":"train","month":0,"label":1,"sparse":[9]}"#, "index range"),
            (r#"{"split":"train","month":0,"label":1,"sparse":[1,1]}"#, "duplicate"),
            (r#"{"split":"train","month":0,"label":1}"#, "no features"),
            (r#"{"split":"nope","month":0,"label":1,"sparse":[]}"#, "bad split"),
        ];
        for (row, why) in cases {
            let text = format!("{{\"feature_dim\":2}}\n{row}\n");
            match parse_ndjson_stream(text.as_bytes()) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 2, "{why}"),
                other => panic!("{why}: expected parse error, got {other:?}"),
            }
        }
    }

    fn sample_strategy(dim: usize, split_idx: usize) -> impl Strategy<Value = (usize, Sample)> {
        (
            proptest::collection::vec(-1e6f64..1e6, dim),
            proptest::option::of(0u8..2),
            0u32..5,
            proptest::option::of("[a-z]{1,6}"),
        )
            .prop_map(move |(features, label, month, family)| {
                (
                    split_idx,
                    Sample {
                        features,
                        label,
                        month,
                        family,
                    },
                )
            })
    }

    fn stream_strategy() -> impl Strategy<Value = DriftStream> {
        let dim = 3usize;
        (
            proptest::collection::vec(sample_strategy(dim, 0), 1..5),
            proptest::collection::vec(sample_strategy(dim, 1), 0..3),
            proptest::collection::vec(sample_strategy(dim, 2), 1..6),
        )
            .prop_map(move |(train, dev, test)| {
                let fix = |mut s: Sample| {
                    if s.label.is_none() {
                        s.label = Some(1);
                    }
                    s
                };
                let mut by_month: std::collections::BTreeMap<u32, Vec<Sample>> = Default::default();
                for (_, s) in test {
                    by_month.entry(s.month).or_default().push(s);
                }
                DriftStream {
                    feature_dim: dim,
                    train: train.into_iter().map(|(_, s)| fix(s)).collect(),
                    dev: dev.into_iter().map(|(_, s)| fix(s)).collect(),
                    test_months: by_month
                        .into_iter()
                        .map(|(month, samples)| MonthBatch { month, samples })
                        .collect(),
                }
            })
    }

    proptest! {
        #[test]
        fn csv_roundtrip(stream in stream_strategy()) {
            let mut buf = Vec::new();
            write_csv_stream(&mut buf, &stream).unwrap();
            let back = parse_csv_stream(&buf[..]).unwrap();
            prop_assert_eq!(back, stream);
        }

        #[test]
        fn ndjson_roundtrip(stream in stream_strategy()) {
            let mut buf = Vec::new();
            write_ndjson_stream(&mut buf, &stream).unwrap();
            let back = parse_ndjson_stream(&buf[..]).unwrap();
            prop_assert_eq!(back, stream);
        }
    }
}

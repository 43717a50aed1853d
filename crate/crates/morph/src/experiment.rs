//! Experiment orchestration: config parsing, scenario wiring, deterministic
//! seeding, and artifact output.
//!
//! A run writes into its output directory:
//!
//! - `metrics.csv` — one prequential record per test month,
//! - `confidence.csv` — per-sample confidence rows from each evaluation,
//! - `annotations.csv` — the audit log of revealed labels,
//! - `config.toml` — the resolved config echo (re-runs reproduce the run),
//! - `model.json` / `ensemble.json` — the final model checkpoint.
//!
//! Everything derives from `(config, seed)`; repeated runs are byte-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::{run_schedule, ALConfig, AnnotationEvent, Schedule};
use crate::adapt::{AdaptationState, MorphConfig, TuneParams};
use crate::data::{
    features_matrix, gen_synthetic, labels_of, limit_families, load_stream, DriftStream, Sample,
    Standardizer, StreamFormat, SyntheticConfig,
};
use crate::de::{run_de, DeConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    read_metrics_file, summarize, write_confidence_file, write_metrics_file, MetricsRecord,
};
use crate::nn::{init_model, train_early_stop, AdamParams, EarlyStopSpec, TrainConfig, TrainSet};
use crate::seed;

/// Where the stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// `synthetic` or `file`.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<StreamFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: "synthetic".into(),
            path: None,
            format: None,
            synthetic: None,
        }
    }
}

/// Classifier hyperparameters (layer dims grow from the stream's feature
/// dimension: `[d, hidden..., 2]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    /// Epoch cap for initial training (early stopping usually ends sooner).
    pub max_epochs: usize,
    /// Early-stopping patience on dev F1.
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dims: vec![16],
            dropout: 0.2,
            max_epochs: 200,
            patience: 10,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 || self.patience < 1 || self.batch_size < 1 {
            return Err(Error::Config(
                "max_epochs, patience, and batch_size must be >= 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlSettings {
    pub budget_per_update: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyLimitedSpec {
    pub top_k: usize,
    /// Scenario to run on the family-limited stream.
    pub inner: String,
}

/// A full experiment description, loadable from TOML and echoed back out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// One of: `static`, `morph`, `al_monthly`, `al_alternate`,
    /// `al_plus_morph`, `de_baseline`, `de_baseline_static`,
    /// `family_limited`.
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morph: Option<MorphConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub al: Option<AlSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub de: Option<DeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_limited: Option<FamilyLimitedSpec>,
}

/// Scenarios after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Nn(Schedule),
    De { updates: bool },
    FamilyLimited { top_k: usize, inner: Box<Scenario> },
}

fn parse_base_scenario(name: &str) -> Result<Scenario> {
    Ok(match name {
        "static" => Scenario::Nn(Schedule::Static),
        "morph" => Scenario::Nn(Schedule::MorphOnly),
        "al_monthly" => Scenario::Nn(Schedule::AlEveryMonth),
        "al_alternate" => Scenario::Nn(Schedule::AlternateAlMorph),
        "al_plus_morph" => Scenario::Nn(Schedule::AlPlusMorphResidual),
        "de_baseline" => Scenario::De { updates: true },
        "de_baseline_static" => Scenario::De { updates: false },
        other => {
            return Err(Error::Config(format!(
                "unknown scenario {other:?} (expected static, morph, al_monthly, al_alternate, \
                 al_plus_morph, de_baseline, de_baseline_static, or family_limited)"
            )))
        }
    })
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Validate cross-field requirements and resolve the scenario.
    pub fn resolve(&self) -> Result<Scenario> {
        self.model.validate()?;
        let scenario = if self.scenario == "family_limited" {
            let spec = self.family_limited.as_ref().ok_or_else(|| {
                Error::Config(
                    "scenario 'family_limited' requires a [family_limited] section with top_k \
                     and inner"
                        .into(),
                )
            })?;
            if spec.top_k < 1 {
                return Err(Error::Config("family_limited.top_k must be >= 1".into()));
            }
            if spec.inner == "family_limited" {
                return Err(Error::Config("family_limited cannot nest itself".into()));
            }
            Scenario::FamilyLimited {
                top_k: spec.top_k,
                inner: Box::new(parse_base_scenario(&spec.inner)?),
            }
        } else {
            parse_base_scenario(&self.scenario)?
        };

        self.check_sections(match &scenario {
            Scenario::FamilyLimited { inner, .. } => inner,
            s => s,
        })?;

        match &self.data.source[..] {
            "synthetic" => {
                if let Some(s) = &self.data.synthetic {
                    s.validate()?;
                }
            }
            "file" => {
                if self.data.path.is_none() || self.data.format.is_none() {
                    return Err(Error::Config(
                        "data.source = \"file\" requires data.path and data.format".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown data.source {other:?} (expected synthetic or file)"
                )))
            }
        }
        Ok(scenario)
    }

    fn check_sections(&self, scenario: &Scenario) -> Result<()> {
        if let Scenario::Nn(schedule) = scenario {
            let needs_morph = matches!(
                schedule,
                Schedule::MorphOnly | Schedule::AlternateAlMorph | Schedule::AlPlusMorphResidual
            );
            if needs_morph && self.morph.is_none() {
                return Err(Error::Config(format!(
                    "scenario '{}' requires a [morph] section (tau_m, lambda_u, fine_tune_epochs)",
                    self.scenario
                )));
            }
            if schedule.uses_annotations() && self.al.is_none() {
                return Err(Error::Config(format!(
                    "scenario '{}' requires an [al] section (budget_per_update)",
                    self.scenario
                )));
            }
        }
        if let Some(m) = &self.morph {
            m.validate()?;
        }
        if let Some(d) = &self.de {
            d.validate()?;
        }
        Ok(())
    }

    fn load_data(&self) -> Result<DriftStream> {
        match &self.data.source[..] {
            "synthetic" => {
                let cfg = self.data.synthetic.clone().unwrap_or_default();
                gen_synthetic(&cfg, seed::derive(self.seed, "synthetic"))
            }
            "file" => {
                let path = self.data.path.as_ref().expect("checked in resolve");
                let format = self.data.format.expect("checked in resolve");
                load_stream(path, format)
            }
            _ => unreachable!("checked in resolve"),
        }
    }
}

/// What a finished run hands back (everything is also on disk).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub history: Vec<MetricsRecord>,
    pub events: Vec<AnnotationEvent>,
    pub mean_f1: f64,
    pub mean_fpr: f64,
    pub mean_fnr: f64,
}

fn train_pool(samples: &[Sample]) -> Result<TrainSet> {
    let labels = labels_of(samples)?;
    TrainSet::new(features_matrix(samples), labels)
}

fn verbose() -> bool {
    std::env::var("MORPH_VERBOSITY").map_or(false, |v| v != "0" && !v.is_empty())
}

/// Execute one experiment and write its artifacts.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let scenario = config.resolve()?;
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("out_dir is required to run".into()))?;
    std::fs::create_dir_all(&out_dir)?;

    let mut stream = config.load_data()?;
    stream.validate()?;
    let scenario = match scenario {
        Scenario::FamilyLimited { top_k, inner } => {
            stream = limit_families(&stream, top_k)?;
            *inner
        }
        s => s,
    };

    let standardizer = Standardizer::fit(&stream.train)?;
    let stream = standardizer.transform_stream(&stream);
    let pool = train_pool(&stream.train)?;

    let (history, confidence, events) = match scenario {
        Scenario::De { updates } => {
            let de_cfg = config.de.clone().unwrap_or_default();
            let (ens, history, confidence) = run_de(
                &pool,
                &stream.test_months,
                &de_cfg,
                updates,
                seed::derive(config.seed, "de"),
            )?;
            let json = serde_json::to_string_pretty(&ens)
                .expect("ensemble serialization cannot fail");
            std::fs::write(out_dir.join("ensemble.json"), json)?;
            (history, confidence, Vec::new())
        }
        Scenario::Nn(schedule) => {
            if stream.dev.is_empty() {
                return Err(Error::Input(
                    "a non-empty dev split is required for early stopping".into(),
                ));
            }
            let mut dims = vec![stream.feature_dim];
            dims.extend(&config.model.hidden_dims);
            dims.push(2);
            let model = init_model(
                &dims,
                config.model.dropout,
                seed::derive(config.seed, "init"),
            )?;

            let dev_inputs = features_matrix(&stream.dev);
            let dev_truths = labels_of(&stream.dev)?;
            let train_cfg = TrainConfig {
                epochs: config.model.max_epochs,
                batch_size: config.model.batch_size,
                lambda_u: 1.0,
                adam: AdamParams::with_learning_rate(config.model.learning_rate),
            };
            let early = EarlyStopSpec {
                dev_inputs: &dev_inputs,
                dev_truths: &dev_truths,
                patience: config.model.patience,
            };
            let (model, report) = train_early_stop(
                model,
                &pool,
                None,
                &train_cfg,
                early,
                seed::derive(config.seed, "init_train"),
            )?;
            if verbose() {
                eprintln!(
                    "initial training: {} epochs, best dev F1 {:.4} at epoch {}",
                    report.loss_trace.len(),
                    report.best_dev_f1,
                    report.best_epoch
                );
            }

            let al_cfg = ALConfig {
                budget_per_update: config.al.map_or(0, |a| a.budget_per_update),
                schedule,
            };
            let morph_cfg = config.morph.clone().unwrap_or_default();
            let tune = TuneParams {
                batch_size: config.model.batch_size,
                adam: AdamParams::with_learning_rate(config.model.learning_rate),
            };
            let mut state = AdaptationState::new(model, pool);
            let events = run_schedule(
                &mut state,
                &stream.test_months,
                &al_cfg,
                &morph_cfg,
                &tune,
                config.seed,
            )?;
            std::fs::write(out_dir.join("model.json"), state.model.to_checkpoint_json())?;
            (state.history, state.confidence, events)
        }
        Scenario::FamilyLimited { .. } => unreachable!("unwrapped above"),
    };

    write_metrics_file(&out_dir.join("metrics.csv"), &history)?;
    write_confidence_file(&out_dir.join("confidence.csv"), &confidence)?;
    write_annotations_file(&out_dir.join("annotations.csv"), &events)?;
    let mut echo = config.clone();
    echo.out_dir = Some(out_dir.clone());
    std::fs::write(out_dir.join("config.toml"), echo.to_toml_string())?;

    let s = summarize(&history)?;
    if verbose() {
        eprintln!(
            "{}: mean F1 {:.4}, FPR {:.4}, FNR {:.4} over {} months",
            config.scenario, s.mean_f1, s.mean_fpr, s.mean_fnr, s.months
        );
    }
    Ok(RunOutput {
        out_dir,
        history,
        events,
        mean_f1: s.mean_f1,
        mean_fpr: s.mean_fpr,
        mean_fnr: s.mean_fnr,
    })
}

fn write_annotations_file(path: &Path, events: &[AnnotationEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(std::fs::File::create(path)?));
    wtr.write_record(["month", "index", "true_label"])
        .map_err(|e| Error::Input(e.to_string()))?;
    for ev in events {
        for (&i, &l) in ev.indices.iter().zip(&ev.labels) {
            wtr.write_record([ev.month.to_string(), i.to_string(), l.to_string()])
                .map_err(|e| Error::Input(e.to_string()))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Aligned per-month comparison of finished runs. The first directory is the
/// reference; the CSV carries per-run F1/FPR/FNR columns plus deltas against
/// the reference and a trailing `mean` row. Returns `(csv, warnings)`.
pub fn compare(run_dirs: &[PathBuf]) -> Result<(String, Vec<String>)> {
    if run_dirs.len() < 2 {
        return Err(Error::Input("compare needs at least two run directories".into()));
    }
    let mut histories = Vec::new();
    let mut labels = Vec::new();
    for (i, dir) in run_dirs.iter().enumerate() {
        let history = read_metrics_file(&dir.join("metrics.csv"))?;
        let base = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("run{i}"));
        let label = if labels.contains(&base) {
            format!("{base}_{i}")
        } else {
            base
        };
        labels.push(label);
        histories.push(history);
    }

    let ref_months: Vec<u32> = histories[0].iter().map(|r| r.month).collect();
    for (i, h) in histories.iter().enumerate().skip(1) {
        let months: Vec<u32> = h.iter().map(|r| r.month).collect();
        if months != ref_months {
            return Err(Error::Input(format!(
                "months misaligned: {} covers {months:?} but reference {} covers {ref_months:?}",
                labels[i], labels[0]
            )));
        }
    }

    let warnings = compare_config_warnings(run_dirs, &labels);

    let mut header = vec!["month".to_string()];
    for l in &labels {
        header.extend([format!("f1_{l}"), format!("fpr_{l}"), format!("fnr_{l}")]);
    }
    for l in &labels[1..] {
        header.extend([
            format!("delta_f1_{l}"),
            format!("delta_fpr_{l}"),
            format!("delta_fnr_{l}"),
        ]);
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(&header).map_err(|e| Error::Input(e.to_string()))?;
    for (mi, &month) in ref_months.iter().enumerate() {
        let mut row = vec![month.to_string()];
        for h in &histories {
            let r = &h[mi];
            row.extend([r.f1.to_string(), r.fpr.to_string(), r.fnr.to_string()]);
        }
        let base = &histories[0][mi];
        for h in &histories[1..] {
            let r = &h[mi];
            row.extend([
                (r.f1 - base.f1).to_string(),
                (r.fpr - base.fpr).to_string(),
                (r.fnr - base.fnr).to_string(),
            ]);
        }
        wtr.write_record(&row).map_err(|e| Error::Input(e.to_string()))?;
    }

    let summaries: Vec<_> = histories
        .iter()
        .map(|h| summarize(h).expect("aligned histories are non-empty"))
        .collect();
    let mut row = vec!["mean".to_string()];
    for s in &summaries {
        row.extend([
            s.mean_f1.to_string(),
            s.mean_fpr.to_string(),
            s.mean_fnr.to_string(),
        ]);
    }
    for s in &summaries[1..] {
        row.extend([
            (s.mean_f1 - summaries[0].mean_f1).to_string(),
            (s.mean_fpr - summaries[0].mean_fpr).to_string(),
            (s.mean_fnr - summaries[0].mean_fnr).to_string(),
        ]);
    }
    wtr.write_record(&row).map_err(|e| Error::Input(e.to_string()))?;

    let csv = String::from_utf8(wtr.into_inner().map_err(|e| Error::Input(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok((csv, warnings))
}

/// Flag runs whose stream provenance differs from the reference run's.
fn compare_config_warnings(run_dirs: &[PathBuf], labels: &[String]) -> Vec<String> {
    let configs: Vec<Option<ExperimentConfig>> = run_dirs
        .iter()
        .map(|d| ExperimentConfig::from_file(&d.join("config.toml")).ok())
        .collect();
    let mut warnings = Vec::new();
    let Some(reference) = &configs[0] else {
        warnings.push(format!("{}: missing or unreadable config echo", labels[0]));
        return warnings;
    };
    for (i, cfg) in configs.iter().enumerate().skip(1) {
        match cfg {
            None => warnings.push(format!("{}: missing or unreadable config echo", labels[i])),
            Some(c) => {
                if c.data != reference.data {
                    warnings.push(format!(
                        "{}: stream source differs from reference {}",
                        labels[i], labels[0]
                    ));
                } else if c.data.source == "synthetic" && c.seed != reference.seed {
                    warnings.push(format!(
                        "{}: synthetic stream seed {} differs from reference seed {}",
                        labels[i], c.seed, reference.seed
                    ));
                }
            }
        }
    }
    warnings
}

/// Months whose batches exist in every directory — used by tests and the CLI
/// to sanity-check alignment before comparing.
pub fn shared_months(histories: &[Vec<MetricsRecord>]) -> Option<Vec<u32>> {
    let first: BTreeSet<u32> = histories.first()?.iter().map(|r| r.month).collect();
    let shared = histories.iter().skip(1).fold(first, |acc, h| {
        let months: BTreeSet<u32> = h.iter().map(|r| r.month).collect();
        acc.intersection(&months).copied().collect()
    });
    Some(shared.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_toml() -> String {
        r#"
seed = 7
scenario = "morph"

[data]
source = "synthetic"

[data.synthetic]
feature_dim = 4
months = 2
rotation_deg_per_month = 10.0
sigma = 0.1
samples_per_month = 60
train_samples = 80
dev_samples = 40

[model]
hidden_dims = [8]
dropout = 0.0
max_epochs = 30
patience = 5
batch_size = 16
learning_rate = 0.001

[morph]
tau_m = 0.6
lambda_u = 1.0
fine_tune_epochs = 3
"#
        .to_string()
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::from_toml_str(&base_toml()).unwrap();
        cfg.resolve().unwrap();
        let echoed = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&echoed).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn missing_morph_section_names_the_field() {
        let text = base_toml().replace("[morph]", "[morph_disabled]");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        // deny_unknown_fields rejects the stray table outright.
        assert!(matches!(err, Error::Config(_)));

        let mut cfg = ExperimentConfig::from_toml_str(&base_toml()).unwrap();
        cfg.morph = None;
        let err = cfg.resolve().unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("tau_m"), "message was: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_tau_m_is_a_config_error() {
        let text = base_toml().replace("tau_m = 0.6", "");
        let err = ExperimentConfig::from_toml_str(&text).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("tau_m"), "message was: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn al_scenarios_need_budget() {
        let text = base_toml().replace("scenario = \"morph\"", "scenario = \"al_monthly\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let err = cfg.resolve().unwrap_err();
        assert!(matches!(err, Error::Config(msg) if msg.contains("budget_per_update")));
    }

    #[test]
    fn family_limited_requires_its_table() {
        let text = base_toml().replace("scenario = \"morph\"", "scenario = \"family_limited\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(cfg.resolve().is_err());

        let text = format!("{text}\n[family_limited]\ntop_k = 3\ninner = \"morph\"\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        match cfg.resolve().unwrap() {
            Scenario::FamilyLimited { top_k, inner } => {
                assert_eq!(top_k, 3);
                assert_eq!(*inner, Scenario::Nn(Schedule::MorphOnly));
            }
            other => panic!("unexpected scenario {other:?}"),
        }
    }

    #[test]
    fn unknown_scenario_rejected() {
        let text = base_toml().replace("scenario = \"morph\"", "scenario = \"mystery\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn small_run_writes_artifacts_deterministically() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(&base_toml()).unwrap();

        cfg.out_dir = Some(tmp.path().join("a"));
        let out_a = run(&cfg).unwrap();
        cfg.out_dir = Some(tmp.path().join("b"));
        let out_b = run(&cfg).unwrap();

        assert_eq!(out_a.history, out_b.history);
        let bytes_a = std::fs::read(out_a.out_dir.join("metrics.csv")).unwrap();
        let bytes_b = std::fs::read(out_b.out_dir.join("metrics.csv")).unwrap();
        assert_eq!(bytes_a, bytes_b);
        for f in ["confidence.csv", "annotations.csv", "config.toml", "model.json"] {
            assert!(out_a.out_dir.join(f).exists(), "missing {f}");
        }
        // The echo reproduces the run.
        let echoed = ExperimentConfig::from_file(&out_a.out_dir.join("config.toml")).unwrap();
        assert_eq!(echoed.seed, cfg.seed);
        assert_eq!(echoed.data, cfg.data);
    }

    #[test]
    fn compare_run_against_itself_is_all_zero() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(&base_toml()).unwrap();
        cfg.out_dir = Some(tmp.path().join("a"));
        run(&cfg).unwrap();

        let dirs = vec![tmp.path().join("a"), tmp.path().join("a")];
        let (csv, warnings) = compare(&dirs).unwrap();
        assert!(warnings.is_empty());
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            // Delta columns are the last three.
            for v in &fields[fields.len() - 3..] {
                assert_eq!(*v, "0");
            }
        }
    }

    #[test]
    fn compare_warns_on_differing_seeds() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml_str(&base_toml()).unwrap();
        cfg.out_dir = Some(tmp.path().join("a"));
        run(&cfg).unwrap();
        cfg.seed = 8;
        cfg.out_dir = Some(tmp.path().join("b"));
        run(&cfg).unwrap();

        let (_, warnings) = compare(&[tmp.path().join("a"), tmp.path().join("b")]).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("seed"));
    }
}

//! Experiment CLI.
//!
//! Subcommands: `run` (one experiment per invocation), `compare` (align
//! finished runs against a reference), `gen-synthetic` (write a drift stream
//! to disk), and `grad-check` (finite-difference sweep over the backprop
//! implementation).
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
//! invariant violation. All science parameters flow through the config file
//! and flags; the only environment variable honored is `MORPH_VERBOSITY`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use morph::data::{gen_synthetic, write_stream, StreamFormat, SyntheticConfig};
use morph::error::Error;
use morph::experiment::{compare, run, AlSettings, ExperimentConfig, FamilyLimitedSpec};
use morph::gradcheck;

#[derive(Parser)]
#[command(name = "morph", version, about = "Concept-drift adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts to the output directory.
    Run(RunArgs),
    /// Compare finished runs; the first directory is the reference.
    Compare(CompareArgs),
    /// Generate a synthetic drift stream file.
    GenSynthetic(GenArgs),
    /// Check analytic gradients against central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scenario: static, morph, al_monthly, al_alternate, al_plus_morph,
    /// de_baseline, de_baseline_static, family_limited.
    #[arg(long)]
    scenario: Option<String>,

    /// Root seed; every random draw in the run derives from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for metrics, confidence, annotations, and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Load the stream from this file instead of generating one.
    #[arg(long, requires = "data_format")]
    data_file: Option<PathBuf>,

    /// Stream file format: csv or ndjson.
    #[arg(long)]
    data_format: Option<StreamFormat>,

    /// Malware confidence floor for pseudo-labeling.
    #[arg(long)]
    tau_m: Option<f64>,

    /// Optional benign confidence floor.
    #[arg(long)]
    tau_b: Option<f64>,

    /// Pseudo-label loss weight.
    #[arg(long)]
    lambda_u: Option<f64>,

    /// Fine-tuning epochs per month.
    #[arg(long)]
    fine_tune_epochs: Option<usize>,

    /// Cap on pseudo-labeled samples per class and month.
    #[arg(long)]
    n_m_cap: Option<usize>,

    /// Annotation budget per active-learning event.
    #[arg(long)]
    budget: Option<usize>,

    /// Keep only the top-k training malware families (family_limited).
    #[arg(long)]
    top_k: Option<usize>,

    /// Scenario to run inside family_limited.
    #[arg(long)]
    inner: Option<String>,

    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    months: Option<u32>,
    #[arg(long)]
    rotation_deg: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    samples_per_month: Option<usize>,
    #[arg(long)]
    malware_fraction: Option<f64>,
    #[arg(long)]
    new_family_frac: Option<f64>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    dev_samples: Option<usize>,
    /// Number of malware family clusters (enables family mode).
    #[arg(long)]
    family_count: Option<usize>,
    /// Angular spread of the family clusters, degrees.
    #[arg(long)]
    family_spread_deg: Option<f64>,
    /// Geometric decay of family frequencies.
    #[arg(long)]
    family_skew: Option<f64>,
}

impl SyntheticArgs {
    fn apply(&self, cfg: &mut SyntheticConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(feature_dim);
        set!(months);
        set!(sigma);
        set!(samples_per_month);
        set!(malware_fraction);
        set!(new_family_frac);
        set!(train_samples);
        set!(dev_samples);
        if let Some(v) = self.rotation_deg {
            cfg.rotation_deg_per_month = v;
        }
        if let Some(count) = self.family_count {
            let mix = cfg.families.get_or_insert(morph::data::FamilyMix {
                count,
                angle_spread_deg: 81.0,
                skew: 0.75,
            });
            mix.count = count;
        }
        if let Some(mix) = cfg.families.as_mut() {
            if let Some(v) = self.family_spread_deg {
                mix.angle_spread_deg = v;
            }
            if let Some(v) = self.family_skew {
                mix.skew = v;
            }
        }
    }

    fn any_set(&self) -> bool {
        self.feature_dim.is_some()
            || self.months.is_some()
            || self.rotation_deg.is_some()
            || self.sigma.is_some()
            || self.samples_per_month.is_some()
            || self.malware_fraction.is_some()
            || self.new_family_frac.is_some()
            || self.train_samples.is_some()
            || self.dev_samples.is_some()
            || self.family_count.is_some()
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories; the first is the reference.
    #[arg(required = true, num_args = 2..)]
    run_dirs: Vec<PathBuf>,

    /// Write the aligned CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Output stream file.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value = "csv")]
    format: StreamFormat,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Number of random models to sweep.
    #[arg(long, default_value_t = 20)]
    models: usize,

    #[arg(long, default_value_t = 1234)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::GenSynthetic(args) => cmd_gen(args),
        Command::GradCheck(args) => cmd_grad_check(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Parse { .. } | Error::Io(_) | Error::Input(_) => 3,
        Error::Shape(_) | Error::Sequencing(_) | Error::Invariant(_) => 4,
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig {
            seed: 42,
            scenario: "static".into(),
            out_dir: None,
            data: Default::default(),
            model: Default::default(),
            morph: None,
            al: None,
            de: None,
            family_limited: None,
        },
    };

    // Flags take precedence over the config file.
    if let Some(s) = args.scenario {
        config.scenario = s;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = Some(out);
    }
    if let Some(path) = args.data_file {
        config.data.source = "file".into();
        config.data.path = Some(path);
        config.data.format = args.data_format;
    } else if args.synthetic.any_set() || config.data.source == "synthetic" {
        let mut synth = config.data.synthetic.take().unwrap_or_default();
        args.synthetic.apply(&mut synth);
        config.data.synthetic = Some(synth);
    }
    if args.tau_m.is_some()
        || args.tau_b.is_some()
        || args.lambda_u.is_some()
        || args.fine_tune_epochs.is_some()
        || args.n_m_cap.is_some()
    {
        let m = config.morph.get_or_insert_with(Default::default);
        if let Some(v) = args.tau_m {
            m.tau_m = v;
        }
        if args.tau_b.is_some() {
            m.tau_b = args.tau_b;
        }
        if let Some(v) = args.lambda_u {
            m.lambda_u = v;
        }
        if let Some(v) = args.fine_tune_epochs {
            m.fine_tune_epochs = v;
        }
        if args.n_m_cap.is_some() {
            m.n_m_cap = args.n_m_cap;
        }
    }
    if let Some(budget) = args.budget {
        config.al = Some(AlSettings {
            budget_per_update: budget,
        });
    }
    if let Some(top_k) = args.top_k {
        let inner = args.inner.clone().unwrap_or_else(|| config.scenario.clone());
        config.family_limited = Some(FamilyLimitedSpec { top_k, inner });
        config.scenario = "family_limited".into();
    }

    let out = run(&config)?;
    println!("scenario: {}", config.scenario);
    println!("months: {}", out.history.len());
    for r in &out.history {
        println!(
            "month {:>3}  f1 {:.4}  fpr {:.4}  fnr {:.4}  annotations {}  pseudo {}/{}",
            r.month, r.f1, r.fpr, r.fnr, r.annotations_used, r.pseudo_malware, r.pseudo_benign
        );
    }
    println!(
        "mean  f1 {:.4}  fpr {:.4}  fnr {:.4}",
        out.mean_f1, out.mean_fpr, out.mean_fnr
    );
    println!("artifacts: {}", out.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode, Error> {
    let (csv, warnings) = compare(&args.run_dirs)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Error> {
    let mut cfg = SyntheticConfig::default();
    args.synthetic.apply(&mut cfg);
    let stream = gen_synthetic(&cfg, args.seed)?;
    write_stream(&args.out, args.format, &stream)?;
    println!(
        "wrote {} ({} train, {} dev, {} test months)",
        args.out.display(),
        stream.train.len(),
        stream.dev.len(),
        stream.test_months.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_grad_check(args: GradCheckArgs) -> Result<ExitCode, Error> {
    let report = gradcheck::run_suite(args.models, args.seed)?;
    println!(
        "checked {} parameters across {} models: max relative error {:.3e} (tolerance {:.1e})",
        report.parameters_checked, report.models_checked, report.max_rel_err, report.tolerance
    );
    if report.passed() {
        println!("grad-check: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("grad-check: FAIL");
        Ok(ExitCode::from(4))
    }
}

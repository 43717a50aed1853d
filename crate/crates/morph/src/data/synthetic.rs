//! Synthetic gradual-drift stream generator.
//!
//! Class means start at `(-1, 0, ...)` (benign) and `(+1, 0, ...)` (malware)
//! and rotate by a fixed angle per month in the first two dimensions; the
//! remaining dimensions are pure noise. Samples are isotropic Gaussians
//! around the current means. Optionally the malware class is split into a
//! fixed set of families with distinct mean clusters and a skewed frequency
//! mix, which is what the family-limited training scenario consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{DriftStream, MonthBatch, Sample};

/// Malware family mixture: `count` clusters whose mean angles are spread over
/// `angle_spread_deg` ahead of the base malware angle, with geometrically
/// decaying frequencies (`skew^i`, renormalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMix {
    pub count: usize,
    pub angle_spread_deg: f64,
    pub skew: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub feature_dim: usize,
    /// Number of test months (month indices 1..=months; train/dev sit at 0).
    pub months: u32,
    /// Angle of the malware mean at month 0 (benign sits opposite). The 45
    /// degree default puts equal between-class variance on both plane
    /// dimensions, so a standardizer fit on month 0 rescales the plane
    /// uniformly and the drift stays a rotation in model space.
    pub start_angle_deg: f64,
    pub rotation_deg_per_month: f64,
    /// Per-class isotropic Gaussian spread.
    pub sigma: f64,
    pub samples_per_month: usize,
    pub malware_fraction: f64,
    /// Fraction of each test month's malware drawn around the *next* month's
    /// mean, tagged as that month's family (new families arriving early).
    pub new_family_frac: f64,
    pub train_samples: usize,
    pub dev_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub families: Option<FamilyMix>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            feature_dim: 10,
            months: 12,
            start_angle_deg: 45.0,
            rotation_deg_per_month: 10.0,
            sigma: 0.05,
            samples_per_month: 500,
            malware_fraction: 0.5,
            new_family_frac: 0.0,
            train_samples: 1000,
            dev_samples: 500,
            families: None,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim < 2 {
            return Err(Error::Config(format!(
                "feature_dim must be >= 2, got {}",
                self.feature_dim
            )));
        }
        if self.months < 1 {
            return Err(Error::Config("months must be >= 1".into()));
        }
        if !(0.0..=90.0).contains(&self.rotation_deg_per_month) {
            return Err(Error::Config(format!(
                "rotation_deg_per_month must be in [0, 90], got {}",
                self.rotation_deg_per_month
            )));
        }
        if !(0.0..360.0).contains(&self.start_angle_deg) {
            return Err(Error::Config(format!(
                "start_angle_deg must be in [0, 360), got {}",
                self.start_angle_deg
            )));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.samples_per_month < 1 || self.train_samples < 1 || self.dev_samples < 1 {
            return Err(Error::Config("sample counts must be >= 1".into()));
        }
        if !(self.malware_fraction > 0.0 && self.malware_fraction < 1.0) {
            return Err(Error::Config(format!(
                "malware_fraction must be in (0, 1), got {}",
                self.malware_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.new_family_frac) {
            return Err(Error::Config(format!(
                "new_family_frac must be in [0, 1), got {}",
                self.new_family_frac
            )));
        }
        if let Some(f) = &self.families {
            if f.count < 2 {
                return Err(Error::Config("families.count must be >= 2".into()));
            }
            if !(f.angle_spread_deg > 0.0 && f.angle_spread_deg <= 180.0) {
                return Err(Error::Config(format!(
                    "families.angle_spread_deg must be in (0, 180], got {}",
                    f.angle_spread_deg
                )));
            }
            if !(f.skew > 0.0 && f.skew <= 1.0) {
                return Err(Error::Config(format!(
                    "families.skew must be in (0, 1], got {}",
                    f.skew
                )));
            }
        }
        Ok(())
    }
}

/// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn mean_at(angle_deg: f64, malware: bool, dim: usize) -> Vec<f64> {
    let sign = if malware { 1.0 } else { -1.0 };
    let th = angle_deg.to_radians();
    let mut m = vec![0.0; dim];
    m[0] = sign * th.cos();
    m[1] = sign * th.sin();
    m
}

fn draw_around(mean: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter().map(|&m| m + sigma * normal(rng)).collect()
}

/// Pick a family index from the geometric frequency mix.
fn pick_family(mix: &FamilyMix, rng: &mut ChaCha8Rng) -> usize {
    let weights: Vec<f64> = (0..mix.count).map(|i| mix.skew.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    mix.count - 1
}

fn gen_month(cfg: &SyntheticConfig, month: u32, count: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let base_angle = cfg.start_angle_deg + cfg.rotation_deg_per_month * month as f64;
    let n_mal = ((count as f64) * cfg.malware_fraction).round() as usize;
    let n_mal = n_mal.clamp(1, count.saturating_sub(1).max(1));
    let mut samples = Vec::with_capacity(count);

    for i in 0..n_mal {
        let (angle, family) = match &cfg.families {
            Some(mix) => {
                let fam = pick_family(mix, rng);
                let offset = mix.angle_spread_deg * fam as f64 / (mix.count - 1) as f64;
                (base_angle + offset, format!("fam{fam:02}"))
            }
            None => {
                let n_new = ((n_mal as f64) * cfg.new_family_frac).round() as usize;
                if i < n_new {
                    // Drawn around next month's mean: a family arriving early.
                    (
                        base_angle + cfg.rotation_deg_per_month,
                        format!("m{:02}", month + 1),
                    )
                } else {
                    (base_angle, format!("m{month:02}"))
                }
            }
        };
        samples.push(Sample {
            features: draw_around(&mean_at(angle, true, cfg.feature_dim), cfg.sigma, rng),
            label: Some(1),
            month,
            family: Some(family),
        });
    }
    for _ in n_mal..count {
        samples.push(Sample {
            features: draw_around(&mean_at(base_angle, false, cfg.feature_dim), cfg.sigma, rng),
            label: Some(0),
            month,
            family: None,
        });
    }
    // Interleave classes so index-based tie-breaking downstream is unbiased.
    use rand::seq::SliceRandom;
    samples.shuffle(rng);
    samples
}

/// Generate a synthetic drift stream. Deterministic for a fixed seed.
pub fn gen_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<DriftStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = gen_month(cfg, 0, cfg.train_samples, &mut rng);
    let dev = gen_month(cfg, 0, cfg.dev_samples, &mut rng);
    let test_months = (1..=cfg.months)
        .map(|m| MonthBatch {
            month: m,
            samples: gen_month(cfg, m, cfg.samples_per_month, &mut rng),
        })
        .collect();
    let stream = DriftStream {
        feature_dim: cfg.feature_dim,
        train,
        dev,
        test_months,
    };
    stream.validate()?;
    Ok(stream)
}

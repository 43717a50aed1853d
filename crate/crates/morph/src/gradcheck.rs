//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the loss, so it stays independent of
//! the backpropagation path it verifies. Exposed as a library module because
//! the CLI ships a `grad-check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{init_model, loss_and_grad, Gradients, MlpModel, TrainBatch};

/// Gradients estimated by central differences: `(L(p+h) - L(p-h)) / 2h` for
/// every parameter. Dropout must be off for the estimate to be meaningful.
pub fn finite_diff_gradients(model: &MlpModel, batch: &TrainBatch, h: f64) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(model);
    let loss_at = |m: &MlpModel| -> Result<f64> { Ok(loss_and_grad(m, batch, 0)?.0) };

    for k in 0..model.weights().len() {
        let dim = model.weights()[k].dim();
        for i in 0..dim.0 {
            for j in 0..dim.1 {
                let mut plus = model.clone();
                plus.weights_mut()[k][[i, j]] += h;
                let mut minus = model.clone();
                minus.weights_mut()[k][[i, j]] -= h;
                grads.weights[k][[i, j]] = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
            }
        }
        for i in 0..model.biases()[k].len() {
            let mut plus = model.clone();
            plus.biases_mut()[k][i] += h;
            let mut minus = model.clone();
            minus.biases_mut()[k][i] -= h;
            grads.biases[k][i] = (loss_at(&plus)? - loss_at(&minus)?) / (2.0 * h);
        }
    }
    Ok(grads)
}

/// Relative error floored at 1e-4 so components that are numerically zero on
/// both sides compare by absolute error instead of blowing up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Worst relative error over all parameter slots.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.weights.iter().zip(&numeric.weights) {
        for (&x, &y) in a.iter().zip(n.iter()) {
            worst = worst.max(relative_error(x, y));
        }
    }
    for (a, n) in analytic.biases.iter().zip(&numeric.biases) {
        for (&x, &y) in a.iter().zip(n.iter()) {
            worst = worst.max(relative_error(x, y));
        }
    }
    worst
}

/// Outcome of a [`run_suite`] sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub models_checked: usize,
    pub parameters_checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Sweep random small models (hidden dims <= 8, batches <= 8, dropout 0) and
/// compare analytic gradients against central differences with h = 1e-5.
pub fn run_suite(models: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let tolerance = 1e-4;
    let mut worst = 0.0f64;
    let mut params_checked = 0usize;

    for trial in 0..models {
        let input_dim = rng.gen_range(2..=8);
        let mut dims = vec![input_dim];
        dims.push(rng.gen_range(1..=8));
        if rng.gen_bool(0.5) {
            dims.push(rng.gen_range(1..=8));
        }
        dims.push(2);
        let mut model = init_model(&dims, 0.0, seed ^ (trial as u64 + 1))?;
        // Zero-init biases make "all units dead" land the next layer exactly
        // on the ReLU kink, where central differences are meaningless (the
        // derivative does not exist there). Jitter the biases so evaluation
        // points sit away from kinks.
        for b in model.biases_mut() {
            b.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        }

        let n = rng.gen_range(1..=8);
        let inputs =
            ndarray::Array2::from_shape_fn((n, input_dim), |_| rng.gen_range(-1.5..1.5));
        let targets = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        let batch = TrainBatch {
            inputs,
            targets,
            weight: 1.0,
        };

        let (_, analytic) = loss_and_grad(&model, &batch, 0)?;
        let numeric = finite_diff_gradients(&model, &batch, h)?;
        worst = worst.max(max_relative_error(&analytic, &numeric));
        params_checked += analytic.weights.iter().map(|w| w.len()).sum::<usize>()
            + analytic.biases.iter().map(|b| b.len()).sum::<usize>();
    }

    Ok(GradCheckReport {
        models_checked: models,
        parameters_checked: params_checked,
        max_rel_err: worst,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_random_models() {
        let report = run_suite(5, 1234).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
        assert!(report.parameters_checked > 0);
    }

    #[test]
    fn relative_error_floors_near_zero() {
        assert!(relative_error(0.0, 1e-11) < 1e-4);
        assert!(relative_error(1.0, 1.1) > 0.05);
    }
}


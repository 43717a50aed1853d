//! Adam optimizer with bias correction.

use ndarray::{Array1, Array2};

use super::train::Gradients;
use super::MlpModel;
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamParams {
            learning_rate,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam parameters: {self:?}")))
        }
    }
}

/// First/second moment accumulators mirroring the model's parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    params: AdamParams,
    m_weights: Vec<Array2<f64>>,
    v_weights: Vec<Array2<f64>>,
    m_biases: Vec<Array1<f64>>,
    v_biases: Vec<Array1<f64>>,
    step_count: u64,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, params: AdamParams) -> Result<Self> {
        params.validate()?;
        Ok(OptimizerState {
            params,
            m_weights: model.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_weights: model.weights().iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_biases: model.biases().iter().map(|b| Array1::zeros(b.dim())).collect(),
            v_biases: model.biases().iter().map(|b| Array1::zeros(b.dim())).collect(),
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One Adam update. Increments the step count by exactly 1.
pub fn adam_step(model: &mut MlpModel, state: &mut OptimizerState, grads: &Gradients) -> Result<()> {
    grads.check_shapes(model)?;
    state.step_count += 1;
    let t = state.step_count as i32;
    let p = state.params;
    let bc1 = 1.0 - p.beta1.powi(t);
    let bc2 = 1.0 - p.beta2.powi(t);

    for k in 0..model.weights().len() {
        update_array(
            &mut model.weights_mut()[k],
            &mut state.m_weights[k],
            &mut state.v_weights[k],
            &grads.weights[k],
            p,
            bc1,
            bc2,
        );
        update_vec(
            &mut model.biases_mut()[k],
            &mut state.m_biases[k],
            &mut state.v_biases[k],
            &grads.biases[k],
            p,
            bc1,
            bc2,
        );
    }
    debug_assert!(model.is_finite(), "parameters went non-finite after adam step");
    Ok(())
}

fn update_array(
    param: &mut Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    g: &Array2<f64>,
    p: AdamParams,
    bc1: f64,
    bc2: f64,
) {
    azip_update(
        param.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()),
        g.iter(),
        p,
        bc1,
        bc2,
    );
}

fn update_vec(
    param: &mut Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    g: &Array1<f64>,
    p: AdamParams,
    bc1: f64,
    bc2: f64,
) {
    azip_update(
        param.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()),
        g.iter(),
        p,
        bc1,
        bc2,
    );
}

fn azip_update<'a, I, G>(params: I, grads: G, p: AdamParams, bc1: f64, bc2: f64)
where
    I: Iterator<Item = ((&'a mut f64, &'a mut f64), &'a mut f64)>,
    G: Iterator<Item = &'a f64>,
{
    for (((w, m), v), &g) in params.zip(grads) {
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
    }
}

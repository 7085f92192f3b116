use crate::autodiff::Matrix;
use crate::model::ModelParams;
use crate::Error;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moments per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = || params.values().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when a gradient is
/// missing, misshapen or non-finite.
pub fn adam_step(params: &mut ModelParams, grads: &[Matrix], state: &mut AdamState, lr: f64) -> Result<(), Error> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Invalid(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Invalid(format!(
                "gradient of {name} has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if let Some(i) = g.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite gradient {} in {name} at entry {i} (step {})",
                g.as_slice()[i],
                state.step
            )));
        }
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powf(state.step as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(state.step as f64);
    for (k, g) in grads.iter().enumerate() {
        let p = params.values_mut()[k].as_mut_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (i, &gi) in g.as_slice().iter().enumerate() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
    Ok(())
}

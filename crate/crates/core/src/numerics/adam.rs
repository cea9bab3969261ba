use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step_count: 0,
        }
    }

    pub fn for_param(param: &Matrix) -> Self {
        AdamState::new(param.rows(), param.cols())
    }

    /// Bias-corrected Adam update applied to `param` in place.
    pub fn update(&mut self, param: &mut Matrix, grad: &Matrix, lr: f64) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        if param.shape() != self.first_moment.shape() {
            return Err(Error::Dimension {
                op: "adam_step (state)",
                left: param.shape(),
                right: self.first_moment.shape(),
            });
        }
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::arg(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let m = self.first_moment.values_mut();
        let v = self.second_moment.values_mut();
        for (((p, &g), m), v) in param
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::update`].
pub fn adam_step(
    param: &Matrix,
    grad: &Matrix,
    state: &AdamState,
    lr: f64,
) -> Result<(Matrix, AdamState)> {
    if lr <= 0.0 {
        return Err(Error::arg(format!("learning rate must be > 0, got {lr}")));
    }
    let mut param = param.clone();
    let mut state = state.clone();
    state.update(&mut param, grad, lr)?;
    Ok((param, state))
}

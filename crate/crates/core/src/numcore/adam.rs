use serde::{Deserialize, Serialize};

use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Adam with decoupled weight decay.
///
/// The adaptive step is applied first, then every parameter is shrunk by
/// `(1 - lr * weight_decay)`.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub lr: T,
    pub weight_decay: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with zero moments congruent to `params`.
    pub fn new(params: &[Matrix<T>], lr: T, weight_decay: T) -> Self {
        let zeros: Vec<Matrix<T>> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            lr,
            weight_decay,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. `names` label parameters in error messages.
    pub fn step(&mut self, params: &mut [Matrix<T>], grads: &[Matrix<T>], names: &[String]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::LengthMismatch(format!(
                "adam holds {} moment buffers, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != p.shape() {
                return Err(Error::Matrix(format!("adam: parameter {i} shape changed")));
            }
            if !g.is_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        let decay = T::one() - self.lr * self.weight_decay;

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let ps = p.as_mut_slice();
            let gs = g.as_slice();
            let ms = m.as_mut_slice();
            let vs = v.as_mut_slice();
            for k in 0..ps.len() {
                let gk = gs[k];
                ms[k] = self.beta1 * ms[k] + (T::one() - self.beta1) * gk;
                vs[k] = self.beta2 * vs[k] + (T::one() - self.beta2) * gk * gk;
                let m_hat = ms[k] / bc1;
                let v_hat = vs[k] / bc2;
                ps[k] = (ps[k] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon)) * decay;
            }
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Adam with bias correction. Weight decay is coupled: `wd * param` is added
/// to the gradient before the moment updates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new<'a>(
        params: impl IntoIterator<Item = &'a DenseMatrix>,
        lr: f64,
        weight_decay: f64,
    ) -> Self {
        let m: Vec<DenseMatrix> = params
            .into_iter()
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. `params` must be in the same order as at construction.
    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut DenseMatrix>,
        grads: &[DenseMatrix],
    ) -> Result<()> {
        let mut params: Vec<&mut DenseMatrix> = params.into_iter().collect();
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                "parameter/gradient/state counts differ",
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!(
                        "param {:?}, grad {:?}, moment {:?}",
                        p.shape(),
                        g.shape(),
                        m.shape()
                    ),
                ));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, (w, &dw)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let dw = dw + self.weight_decay * *w;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * dw;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * dw * dw;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params() {
        let mut params = vec![DenseMatrix::from_rows(&[vec![1.0, -2.0]])];
        let mut adam = AdamState::new(&params, 0.01, 0.0);
        let before = params.clone();
        adam.step(params.iter_mut(), &[DenseMatrix::zeros(1, 2)])
            .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut params = vec![DenseMatrix::zeros(2, 2)];
        let mut adam = AdamState::new(&params, 0.01, 0.0);
        for expected in 1..=3 {
            adam.step(params.iter_mut(), &[DenseMatrix::filled(2, 2, 0.1)])
                .unwrap();
            assert_eq!(adam.steps(), expected);
        }
    }

    #[test]
    fn matches_hand_rolled_recurrence() {
        // Oracle: the Adam recurrence written out for one scalar with
        // gradient 2*w (loss w^2) plus coupled decay.
        let (lr, wd) = (0.1, 0.01);
        let mut w = 1.5f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * w + wd * w;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= lr * mh / (vh.sqrt() + 1e-8);
            expected.push(w);
        }
        let mut params = vec![DenseMatrix::filled(1, 1, 1.5)];
        let mut adam = AdamState::new(&params, lr, wd);
        for want in expected {
            let g = DenseMatrix::filled(1, 1, 2.0 * params[0].get(0, 0));
            adam.step(params.iter_mut(), &[g]).unwrap();
            assert!((params[0].get(0, 0) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut params = vec![DenseMatrix::zeros(2, 2)];
        let mut adam = AdamState::new(&params, 0.01, 0.0);
        assert!(adam
            .step(params.iter_mut(), &[DenseMatrix::zeros(2, 1)])
            .is_err());
    }
}

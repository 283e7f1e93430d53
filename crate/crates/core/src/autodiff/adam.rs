use alloc::format;
use alloc::vec::Vec;

use super::tensor::{Real, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>], config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|p| alloc::vec![T::zero(); p.len()]).collect();
        AdamState { config, first: zeros(), second: zeros(), step: 0 }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Real>(params: &mut [Tensor<T>], grads: &[Vec<T>], state: &mut AdamState<T>, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Shape {
            op: "adam_step",
            detail: format!("{} parameters, {} gradients, {} moment slots", params.len(), grads.len(), state.first.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.first[i].len() {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!("parameter {i}: {} values, gradient {}, moments {}", p.len(), g.len(), state.first[i].len()),
            });
        }
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - num_traits::Float::powi(beta1, state.step as i32);
    let c2 = 1.0 - num_traits::Float::powi(beta2, state.step as i32);
    let (b1, b2, one) = (T::of(beta1), T::of(beta2), T::one());
    let (c1, c2, lr, eps) = (T::of(c1), T::of(c2), T::of(lr), T::of(eps));
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        for j in 0..p.data.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p.data[j] = p.data[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Tensor::<f64>::zeros(&[1])];
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &[vec![1.0]], &mut s, 1e-4).unwrap();
        assert!((p[0].data[0] + 1e-4).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![Tensor::<f64>::new(&[3], vec![0.5, -1.0, 2.0]).unwrap()];
        let before = p.clone();
        let mut s = AdamState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut p, &[vec![0.0; 3]], &mut s, 1e-3).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn matches_hand_rolled_reference() {
        let grads = [[0.3, -1.2], [0.3, -1.2]];
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let mut reference = [0.1f64, 0.2];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for j in 0..2 {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mh = m[j] / (1.0 - b1.powi(t));
                let vh = v[j] / (1.0 - b2.powi(t));
                reference[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        let mut p = vec![Tensor::<f64>::new(&[2], vec![0.1, 0.2]).unwrap()];
        let mut s = AdamState::new(&p, AdamConfig::default());
        for g in grads {
            adam_step(&mut p, &[g.to_vec()], &mut s, lr).unwrap();
        }
        assert_eq!(p[0].data, reference);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = vec![Tensor::<f32>::zeros(&[2])];
        let mut s = AdamState::new(&p, AdamConfig::default());
        assert!(adam_step(&mut p, &[vec![1.0]], &mut s, 1e-3).is_err());
        assert!(adam_step(&mut p, &[], &mut s, 1e-3).is_err());
    }
}

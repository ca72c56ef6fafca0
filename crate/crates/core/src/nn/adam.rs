//! Adam optimizer with bias correction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// First/second moment estimates for a fixed parameter list.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn for_params(params: &[&Tensor]) -> AdamState {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every parameter tensor, in order. Deterministic;
/// errors on non-finite gradients before touching any parameter.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, state for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam: param {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
        g.ensure_finite("adam gradients")?;
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
        for ((pv, gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap();
        let before = p.clone();
        let mut state = AdamState::for_params(&[&p]);
        let g = Tensor::zeros(&[2]);
        adam_step(&mut [&mut p], &[g], &mut state, 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // With bias correction, one step against a constant gradient moves the
        // parameter by ~lr in the opposite sign.
        let mut p = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        let mut state = AdamState::for_params(&[&p]);
        let g = Tensor::from_vec(&[1], vec![0.37]).unwrap();
        adam_step(&mut [&mut p], &[g], &mut state, 1e-2).unwrap();
        let moved = 2.0 - p.data()[0];
        assert!((moved - 1e-2).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut p = Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap();
            let mut state = AdamState::for_params(&[&p]);
            for i in 0..50 {
                let g = Tensor::from_vec(&[3], vec![0.01 * i as f64, -0.3, 0.7]).unwrap();
                adam_step(&mut [&mut p], &[g], &mut state, 1e-3).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a.data(), b.data()); // bitwise
    }

    #[test]
    fn non_finite_gradients_rejected() {
        let mut p = Tensor::zeros(&[1]);
        let mut state = AdamState::for_params(&[&p]);
        let g = Tensor::from_vec(&[1], vec![f64::INFINITY]).unwrap();
        assert!(adam_step(&mut [&mut p], &[g], &mut state, 1e-3).is_err());
    }
}

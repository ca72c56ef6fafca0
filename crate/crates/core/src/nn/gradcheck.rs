//! Central-finite-difference verification of backpropagated gradients.
//!
//! The numeric side only ever calls the forward pass, so it stays independent
//! of the backward implementation it is checking.

use super::layer::Mode;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::Result;

/// |a - n| relative to the larger magnitude, floored so that agreement below
/// 1e-6 in absolute terms always passes.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckSummary {
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

impl GradCheckSummary {
    fn absorb(&mut self, rel: f64) {
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
        }
        self.coords_checked += 1;
    }
}

fn coord_plan(len: usize, max_coords: usize) -> Vec<usize> {
    if len <= max_coords {
        (0..len).collect()
    } else {
        let step = len / max_coords;
        (0..max_coords).map(|i| i * step).collect()
    }
}

/// Compare backpropagated parameter gradients against central differences of
/// the loss. `loss_fn` maps the network output to a loss and its gradient;
/// the same `mode` and `rng_seed` are used on every evaluation so dropout
/// masks are held fixed.
pub fn check_network_params(
    net: &mut Network,
    x: &Tensor,
    mode: Mode,
    rng_seed: u64,
    loss_fn: &dyn Fn(&Tensor) -> Result<(f64, Tensor)>,
    eps: f64,
    max_coords_per_tensor: usize,
) -> Result<GradCheckSummary> {
    let (y, tape) = net.forward(x, mode, rng_seed)?;
    let (_, dy) = loss_fn(&y)?;
    let (_, grads) = net.backward(&tape, &dy)?;

    let mut summary = GradCheckSummary {
        max_rel_err: 0.0,
        coords_checked: 0,
    };
    let n_params = grads.len();
    for pi in 0..n_params {
        for ci in coord_plan(grads[pi].len(), max_coords_per_tensor) {
            let analytic = grads[pi].data()[ci];
            net.params_mut()[pi].data_mut()[ci] += eps;
            let (yp, _) = net.forward(x, mode, rng_seed)?;
            let (lp, _) = loss_fn(&yp)?;
            net.params_mut()[pi].data_mut()[ci] -= 2.0 * eps;
            let (ym, _) = net.forward(x, mode, rng_seed)?;
            let (lm, _) = loss_fn(&ym)?;
            net.params_mut()[pi].data_mut()[ci] += eps;
            let numeric = (lp - lm) / (2.0 * eps);
            summary.absorb(relative_error(analytic, numeric));
        }
    }
    Ok(summary)
}

/// Same check for the gradient w.r.t. the network input.
pub fn check_network_input(
    net: &mut Network,
    x: &Tensor,
    mode: Mode,
    rng_seed: u64,
    loss_fn: &dyn Fn(&Tensor) -> Result<(f64, Tensor)>,
    eps: f64,
    max_coords: usize,
) -> Result<GradCheckSummary> {
    let (y, tape) = net.forward(x, mode, rng_seed)?;
    let (_, dy) = loss_fn(&y)?;
    let (dx, _) = net.backward(&tape, &dy)?;

    let mut summary = GradCheckSummary {
        max_rel_err: 0.0,
        coords_checked: 0,
    };
    let mut probe = x.clone();
    for ci in coord_plan(x.len(), max_coords) {
        let analytic = dx.data()[ci];
        probe.data_mut()[ci] += eps;
        let (yp, _) = net.forward(&probe, mode, rng_seed)?;
        let (lp, _) = loss_fn(&yp)?;
        probe.data_mut()[ci] -= 2.0 * eps;
        let (ym, _) = net.forward(&probe, mode, rng_seed)?;
        let (lm, _) = loss_fn(&ym)?;
        probe.data_mut()[ci] += eps;
        let numeric = (lp - lm) / (2.0 * eps);
        summary.absorb(relative_error(analytic, numeric));
    }
    Ok(summary)
}

//! Reconstruction loss: per-position softmax cross-entropy against a one-hot
//! character matrix.

use super::tensor::Tensor;
use crate::error::{Error, Result};

fn target_index(row: &[f64]) -> Result<usize> {
    let mut idx = None;
    for (i, v) in row.iter().enumerate() {
        if *v == 1.0 {
            if idx.is_some() {
                return Err(Error::Argument("target row is not one-hot".into()));
            }
            idx = Some(i);
        } else if *v != 0.0 {
            return Err(Error::Argument("target row is not one-hot".into()));
        }
    }
    idx.ok_or_else(|| Error::Argument("target row is not one-hot".into()))
}

/// Mean over character positions of the cross-entropy after a per-position
/// softmax. Returns the loss and its gradient w.r.t. the scores,
/// `(softmax - target) / positions`.
pub fn softmax_xent_per_position(scores: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if scores.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss: scores {:?} vs target {:?}",
            scores.shape(),
            target.shape()
        )));
    }
    let positions = scores.rows();
    let d = scores.cols();
    if positions == 0 || d == 0 {
        return Err(Error::Shape("loss: empty scores".into()));
    }
    let mut grad = scores.clone();
    let mut loss = 0.0;
    for (srow, trow) in grad
        .data_mut()
        .chunks_mut(d)
        .zip(target.data().chunks(d))
    {
        let t = target_index(trow)?;
        let max = srow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for v in srow.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        loss += -(srow[t] / denom).ln();
        let inv = 1.0 / (denom * positions as f64);
        for v in srow.iter_mut() {
            *v *= inv;
        }
        srow[t] -= 1.0 / positions as f64;
    }
    loss /= positions as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, grad))
}

/// Batched variant over `(batch, positions, d)` tensors: the scalar is the
/// mean of per-sample losses and the gradient is scaled by `1/batch` so it is
/// the gradient of that mean.
pub fn softmax_xent_batch(scores: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if scores.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "loss: scores {:?} vs targets {:?}",
            scores.shape(),
            targets.shape()
        )));
    }
    let shape = scores.shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::Shape("batched loss expects (batch, positions, d)".into()));
    }
    let (b, l, d) = (shape[0], shape[1], shape[2]);
    if b == 0 {
        return Err(Error::Shape("batched loss: empty batch".into()));
    }
    let mut total = 0.0;
    let mut grad = Tensor::zeros(&shape);
    for i in 0..b {
        let srow = Tensor::from_vec(&[l, d], scores.data()[i * l * d..(i + 1) * l * d].to_vec())?;
        let trow = Tensor::from_vec(&[l, d], targets.data()[i * l * d..(i + 1) * l * d].to_vec())?;
        let (loss, g) = softmax_xent_per_position(&srow, &trow)?;
        total += loss;
        let scale = 1.0 / b as f64;
        for (dst, src) in grad.data_mut()[i * l * d..(i + 1) * l * d]
            .iter_mut()
            .zip(g.data())
        {
            *dst = src * scale;
        }
    }
    Ok((total / b as f64, grad))
}

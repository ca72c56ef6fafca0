//! Feed-forward layers with hand-written forward and backward passes.
//!
//! Layout conventions: `Dense`, `BatchNorm`, `Relu` and `Dropout` treat the
//! input as a matrix `(rows, features)` where every leading axis is flattened
//! into rows, so a per-position dense over `(batch, time, chars)` works
//! unchanged. `Conv1d`, `MaxPoolTime` and `Flatten` require a rank-3 input
//! `(batch, time, channels)`.
//!
//! Forward and backward take their tensors by value and mutate in place
//! where the math allows; the training loop's hot path is dominated by the
//! matrix products, not by buffer traffic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm_into, matmul, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer, `y = x W + b`, weights `(in, out)`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

impl Dense {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Dense {
        Dense {
            w: he_uniform(&[fan_in, fan_out], fan_in, rng),
            b: Tensor::zeros(&[fan_out]),
        }
    }
}

/// 1-D convolution over the time axis with zero same-padding and stride 1.
/// Weights are stored as `(width * in_ch, out_ch)` so the forward pass is an
/// im2col matrix product.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: Tensor,
    pub b: Tensor,
    pub width: usize,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl Conv1d {
    pub fn new(in_ch: usize, out_ch: usize, width: usize, rng: &mut ChaCha8Rng) -> Conv1d {
        Conv1d {
            w: he_uniform(&[width * in_ch, out_ch], width * in_ch, rng),
            b: Tensor::zeros(&[out_ch]),
            width,
            in_ch,
            out_ch,
        }
    }
}

/// Per-feature batch normalization over all leading axes.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(features: usize) -> BatchNorm {
        BatchNorm {
            gamma: Tensor::from_vec(&[features], vec![1.0; features]).unwrap(),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::from_vec(&[features], vec![1.0; features]).unwrap(),
            momentum: 0.1,
            eps: 1e-8,
        }
    }
}

/// Inverted dropout: train-mode outputs are scaled by `1/(1-p)` so eval mode
/// is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
}

#[derive(Clone, Debug)]
pub enum Layer {
    Dense(Dense),
    Conv1d(Conv1d),
    MaxPoolTime,
    Flatten,
    Relu,
    BatchNorm(BatchNorm),
    Dropout(Dropout),
}

/// Per-layer activations saved by a forward pass for the matching backward.
#[derive(Clone, Debug)]
pub enum Cache {
    Dense {
        x: Tensor,
    },
    Conv1d {
        cols: Tensor,
        in_shape: Vec<usize>,
    },
    MaxPoolTime {
        argmax: Vec<u32>,
        in_shape: Vec<usize>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Relu {
        active: Vec<bool>,
    },
    BatchNorm {
        x_hat: Tensor,
        inv_std: Vec<f64>,
        train: bool,
    },
    Dropout {
        mask: Option<Vec<bool>>,
        keep: f64,
    },
}

/// Batch statistics a train-mode forward wants folded into running buffers.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| rng.random::<f64>() * 2.0 * limit - limit)
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn rank3(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, t, c] => Ok((*b, *t, *c)),
        s => Err(Error::Shape(format!("{what}: expected rank-3 input, got {s:?}"))),
    }
}

/// im2col for same-padded width-`w` windows: `(B, T, C)` -> `(B*T, w*C)`.
fn im2col(x: &Tensor, width: usize) -> Result<Tensor> {
    let (b, t, c) = rank3(x, "conv1d")?;
    let pad_left = (width - 1) / 2;
    let mut cols = Tensor::zeros(&[b * t, width * c]);
    let xd = x.data();
    let cd = cols.data_mut();
    for bi in 0..b {
        for ti in 0..t {
            let row = (bi * t + ti) * width * c;
            for j in 0..width {
                let src_t = ti as isize + j as isize - pad_left as isize;
                if src_t >= 0 && (src_t as usize) < t {
                    let src = (bi * t + src_t as usize) * c;
                    cd[row + j * c..row + (j + 1) * c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
    }
    Ok(cols)
}

/// Adjoint of `im2col`: scatter `(B*T, w*C)` gradients back onto `(B, T, C)`.
fn col2im(dcols: &Tensor, in_shape: &[usize], width: usize) -> Tensor {
    let (b, t, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let pad_left = (width - 1) / 2;
    let mut dx = Tensor::zeros(in_shape);
    let dd = dx.data_mut();
    let cd = dcols.data();
    for bi in 0..b {
        for ti in 0..t {
            let row = (bi * t + ti) * width * c;
            for j in 0..width {
                let src_t = ti as isize + j as isize - pad_left as isize;
                if src_t >= 0 && (src_t as usize) < t {
                    let dst = (bi * t + src_t as usize) * c;
                    for k in 0..c {
                        dd[dst + k] += cd[row + j * c + k];
                    }
                }
            }
        }
    }
    dx
}

fn add_bias_rows(y: &mut Tensor, b: &Tensor) {
    let cols = y.cols();
    let bd = b.data();
    for row in y.data_mut().chunks_mut(cols) {
        for (v, add) in row.iter_mut().zip(bd) {
            *v += add;
        }
    }
}

fn bias_grad(dy: &Tensor) -> Tensor {
    let cols = dy.cols();
    let mut db = Tensor::zeros(&[cols]);
    let dbd = db.data_mut();
    for row in dy.data().chunks(cols) {
        for (acc, v) in dbd.iter_mut().zip(row) {
            *acc += v;
        }
    }
    db
}

/// Exact u32 threshold for `u < p` on a uniform 32-bit draw.
fn dropout_threshold(p: f64) -> u32 {
    ((p * 4294967296.0) as u64).min(u32::MAX as u64) as u32
}

impl Layer {
    /// Run the layer on an owned input. Train-mode batch-norm returns the
    /// batch statistics it wants merged into the running buffers; the owning
    /// network applies them.
    pub fn forward(
        &self,
        x: Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Cache, Option<BnUpdate>)> {
        match self {
            Layer::Dense(l) => {
                let (_, in_dim) = x.mat_dims();
                if in_dim != l.w.shape()[0] {
                    return Err(Error::Shape(format!(
                        "dense: input width {} vs weights {:?}",
                        in_dim,
                        l.w.shape()
                    )));
                }
                let mut y = matmul(&x, false, &l.w, false)?;
                add_bias_rows(&mut y, &l.b);
                let mut out_shape = x.shape().to_vec();
                *out_shape.last_mut().unwrap() = l.w.shape()[1];
                let y = y.reshaped(&out_shape)?;
                Ok((y, Cache::Dense { x }, None))
            }
            Layer::Conv1d(l) => {
                let (b, t, c) = rank3(&x, "conv1d")?;
                if c != l.in_ch {
                    return Err(Error::Shape(format!(
                        "conv1d: {} input channels, layer expects {}",
                        c, l.in_ch
                    )));
                }
                let cols = im2col(&x, l.width)?;
                let mut y = matmul(&cols, false, &l.w, false)?;
                add_bias_rows(&mut y, &l.b);
                let y = y.reshaped(&[b, t, l.out_ch])?;
                Ok((
                    y,
                    Cache::Conv1d {
                        cols,
                        in_shape: x.shape().to_vec(),
                    },
                    None,
                ))
            }
            Layer::MaxPoolTime => {
                let (b, t, c) = rank3(&x, "max-pool-over-time")?;
                if t == 0 {
                    return Err(Error::Shape("max-pool-over-time: empty time axis".into()));
                }
                let mut y = Tensor::zeros(&[b, c]);
                let mut argmax = vec![0u32; b * c];
                let xd = x.data();
                let yd = y.data_mut();
                for bi in 0..b {
                    for ci in 0..c {
                        let mut best = xd[bi * t * c + ci];
                        let mut best_t = 0u32;
                        for ti in 1..t {
                            let v = xd[(bi * t + ti) * c + ci];
                            if v > best {
                                best = v;
                                best_t = ti as u32;
                            }
                        }
                        yd[bi * c + ci] = best;
                        argmax[bi * c + ci] = best_t;
                    }
                }
                Ok((
                    y,
                    Cache::MaxPoolTime {
                        argmax,
                        in_shape: x.shape().to_vec(),
                    },
                    None,
                ))
            }
            Layer::Flatten => {
                let (b, t, c) = rank3(&x, "flatten")?;
                let in_shape = x.shape().to_vec();
                let y = x.reshaped(&[b, t * c])?;
                Ok((y, Cache::Flatten { in_shape }, None))
            }
            Layer::Relu => {
                let mut y = x;
                let mut active = vec![false; y.len()];
                for (v, a) in y.data_mut().iter_mut().zip(active.iter_mut()) {
                    if *v > 0.0 {
                        *a = true;
                    } else {
                        *v = 0.0;
                    }
                }
                Ok((y, Cache::Relu { active }, None))
            }
            Layer::BatchNorm(l) => {
                let (rows, c) = x.mat_dims();
                if c != l.gamma.len() {
                    return Err(Error::Shape(format!(
                        "batch-norm: {} features, layer expects {}",
                        c,
                        l.gamma.len()
                    )));
                }
                if rows == 0 {
                    return Err(Error::Shape("batch-norm: empty batch".into()));
                }
                let (mean, var) = match mode {
                    Mode::Train => {
                        let n = rows as f64;
                        let mut mean = vec![0.0; c];
                        for row in x.data().chunks(c) {
                            for (m, v) in mean.iter_mut().zip(row) {
                                *m += v;
                            }
                        }
                        for m in &mut mean {
                            *m /= n;
                        }
                        let mut var = vec![0.0; c];
                        for row in x.data().chunks(c) {
                            for ((vv, v), m) in var.iter_mut().zip(row).zip(&mean) {
                                let d = v - m;
                                *vv += d * d;
                            }
                        }
                        for v in &mut var {
                            *v /= n;
                        }
                        (mean, var)
                    }
                    Mode::Eval => (l.running_mean.data().to_vec(), l.running_var.data().to_vec()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + l.eps).sqrt()).collect();
                // normalize in place; the moved input becomes x_hat
                let mut x_hat = x;
                for row in x_hat.data_mut().chunks_mut(c) {
                    for ((v, m), s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                        *v = (*v - m) * s;
                    }
                }
                let g = l.gamma.data();
                let be = l.beta.data();
                let mut y = Tensor::zeros(x_hat.shape());
                for (yrow, xrow) in y
                    .data_mut()
                    .chunks_mut(c)
                    .zip(x_hat.data().chunks(c))
                {
                    for ci in 0..c {
                        yrow[ci] = xrow[ci] * g[ci] + be[ci];
                    }
                }
                let update = match mode {
                    Mode::Train => Some(BnUpdate { mean, var }),
                    Mode::Eval => None,
                };
                Ok((
                    y,
                    Cache::BatchNorm {
                        x_hat,
                        inv_std,
                        train: mode == Mode::Train,
                    },
                    update,
                ))
            }
            Layer::Dropout(l) => match mode {
                Mode::Eval => Ok((
                    x,
                    Cache::Dropout {
                        mask: None,
                        keep: 1.0,
                    },
                    None,
                )),
                Mode::Train => {
                    let keep = 1.0 - l.p;
                    let threshold = dropout_threshold(l.p);
                    let mut y = x;
                    let mut mask = vec![false; y.len()];
                    for (v, m) in y.data_mut().iter_mut().zip(mask.iter_mut()) {
                        if rng.random::<u32>() >= threshold {
                            *m = true;
                            *v /= keep;
                        } else {
                            *v = 0.0;
                        }
                    }
                    Ok((y, Cache::Dropout { mask: Some(mask), keep }, None))
                }
            },
        }
    }

    /// Gradient of the loss w.r.t. the layer input and parameters, reusing
    /// the forward cache (including dropout masks and batch-norm statistics).
    pub fn backward(&self, cache: &Cache, dy: Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match (self, cache) {
            (Layer::Dense(l), Cache::Dense { x }) => {
                let dw = matmul(x, true, &dy, false)?;
                let db = bias_grad(&dy);
                let mut dx = Tensor::zeros(x.shape());
                gemm_into(&mut dx, 1.0, &dy, false, &l.w, true, 0.0)?;
                Ok((dx, vec![dw, db]))
            }
            (Layer::Conv1d(l), Cache::Conv1d { cols, in_shape }) => {
                let dw = matmul(cols, true, &dy, false)?;
                let db = bias_grad(&dy);
                let dcols = matmul(&dy, false, &l.w, true)?;
                let dx = col2im(&dcols, in_shape, l.width);
                Ok((dx, vec![dw, db]))
            }
            (Layer::MaxPoolTime, Cache::MaxPoolTime { argmax, in_shape }) => {
                let (b, t, c) = (in_shape[0], in_shape[1], in_shape[2]);
                let mut dx = Tensor::zeros(in_shape);
                let dd = dx.data_mut();
                let dyd = dy.data();
                for bi in 0..b {
                    for ci in 0..c {
                        let ti = argmax[bi * c + ci] as usize;
                        dd[(bi * t + ti) * c + ci] += dyd[bi * c + ci];
                    }
                }
                Ok((dx, vec![]))
            }
            (Layer::Flatten, Cache::Flatten { in_shape }) => {
                Ok((dy.reshaped(in_shape)?, vec![]))
            }
            (Layer::Relu, Cache::Relu { active }) => {
                let mut dx = dy;
                for (v, a) in dx.data_mut().iter_mut().zip(active) {
                    if !a {
                        *v = 0.0;
                    }
                }
                Ok((dx, vec![]))
            }
            (Layer::BatchNorm(l), Cache::BatchNorm { x_hat, inv_std, train }) => {
                let (rows, c) = x_hat.mat_dims();
                let g = l.gamma.data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (dy_row, xh_row) in dy.data().chunks(c).zip(x_hat.data().chunks(c)) {
                    for ci in 0..c {
                        dgamma[ci] += dy_row[ci] * xh_row[ci];
                        dbeta[ci] += dy_row[ci];
                    }
                }
                let mut dx = dy;
                if *train {
                    // Full batch-statistics gradient.
                    let n = rows as f64;
                    for (dx_row, xh_row) in
                        dx.data_mut().chunks_mut(c).zip(x_hat.data().chunks(c))
                    {
                        for ci in 0..c {
                            let dxhat = dx_row[ci] * g[ci];
                            dx_row[ci] = inv_std[ci] / n
                                * (n * dxhat - g[ci] * dbeta[ci] - xh_row[ci] * g[ci] * dgamma[ci]);
                        }
                    }
                } else {
                    // Frozen statistics: a per-feature affine map.
                    for dx_row in dx.data_mut().chunks_mut(c) {
                        for ci in 0..c {
                            dx_row[ci] *= g[ci] * inv_std[ci];
                        }
                    }
                }
                let dgamma = Tensor::from_vec(&[c], dgamma)?;
                let dbeta = Tensor::from_vec(&[c], dbeta)?;
                Ok((dx, vec![dgamma, dbeta]))
            }
            (Layer::Dropout(_), Cache::Dropout { mask, keep }) => {
                let mut dx = dy;
                if let Some(mask) = mask {
                    for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                        if *m {
                            *v /= keep;
                        } else {
                            *v = 0.0;
                        }
                    }
                }
                Ok((dx, vec![]))
            }
            _ => Err(Error::Shape("backward: cache does not match layer".into())),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(l) => vec![&l.w, &l.b],
            Layer::Conv1d(l) => vec![&l.w, &l.b],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.w, &mut l.b],
            Layer::Conv1d(l) => vec![&mut l.w, &mut l.b],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => vec![],
        }
    }

    pub fn buffers(&self) -> Vec<&Tensor> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => vec![],
        }
    }

    pub fn apply_bn_update(&mut self, update: &BnUpdate) {
        if let Layer::BatchNorm(l) = self {
            let mom = l.momentum;
            for (r, m) in l.running_mean.data_mut().iter_mut().zip(&update.mean) {
                *r = (1.0 - mom) * *r + mom * m;
            }
            for (r, v) in l.running_var.data_mut().iter_mut().zip(&update.var) {
                *r = (1.0 - mom) * *r + mom * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn dense_identity_eval() {
        let mut l = Dense::new(3, 3, &mut rng());
        l.w = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        l.b = Tensor::zeros(&[3]);
        let layer = Layer::Dense(l);
        let x = Tensor::from_vec(&[2, 3], vec![1., -2., 3., 0.5, 0., -1.]).unwrap();
        let (y, _, _) = layer.forward(x.clone(), Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1d_all_ones_filter() {
        // 3-wide all-ones filter over [1,2,3,4] with zero same-padding.
        let mut l = Conv1d::new(1, 1, 3, &mut rng());
        l.w = Tensor::from_vec(&[3, 1], vec![1., 1., 1.]).unwrap();
        l.b = Tensor::zeros(&[1]);
        let layer = Layer::Conv1d(l);
        let x = Tensor::from_vec(&[1, 4, 1], vec![1., 2., 3., 4.]).unwrap();
        let (y, _, _) = layer.forward(x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y.data(), &[3., 6., 9., 7.]);
    }

    #[test]
    fn maxpool_first_max_wins() {
        let layer = Layer::MaxPoolTime;
        let x = Tensor::from_vec(&[1, 3, 2], vec![5., 1., 5., 3., 2., 3.]).unwrap();
        let (y, cache, _) = layer.forward(x, Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y.data(), &[5., 3.]);
        match cache {
            Cache::MaxPoolTime { argmax, .. } => assert_eq!(argmax, vec![0, 1]),
            _ => panic!("wrong cache"),
        }
    }

    #[test]
    fn dropout_reproducible_and_eval_identity() {
        let layer = Layer::Dropout(Dropout { p: 0.25 });
        let x = Tensor::from_vec(&[1, 8], vec![1.0; 8]).unwrap();
        let (y1, _, _) = layer.forward(x.clone(), Mode::Train, &mut rng()).unwrap();
        let (y2, _, _) = layer.forward(x.clone(), Mode::Train, &mut rng()).unwrap();
        assert_eq!(y1, y2);
        let (ye, _, _) = layer.forward(x.clone(), Mode::Eval, &mut rng()).unwrap();
        assert_eq!(ye, x);
    }

    #[test]
    fn batchnorm_train_standardizes() {
        let layer = Layer::BatchNorm(BatchNorm::new(2));
        let x = Tensor::from_vec(&[4, 2], vec![1., 10., 2., 20., 3., 30., 4., 40.]).unwrap();
        let (y, _, update) = layer.forward(x, Mode::Train, &mut rng()).unwrap();
        let n = 4.0;
        for c in 0..2 {
            let mean: f64 = (0..4).map(|r| y.data()[r * 2 + c]).sum::<f64>() / n;
            let var: f64 = (0..4).map(|r| (y.data()[r * 2 + c] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
        let update = update.unwrap();
        assert!((update.mean[0] - 2.5).abs() < 1e-12);
    }
}

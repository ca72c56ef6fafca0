//! The embedding model: a shared character network (ChNN) encoding the target
//! and every neighbor, horizontal/vertical context networks (HNN, VNN), a
//! merge network (LNN) and a reconstruction head (E) trained end-to-end to
//! rebuild each token from its surroundings. The token embedding is the
//! hidden activation of E's first fully connected layer.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::context::{onehot_into, ContextSample};
use crate::error::{Error, Result};
use crate::grid::CharCodec;
use crate::nn::adam::{adam_step, AdamState};
use crate::nn::layer::{BatchNorm, Conv1d, Dense, Dropout, Layer, Mode};
use crate::nn::loss::softmax_xent_batch;
use crate::nn::network::{mix_seed, Network};
use crate::nn::serialize::{read_container, write_container};
use crate::nn::tensor::{concat_cols, gather_rows, scatter_add_rows, split_cols, Tensor};

/// Architecture and encoding parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sc2tConfig {
    /// Character alphabet size.
    pub d: usize,
    /// Context embedding width (LNN output).
    pub s_e: usize,
    /// Character embedding width (ChNN output).
    pub ch_e: usize,
    /// Maximum token length.
    pub l_t: usize,
    /// Horizontal window including the target slot; odd.
    pub h_w: usize,
    /// Vertical window including the target line; odd.
    pub v_w: usize,
    /// Convolution filter count.
    pub n_f: usize,
    /// Width of the first per-character dense layer in the ChNN.
    pub char_fc_units: usize,
    /// Dropout inside the subnetworks.
    pub dropout_inner: f64,
    /// Dropout on the concatenated char/context vector feeding E.
    pub dropout_merge: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

impl Default for Sc2tConfig {
    fn default() -> Self {
        Sc2tConfig {
            d: 78,
            s_e: 50,
            ch_e: 50,
            l_t: 20,
            h_w: 21,
            v_w: 5,
            n_f: 64,
            char_fc_units: 16,
            dropout_inner: 0.25,
            dropout_merge: 0.5,
            seed: 0,
        }
    }
}

impl Sc2tConfig {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [
            (self.d, "d"),
            (self.s_e, "s_e"),
            (self.ch_e, "ch_e"),
            (self.l_t, "l_t"),
            (self.n_f, "n_f"),
            (self.char_fc_units, "char_fc_units"),
        ] {
            if v == 0 {
                return Err(Error::Argument(format!("{what} must be at least 1")));
            }
        }
        for (v, what) in [(self.h_w, "h_w"), (self.v_w, "v_w")] {
            // the window includes the target slot; the context networks need
            // at least one real neighbor slot per side
            if v < 3 || v % 2 == 0 {
                return Err(Error::Argument(format!(
                    "{what} must be odd and at least 3, got {v}"
                )));
            }
        }
        for (v, what) in [
            (self.dropout_inner, "dropout_inner"),
            (self.dropout_merge, "dropout_merge"),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Argument(format!("{what} must be in [0, 1)")));
            }
        }
        if self.d > 256 {
            return Err(Error::Argument("d above 256 is not supported".into()));
        }
        Ok(())
    }

    /// Token embedding width.
    pub fn embed_dim(&self) -> usize {
        self.ch_e + self.s_e
    }

    pub fn window(&self) -> crate::context::WindowConfig {
        crate::context::WindowConfig {
            h_w: self.h_w,
            v_w: self.v_w,
            l_t: self.l_t,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(88);
        for v in [
            self.d as u64,
            self.s_e as u64,
            self.ch_e as u64,
            self.l_t as u64,
            self.h_w as u64,
            self.v_w as u64,
            self.n_f as u64,
            self.char_fc_units as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.dropout_inner.to_le_bytes());
        out.extend_from_slice(&self.dropout_merge.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8]) -> Result<Sc2tConfig> {
        if bytes.len() != 88 {
            return Err(Error::Data(format!(
                "model config header is {} bytes, expected 88",
                bytes.len()
            )));
        }
        let u = |i: usize| u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        let f = |i: usize| f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        let cfg = Sc2tConfig {
            d: u(0) as usize,
            s_e: u(1) as usize,
            ch_e: u(2) as usize,
            l_t: u(3) as usize,
            h_w: u(4) as usize,
            v_w: u(5) as usize,
            n_f: u(6) as usize,
            char_fc_units: u(7) as usize,
            dropout_inner: f(8),
            dropout_merge: f(9),
            seed: u(10),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training hyperparameters. The defaults are the library's, not taken from
/// any reference setup.
#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Per-epoch mean training loss plus corpus size and wall time.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub samples: usize,
    pub wall: Duration,
}

/// Corpus-level root-mean-square norms used by the K-weighted embedding,
/// computed once per embedding run.
#[derive(Clone, Copy, Debug)]
pub struct KScaling {
    pub rms_char: f64,
    pub rms_ctx: f64,
}

/// RMS of the per-row Euclidean norms of each part.
pub fn k_scaling(char_parts: &Tensor, ctx_parts: &Tensor) -> KScaling {
    let rms = |t: &Tensor| {
        let n = t.rows().max(1) as f64;
        let sum: f64 = t.data().iter().map(|v| v * v).sum();
        let rms = (sum / n).sqrt();
        if rms > 0.0 {
            rms
        } else {
            1.0
        }
    };
    KScaling {
        rms_char: rms(char_parts),
        rms_ctx: rms(ctx_parts),
    }
}

/// `concat(K * char / rms_char, (1-K) * ctx / rms_ctx)` per row.
pub fn compose_k(
    char_parts: &Tensor,
    ctx_parts: &Tensor,
    k: f64,
    scale: &KScaling,
) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&k) {
        return Err(Error::Argument(format!("K must be in [0, 1], got {k}")));
    }
    let mut c = char_parts.clone();
    for v in c.data_mut() {
        *v *= k / scale.rms_char;
    }
    let mut x = ctx_parts.clone();
    for v in x.data_mut() {
        *v *= (1.0 - k) / scale.rms_ctx;
    }
    concat_cols(&[&c, &x])
}

/// The five-subnetwork parameter set.
#[derive(Clone, Debug)]
pub struct Sc2tModel {
    cfg: Sc2tConfig,
    chnn: Network,
    hnn: Network,
    vnn: Network,
    lnn: Network,
    e_net: Network,
}

/// Index of the layer after which E's hidden activation is the embedding:
/// dropout, dense, relu.
const E_EMBED_PREFIX: usize = 3;

/// Build the model with He-uniform initialization from `cfg.seed`.
pub fn build_model(cfg: &Sc2tConfig) -> Result<Sc2tModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p_in = cfg.dropout_inner;
    let conv_tail = |rng: &mut ChaCha8Rng, cfg: &Sc2tConfig| {
        vec![
            Layer::Conv1d(Conv1d::new(cfg.char_fc_units, cfg.n_f, 3, rng)),
            Layer::BatchNorm(BatchNorm::new(cfg.n_f)),
            Layer::Relu,
            Layer::Dropout(Dropout { p: p_in }),
            Layer::Conv1d(Conv1d::new(cfg.n_f, cfg.n_f, 3, rng)),
            Layer::BatchNorm(BatchNorm::new(cfg.n_f)),
            Layer::Relu,
            Layer::Dropout(Dropout { p: p_in }),
        ]
    };

    let mut chnn_layers = vec![
        Layer::Dense(Dense::new(cfg.d, cfg.char_fc_units, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(cfg.char_fc_units)),
        Layer::Relu,
        Layer::Dropout(Dropout { p: p_in }),
    ];
    chnn_layers.extend(conv_tail(&mut rng, cfg));
    chnn_layers.push(Layer::MaxPoolTime);
    chnn_layers.push(Layer::Dense(Dense::new(cfg.n_f, cfg.ch_e, &mut rng)));
    chnn_layers.push(Layer::BatchNorm(BatchNorm::new(cfg.ch_e)));
    chnn_layers.push(Layer::Relu);
    let chnn = Network::new(chnn_layers);

    let context_net = |rng: &mut ChaCha8Rng| -> Network {
        let mut layers = vec![
            Layer::Dense(Dense::new(cfg.ch_e, cfg.char_fc_units, rng)),
            Layer::BatchNorm(BatchNorm::new(cfg.char_fc_units)),
            Layer::Relu,
            Layer::Dropout(Dropout { p: p_in }),
        ];
        layers.extend(conv_tail(rng, cfg));
        layers.push(Layer::Flatten);
        Network::new(layers)
    };
    let hnn = context_net(&mut rng);
    let vnn = context_net(&mut rng);

    let h_flat = (cfg.h_w - 1) * cfg.n_f;
    let v_flat = (cfg.v_w - 1) * cfg.n_f;
    let lnn = Network::new(vec![
        Layer::Dense(Dense::new(h_flat + v_flat, 2 * cfg.s_e, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(2 * cfg.s_e)),
        Layer::Relu,
        Layer::Dropout(Dropout { p: p_in }),
        Layer::Dense(Dense::new(2 * cfg.s_e, cfg.s_e, &mut rng)),
        Layer::BatchNorm(BatchNorm::new(cfg.s_e)),
        Layer::Relu,
    ]);

    let e_in = cfg.embed_dim();
    let e_net = Network::new(vec![
        Layer::Dropout(Dropout {
            p: cfg.dropout_merge,
        }),
        Layer::Dense(Dense::new(e_in, e_in, &mut rng)),
        Layer::Relu,
        Layer::Dense(Dense::new(e_in, cfg.l_t * cfg.d, &mut rng)),
    ]);

    Ok(Sc2tModel {
        cfg: *cfg,
        chnn,
        hnn,
        vnn,
        lnn,
        e_net,
    })
}

/// Per-batch interning of token encodings: every distinct encoding (plus the
/// zero-padding slot at id 0) passes through the shared character network
/// exactly once.
struct BatchPlan {
    /// Dense one-hot stack `(U, l_t, d)`; row block 0 is the zero padding.
    onehot: Tensor,
    uniques: usize,
    target_uid: Vec<u32>,
    h_uid: Vec<u32>,
    v_uid: Vec<u32>,
}

fn intern<'a>(
    map: &mut HashMap<&'a [u8], u32>,
    uniq: &mut Vec<Option<&'a [u8]>>,
    enc: &'a [u8],
) -> u32 {
    if let Some(&id) = map.get(enc) {
        return id;
    }
    let id = uniq.len() as u32;
    map.insert(enc, id);
    uniq.push(Some(enc));
    id
}

fn plan_batch(batch: &[&ContextSample], cfg: &Sc2tConfig) -> Result<BatchPlan> {
    let h_slots = cfg.h_w - 1;
    let v_slots = cfg.v_w - 1;
    let mut map: HashMap<&[u8], u32> = HashMap::new();
    let mut uniq: Vec<Option<&[u8]>> = vec![None]; // id 0 is the zero padding
    let mut target_uid = Vec::with_capacity(batch.len());
    let mut h_uid = Vec::with_capacity(batch.len() * h_slots);
    let mut v_uid = Vec::with_capacity(batch.len() * v_slots);
    for s in batch {
        if s.h_ctx.len() != h_slots || s.v_ctx.len() != v_slots || s.target.len() != cfg.l_t {
            return Err(Error::Shape(format!(
                "sample at {:?} does not match the model windows (h_w {}, v_w {}, l_t {})",
                s.position, cfg.h_w, cfg.v_w, cfg.l_t
            )));
        }
        target_uid.push(intern(&mut map, &mut uniq, &s.target));
        for slot in &s.h_ctx {
            h_uid.push(slot.as_ref().map_or(0, |e| intern(&mut map, &mut uniq, e)));
        }
        for slot in &s.v_ctx {
            v_uid.push(slot.as_ref().map_or(0, |e| intern(&mut map, &mut uniq, e)));
        }
    }
    let u = uniq.len();
    let span = cfg.l_t * cfg.d;
    let mut onehot = Tensor::zeros(&[u, cfg.l_t, cfg.d]);
    for (i, enc) in uniq.iter().enumerate() {
        onehot_into(*enc, cfg.d, &mut onehot.data_mut()[i * span..(i + 1) * span]);
    }
    Ok(BatchPlan {
        onehot,
        uniques: u,
        target_uid,
        h_uid,
        v_uid,
    })
}

fn batch_targets(batch: &[&ContextSample], cfg: &Sc2tConfig) -> Tensor {
    let span = cfg.l_t * cfg.d;
    let mut targets = Tensor::zeros(&[batch.len(), cfg.l_t, cfg.d]);
    for (i, s) in batch.iter().enumerate() {
        onehot_into(
            Some(&s.target),
            cfg.d,
            &mut targets.data_mut()[i * span..(i + 1) * span],
        );
    }
    targets
}

impl Sc2tModel {
    pub fn config(&self) -> &Sc2tConfig {
        &self.cfg
    }

    fn all_params(&self) -> Vec<&Tensor> {
        let mut v = self.chnn.params();
        v.extend(self.hnn.params());
        v.extend(self.vnn.params());
        v.extend(self.lnn.params());
        v.extend(self.e_net.params());
        v
    }

    fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.chnn.params_mut();
        v.extend(self.hnn.params_mut());
        v.extend(self.vnn.params_mut());
        v.extend(self.lnn.params_mut());
        v.extend(self.e_net.params_mut());
        v
    }

    pub fn num_params(&self) -> usize {
        self.all_params().iter().map(|p| p.len()).sum()
    }

    /// One forward/backward over a batch. Returns the mean loss and the
    /// parameter gradients in `[chnn, hnn, vnn, lnn, e]` declaration order.
    fn step(
        &mut self,
        batch: &[&ContextSample],
        mode: Mode,
        rng_seed: u64,
    ) -> Result<(f64, Vec<Tensor>)> {
        let cfg = self.cfg;
        let b = batch.len();
        let plan = plan_batch(batch, &cfg)?;
        let (char_out, char_tape) =
            self.chnn
                .forward(&plan.onehot, mode, mix_seed(rng_seed, 1))?;
        let h_in = gather_rows(&char_out, &plan.h_uid)
            .reshaped(&[b, cfg.h_w - 1, cfg.ch_e])?;
        let v_in = gather_rows(&char_out, &plan.v_uid)
            .reshaped(&[b, cfg.v_w - 1, cfg.ch_e])?;
        let target_char = gather_rows(&char_out, &plan.target_uid);
        let (h_out, h_tape) = self.hnn.forward(&h_in, mode, mix_seed(rng_seed, 2))?;
        let (v_out, v_tape) = self.vnn.forward(&v_in, mode, mix_seed(rng_seed, 3))?;
        let ctx_in = concat_cols(&[&h_out, &v_out])?;
        let (ctx, l_tape) = self.lnn.forward(&ctx_in, mode, mix_seed(rng_seed, 4))?;
        let e_in = concat_cols(&[&target_char, &ctx])?;
        let (scores, e_tape) = self.e_net.forward(&e_in, mode, mix_seed(rng_seed, 5))?;

        let scores3 = scores.reshaped(&[b, cfg.l_t, cfg.d])?;
        let targets = batch_targets(batch, &cfg);
        let (loss, dscores) = softmax_xent_batch(&scores3, &targets)?;

        let dscores2 = dscores.reshaped(&[b, cfg.l_t * cfg.d])?;
        let (de_in, e_grads) = self.e_net.backward(&e_tape, &dscores2)?;
        let de_parts = split_cols(&de_in, &[cfg.ch_e, cfg.s_e])?;
        let (dctx_in, l_grads) = self.lnn.backward(&l_tape, &de_parts[1])?;
        let h_flat = (cfg.h_w - 1) * cfg.n_f;
        let v_flat = (cfg.v_w - 1) * cfg.n_f;
        let dctx_parts = split_cols(&dctx_in, &[h_flat, v_flat])?;
        let (dh_in, h_grads) = self.hnn.backward(&h_tape, &dctx_parts[0])?;
        let (dv_in, v_grads) = self.vnn.backward(&v_tape, &dctx_parts[1])?;

        let mut dchar = Tensor::zeros(&[plan.uniques, cfg.ch_e]);
        scatter_add_rows(&mut dchar, &plan.target_uid, &de_parts[0])?;
        scatter_add_rows(&mut dchar, &plan.h_uid, &dh_in)?;
        scatter_add_rows(&mut dchar, &plan.v_uid, &dv_in)?;
        let (_, c_grads) = self.chnn.backward(&char_tape, &dchar)?;

        let mut grads = c_grads;
        grads.extend(h_grads);
        grads.extend(v_grads);
        grads.extend(l_grads);
        grads.extend(e_grads);
        Ok((loss, grads))
    }

    /// Forward-only batch loss under the given mode and dropout seed.
    pub fn batch_loss(
        &mut self,
        batch: &[&ContextSample],
        mode: Mode,
        rng_seed: u64,
    ) -> Result<f64> {
        let cfg = self.cfg;
        let b = batch.len();
        let plan = plan_batch(batch, &cfg)?;
        let (char_out, _) = self
            .chnn
            .forward(&plan.onehot, mode, mix_seed(rng_seed, 1))?;
        let h_in = gather_rows(&char_out, &plan.h_uid)
            .reshaped(&[b, cfg.h_w - 1, cfg.ch_e])?;
        let v_in = gather_rows(&char_out, &plan.v_uid)
            .reshaped(&[b, cfg.v_w - 1, cfg.ch_e])?;
        let target_char = gather_rows(&char_out, &plan.target_uid);
        let (h_out, _) = self.hnn.forward(&h_in, mode, mix_seed(rng_seed, 2))?;
        let (v_out, _) = self.vnn.forward(&v_in, mode, mix_seed(rng_seed, 3))?;
        let ctx_in = concat_cols(&[&h_out, &v_out])?;
        let (ctx, _) = self.lnn.forward(&ctx_in, mode, mix_seed(rng_seed, 4))?;
        let e_in = concat_cols(&[&target_char, &ctx])?;
        let (scores, _) = self.e_net.forward(&e_in, mode, mix_seed(rng_seed, 5))?;
        let scores3 = scores.reshaped(&[b, cfg.l_t, cfg.d])?;
        let targets = batch_targets(batch, &cfg);
        let (loss, _) = softmax_xent_batch(&scores3, &targets)?;
        Ok(loss)
    }

    /// Train on the reconstruction proxy task: shuffled mini-batches per
    /// epoch, Adam updates, everything derived from `opts.seed`.
    pub fn train(&mut self, samples: &[ContextSample], opts: &TrainOptions) -> Result<TrainReport> {
        if samples.is_empty() {
            return Err(Error::Argument("cannot train on an empty sample list".into()));
        }
        if opts.batch_size == 0 || opts.epochs == 0 {
            return Err(Error::Argument("epochs and batch size must be at least 1".into()));
        }
        if !(opts.lr > 0.0 && opts.lr.is_finite()) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        let start = Instant::now();
        let mut adam = AdamState::for_params(&self.all_params());
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut epoch_loss = Vec::with_capacity(opts.epochs);
        for epoch in 0..opts.epochs {
            let mut shuffle_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, 0xE0000 + epoch as u64));
            order.shuffle(&mut shuffle_rng);
            let mut total = 0.0;
            let mut steps = 0usize;
            for (si, chunk) in order.chunks(opts.batch_size).enumerate() {
                let batch: Vec<&ContextSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let seed = mix_seed(opts.seed, ((epoch as u64) << 32) | (si as u64 + 1));
                let (loss, grads) = self.step(&batch, Mode::Train, seed)?;
                let mut params = self.all_params_mut();
                adam_step(&mut params, &grads, &mut adam, opts.lr)?;
                total += loss;
                steps += 1;
            }
            epoch_loss.push(total / steps as f64);
        }
        Ok(TrainReport {
            epoch_loss,
            samples: samples.len(),
            wall: start.elapsed(),
        })
    }

    /// Eval-mode character and context parts for a batch: `(B, ch_e)` and
    /// `(B, s_e)`.
    fn eval_parts_batch(&self, batch: &[&ContextSample]) -> Result<(Tensor, Tensor)> {
        let cfg = self.cfg;
        let b = batch.len();
        let plan = plan_batch(batch, &cfg)?;
        let (char_out, _) = self.chnn.forward_eval(&plan.onehot)?;
        let h_in = gather_rows(&char_out, &plan.h_uid)
            .reshaped(&[b, cfg.h_w - 1, cfg.ch_e])?;
        let v_in = gather_rows(&char_out, &plan.v_uid)
            .reshaped(&[b, cfg.v_w - 1, cfg.ch_e])?;
        let target_char = gather_rows(&char_out, &plan.target_uid);
        let (h_out, _) = self.hnn.forward_eval(&h_in)?;
        let (v_out, _) = self.vnn.forward_eval(&v_in)?;
        let ctx_in = concat_cols(&[&h_out, &v_out])?;
        let (ctx, _) = self.lnn.forward_eval(&ctx_in)?;
        Ok((target_char, ctx))
    }

    /// Character and context parts for every sample, chunked and computed in
    /// parallel with a deterministic stitch.
    pub fn embed_parts_all(&self, samples: &[ContextSample]) -> Result<(Tensor, Tensor)> {
        const CHUNK: usize = 512;
        let n = samples.len();
        let results: Vec<Result<(Tensor, Tensor)>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let batch: Vec<&ContextSample> = chunk.iter().collect();
                self.eval_parts_batch(&batch)
            })
            .collect();
        let mut char_all = Tensor::zeros(&[n, self.cfg.ch_e]);
        let mut ctx_all = Tensor::zeros(&[n, self.cfg.s_e]);
        let mut row = 0;
        for r in results {
            let (c, x) = r?;
            let rows = c.rows();
            char_all.data_mut()[row * self.cfg.ch_e..(row + rows) * self.cfg.ch_e]
                .copy_from_slice(c.data());
            ctx_all.data_mut()[row * self.cfg.s_e..(row + rows) * self.cfg.s_e]
                .copy_from_slice(x.data());
            row += rows;
        }
        Ok((char_all, ctx_all))
    }

    /// Token embeddings `(N, ch_e + s_e)`: E's first FC activation in eval
    /// mode.
    pub fn embed_all(&self, samples: &[ContextSample]) -> Result<Tensor> {
        let (char_parts, ctx_parts) = self.embed_parts_all(samples)?;
        let e_in = concat_cols(&[&char_parts, &ctx_parts])?;
        let (emb, _) = self.e_net.forward_eval_prefix(&e_in, E_EMBED_PREFIX)?;
        Ok(emb)
    }

    /// Embedding of a single sample.
    pub fn embed_token(&self, sample: &ContextSample) -> Result<Vec<f64>> {
        let emb = self.embed_all(std::slice::from_ref(sample))?;
        Ok(emb.data().to_vec())
    }

    /// K-weighted embeddings for a whole corpus; the RMS scaling is computed
    /// from this run's parts.
    pub fn embed_all_k(&self, samples: &[ContextSample], k: f64) -> Result<Tensor> {
        let (char_parts, ctx_parts) = self.embed_parts_all(samples)?;
        let scale = k_scaling(&char_parts, &ctx_parts);
        compose_k(&char_parts, &ctx_parts, k, &scale)
    }

    /// K-weighted embedding of one sample under a precomputed corpus scaling.
    pub fn embed_token_k(
        &self,
        sample: &ContextSample,
        k: f64,
        scale: &KScaling,
    ) -> Result<Vec<f64>> {
        let (c, x) = self.eval_parts_batch(&[sample])?;
        Ok(compose_k(&c, &x, k, scale)?.data().to_vec())
    }

    /// Decode the reconstruction head's prediction for a sample. Diagnostic.
    pub fn reconstruct(&self, sample: &ContextSample, codec: &CharCodec) -> Result<String> {
        let (c, x) = self.eval_parts_batch(&[sample])?;
        let e_in = concat_cols(&[&c, &x])?;
        let (scores, _) = self.e_net.forward_eval(&e_in)?;
        let m = scores.reshaped(&[self.cfg.l_t, self.cfg.d])?;
        codec.decode_onehot(&m)
    }

    /// Maximum relative error between backpropagated gradients and central
    /// finite differences of the batch loss, probing `coords_per_tensor`
    /// coordinates of every parameter tensor. Runs in eval mode: dropout off,
    /// batch-norm on frozen running statistics.
    pub fn grad_check(
        &mut self,
        batch: &[&ContextSample],
        eps: f64,
        coords_per_tensor: usize,
    ) -> Result<f64> {
        use crate::nn::gradcheck::relative_error;
        let (_, grads) = self.step(batch, Mode::Eval, 0)?;
        let mut max_rel = 0.0_f64;
        for pi in 0..grads.len() {
            let len = grads[pi].len();
            let step = (len / coords_per_tensor).max(1);
            let mut ci = 0;
            while ci < len {
                let analytic = grads[pi].data()[ci];
                self.all_params_mut()[pi].data_mut()[ci] += eps;
                let lp = self.batch_loss(batch, Mode::Eval, 0)?;
                self.all_params_mut()[pi].data_mut()[ci] -= 2.0 * eps;
                let lm = self.batch_loss(batch, Mode::Eval, 0)?;
                self.all_params_mut()[pi].data_mut()[ci] += eps;
                let numeric = (lp - lm) / (2.0 * eps);
                max_rel = max_rel.max(relative_error(analytic, numeric));
                ci += step;
            }
        }
        Ok(max_rel)
    }

    /// Serialize config header plus the five networks.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_container(
            &mut w,
            &self.cfg.encode(),
            &[&self.chnn, &self.hnn, &self.vnn, &self.lnn, &self.e_net],
        )
    }

    /// Load and validate a serialized model.
    pub fn load(path: &Path) -> Result<Sc2tModel> {
        let mut r = BufReader::new(File::open(path)?);
        let (header, mut nets) = read_container(&mut r)?;
        let cfg = Sc2tConfig::decode(&header)?;
        if nets.len() != 5 {
            return Err(Error::Data(format!(
                "model container holds {} networks, expected 5",
                nets.len()
            )));
        }
        let reference = build_model(&cfg)?;
        let expected = [
            &reference.chnn,
            &reference.hnn,
            &reference.vnn,
            &reference.lnn,
            &reference.e_net,
        ];
        for (net, exp) in nets.iter().zip(expected) {
            let got: Vec<&[usize]> = net.params().iter().map(|p| p.shape()).collect();
            let want: Vec<&[usize]> = exp.params().iter().map(|p| p.shape()).collect();
            if got != want {
                return Err(Error::Data(
                    "model parameters do not match the config header".into(),
                ));
            }
        }
        let e_net = nets.pop().unwrap();
        let lnn = nets.pop().unwrap();
        let vnn = nets.pop().unwrap();
        let hnn = nets.pop().unwrap();
        let chnn = nets.pop().unwrap();
        Ok(Sc2tModel {
            cfg,
            chnn,
            hnn,
            vnn,
            lnn,
            e_net,
        })
    }
}

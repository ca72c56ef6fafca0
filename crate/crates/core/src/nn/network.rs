//! Sequential network: an ordered layer stack with a replayable tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{BnUpdate, Cache, Layer, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// splitmix64; used everywhere a derived deterministic seed is needed.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E3779B97F4A7C15);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Activations recorded by one forward pass, tied to the parameter state it
/// ran against.
pub struct Tape {
    caches: Vec<Cache>,
    upto: usize,
    param_version: u64,
}

/// An ordered stack of layers trained as a unit.
#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    param_version: u64,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Network {
        Network {
            layers,
            param_version: 0,
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access; invalidates all outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.param_version += 1;
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Full forward pass. In train mode this also folds batch statistics into
    /// the batch-norm running buffers; eval mode never mutates the network.
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng_seed: u64) -> Result<(Tensor, Tape)> {
        let upto = self.layers.len();
        let (y, tape, updates) = self.forward_pass(x, mode, rng_seed, upto)?;
        for (idx, update) in updates {
            self.layers[idx].apply_bn_update(&update);
        }
        Ok((y, tape))
    }

    /// Eval-mode forward; shareable across threads since nothing is mutated.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, Tape)> {
        let upto = self.layers.len();
        let (y, tape, _) = self.forward_pass(x, Mode::Eval, 0, upto)?;
        Ok((y, tape))
    }

    /// Eval-mode forward through the first `upto` layers only.
    pub fn forward_eval_prefix(&self, x: &Tensor, upto: usize) -> Result<(Tensor, Tape)> {
        let (y, tape, _) = self.forward_pass(x, Mode::Eval, 0, upto)?;
        Ok((y, tape))
    }

    #[allow(clippy::type_complexity)]
    fn forward_pass(
        &self,
        x: &Tensor,
        mode: Mode,
        rng_seed: u64,
        upto: usize,
    ) -> Result<(Tensor, Tape, Vec<(usize, BnUpdate)>)> {
        if upto > self.layers.len() {
            return Err(Error::Argument(format!(
                "forward: prefix {} exceeds {} layers",
                upto,
                self.layers.len()
            )));
        }
        let mut caches = Vec::with_capacity(upto);
        let mut updates = Vec::new();
        let mut cur = x.clone();
        for (idx, layer) in self.layers[..upto].iter().enumerate() {
            // Every dropout layer gets its own deterministic stream.
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, idx as u64));
            let (y, cache, update) = layer.forward(cur, mode, &mut rng)?;
            if let Some(update) = update {
                updates.push((idx, update));
            }
            caches.push(cache);
            cur = y;
        }
        cur.ensure_finite("network output")?;
        Ok((
            cur,
            Tape {
                caches,
                upto,
                param_version: self.param_version,
            },
            updates,
        ))
    }

    /// Backpropagate `dy` through the taped pass. Returns the gradient w.r.t.
    /// the input and one gradient per parameter, in `params()` order.
    pub fn backward(&self, tape: &Tape, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        if tape.param_version != self.param_version {
            return Err(Error::StaleTape);
        }
        let mut grads_rev: Vec<Vec<Tensor>> = Vec::with_capacity(tape.upto);
        let mut cur = dy.clone();
        for (layer, cache) in self.layers[..tape.upto]
            .iter()
            .zip(&tape.caches)
            .rev()
        {
            let (dx, grads) = layer.backward(cache, cur)?;
            grads_rev.push(grads);
            cur = dx;
        }
        let mut grads = Vec::new();
        for g in grads_rev.into_iter().rev() {
            grads.extend(g);
        }
        // Layers past the tape end contribute zero gradients.
        for layer in &self.layers[tape.upto..] {
            for p in layer.params() {
                grads.push(Tensor::zeros(p.shape()));
            }
        }
        Ok((cur, grads))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Mutable parameter access; invalidates all outstanding tapes.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.param_version += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{Dense, Dropout};
    use rand::SeedableRng;

    fn small_net() -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Network::new(vec![
            Layer::Dense(Dense::new(3, 4, &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(4, 2, &mut rng)),
        ])
    }

    #[test]
    fn forward_deterministic() {
        let mut net = small_net();
        let x = Tensor::from_vec(&[2, 3], vec![0.1, -0.3, 0.7, 1.0, 0.0, -0.5]).unwrap();
        let (y1, _) = net.forward(&x, Mode::Eval, 9).unwrap();
        let (y2, _) = net.forward(&x, Mode::Eval, 9).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn stale_tape_rejected() {
        let mut net = small_net();
        let x = Tensor::from_vec(&[1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        let (y, tape) = net.forward(&x, Mode::Train, 3).unwrap();
        let dy = Tensor::zeros(y.shape());
        net.params_mut()[0].data_mut()[0] += 1.0;
        assert!(matches!(net.backward(&tape, &dy), Err(Error::StaleTape)));
    }

    #[test]
    fn zero_loss_grad_gives_zero_param_grads() {
        let mut net = small_net();
        let x = Tensor::from_vec(&[1, 3], vec![0.4, -0.2, 0.9]).unwrap();
        let (y, tape) = net.forward(&x, Mode::Train, 3).unwrap();
        let dy = Tensor::zeros(y.shape());
        let (_, grads) = net.backward(&tape, &dy).unwrap();
        for g in grads {
            assert!(g.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn dropout_mask_reused_in_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Network::new(vec![
            Layer::Dense(Dense::new(4, 4, &mut rng)),
            Layer::Dropout(Dropout { p: 0.5 }),
        ]);
        let x = Tensor::from_vec(&[1, 4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let (y, tape) = net.forward(&x, Mode::Train, 11).unwrap();
        let dy = Tensor::from_vec(&[1, 4], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let (_, grads) = net.backward(&tape, &dy).unwrap();
        // Dropped outputs must contribute no bias gradient.
        let db = &grads[1];
        for (i, v) in y.data().iter().enumerate() {
            if *v == 0.0 {
                assert_eq!(db.data()[i], 0.0);
            }
        }
    }
}

//! Versioned binary container for trained networks.
//!
//! Layout, all integers and floats little-endian:
//! magic `SC2T` | format version (u32) | user header length (u64) + bytes |
//! network count (u32) | per-network layer manifest | all tensors (params
//! then buffers, per layer, in declaration order) as rank (u32), dims (u64
//! each), f64 data.

use std::io::{Read, Write};

use super::layer::{BatchNorm, Conv1d, Dense, Dropout, Layer};
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SC2T";
pub const FORMAT_VERSION: u32 = 1;

const KIND_DENSE: u8 = 0;
const KIND_CONV1D: u8 = 1;
const KIND_MAXPOOL: u8 = 2;
const KIND_FLATTEN: u8 = 3;
const KIND_RELU: u8 = 4;
const KIND_BATCHNORM: u8 = 5;
const KIND_DROPOUT: u8 = 6;

fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn r_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn r_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_manifest(w: &mut impl Write, net: &Network) -> Result<()> {
    w_u32(w, net.num_layers() as u32)?;
    for layer in net.layers() {
        match layer {
            Layer::Dense(l) => {
                w.write_all(&[KIND_DENSE])?;
                w_u64(w, l.w.shape()[0] as u64)?;
                w_u64(w, l.w.shape()[1] as u64)?;
            }
            Layer::Conv1d(l) => {
                w.write_all(&[KIND_CONV1D])?;
                w_u64(w, l.in_ch as u64)?;
                w_u64(w, l.out_ch as u64)?;
                w_u64(w, l.width as u64)?;
            }
            Layer::MaxPoolTime => w.write_all(&[KIND_MAXPOOL])?,
            Layer::Flatten => w.write_all(&[KIND_FLATTEN])?,
            Layer::Relu => w.write_all(&[KIND_RELU])?,
            Layer::BatchNorm(l) => {
                w.write_all(&[KIND_BATCHNORM])?;
                w_u64(w, l.gamma.len() as u64)?;
                w_f64(w, l.momentum)?;
                w_f64(w, l.eps)?;
            }
            Layer::Dropout(l) => {
                w.write_all(&[KIND_DROPOUT])?;
                w_f64(w, l.p)?;
            }
        }
    }
    Ok(())
}

fn read_manifest(r: &mut impl Read) -> Result<Network> {
    let n_layers = r_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let layer = match kind[0] {
            KIND_DENSE => {
                let fan_in = r_u64(r)? as usize;
                let fan_out = r_u64(r)? as usize;
                Layer::Dense(Dense {
                    w: Tensor::zeros(&[fan_in, fan_out]),
                    b: Tensor::zeros(&[fan_out]),
                })
            }
            KIND_CONV1D => {
                let in_ch = r_u64(r)? as usize;
                let out_ch = r_u64(r)? as usize;
                let width = r_u64(r)? as usize;
                Layer::Conv1d(Conv1d {
                    w: Tensor::zeros(&[width * in_ch, out_ch]),
                    b: Tensor::zeros(&[out_ch]),
                    width,
                    in_ch,
                    out_ch,
                })
            }
            KIND_MAXPOOL => Layer::MaxPoolTime,
            KIND_FLATTEN => Layer::Flatten,
            KIND_RELU => Layer::Relu,
            KIND_BATCHNORM => {
                let features = r_u64(r)? as usize;
                let momentum = r_f64(r)?;
                let eps = r_f64(r)?;
                let mut bn = BatchNorm::new(features);
                bn.momentum = momentum;
                bn.eps = eps;
                Layer::BatchNorm(bn)
            }
            KIND_DROPOUT => Layer::Dropout(Dropout { p: r_f64(r)? }),
            k => return Err(Error::Data(format!("unknown layer kind tag {k}"))),
        };
        layers.push(layer);
    }
    Ok(Network::new(layers))
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        w_u64(w, d as u64)?;
    }
    for &v in t.data() {
        w_f64(w, v)?;
    }
    Ok(())
}

fn read_tensor_into(r: &mut impl Read, dst: &mut Tensor) -> Result<()> {
    let rank = r_u32(r)? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r_u64(r)? as usize);
    }
    if dims != dst.shape() {
        return Err(Error::Data(format!(
            "tensor shape {:?} in file, expected {:?}",
            dims,
            dst.shape()
        )));
    }
    for v in dst.data_mut() {
        *v = r_f64(r)?;
    }
    Ok(())
}

/// Serialize networks with an opaque user header (e.g. a model config).
pub fn write_container(
    w: &mut impl Write,
    header: &[u8],
    nets: &[&Network],
) -> Result<()> {
    w.write_all(&MAGIC)?;
    w_u32(w, FORMAT_VERSION)?;
    w_u64(w, header.len() as u64)?;
    w.write_all(header)?;
    w_u32(w, nets.len() as u32)?;
    for net in nets {
        write_manifest(w, net)?;
    }
    for net in nets {
        for layer in net.layers() {
            for t in layer.params() {
                write_tensor(w, t)?;
            }
            for t in layer.buffers() {
                write_tensor(w, t)?;
            }
        }
    }
    Ok(())
}

/// Inverse of [`write_container`]; validates magic, version and shapes.
pub fn read_container(r: &mut impl Read) -> Result<(Vec<u8>, Vec<Network>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Data("not a model container (bad magic)".into()));
    }
    let version = r_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported container version {version} (supported: {FORMAT_VERSION})"
        )));
    }
    let header_len = r_u64(r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let n_nets = r_u32(r)? as usize;
    let mut nets = Vec::with_capacity(n_nets);
    for _ in 0..n_nets {
        nets.push(read_manifest(r)?);
    }
    for net in &mut nets {
        for layer in net.layers_mut() {
            for t in layer.params_mut() {
                read_tensor_into(r, t)?;
            }
            for t in layer.buffers_mut() {
                read_tensor_into(r, t)?;
            }
        }
    }
    Ok((header, nets))
}

//! Versioned binary checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "GFTCKPT\0"
//! version      u32       1
//! seed         u64
//! iteration    u64
//! layer_count  u32
//! per layer:
//!   kind       u8        0 = full precision, 1 = quantized
//!   bits       u8        bit width (0 for full precision)
//!   activation u8        0 = relu, 1 = identity
//!   has_state  u8        1 if AdamW moments follow (full precision only)
//!   d_in       u32
//!   d_out      u32
//!   weights    d_in*d_out x i8 (quantized) | d_in*d_out x f64 (full precision)
//!   if has_state:
//!     t        u64
//!     m        d_in*d_out x f64
//!     v        d_in*d_out x f64
//! crc32        u32       CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Reals are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use crate::backprop::AdamWState;
use crate::error::{CheckpointError, Error, Result};
use crate::matrix::FloatMatrix;
use crate::network::{Activation, Layer, LayerWeights, Network};
use crate::quant::{BitWidth, QuantizedWeightMatrix};

pub const MAGIC: &[u8; 8] = b"GFTCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub iteration: u64,
    pub network: Network,
    pub optimizer: Vec<Option<AdamWState>>,
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&(self.network.layers.len() as u32).to_le_bytes());
        for (l, layer) in self.network.layers.iter().enumerate() {
            let state = self.optimizer.get(l).and_then(Option::as_ref);
            let (kind, bits) = match &layer.weights {
                LayerWeights::Quantized(w) => (1u8, w.bits().bits()),
                LayerWeights::Full(_) => (0u8, 0u8),
            };
            let act = match layer.activation {
                Activation::Relu => 0u8,
                Activation::Identity => 1u8,
            };
            let has_state = u8::from(kind == 0 && state.is_some());
            out.extend_from_slice(&[kind, bits, act, has_state]);
            out.extend_from_slice(&(layer.d_in() as u32).to_le_bytes());
            out.extend_from_slice(&(layer.d_out() as u32).to_le_bytes());
            match &layer.weights {
                LayerWeights::Quantized(w) => out.extend(w.as_slice().iter().map(|&v| v as u8)),
                LayerWeights::Full(w) => put_f64s(&mut out, w.as_slice()),
            }
            if let (1, Some(s)) = (has_state, state) {
                out.extend_from_slice(&s.t.to_le_bytes());
                put_f64s(&mut out, &s.m);
                put_f64s(&mut out, &s.v);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic.into());
        }
        if bytes.len() < MAGIC.len() + 4 + 4 {
            return Err(CheckpointError::Truncated.into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
        let mut r = Reader { buf: body, at: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version).into());
        }
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed }.into());
        }
        let seed = r.u64()?;
        let iteration = r.u64()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        let mut optimizer = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let [kind, bits, act, has_state] = r.take::<4>()?;
            let d_in = r.u32()? as usize;
            let d_out = r.u32()? as usize;
            let n = d_in
                .checked_mul(d_out)
                .ok_or_else(|| CheckpointError::Corrupt("layer size overflows".into()))?;
            let activation = match act {
                0 => Activation::Relu,
                1 => Activation::Identity,
                other => return Err(CheckpointError::Corrupt(format!("unknown activation tag {other}")).into()),
            };
            let weights = match kind {
                1 => {
                    let bits = BitWidth::new(bits).map_err(|_| CheckpointError::Corrupt(format!("bad bit width {bits}")))?;
                    let data = r.bytes(n)?.iter().map(|&b| b as i8).collect();
                    LayerWeights::Quantized(
                        QuantizedWeightMatrix::from_vec(d_in, d_out, bits, data)
                            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
                    )
                }
                0 => LayerWeights::Full(
                    FloatMatrix::from_vec(d_in, d_out, r.f64s(n)?)
                        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?,
                ),
                other => return Err(CheckpointError::Corrupt(format!("unknown layer kind {other}")).into()),
            };
            let state = match (kind, has_state) {
                (_, 0) => None,
                (0, 1) => {
                    let t = r.u64()?;
                    Some(AdamWState {
                        t,
                        m: r.f64s(n)?,
                        v: r.f64s(n)?,
                    })
                }
                _ => return Err(CheckpointError::Corrupt("unexpected optimizer-state flag".into()).into()),
            };
            layers.push(Layer { activation, weights });
            optimizer.push(state);
        }
        if r.at != body.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()).into());
        }
        let network = Network::new(layers).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        Ok(Self {
            seed,
            iteration,
            network,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(Error::from)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.buf.get(self.at..end).ok_or(CheckpointError::Truncated)?;
        self.at = end;
        Ok(out)
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.bytes(N)?);
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.bytes(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect())
    }
}

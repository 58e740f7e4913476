//! Compact architecture strings.
//!
//! ```text
//! arch  := dim ( "-" dim quant? )+
//! quant := "q" bits            bits in 2..=8
//! dim   := positive integer
//! ```
//!
//! A `q<bits>` suffix on `d_i` makes the layer producing `d_i` quantized with
//! that bit width; unsuffixed layers are full precision. Hidden layers use
//! relu and the last layer is linear. `784-256q2-10` is a ternary
//! 784→256 layer followed by a full-precision 256→10 classifier.

use crate::error::{Error, Result};
use crate::network::{Activation, LayerKind, LayerSpec};
use crate::quant::BitWidth;

pub fn parse_arch(s: &str) -> Result<Vec<LayerSpec>> {
    let bad = |msg: String| Error::validation(format!("architecture `{s}`: {msg}"));
    let parts: Vec<&str> = s.trim().split('-').collect();
    if parts.len() < 2 {
        return Err(bad("need at least two dimensions".into()));
    }
    let mut dims = Vec::with_capacity(parts.len());
    let mut kinds = Vec::with_capacity(parts.len());
    for (n, part) in parts.iter().enumerate() {
        let (dim, kind) = match part.split_once('q') {
            Some((d, b)) => {
                let bits: u8 = b.parse().map_err(|_| bad(format!("bad bit width in `{part}`")))?;
                (d, LayerKind::Quantized(BitWidth::new(bits).map_err(|e| bad(e.to_string()))?))
            }
            None => (*part, LayerKind::FullPrecision),
        };
        if n == 0 && kind != LayerKind::FullPrecision {
            return Err(bad("the input dimension cannot carry a q suffix".into()));
        }
        let dim: usize = dim.parse().map_err(|_| bad(format!("bad dimension `{part}`")))?;
        if dim == 0 {
            return Err(bad("dimensions must be >= 1".into()));
        }
        dims.push(dim);
        kinds.push(kind);
    }
    let last = dims.len() - 1;
    Ok((1..dims.len())
        .map(|n| LayerSpec {
            d_in: dims[n - 1],
            d_out: dims[n],
            kind: kinds[n],
            activation: if n == last { Activation::Identity } else { Activation::Relu },
        })
        .collect())
}

/// Inverse of [`parse_arch`] for stacks using its activation convention.
pub fn format_arch(specs: &[LayerSpec]) -> String {
    let mut s = specs.first().map(|l| l.d_in.to_string()).unwrap_or_default();
    for l in specs {
        s.push('-');
        s.push_str(&l.d_out.to_string());
        if let LayerKind::Quantized(b) = l.kind {
            s.push('q');
            s.push_str(&b.bits().to_string());
        }
    }
    s
}

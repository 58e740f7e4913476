//! Bit-width arithmetic, sign conventions and the integer weight matrix.

use std::fmt;

use crate::error::{Error, Result};

/// Number of bits per quantized weight, `2..=8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWidth(u8);

impl BitWidth {
    pub const MIN: u8 = 2;
    pub const MAX: u8 = 8;
    pub const TERNARY: BitWidth = BitWidth(2);

    pub fn new(bits: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&bits) {
            Ok(Self(bits))
        } else {
            Err(Error::validation(format!(
                "bit width {bits} outside [{}, {}]",
                Self::MIN,
                Self::MAX
            )))
        }
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    /// Largest representable magnitude, `2^(b-1) - 1`.
    pub fn max_int(self) -> i8 {
        ((1i16 << (self.0 - 1)) - 1) as i8
    }
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `2^(b-1) - 1` for a raw bit count, validating the range.
pub fn max_int(bits: u8) -> Result<i32> {
    BitWidth::new(bits).map(|b| b.max_int() as i32)
}

/// Saturates `w` into `[-I, I]`.
pub fn clip_weight(w: i32, bits: BitWidth) -> i32 {
    let hi = bits.max_int() as i32;
    w.clamp(-hi, hi)
}

/// Sign with `sign(0) = 0`. NaN is rejected.
pub fn sign(x: f64) -> Result<i8> {
    if x.is_nan() {
        return Err(Error::validation("sign of NaN"));
    }
    Ok(sign_of(x))
}

/// Infallible sign for values already known to be finite.
#[inline]
pub(crate) fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Integer weight matrix of shape `d_in x d_out`, row-major, entries in
/// `[-I, I]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedWeightMatrix {
    rows: usize,
    cols: usize,
    bits: BitWidth,
    data: Vec<i8>,
}

impl QuantizedWeightMatrix {
    pub fn zeros(rows: usize, cols: usize, bits: BitWidth) -> Self {
        Self {
            rows,
            cols,
            bits,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, bits: BitWidth, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "weight matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        let hi = bits.max_int();
        if let Some(&w) = data.iter().find(|w| w.abs() > hi) {
            return Err(Error::validation(format!(
                "weight {w} outside [-{hi}, {hi}] for {bits}-bit matrix"
            )));
        }
        Ok(Self {
            rows,
            cols,
            bits,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<i8>], bits: BitWidth) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, bits, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> BitWidth {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> i8 {
        self.data[i * self.cols + o]
    }

    /// Stores `value` after clipping it into range.
    pub fn set_clipped(&mut self, i: usize, o: usize, value: i32) {
        self.data[i * self.cols + o] = clip_weight(value, self.bits) as i8;
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [i8] {
        &mut self.data
    }

    pub fn in_range(&self) -> bool {
        let hi = self.bits.max_int();
        self.data.iter().all(|w| w.abs() <= hi)
    }

    pub fn to_float(&self) -> crate::matrix::FloatMatrix {
        crate::matrix::FloatMatrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&w| w as f64).collect(),
        )
        .expect("shape is consistent")
    }
}

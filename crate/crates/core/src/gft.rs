//! Gradient-free update for quantized layers.
//!
//! One layer update runs, in order:
//!
//! 1. [`accumulate_beta`]: per-weight integer tally `β[i,o]` of signed error
//!    evidence over the batch.
//! 2. [`top_k_select`]: keep the `floor(k * d_in * d_out)` entries with the
//!    largest `|β|`.
//! 3. [`dynamic_probability`]: min-max normalise the selected `|β|` into
//!    flip probabilities clipped to `[p_min, 1]`.
//! 4. [`apply_flips`]: move each selected weight one step against `sign(β)`
//!    with its probability, then clip to `[-I, I]`.
//! 5. [`propagate_delta`]: `δ_prev = δ · Wᵀ`, no activation derivative.
//!
//! `β` is never built from a materialized contribution tensor. Because
//! `sign(δ·x·w) = sign(δ)·sign(x)·sign(w)`, the filter test on `δ·c` depends
//! only on the product `sign(δ[b,o])·sign(x[b,i])` once `w[i,o]` is fixed, so
//! two integer reductions over the batch are enough:
//!
//! ```text
//! A[i,o] = Σ_b sign(x[b,i]) sign(δ[b,o])      (agreeing minus disagreeing)
//! Z[i,o] = Σ_b |sign(x[b,i])| |sign(δ[b,o])|  (samples with a non-zero product)
//! ```
//!
//! Samples with product `+1` number `(Z+A)/2`, those with `-1` number `(Z-A)/2`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{self, FloatMatrix};
use crate::quant::{sign_of, QuantizedWeightMatrix};
use crate::rng::DeterministicRng;

/// Which samples count towards `β`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorFilterMode {
    /// Count sample `b` iff `δ[b,o]·c[b,i,o] < 0`.
    PaperLt,
    /// Count sample `b` iff `δ[b,o]·c[b,i,o] > 0`.
    PaperGt,
    /// Count every sample (plain majority vote of `sign(δ·x)`).
    None,
}

impl ErrorFilterMode {
    pub fn name(self) -> &'static str {
        match self {
            ErrorFilterMode::PaperLt => "paper_lt",
            ErrorFilterMode::PaperGt => "paper_gt",
            ErrorFilterMode::None => "none",
        }
    }

    pub const ALL: [ErrorFilterMode; 3] = [
        ErrorFilterMode::PaperLt,
        ErrorFilterMode::PaperGt,
        ErrorFilterMode::None,
    ];
}

impl fmt::Display for ErrorFilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorFilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_lt" => Ok(ErrorFilterMode::PaperLt),
            "paper_gt" => Ok(ErrorFilterMode::PaperGt),
            "none" => Ok(ErrorFilterMode::None),
            other => Err(Error::validation(format!(
                "unknown error filter `{other}` (expected paper_lt, paper_gt or none)"
            ))),
        }
    }
}

/// Integer error tally per weight, `d_in x d_out`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BetaMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i32>,
}

impl BetaMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<i32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation("beta shape mismatch"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<i32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> i32 {
        self.data[i * self.cols + o]
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.data
    }

    pub fn max_abs(&self) -> u32 {
        self.data.iter().map(|b| b.unsigned_abs()).max().unwrap_or(0)
    }
}

fn sign_matrix(m: &FloatMatrix) -> Vec<i8> {
    m.as_slice().iter().map(|&v| sign_of(v)).collect()
}

pub fn accumulate_beta(
    x: &FloatMatrix,
    delta: &FloatMatrix,
    w: &QuantizedWeightMatrix,
    mode: ErrorFilterMode,
) -> Result<BetaMatrix> {
    let (batch, d_in) = x.shape();
    let d_out = delta.cols();
    if delta.rows() != batch {
        return Err(Error::validation(format!(
            "activations have {batch} rows, delta has {}",
            delta.rows()
        )));
    }
    if w.rows() != d_in || w.cols() != d_out {
        return Err(Error::validation(format!(
            "weights are {}x{}, expected {d_in}x{d_out}",
            w.rows(),
            w.cols()
        )));
    }
    if x.as_slice().iter().chain(delta.as_slice()).any(|v| v.is_nan()) {
        return Err(Error::validation("NaN in activations or delta"));
    }

    let sd = sign_matrix(delta);
    let sx = sign_matrix(x);
    // transpose so each worker owns one input feature
    let mut sx_t = vec![0i8; d_in * batch];
    for b in 0..batch {
        for i in 0..d_in {
            sx_t[i * batch + b] = sx[b * d_in + i];
        }
    }
    let need_counts = mode != ErrorFilterMode::None;
    let mut data = vec![0i32; d_in * d_out];
    if d_out == 0 {
        return BetaMatrix::from_vec(d_in, d_out, data);
    }

    data.par_chunks_mut(d_out).enumerate().for_each(|(i, beta_row)| {
        let mut agree = vec![0i32; d_out];
        let mut nonzero = if need_counts { vec![0i32; d_out] } else { Vec::new() };
        for (b, &s) in sx_t[i * batch..(i + 1) * batch].iter().enumerate() {
            if s == 0 {
                continue;
            }
            let sd_row = &sd[b * d_out..(b + 1) * d_out];
            for (a, &d) in agree.iter_mut().zip(sd_row) {
                *a += (s * d) as i32;
            }
            if need_counts {
                for (z, &d) in nonzero.iter_mut().zip(sd_row) {
                    *z += d.abs() as i32;
                }
            }
        }
        let w_row = &w.as_slice()[i * d_out..(i + 1) * d_out];
        for o in 0..d_out {
            beta_row[o] = match mode {
                ErrorFilterMode::None => agree[o],
                _ => {
                    let positive = (nonzero[o] + agree[o]) / 2;
                    let negative = (nonzero[o] - agree[o]) / 2;
                    // counted samples all share sign(δx) = -sign(w) (lt) or +sign(w) (gt)
                    match (mode, w_row[o].signum()) {
                        (_, 0) => 0,
                        (ErrorFilterMode::PaperLt, 1) => -negative,
                        (ErrorFilterMode::PaperLt, _) => positive,
                        (ErrorFilterMode::PaperGt, 1) => positive,
                        (ErrorFilterMode::PaperGt, _) => -negative,
                        (ErrorFilterMode::None, _) => unreachable!(),
                    }
                }
            };
        }
    });
    BetaMatrix::from_vec(d_in, d_out, data)
}

/// Set of selected `(i, o)` coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMask {
    rows: usize,
    cols: usize,
    selected: Vec<bool>,
    count: usize,
}

impl SelectionMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            selected: vec![false; rows * cols],
            count: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    #[inline]
    pub fn contains(&self, i: usize, o: usize) -> bool {
        self.selected[i * self.cols + o]
    }

    fn insert(&mut self, flat: usize) {
        if !self.selected[flat] {
            self.selected[flat] = true;
            self.count += 1;
        }
    }

    pub fn coordinates(&self) -> Vec<(usize, usize)> {
        (0..self.rows * self.cols)
            .filter(|&f| self.selected[f])
            .map(|f| (f / self.cols, f % self.cols))
            .collect()
    }
}

/// Number of entries eligible at fraction `k_frac` of `n` weights.
pub fn selection_size(k_frac: f64, n: usize) -> usize {
    ((k_frac * n as f64).floor() as usize).min(n)
}

/// Selects the `floor(k_frac * n)` entries of largest `|β|`. Zero entries
/// are never selected. Ties at the cut-off go to the smallest `(o, i)` in
/// o-major order.
pub fn top_k_select(beta: &BetaMatrix, k_frac: f64) -> Result<SelectionMask> {
    if !(0.0..=1.0).contains(&k_frac) {
        return Err(Error::validation(format!("k fraction {k_frac} outside [0, 1]")));
    }
    let (rows, cols) = (beta.rows, beta.cols);
    let mut mask = SelectionMask::empty(rows, cols);
    let m = selection_size(k_frac, rows * cols);
    if m == 0 {
        return Ok(mask);
    }
    // |β| is bounded by the batch size, so a histogram finds the cut-off
    let max_abs = beta.max_abs() as usize;
    let mut hist = vec![0usize; max_abs + 1];
    for b in &beta.data {
        hist[b.unsigned_abs() as usize] += 1;
    }
    let mut above = 0;
    let mut cutoff = None;
    for v in (1..=max_abs).rev() {
        if above + hist[v] >= m {
            cutoff = Some(v);
            break;
        }
        above += hist[v];
    }
    let Some(cutoff) = cutoff else {
        // fewer than m non-zero entries: take all of them
        for (f, b) in beta.data.iter().enumerate() {
            if *b != 0 {
                mask.insert(f);
            }
        }
        return Ok(mask);
    };
    for (f, b) in beta.data.iter().enumerate() {
        if b.unsigned_abs() as usize > cutoff {
            mask.insert(f);
        }
    }
    let mut remaining = m - above;
    'ties: for o in 0..cols {
        for i in 0..rows {
            if remaining == 0 {
                break 'ties;
            }
            let f = i * cols + o;
            if beta.data[f].unsigned_abs() as usize == cutoff {
                mask.insert(f);
                remaining -= 1;
            }
        }
    }
    Ok(mask)
}

/// Flip probabilities; zero outside the selection.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipProbabilityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FlipProbabilityMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, o: usize) -> f64 {
        self.data[i * self.cols + o]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn dynamic_probability(beta: &BetaMatrix, mask: &SelectionMask, p_min: f64) -> Result<FlipProbabilityMatrix> {
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::validation(format!("p_min {p_min} outside (0, 1]")));
    }
    if (beta.rows, beta.cols) != (mask.rows, mask.cols) {
        return Err(Error::validation("mask and beta shapes differ"));
    }
    let mut probs = FlipProbabilityMatrix::zeros(beta.rows, beta.cols);
    let selected = || {
        beta.data
            .iter()
            .zip(&mask.selected)
            .filter(|(_, &s)| s)
            .map(|(b, _)| b.unsigned_abs())
    };
    let (Some(lo), Some(hi)) = (selected().min(), selected().max()) else {
        return Ok(probs);
    };
    for (f, p) in probs.data.iter_mut().enumerate() {
        if !mask.selected[f] {
            continue;
        }
        *p = if hi == lo {
            1.0
        } else {
            let scaled = (beta.data[f].unsigned_abs() - lo) as f64 / (hi - lo) as f64;
            scaled.clamp(p_min, 1.0)
        };
    }
    Ok(probs)
}

/// Realized and expected changes from one [`apply_flips`] call.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlipOutcome {
    /// Entries whose stored value changed.
    pub realized: u64,
    /// Sum of flip probabilities over entries whose candidate value differs
    /// from the current one.
    pub expected: f64,
}

/// Draws `r` at `(step, layer, i, o)` for every entry with `p > 0` and, when
/// `r < p`, replaces `w` by `clip(w - sign(β))`.
pub fn apply_flips(
    w: &mut QuantizedWeightMatrix,
    beta: &BetaMatrix,
    probs: &FlipProbabilityMatrix,
    rng: &DeterministicRng,
    step: u64,
    layer: u64,
) -> Result<FlipOutcome> {
    let shape = (w.rows(), w.cols());
    if shape != (beta.rows, beta.cols) || shape != (probs.rows, probs.cols) {
        return Err(Error::validation("weight, beta and probability shapes differ"));
    }
    let bits = w.bits();
    let cols = w.cols();
    let mut outcome = FlipOutcome::default();
    let data = w.as_mut_slice();
    for (f, &p) in probs.data.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let current = data[f] as i32;
        let candidate = crate::quant::clip_weight(current - beta.data[f].signum(), bits);
        if candidate != current {
            outcome.expected += p;
        }
        let (i, o) = (f / cols, f % cols);
        if rng.uniform(step, layer, i as u64, o as u64) < p && candidate != current {
            data[f] = candidate as i8;
            outcome.realized += 1;
        }
    }
    Ok(outcome)
}

/// `δ · Wᵀ`. Integer-valued deltas stay integer-valued.
pub fn propagate_delta(delta: &FloatMatrix, w: &QuantizedWeightMatrix) -> Result<FloatMatrix> {
    matrix::matmul_transposed(delta, w.as_slice(), w.rows(), w.cols())
}

/// Linear decay `k(t) = k0 * (1 - t/T)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KSchedule {
    k0: f64,
    total: u64,
}

impl KSchedule {
    pub const DEFAULT_K0: f64 = 0.75;

    pub fn new(k0: f64, total: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&k0) {
            return Err(Error::validation(format!("k0 {k0} outside [0, 1]")));
        }
        Ok(Self { k0, total })
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn k_at(&self, t: u64) -> Result<f64> {
        if t > self.total {
            return Err(Error::validation(format!(
                "iteration {t} beyond schedule length {}",
                self.total
            )));
        }
        if t == self.total {
            return Ok(0.0);
        }
        Ok(self.k0 * (1.0 - t as f64 / self.total as f64))
    }
}

/// Per-layer statistics of one GFT update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GftLayerReport {
    pub selected: usize,
    pub flips: FlipOutcome,
}

/// Runs accumulate → select → probability → flip on one quantized layer.
#[allow(clippy::too_many_arguments)]
pub fn update_layer(
    w: &mut QuantizedWeightMatrix,
    input: &FloatMatrix,
    delta: &FloatMatrix,
    mode: ErrorFilterMode,
    k_frac: f64,
    p_min: f64,
    rng: &DeterministicRng,
    step: u64,
    layer: u64,
) -> Result<GftLayerReport> {
    let beta = accumulate_beta(input, delta, w, mode)?;
    let mask = top_k_select(&beta, k_frac)?;
    let probs = dynamic_probability(&beta, &mask, p_min)?;
    let flips = apply_flips(w, &beta, &probs, rng, step, layer)?;
    Ok(GftLayerReport {
        selected: mask.count(),
        flips,
    })
}

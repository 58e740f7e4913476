//! Output losses and the error signal they hand to the backward walk.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::FloatMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Softmax followed by cross-entropy against the label.
    SoftmaxXent,
    /// `0.5 * ||logits - one_hot(label)||^2`.
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SoftmaxXent => "softmax_xent",
            LossKind::Mse => "mse",
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_xent" => Ok(LossKind::SoftmaxXent),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::validation(format!("unknown loss `{other}`"))),
        }
    }
}

fn check_labels(logits: &FloatMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::validation(format!(
            "{} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::validation(format!(
            "label {bad} out of range for {} outputs",
            logits.cols()
        )));
    }
    Ok(())
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of the per-sample loss with respect to the logits.
pub fn output_delta(logits: &FloatMatrix, labels: &[usize], loss: LossKind) -> Result<FloatMatrix> {
    check_labels(logits, labels)?;
    let mut delta = FloatMatrix::zeros(logits.rows(), logits.cols());
    for (b, &y) in labels.iter().enumerate() {
        let row = logits.row(b);
        let target = |o: usize| if o == y { 1.0 } else { 0.0 };
        match loss {
            LossKind::SoftmaxXent => {
                for (o, p) in softmax_row(row).into_iter().enumerate() {
                    delta.set(b, o, p - target(o));
                }
            }
            LossKind::Mse => {
                for (o, &v) in row.iter().enumerate() {
                    delta.set(b, o, v - target(o));
                }
            }
        }
    }
    Ok(delta)
}

/// Per-sample loss values.
pub fn sample_losses(logits: &FloatMatrix, labels: &[usize], loss: LossKind) -> Result<Vec<f64>> {
    check_labels(logits, labels)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let row = logits.row(b);
            match loss {
                LossKind::SoftmaxXent => {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
                    lse - row[y]
                }
                LossKind::Mse => {
                    0.5 * row
                        .iter()
                        .enumerate()
                        .map(|(o, &v)| {
                            let t = if o == y { 1.0 } else { 0.0 };
                            (v - t) * (v - t)
                        })
                        .sum::<f64>()
                }
            }
        })
        .collect())
}

pub fn mean_loss(logits: &FloatMatrix, labels: &[usize], loss: LossKind) -> Result<f64> {
    let l = sample_losses(logits, labels, loss)?;
    Ok(l.iter().sum::<f64>() / l.len().max(1) as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

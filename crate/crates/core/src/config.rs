//! Run configuration: line-based `key = value` text with `#` comments.
//!
//! Recognised keys (defaults in brackets):
//!
//! ```text
//! arch                    architecture string, required
//! dataset                 dataset descriptor, required
//! eval_dataset            dataset descriptor or `none` [none: the training set]
//! out_dir                 output directory [run]
//! iterations              optimizer steps (exclusive with epochs)
//! epochs                  full passes, converted to iterations
//! batch_size              [64]
//! p_min                   minimum flip probability, (0, 1] [0.001]
//! k0                      initial top-k fraction, [0, 1] [0.75]
//! error_filter            paper_lt | paper_gt | none [none]
//! loss                    softmax_xent | mse [softmax_xent]
//! seed                    [0]
//! eval_every              steps between evaluations or `epoch` [epoch]
//! lr beta1 beta2 eps weight_decay
//!                         AdamW [6e-4 0.9 0.999 1e-8 0.1]
//! energy_adamw_pj energy_gft_ternary_pj energy_gft_multibit_pj
//!                         per-parameter step energy [14.62 4.8 5.18]
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::arch::{format_arch, parse_arch};
use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::network::LayerSpec;
use crate::trainer::{iterations_for_epochs, TrainConfig};

pub const KEYS: &[&str] = &[
    "arch",
    "dataset",
    "eval_dataset",
    "out_dir",
    "iterations",
    "epochs",
    "batch_size",
    "p_min",
    "k0",
    "error_filter",
    "loss",
    "seed",
    "eval_every",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "weight_decay",
    "energy_adamw_pj",
    "energy_gft_ternary_pj",
    "energy_gft_multibit_pj",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: Vec<LayerSpec>,
    pub dataset: DatasetSpec,
    pub eval_dataset: Option<DatasetSpec>,
    pub out_dir: PathBuf,
    pub iterations: Option<u64>,
    pub epochs: Option<u64>,
    /// Everything but `iterations`, which is resolved against the dataset.
    pub train: TrainConfig,
}

/// Splits text into `(key, value)` pairs, rejecting malformed lines and
/// repeated keys.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().to_string();
        if let Some(prev) = seen.insert(key.clone(), n + 1) {
            return Err(Error::config(key, format!("line {}: already set on line {prev}", n + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Parses a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(s, "override must look like key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
}

fn in_range(key: &str, v: f64, ok: bool, expect: &str) -> Result<f64> {
    if ok && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("{v} outside {expect}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    /// Config text plus overrides; an override replaces the file's value.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        for (k, v) in overrides {
            match pairs.iter_mut().find(|(pk, _)| pk == k) {
                Some(slot) => slot.1 = v.clone(),
                None => pairs.push((k.clone(), v.clone())),
            }
        }
        Self::from_pairs(pairs)
    }

    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self> {
        let mut arch = None;
        let mut dataset = None;
        let mut eval_dataset = None;
        let mut out_dir = PathBuf::from("run");
        let mut iterations = None;
        let mut epochs = None;
        let mut t = TrainConfig::default();
        for (key, v) in pairs {
            let k = key.as_str();
            match k {
                "arch" => arch = Some(parse_arch(&v).map_err(|e| Error::config(k, e.to_string()))?),
                "dataset" => dataset = Some(value::<DatasetSpec>(k, &v)?),
                "eval_dataset" => {
                    eval_dataset = if v == "none" { None } else { Some(value::<DatasetSpec>(k, &v)?) }
                }
                "out_dir" => out_dir = PathBuf::from(v),
                "iterations" => iterations = Some(value(k, &v)?),
                "epochs" => {
                    let e: u64 = value(k, &v)?;
                    if e == 0 {
                        return Err(Error::config(k, "must be >= 1"));
                    }
                    epochs = Some(e);
                }
                "batch_size" => {
                    t.batch_size = value(k, &v)?;
                    if t.batch_size == 0 {
                        return Err(Error::config(k, "must be >= 1"));
                    }
                }
                "p_min" => {
                    let p = value(k, &v)?;
                    t.p_min = in_range(k, p, p > 0.0 && p <= 1.0, "(0, 1]")?;
                }
                "k0" => {
                    let x = value(k, &v)?;
                    t.k0 = in_range(k, x, (0.0..=1.0).contains(&x), "[0, 1]")?;
                }
                "error_filter" => t.error_filter = value(k, &v)?,
                "loss" => t.loss = value(k, &v)?,
                "seed" => t.seed = value(k, &v)?,
                "eval_every" => {
                    t.eval_every = if v == "epoch" {
                        None
                    } else {
                        let n: u64 = value(k, &v)?;
                        if n == 0 {
                            return Err(Error::config(k, "must be >= 1 or `epoch`"));
                        }
                        Some(n)
                    }
                }
                "lr" => {
                    let x = value(k, &v)?;
                    t.adamw.lr = in_range(k, x, x >= 0.0, "[0, inf)")?;
                }
                "beta1" => {
                    let x = value(k, &v)?;
                    t.adamw.beta1 = in_range(k, x, (0.0..1.0).contains(&x), "[0, 1)")?;
                }
                "beta2" => {
                    let x = value(k, &v)?;
                    t.adamw.beta2 = in_range(k, x, (0.0..1.0).contains(&x), "[0, 1)")?;
                }
                "eps" => {
                    let x = value(k, &v)?;
                    t.adamw.eps = in_range(k, x, x > 0.0, "(0, inf)")?;
                }
                "weight_decay" => {
                    let x = value(k, &v)?;
                    t.adamw.weight_decay = in_range(k, x, x >= 0.0, "[0, inf)")?;
                }
                "energy_adamw_pj" => {
                    let x = value(k, &v)?;
                    t.energy.adamw_pj_per_param = in_range(k, x, x > 0.0, "(0, inf)")?;
                }
                "energy_gft_ternary_pj" => {
                    let x = value(k, &v)?;
                    t.energy.gft_ternary_pj_per_param = in_range(k, x, x > 0.0, "(0, inf)")?;
                }
                "energy_gft_multibit_pj" => {
                    let x = value(k, &v)?;
                    t.energy.gft_multibit_pj_per_param = in_range(k, x, x > 0.0, "(0, inf)")?;
                }
                _ => return Err(Error::config(k, "unknown key")),
            }
        }
        if iterations.is_some() && epochs.is_some() {
            return Err(Error::config("epochs", "set either iterations or epochs, not both"));
        }
        if iterations.is_none() && epochs.is_none() {
            return Err(Error::config("iterations", "one of iterations or epochs is required"));
        }
        Ok(Self {
            arch: arch.ok_or_else(|| Error::config("arch", "required"))?,
            dataset: dataset.ok_or_else(|| Error::config("dataset", "required"))?,
            eval_dataset,
            out_dir,
            iterations,
            epochs,
            train: t,
        })
    }

    pub fn resolve_iterations(&self, dataset_len: usize) -> u64 {
        match (self.iterations, self.epochs) {
            (Some(n), _) => n,
            (None, Some(e)) => iterations_for_epochs(e, dataset_len, self.train.batch_size),
            (None, None) => 0,
        }
    }

    /// Training config with `iterations` filled in.
    pub fn train_config(&self, dataset_len: usize) -> TrainConfig {
        TrainConfig {
            iterations: self.resolve_iterations(dataset_len),
            ..self.train.clone()
        }
    }

    /// Every effective setting as config text. Epochs are written as the
    /// resolved iteration count.
    pub fn to_resolved(&self, iterations: u64) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("arch", format_arch(&self.arch));
        kv("dataset", self.dataset.to_string());
        kv("eval_dataset", self.eval_dataset.as_ref().map_or("none".into(), |d| d.to_string()));
        kv("out_dir", self.out_dir.display().to_string());
        kv("iterations", iterations.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("p_min", t.p_min.to_string());
        kv("k0", t.k0.to_string());
        kv("error_filter", t.error_filter.to_string());
        kv("loss", t.loss.name().to_string());
        kv("seed", t.seed.to_string());
        kv("eval_every", t.eval_every.map_or("epoch".into(), |n| n.to_string()));
        kv("lr", t.adamw.lr.to_string());
        kv("beta1", t.adamw.beta1.to_string());
        kv("beta2", t.adamw.beta2.to_string());
        kv("eps", t.adamw.eps.to_string());
        kv("weight_decay", t.adamw.weight_decay.to_string());
        kv("energy_adamw_pj", t.energy.adamw_pj_per_param.to_string());
        kv("energy_gft_ternary_pj", t.energy.gft_ternary_pj_per_param.to_string());
        kv("energy_gft_multibit_pj", t.energy.gft_multibit_pj_per_param.to_string());
        s
    }
}

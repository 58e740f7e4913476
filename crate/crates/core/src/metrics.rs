//! Metrics CSV and the key-value run summary.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::trainer::{Evaluation, MetricRow, TrainState};

pub const METRICS_VERSION_LINE: &str = "# gft-metrics v1";
pub const METRICS_HEADER: &str =
    "t,epoch,loss,eval_accuracy,eval_loss,realized_flips,expected_flips,cumulative_updates,cumulative_energy_pj,k,mode";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Version line, header, then one row per step. Reals use the shortest
/// representation that parses back to the same value.
pub fn write_metrics(rows: &[MetricRow]) -> String {
    let mut s = format!("{METRICS_VERSION_LINE}\n{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.epoch,
            r.loss,
            opt(r.eval_accuracy),
            opt(r.eval_loss),
            r.realized_flips,
            r.expected_flips,
            r.cumulative_updates,
            r.cumulative_energy_pj,
            r.k,
            r.mode
        );
    }
    s
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_VERSION_LINE) {
        return Err(Error::validation(format!("metrics must start with `{METRICS_VERSION_LINE}`")));
    }
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::validation("unexpected metrics header"));
    }
    let mut rows: Vec<MetricRow> = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = |what: &str| Error::validation(format!("metrics row {}: bad {what}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad("field count"));
        }
        let real = |i: usize, what: &str| f[i].parse::<f64>().map_err(|_| bad(what));
        let opt_real = |i: usize, what: &str| {
            if f[i].is_empty() {
                Ok(None)
            } else {
                real(i, what).map(Some)
            }
        };
        let row = MetricRow {
            t: f[0].parse().map_err(|_| bad("t"))?,
            epoch: f[1].parse().map_err(|_| bad("epoch"))?,
            loss: real(2, "loss")?,
            eval_accuracy: opt_real(3, "eval_accuracy")?,
            eval_loss: opt_real(4, "eval_loss")?,
            realized_flips: f[5].parse().map_err(|_| bad("realized_flips"))?,
            expected_flips: real(6, "expected_flips")?,
            cumulative_updates: f[7].parse().map_err(|_| bad("cumulative_updates"))?,
            cumulative_energy_pj: real(8, "cumulative_energy_pj")?,
            k: real(9, "k")?,
            mode: f[10].parse().map_err(|_| bad("mode"))?,
        };
        if rows.last().is_some_and(|prev| prev.t >= row.t) {
            return Err(bad("t (rows must be strictly increasing)"));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Final totals as `key = value` lines.
pub fn write_summary(state: &TrainState, final_eval: Option<&Evaluation>) -> String {
    let l = &state.ledger;
    let p = state.param_counts();
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("iterations", state.t.to_string());
    kv("mode", state.config().error_filter.to_string());
    kv("final_accuracy", opt(final_eval.map(|e| e.accuracy)));
    kv("final_loss", opt(final_eval.map(|e| e.mean_loss)));
    kv("final_train_loss", opt(state.history.last().map(|r| r.loss)));
    kv("fp_params", p.full_precision.to_string());
    kv("quantized_params", p.quantized_total().to_string());
    kv("total_updates", l.cumulative_updates.to_string());
    kv("expected_updates", l.cumulative_expected_updates.to_string());
    kv("total_bits", l.model_bits.to_string());
    kv("total_energy_pj", l.cumulative_energy_pj().to_string());
    kv("total_energy_j", l.cumulative_energy_j().to_string());
    s
}

/// Reads `key = value` lines into pairs, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

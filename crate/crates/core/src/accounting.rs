//! Optimizer-step energy model and run-level counters.
//!
//! Per-parameter step costs are taken as given constants (pJ per parameter
//! per step): 14.62 for AdamW, 4.8 for ternary GFT and 5.18 for 3/4-bit GFT.
//! They summarise an op-count argument:
//!
//! - AdamW touches every parameter with 10 FP32 multiplies and 3 FP32 adds.
//! - GFT runs a top-k over `P + kP` values, one `O(P)` comparison against the
//!   flip probabilities and `p_change * k * P` ±1 updates, with
//!   `p_change = (p_max + p_min) / 2` and `k = 0.75`. Wider weights add one
//!   scalar multiply per parameter.
//!
//! The ledger stores integer parameter-step counts and derives energy from
//! them, so totals are exactly linear in the number of steps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec};
use crate::quant::BitWidth;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyConstants {
    pub adamw_pj_per_param: f64,
    pub gft_ternary_pj_per_param: f64,
    pub gft_multibit_pj_per_param: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            adamw_pj_per_param: 14.62,
            gft_ternary_pj_per_param: 4.8,
            gft_multibit_pj_per_param: 5.18,
        }
    }
}

impl EnergyConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("adamw_pj_per_param", self.adamw_pj_per_param),
            ("gft_ternary_pj_per_param", self.gft_ternary_pj_per_param),
            ("gft_multibit_pj_per_param", self.gft_multibit_pj_per_param),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Per-parameter GFT cost for a bit width.
    pub fn gft_per_param(&self, bits: BitWidth) -> Result<f64> {
        match bits.bits() {
            2 => Ok(self.gft_ternary_pj_per_param),
            3 | 4 => Ok(self.gft_multibit_pj_per_param),
            b => Err(Error::validation(format!(
                "no GFT energy constant for {b}-bit weights (supported: 2, 3, 4)"
            ))),
        }
    }
}

pub fn adamw_step_energy(p_fp: u64, c: &EnergyConstants) -> f64 {
    c.adamw_pj_per_param * p_fp as f64
}

pub fn gft_step_energy(p_q: u64, bits: BitWidth, c: &EnergyConstants) -> Result<f64> {
    Ok(c.gft_per_param(bits)? * p_q as f64)
}

/// Storage bits: 32 per full-precision parameter, `b` per quantized one.
pub fn model_bits(specs: &[LayerSpec]) -> u64 {
    specs.iter().map(|s| s.param_count() * s.kind.bits_per_param()).sum()
}

/// Parameter counts split by kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub full_precision: u64,
    pub quantized: BTreeMap<BitWidth, u64>,
}

impl ParamCounts {
    pub fn of(specs: &[LayerSpec]) -> Self {
        let mut counts = Self::default();
        for s in specs {
            match s.kind {
                LayerKind::FullPrecision => counts.full_precision += s.param_count(),
                LayerKind::Quantized(b) => *counts.quantized.entry(b).or_default() += s.param_count(),
            }
        }
        counts
    }

    pub fn total(&self) -> u64 {
        self.full_precision + self.quantized.values().sum::<u64>()
    }

    pub fn quantized_total(&self) -> u64 {
        self.quantized.values().sum()
    }

    /// Energy of one optimizer step over these parameters.
    pub fn step_energy(&self, c: &EnergyConstants) -> Result<f64> {
        let mut e = adamw_step_energy(self.full_precision, c);
        for (&bits, &n) in &self.quantized {
            e += gft_step_energy(n, bits, c)?;
        }
        Ok(e)
    }
}

/// Cumulative updates, parameter-steps and storage bits for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct CostLedger {
    pub constants: EnergyConstants,
    pub model_bits: u64,
    pub steps: u64,
    pub cumulative_updates: u64,
    pub cumulative_expected_updates: f64,
    /// AdamW parameter-steps.
    pub fp_param_steps: u64,
    /// GFT parameter-steps per bit width.
    pub quantized_param_steps: BTreeMap<BitWidth, u64>,
}

impl CostLedger {
    pub fn new(model_bits: u64, constants: EnergyConstants) -> Self {
        Self {
            constants,
            model_bits,
            steps: 0,
            cumulative_updates: 0,
            cumulative_expected_updates: 0.0,
            fp_param_steps: 0,
            quantized_param_steps: BTreeMap::new(),
        }
    }

    pub fn for_specs(specs: &[LayerSpec], constants: EnergyConstants) -> Self {
        Self::new(model_bits(specs), constants)
    }

    pub fn cumulative_energy_pj(&self) -> f64 {
        let mut e = adamw_step_energy(self.fp_param_steps, &self.constants);
        for (&bits, &n) in &self.quantized_param_steps {
            // bit widths are checked when they enter the ledger
            e += gft_step_energy(n, bits, &self.constants).unwrap_or(0.0);
        }
        e
    }

    pub fn cumulative_energy_j(&self) -> f64 {
        self.cumulative_energy_pj() * 1e-12
    }
}

/// Adds one optimizer step. Every full-precision parameter counts as an
/// update; quantized layers contribute their realized flips.
pub fn record_step(
    ledger: &mut CostLedger,
    realized_flips: u64,
    expected_flips: f64,
    p_fp: u64,
    p_q_by_bits: &[(BitWidth, u64)],
) -> Result<()> {
    if !(expected_flips >= 0.0 && expected_flips.is_finite()) {
        return Err(Error::validation(format!("expected flips {expected_flips} must be >= 0")));
    }
    for &(bits, _) in p_q_by_bits {
        ledger.constants.gft_per_param(bits)?;
    }
    ledger.steps += 1;
    ledger.cumulative_updates += p_fp + realized_flips;
    ledger.cumulative_expected_updates += p_fp as f64 + expected_flips;
    ledger.fp_param_steps += p_fp;
    for &(bits, n) in p_q_by_bits {
        *ledger.quantized_param_steps.entry(bits).or_default() += n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;

    fn layer(params: usize, kind: LayerKind) -> LayerSpec {
        LayerSpec {
            d_in: params / 1000,
            d_out: 1000,
            kind,
            activation: Activation::Identity,
        }
    }

    #[test]
    fn adamw_energy_examples() {
        let c = EnergyConstants::default();
        assert_eq!(adamw_step_energy(0, &c), 0.0);
        let e = adamw_step_energy(53_600_000, &c);
        assert!((e - 7.836_32e8).abs() < 1e-3, "{e}");
        let ratio = c.gft_ternary_pj_per_param / c.adamw_pj_per_param;
        assert!((ratio - 0.328).abs() < 5e-4);
    }

    #[test]
    fn gft_energy_examples() {
        let c = EnergyConstants::default();
        assert_eq!(gft_step_energy(0, BitWidth::TERNARY, &c).unwrap(), 0.0);
        assert!((gft_step_energy(1_000_000, BitWidth::TERNARY, &c).unwrap() - 4.8e6).abs() < 1e-6);
        assert!((gft_step_energy(1_000_000, BitWidth::new(4).unwrap(), &c).unwrap() - 5.18e6).abs() < 1e-6);
        assert!((gft_step_energy(1_000_000, BitWidth::new(3).unwrap(), &c).unwrap() - 5.18e6).abs() < 1e-6);
        assert!(gft_step_energy(1, BitWidth::new(5).unwrap(), &c).is_err());
    }

    #[test]
    fn model_bits_examples() {
        assert_eq!(model_bits(&[layer(53_600_000, LayerKind::FullPrecision)]), 1_715_200_000);
        assert_eq!(
            model_bits(&[layer(53_600_000, LayerKind::Quantized(BitWidth::new(4).unwrap()))]),
            214_400_000
        );
        assert_eq!(model_bits(&[]), 0);
    }

    #[test]
    fn record_step_examples() {
        let mut ledger = CostLedger::new(0, EnergyConstants::default());
        record_step(&mut ledger, 0, 0.0, 0, &[]).unwrap();
        assert_eq!(ledger.cumulative_updates, 0);
        assert_eq!(ledger.cumulative_energy_pj(), 0.0);

        record_step(&mut ledger, 7, 3.5, 100, &[]).unwrap();
        assert_eq!(ledger.cumulative_updates, 107);
        assert_eq!(ledger.cumulative_expected_updates, 103.5);
    }

    #[test]
    fn totals_are_linear_in_steps() {
        let c = EnergyConstants::default();
        let q = [(BitWidth::TERNARY, 300u64), (BitWidth::new(4).unwrap(), 50)];
        let mut ledger = CostLedger::new(0, c);
        for _ in 0..37 {
            record_step(&mut ledger, 5, 2.0, 120, &q).unwrap();
        }
        let per_step = 14.62 * 120.0 + 4.8 * 300.0 + 5.18 * 50.0;
        let expected = 14.62 * (37.0 * 120.0) + 4.8 * (37.0 * 300.0) + 5.18 * (37.0 * 50.0);
        assert_eq!(ledger.cumulative_energy_pj(), expected);
        assert!((ledger.cumulative_energy_pj() - 37.0 * per_step).abs() < 1e-9 * expected);
        assert_eq!(ledger.cumulative_updates, 37 * 125);
        assert_eq!(ledger.steps, 37);
    }

    #[test]
    fn record_rejects_unsupported_bits() {
        let mut ledger = CostLedger::new(0, EnergyConstants::default());
        assert!(record_step(&mut ledger, 0, 0.0, 0, &[(BitWidth::new(6).unwrap(), 10)]).is_err());
        assert_eq!(ledger.steps, 0);
    }
}

//! Layer specifications, the network container and initialisation.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{self, FloatMatrix};
use crate::quant::{BitWidth, QuantizedWeightMatrix};
use crate::rng::DeterministicRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::validation(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Quantized(BitWidth),
    FullPrecision,
}

impl LayerKind {
    /// Storage bits per parameter.
    pub fn bits_per_param(self) -> u64 {
        match self {
            LayerKind::Quantized(b) => b.bits() as u64,
            LayerKind::FullPrecision => 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub d_in: usize,
    pub d_out: usize,
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn param_count(&self) -> u64 {
        self.d_in as u64 * self.d_out as u64
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.kind, LayerKind::Quantized(_))
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LayerKind::Quantized(b) => write!(f, "{}->{} q{} {}", self.d_in, self.d_out, b, self.activation.name()),
            LayerKind::FullPrecision => write!(f, "{}->{} fp32 {}", self.d_in, self.d_out, self.activation.name()),
        }
    }
}

/// Checks that consecutive specs chain and that no layer is empty.
pub fn validate_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::validation("network needs at least one layer"));
    }
    for (l, s) in specs.iter().enumerate() {
        if s.d_in == 0 || s.d_out == 0 {
            return Err(Error::validation(format!("layer {l} has a zero dimension")));
        }
    }
    for (l, pair) in specs.windows(2).enumerate() {
        if pair[0].d_out != pair[1].d_in {
            return Err(Error::validation(format!(
                "layer {l} outputs {} features but layer {} expects {}",
                pair[0].d_out,
                l + 1,
                pair[1].d_in
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeights {
    Quantized(QuantizedWeightMatrix),
    Full(FloatMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub activation: Activation,
    pub weights: LayerWeights,
}

impl Layer {
    pub fn d_in(&self) -> usize {
        match &self.weights {
            LayerWeights::Quantized(w) => w.rows(),
            LayerWeights::Full(w) => w.rows(),
        }
    }

    pub fn d_out(&self) -> usize {
        match &self.weights {
            LayerWeights::Quantized(w) => w.cols(),
            LayerWeights::Full(w) => w.cols(),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        let kind = match &self.weights {
            LayerWeights::Quantized(w) => LayerKind::Quantized(w.bits()),
            LayerWeights::Full(_) => LayerKind::FullPrecision,
        };
        LayerSpec {
            d_in: self.d_in(),
            d_out: self.d_out(),
            kind,
            activation: self.activation,
        }
    }

    /// `x · W` for either weight representation.
    pub fn linear(&self, x: &FloatMatrix) -> Result<FloatMatrix> {
        match &self.weights {
            LayerWeights::Quantized(w) => matrix::matmul(x, w.as_slice(), w.rows(), w.cols()),
            LayerWeights::Full(w) => matrix::matmul(x, w.as_slice(), w.rows(), w.cols()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        validate_chain(&specs)?;
        Ok(Self { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out()
    }

    pub fn quantized_in_range(&self) -> bool {
        self.layers.iter().all(|l| match &l.weights {
            LayerWeights::Quantized(w) => w.in_range(),
            LayerWeights::Full(_) => true,
        })
    }
}

const INIT_STREAM: u64 = 1;

/// Quantized layers: each weight is 0 with probability 0.9, otherwise ±1
/// with equal odds (regardless of bit width). Full-precision layers: uniform
/// in `[-1/sqrt(d_in), 1/sqrt(d_in)]`.
pub fn build_network(specs: &[LayerSpec], seed: u64) -> Result<Network> {
    validate_chain(specs)?;
    let root = DeterministicRng::new(seed);
    let layers = specs
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let mut rng = root.stream(INIT_STREAM, l as u64);
            let n = s.d_in * s.d_out;
            let weights = match s.kind {
                LayerKind::Quantized(bits) => {
                    let data = (0..n)
                        .map(|_| {
                            if rng.random::<f64>() < 0.9 {
                                0
                            } else if rng.random::<bool>() {
                                1
                            } else {
                                -1
                            }
                        })
                        .collect();
                    LayerWeights::Quantized(QuantizedWeightMatrix::from_vec(s.d_in, s.d_out, bits, data)?)
                }
                LayerKind::FullPrecision => {
                    let bound = 1.0 / (s.d_in as f64).sqrt();
                    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                    LayerWeights::Full(FloatMatrix::from_vec(s.d_in, s.d_out, data)?)
                }
            };
            Ok(Layer {
                activation: s.activation,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Network { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d_in: usize, d_out: usize, kind: LayerKind) -> LayerSpec {
        LayerSpec {
            d_in,
            d_out,
            kind,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn ternary_init_zero_fraction() {
        let net = build_network(&[spec(100, 100, LayerKind::Quantized(BitWidth::TERNARY))], 7).unwrap();
        let LayerWeights::Quantized(w) = &net.layers[0].weights else {
            panic!("expected quantized layer")
        };
        let zeros = w.as_slice().iter().filter(|&&v| v == 0).count() as f64 / w.len() as f64;
        // binomial(10_000, 0.9): 3 sigma = 0.009
        assert!((0.88..=0.92).contains(&zeros), "zero fraction {zeros}");
        assert!(w.as_slice().iter().all(|v| (-1..=1).contains(v)));
        let plus = w.as_slice().iter().filter(|&&v| v == 1).count();
        let minus = w.as_slice().iter().filter(|&&v| v == -1).count();
        assert!(plus > 0 && minus > 0);
    }

    #[test]
    fn wide_bits_still_ternary_init() {
        let net = build_network(&[spec(50, 50, LayerKind::Quantized(BitWidth::new(4).unwrap()))], 1).unwrap();
        let LayerWeights::Quantized(w) = &net.layers[0].weights else {
            panic!()
        };
        assert!(w.as_slice().iter().all(|v| (-1..=1).contains(v)));
    }

    #[test]
    fn full_precision_init_bounds() {
        let net = build_network(&[spec(16, 8, LayerKind::FullPrecision), spec(8, 2, LayerKind::FullPrecision)], 3).unwrap();
        for layer in &net.layers {
            let LayerWeights::Full(w) = &layer.weights else {
                panic!("no quantized state expected")
            };
            let bound = 1.0 / (w.rows() as f64).sqrt();
            assert!(w.as_slice().iter().all(|v| v.abs() <= bound));
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let specs = [spec(10, 5, LayerKind::Quantized(BitWidth::TERNARY)), spec(5, 3, LayerKind::FullPrecision)];
        assert_eq!(build_network(&specs, 11).unwrap(), build_network(&specs, 11).unwrap());
        assert_ne!(build_network(&specs, 11).unwrap(), build_network(&specs, 12).unwrap());
    }

    #[test]
    fn broken_chain_rejected() {
        let specs = [spec(10, 5, LayerKind::FullPrecision), spec(6, 3, LayerKind::FullPrecision)];
        assert!(matches!(build_network(&specs, 0), Err(Error::Validation(_))));
        assert!(build_network(&[], 0).is_err());
    }
}

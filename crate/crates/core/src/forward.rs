//! Forward pass with contribution bookkeeping.
//!
//! The contribution of input feature `i` of sample `b` to output `o` is
//! `c[b,i,o] = x[b,i] * w[i,o]`; summing over `i` gives the pre-activation.
//! At training scale the tensor is never stored. Each layer record keeps its
//! input and the weights are at hand, so any slab of `C` can be recomputed on
//! demand; [`materialize_contributions`] builds it in full for tests.

use crate::error::{Error, Result};
use crate::matrix::FloatMatrix;
use crate::network::{Activation, Layer, LayerWeights, Network};

/// Default element budget for a materialized contribution tensor.
pub const DEFAULT_CONTRIBUTION_BUDGET: u64 = 10_000_000;

/// Dense `B x d_in x d_out` contribution tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ContributionTensor {
    batch: usize,
    d_in: usize,
    d_out: usize,
    data: Vec<f64>,
}

impl ContributionTensor {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.batch, self.d_in, self.d_out)
    }

    #[inline]
    pub fn get(&self, b: usize, i: usize, o: usize) -> f64 {
        self.data[(b * self.d_in + i) * self.d_out + o]
    }

    /// `v[b,o] = sum_i c[b,i,o]`.
    pub fn sum_over_inputs(&self) -> FloatMatrix {
        let mut v = FloatMatrix::zeros(self.batch, self.d_out);
        for b in 0..self.batch {
            for i in 0..self.d_in {
                for o in 0..self.d_out {
                    let acc = v.get(b, o) + self.get(b, i, o);
                    v.set(b, o, acc);
                }
            }
        }
        v
    }
}

/// Per-layer record of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivationRecord {
    pub layer: usize,
    pub input: FloatMatrix,
    pub preactivation: FloatMatrix,
    pub output: FloatMatrix,
}

pub fn linear_forward(x: &FloatMatrix, layer: &Layer) -> Result<FloatMatrix> {
    layer.linear(x)
}

/// Builds the full contribution tensor, refusing when `B*d_in*d_out`
/// exceeds `budget`.
pub fn materialize_contributions(
    x: &FloatMatrix,
    weights: &LayerWeights,
    budget: u64,
) -> Result<ContributionTensor> {
    let (rows, cols) = match weights {
        LayerWeights::Quantized(w) => (w.rows(), w.cols()),
        LayerWeights::Full(w) => (w.rows(), w.cols()),
    };
    if x.cols() != rows {
        return Err(Error::validation(format!(
            "input has {} features, weights expect {rows}",
            x.cols()
        )));
    }
    let requested = x.rows() as u64 * rows as u64 * cols as u64;
    if requested > budget {
        return Err(Error::Capacity {
            what: "contribution tensor",
            requested,
            budget,
        });
    }
    let weight_at = |i: usize, o: usize| -> f64 {
        match weights {
            LayerWeights::Quantized(w) => w.get(i, o) as f64,
            LayerWeights::Full(w) => w.get(i, o),
        }
    };
    let mut data = Vec::with_capacity(requested as usize);
    for b in 0..x.rows() {
        for i in 0..rows {
            let xv = x.get(b, i);
            for o in 0..cols {
                data.push(xv * weight_at(i, o));
            }
        }
    }
    Ok(ContributionTensor {
        batch: x.rows(),
        d_in: rows,
        d_out: cols,
        data,
    })
}

pub fn activation(v: &FloatMatrix, kind: Activation) -> FloatMatrix {
    match kind {
        Activation::Relu => v.map(|x| x.max(0.0)),
        Activation::Identity => v.clone(),
    }
}

/// Runs the batch through every layer and keeps each layer's input,
/// pre-activation and output.
pub fn modified_forward(batch: &FloatMatrix, network: &Network) -> Result<Vec<LayerActivationRecord>> {
    if batch.cols() != network.input_dim() {
        return Err(Error::validation(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            network.input_dim()
        )));
    }
    let mut records: Vec<LayerActivationRecord> = Vec::with_capacity(network.layers.len());
    for (l, layer) in network.layers.iter().enumerate() {
        let input = records.last().map_or_else(|| batch.clone(), |r| r.output.clone());
        let preactivation = linear_forward(&input, layer)?;
        let output = activation(&preactivation, layer.activation);
        records.push(LayerActivationRecord {
            layer: l,
            input,
            preactivation,
            output,
        });
    }
    Ok(records)
}

/// Output of the last layer only.
pub fn predict(batch: &FloatMatrix, network: &Network) -> Result<FloatMatrix> {
    if batch.cols() != network.input_dim() {
        return Err(Error::validation(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            network.input_dim()
        )));
    }
    let mut x = batch.clone();
    for layer in &network.layers {
        x = activation(&layer.linear(&x)?, layer.activation);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, LayerKind, LayerSpec};
    use crate::quant::{BitWidth, QuantizedWeightMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qlayer(rows: &[Vec<i8>], act: Activation) -> Layer {
        Layer {
            activation: act,
            weights: LayerWeights::Quantized(QuantizedWeightMatrix::from_rows(rows, BitWidth::TERNARY).unwrap()),
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> FloatMatrix {
        FloatMatrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn linear_forward_small() {
        let x = FloatMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let layer = qlayer(&[vec![1], vec![-1]], Activation::Identity);
        assert_eq!(linear_forward(&x, &layer).unwrap().as_slice(), &[-1.0]);
    }

    #[test]
    fn identity_input_returns_weights() {
        let layer = qlayer(&[vec![1, 0, -1], vec![0, -1, 1]], Activation::Identity);
        let LayerWeights::Quantized(w) = &layer.weights else { unreachable!() };
        let out = linear_forward(&FloatMatrix::identity(2), &layer).unwrap();
        assert_eq!(out, w.to_float());
    }

    #[test]
    fn dimension_mismatch_is_validation_error() {
        let x = FloatMatrix::zeros(1, 3);
        let layer = qlayer(&[vec![1], vec![-1]], Activation::Identity);
        assert!(matches!(linear_forward(&x, &layer), Err(Error::Validation(_))));
    }

    #[test]
    fn contributions_sum_to_preactivation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 3, 4);
        let w: Vec<i8> = (0..8).map(|_| rng.random_range(-1..=1)).collect();
        let layer = Layer {
            activation: Activation::Identity,
            weights: LayerWeights::Quantized(QuantizedWeightMatrix::from_vec(4, 2, BitWidth::TERNARY, w).unwrap()),
        };
        let c = materialize_contributions(&x, &layer.weights, DEFAULT_CONTRIBUTION_BUDGET).unwrap();
        // integer weights: the sum runs in the same order as the kernel
        assert_eq!(c.sum_over_inputs(), linear_forward(&x, &layer).unwrap());
    }

    #[test]
    fn contribution_examples() {
        let x = FloatMatrix::from_rows(&[vec![2.0]]).unwrap();
        let layer = qlayer(&[vec![-1]], Activation::Identity);
        let c = materialize_contributions(&x, &layer.weights, 10).unwrap();
        assert_eq!(c.get(0, 0, 0), -2.0);

        let x = FloatMatrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let layer = qlayer(&[vec![1, -1], vec![1, 1]], Activation::Identity);
        let c = materialize_contributions(&x, &layer.weights, 10).unwrap();
        for b in 0..2 {
            for o in 0..2 {
                assert_eq!(c.get(b, 1, o), 0.0);
            }
        }
    }

    #[test]
    fn contributions_match_triple_loop() {
        let x = FloatMatrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.0, 4.0, -1.0]]).unwrap();
        let w = vec![vec![2i8, -3], vec![1, 0], vec![-1, 5]];
        let q = QuantizedWeightMatrix::from_rows(&w, BitWidth::new(4).unwrap()).unwrap();
        let c = materialize_contributions(&x, &LayerWeights::Quantized(q), 100).unwrap();
        for b in 0..2 {
            for i in 0..3 {
                for o in 0..2 {
                    assert_eq!(c.get(b, i, o), x.get(b, i) * w[i][o] as f64);
                }
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let x = FloatMatrix::zeros(4, 4);
        let layer = qlayer(&vec![vec![0; 4]; 4], Activation::Identity);
        let err = materialize_contributions(&x, &layer.weights, 63).unwrap_err();
        assert!(matches!(err, Error::Capacity { requested: 64, budget: 63, .. }));
    }

    #[test]
    fn activation_examples() {
        let v = FloatMatrix::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(activation(&v, Activation::Relu).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(activation(&v, Activation::Identity), v);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_matrix(&mut rng, 5, 5);
        let once = activation(&r, Activation::Relu);
        assert_eq!(activation(&once, Activation::Relu), once);
    }

    #[test]
    fn single_identity_layer_passes_input_through() {
        let layer = qlayer(&[vec![1, 0], vec![0, 1]], Activation::Identity);
        let net = Network::new(vec![layer]).unwrap();
        let x = FloatMatrix::from_rows(&[vec![0.5, -2.0], vec![3.0, 1.0]]).unwrap();
        let recs = modified_forward(&x, &net).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].output, x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Network::new(vec![
            qlayer(&vec![vec![0; 3]; 2], Activation::Relu),
            qlayer(&vec![vec![0; 2]; 3], Activation::Identity),
        ])
        .unwrap();
        let out = predict(&FloatMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap(), &net).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_layer_matches_straight_line_reference() {
        let specs = [
            LayerSpec { d_in: 4, d_out: 5, kind: LayerKind::FullPrecision, activation: Activation::Relu },
            LayerSpec { d_in: 5, d_out: 3, kind: LayerKind::Quantized(BitWidth::TERNARY), activation: Activation::Relu },
            LayerSpec { d_in: 3, d_out: 2, kind: LayerKind::FullPrecision, activation: Activation::Identity },
        ];
        let net = build_network(&specs, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 6, 4);

        // straight-line evaluation of v = X·W, X' = sigma(v), one scalar at a time
        let mut cur: Vec<Vec<f64>> = (0..6).map(|b| x.row(b).to_vec()).collect();
        for layer in &net.layers {
            let w = match &layer.weights {
                LayerWeights::Quantized(q) => q.to_float(),
                LayerWeights::Full(f) => f.clone(),
            };
            cur = cur
                .iter()
                .map(|row| {
                    (0..w.cols())
                        .map(|o| {
                            let v: f64 = (0..w.rows()).map(|i| row[i] * w.get(i, o)).sum();
                            match layer.activation {
                                Activation::Relu => v.max(0.0),
                                Activation::Identity => v,
                            }
                        })
                        .collect()
                })
                .collect();
        }
        let recs = modified_forward(&x, &net).unwrap();
        let out = &recs.last().unwrap().output;
        for b in 0..6 {
            for o in 0..2 {
                let (a, e) = (out.get(b, o), cur[b][o]);
                assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0), "{a} vs {e}");
            }
        }
        for (r, rec) in recs.iter().enumerate() {
            assert_eq!(rec.layer, r);
            assert_eq!(rec.output, activation(&rec.preactivation, net.layers[r].activation));
        }
    }
}

//! Training loop for quantized, full-precision and hybrid networks.

use crate::accounting::{record_step, CostLedger, EnergyConstants, ParamCounts};
use crate::backprop::{adamw_step, fp_backward, AdamWConfig, AdamWState};
use crate::data::{batch_iterator, LabeledDataset};
use crate::error::{Error, Result};
use crate::forward::{modified_forward, predict};
use crate::gft::{propagate_delta, update_layer, ErrorFilterMode, KSchedule};
use crate::loss::{argmax, mean_loss, output_delta, sample_losses, LossKind};
use crate::matrix::FloatMatrix;
use crate::network::{LayerWeights, Network};
use crate::quant::BitWidth;
use crate::rng::DeterministicRng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub p_min: f64,
    pub k0: f64,
    pub error_filter: ErrorFilterMode,
    pub loss: LossKind,
    pub seed: u64,
    pub adamw: AdamWConfig,
    pub energy: EnergyConstants,
    /// Evaluate every this many steps; `None` evaluates at epoch ends.
    pub eval_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            batch_size: 64,
            p_min: 0.001,
            k0: KSchedule::DEFAULT_K0,
            error_filter: ErrorFilterMode::None,
            loss: LossKind::SoftmaxXent,
            seed: 0,
            adamw: AdamWConfig::default(),
            energy: EnergyConstants::default(),
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if !(self.p_min > 0.0 && self.p_min <= 1.0) {
            return Err(Error::validation(format!("p_min {} outside (0, 1]", self.p_min)));
        }
        if !(0.0..=1.0).contains(&self.k0) {
            return Err(Error::validation(format!("k0 {} outside [0, 1]", self.k0)));
        }
        if self.eval_every == Some(0) {
            return Err(Error::validation("eval_every must be >= 1"));
        }
        self.adamw.validate()?;
        self.energy.validate()
    }
}

/// One row of the metric history, written after step `t` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub t: u64,
    pub epoch: u64,
    pub loss: f64,
    pub eval_accuracy: Option<f64>,
    pub eval_loss: Option<f64>,
    pub realized_flips: u64,
    pub expected_flips: f64,
    pub cumulative_updates: u64,
    pub cumulative_energy_pj: f64,
    pub k: f64,
    pub mode: ErrorFilterMode,
}

/// What one step did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub k: f64,
    pub selected: u64,
    pub realized_flips: u64,
    pub expected_flips: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub correct: usize,
    pub total: usize,
}

/// Network, optimizer state, schedule and ledger of one run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub network: Network,
    pub optimizer: Vec<Option<AdamWState>>,
    pub t: u64,
    pub ledger: CostLedger,
    pub history: Vec<MetricRow>,
    config: TrainConfig,
    schedule: KSchedule,
    rng: DeterministicRng,
    params: ParamCounts,
}

impl TrainState {
    pub fn new(network: Network, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let specs = network.specs();
        let params = ParamCounts::of(&specs);
        // fail now rather than at the first ledger update
        params.step_energy(&config.energy)?;
        let optimizer = network
            .layers
            .iter()
            .map(|l| match &l.weights {
                LayerWeights::Full(w) => Some(AdamWState::new(w.as_slice().len())),
                LayerWeights::Quantized(_) => None,
            })
            .collect();
        Ok(Self {
            ledger: CostLedger::for_specs(&specs, config.energy),
            schedule: KSchedule::new(config.k0, config.iterations)?,
            rng: DeterministicRng::new(config.seed),
            network,
            optimizer,
            t: 0,
            history: Vec::new(),
            config,
            params,
        })
    }

    /// Restores optimizer state and step counter, e.g. from a checkpoint.
    pub fn with_progress(mut self, optimizer: Vec<Option<AdamWState>>, t: u64) -> Result<Self> {
        if optimizer.len() != self.network.layers.len() {
            return Err(Error::validation("optimizer state does not match layer count"));
        }
        self.optimizer = optimizer;
        self.t = t;
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn param_counts(&self) -> &ParamCounts {
        &self.params
    }

    pub fn k_now(&self) -> Result<f64> {
        self.schedule.k_at(self.t.min(self.schedule.total()))
    }

    /// One iteration: forward, output delta, then layers from last to first.
    /// Quantized layers flip in place and pass `δ·Wᵀ` down (using the
    /// updated weights). Full-precision layers backpropagate with the
    /// pre-step weights and take their AdamW step after the walk.
    pub fn train_step(&mut self, batch: &FloatMatrix, labels: &[usize]) -> Result<StepReport> {
        let records = modified_forward(batch, &self.network)?;
        let logits = &records.last().expect("network has layers").output;
        let loss = mean_loss(logits, labels, self.config.loss)?;
        let mut delta = output_delta(logits, labels, self.config.loss)?;
        let k = self.k_now()?;

        let activations: Vec<_> = self.network.layers.iter().map(|l| l.activation).collect();
        let mut staged: Vec<(usize, FloatMatrix)> = Vec::new();
        let mut report = StepReport {
            loss,
            k,
            selected: 0,
            realized_flips: 0,
            expected_flips: 0.0,
        };
        for l in (0..self.network.layers.len()).rev() {
            let record = &records[l];
            match &mut self.network.layers[l].weights {
                LayerWeights::Quantized(w) => {
                    let r = update_layer(
                        w,
                        &record.input,
                        &delta,
                        self.config.error_filter,
                        k,
                        self.config.p_min,
                        &self.rng,
                        self.t,
                        l as u64,
                    )?;
                    report.selected += r.selected as u64;
                    report.realized_flips += r.flips.realized;
                    report.expected_flips += r.flips.expected;
                    if l > 0 {
                        delta = propagate_delta(&delta, w)?;
                    }
                }
                LayerWeights::Full(w) => {
                    let below = (l > 0).then(|| (activations[l - 1], &records[l - 1].preactivation));
                    let (grad, delta_in) = fp_backward(&delta, &record.input, w, below)?;
                    staged.push((l, grad));
                    delta = delta_in;
                }
            }
        }
        for (l, grad) in staged {
            let LayerWeights::Full(w) = &mut self.network.layers[l].weights else {
                unreachable!("staged gradients belong to full-precision layers")
            };
            let state = self.optimizer[l].get_or_insert_with(|| AdamWState::new(grad.as_slice().len()));
            adamw_step(w.as_mut_slice(), grad.as_slice(), state, &self.config.adamw)?;
        }

        let q: Vec<(BitWidth, u64)> = self.params.quantized.iter().map(|(&b, &n)| (b, n)).collect();
        record_step(
            &mut self.ledger,
            report.realized_flips,
            report.expected_flips,
            self.params.full_precision,
            &q,
        )?;
        self.t += 1;
        Ok(report)
    }

    fn push_row(&mut self, epoch: u64, report: &StepReport) {
        self.history.push(MetricRow {
            t: self.t,
            epoch,
            loss: report.loss,
            eval_accuracy: None,
            eval_loss: None,
            realized_flips: report.realized_flips,
            expected_flips: report.expected_flips,
            cumulative_updates: self.ledger.cumulative_updates,
            cumulative_energy_pj: self.ledger.cumulative_energy_pj(),
            k: report.k,
            mode: self.config.error_filter,
        });
    }
}

/// Accuracy (argmax, ties to the lowest class) and mean loss.
pub fn evaluate(network: &Network, dataset: &LabeledDataset, loss: LossKind) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot evaluate on an empty dataset"));
    }
    if dataset.dim() != network.input_dim() {
        return Err(Error::validation(format!(
            "dataset has {} features, network expects {}",
            dataset.dim(),
            network.input_dim()
        )));
    }
    const CHUNK: usize = 1024;
    let mut correct = 0;
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let part = dataset.subset(chunk);
        let logits = predict(&part.features, network)?;
        for (b, &y) in part.labels.iter().enumerate() {
            if argmax(logits.row(b)) == y {
                correct += 1;
            }
        }
        loss_sum += sample_losses(&logits, &part.labels, loss)?.iter().sum::<f64>();
    }
    Ok(Evaluation {
        accuracy: correct as f64 / dataset.len() as f64,
        mean_loss: loss_sum / dataset.len() as f64,
        correct,
        total: dataset.len(),
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub final_eval: Option<Evaluation>,
}

/// Runs `config.iterations` steps over seeded per-epoch shuffles of
/// `dataset`, cycling through epochs as needed. `eval` (or the training set
/// when `None`) is scored at each epoch end, every `eval_every` steps if
/// set, and after the last step.
pub fn train(
    config: &TrainConfig,
    network: Network,
    dataset: &LabeledDataset,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    let mut state = TrainState::new(network, config.clone())?;
    if config.iterations == 0 {
        return Ok(TrainOutcome {
            state,
            final_eval: None,
        });
    }
    if dataset.dim() != state.network.input_dim() {
        return Err(Error::validation(format!(
            "dataset has {} features, network expects {}",
            dataset.dim(),
            state.network.input_dim()
        )));
    }
    let eval_set = eval.unwrap_or(dataset);
    let mut final_eval = None;
    let mut epoch = 0u64;
    'epochs: loop {
        for (batch, labels) in batch_iterator(dataset, config.batch_size, config.seed, epoch)? {
            let report = state.train_step(&batch, &labels)?;
            state.push_row(epoch, &report);
            let done = state.t == config.iterations;
            if done || config.eval_every.is_some_and(|n| state.t % n == 0) {
                let e = evaluate(&state.network, eval_set, config.loss)?;
                attach_eval(&mut state, e);
                final_eval = Some(e);
            }
            if done {
                break 'epochs;
            }
        }
        if config.eval_every.is_none() {
            let e = evaluate(&state.network, eval_set, config.loss)?;
            attach_eval(&mut state, e);
        }
        epoch += 1;
    }
    Ok(TrainOutcome { state, final_eval })
}

fn attach_eval(state: &mut TrainState, e: Evaluation) {
    if let Some(row) = state.history.last_mut() {
        row.eval_accuracy = Some(e.accuracy);
        row.eval_loss = Some(e.mean_loss);
    }
}

/// Steps for `epochs` passes at batch size `batch_size` (partial batches
/// dropped).
pub fn iterations_for_epochs(epochs: u64, dataset_len: usize, batch_size: usize) -> u64 {
    epochs * (dataset_len / batch_size.max(1)) as u64
}

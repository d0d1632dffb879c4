use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{total_loss_graph, stack_inputs, Tpnet, TpnetConfig};
use crate::datagen::DatasetSample;
use crate::error::{Error, Result};
use crate::nn::{sgd_step, Graph, OptimState};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct TpnetTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Steps per epoch; `None` means one pass worth of scenes,
    /// `ceil(scenes / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TpnetTrainOptions {
    fn default() -> Self {
        TpnetTrainOptions { epochs: 400, batch_size: 32, steps_per_epoch: None, seed: 0 }
    }
}

/// Means over one epoch's steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    pub loss_td: f64,
    pub loss_obs: f64,
    pub loss_total: f64,
    pub lr: f64,
    /// How often each final head won the diversity minimum.
    pub head_histogram: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TpnetTrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TpnetTrainingLog {
    /// Winner counts summed over all epochs.
    pub fn head_totals(&self) -> Vec<usize> {
        let k = self.epochs.first().map_or(0, |e| e.head_histogram.len());
        let mut out = vec![0; k];
        for e in &self.epochs {
            out.iter_mut().zip(&e.head_histogram).for_each(|(o, h)| *o += h);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        let k = self.epochs.first().map_or(0, |e| e.head_histogram.len());
        let mut header: Vec<String> = ["epoch", "step", "loss_td", "loss_obs", "loss_total", "lr"].map(String::from).to_vec();
        header.extend((0..k).map(|i| format!("head_{i}")));
        w.write_record(&header).map_err(csv_error)?;
        for e in &self.epochs {
            let mut row = vec![
                e.epoch.to_string(),
                e.step.to_string(),
                e.loss_td.to_string(),
                e.loss_obs.to_string(),
                e.loss_total.to_string(),
                e.lr.to_string(),
            ];
            row.extend(e.head_histogram.iter().map(usize::to_string));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}

/// Trains a fresh network with SGD. Each step draws `batch_size` scenes
/// uniformly with replacement and one label uniformly from each scene's
/// pool. Deterministic given `opts.seed`.
pub fn train_tpnet<T: Scalar>(
    dataset: &[DatasetSample],
    config: &TpnetConfig,
    optim: &mut OptimState,
    opts: &TpnetTrainOptions,
) -> Result<(Tpnet<T>, TpnetTrainingLog)> {
    train_tpnet_with(dataset, config, optim, opts, |_| {})
}

/// [`train_tpnet`] with a callback after every epoch.
pub fn train_tpnet_with<T: Scalar>(
    dataset: &[DatasetSample],
    config: &TpnetConfig,
    optim: &mut OptimState,
    opts: &TpnetTrainOptions,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Tpnet<T>, TpnetTrainingLog)> {
    if dataset.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(i) = dataset.iter().position(|s| s.labels.is_empty()) {
        return Err(Error::Data(format!("scene {i} has no labels")));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let cfg = dataset[0].input.config;
    if dataset.iter().any(|s| (s.input.config.height, s.input.config.width) != (cfg.height, cfg.width)) {
        return Err(Error::Dimension("training scenes differ in grid size".into()));
    }
    let mut net = Tpnet::<T>::new(config.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let steps = opts.steps_per_epoch.unwrap_or_else(|| dataset.len().div_ceil(opts.batch_size)).max(1);
    let n = cfg.cells();
    let mut log = TpnetTrainingLog::default();
    for epoch in 0..opts.epochs {
        let mut stats = EpochStats {
            epoch,
            step: 0,
            loss_td: 0.0,
            loss_obs: 0.0,
            loss_total: 0.0,
            lr: optim.lr(),
            head_histogram: vec![0; config.heads()],
        };
        for _ in 0..steps {
            let mut inputs = Vec::with_capacity(opts.batch_size);
            let mut targets = Vec::with_capacity(opts.batch_size * n);
            let mut occupied = Vec::with_capacity(opts.batch_size * n);
            for _ in 0..opts.batch_size {
                let s = &dataset[rng.gen_range(0..dataset.len())];
                let label = &s.labels[rng.gen_range(0..s.labels.len())];
                inputs.push(&s.input);
                targets.extend_from_slice(&label.traversable);
                occupied.extend(s.input.channel(0).iter().map(|v| *v != 0.0));
            }
            let mut g = Graph::<T>::new();
            let x = g.constant(stack_inputs(&inputs)?);
            let out = net.forward_graph(&mut g, x)?;
            let loss = total_loss_graph(&mut g, out.heads, out.intermediate, &targets, &occupied, config)?;
            let grads = g.backward(loss.total)?.params(&g, net.params());
            stats.lr = optim.lr();
            sgd_step(net.params_mut(), &grads, optim);
            stats.loss_td += g.value(loss.diversity).item().as_f64();
            stats.loss_obs += g.value(loss.obstacle).item().as_f64();
            stats.loss_total += g.value(loss.total).item().as_f64();
            for c in &loss.chosen {
                stats.head_histogram[*c] += 1;
            }
        }
        let s = steps as f64;
        stats.loss_td /= s;
        stats.loss_obs /= s;
        stats.loss_total /= s;
        stats.step = optim.step_count;
        if !stats.loss_total.is_finite() {
            return Err(Error::Data(format!("training diverged at epoch {epoch}")));
        }
        on_epoch(&stats);
        log.epochs.push(stats);
    }
    Ok((net, log))
}

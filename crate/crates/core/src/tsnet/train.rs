use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{batch_inputs, sequence_loss_graph, Tsnet, TsnetConfig, TsnetSample};
use crate::error::{Error, Result};
use crate::nn::{sgd_step, Graph, OptimState};
use crate::scalar::Scalar;
use crate::tpnet::csv_error;

#[derive(Clone, Debug, PartialEq)]
pub struct TsnetTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` means `ceil(samples / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TsnetTrainOptions {
    fn default() -> Self {
        TsnetTrainOptions { epochs: 300, batch_size: 32, steps_per_epoch: None, seed: 0 }
    }
}

/// Means over one epoch's steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TsnetEpochStats {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    /// Average displacement error in cells on the training batches.
    pub ade: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TsnetTrainingLog {
    pub epochs: Vec<TsnetEpochStats>,
}

impl TsnetTrainingLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(["epoch", "step", "loss", "lr", "ade"]).map_err(csv_error)?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.step.to_string(), e.loss.to_string(), e.lr.to_string(), e.ade.to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn train_tsnet<T: Scalar>(
    samples: &[TsnetSample],
    config: &TsnetConfig,
    optim: &mut OptimState,
    opts: &TsnetTrainOptions,
) -> Result<(Tsnet<T>, TsnetTrainingLog)> {
    train_tsnet_with(samples, config, optim, opts, |_| {})
}

/// [`train_tsnet`] with a callback after every epoch. Batches are drawn
/// uniformly with replacement; deterministic given `opts.seed`.
pub fn train_tsnet_with<T: Scalar>(
    samples: &[TsnetSample],
    config: &TsnetConfig,
    optim: &mut OptimState,
    opts: &TsnetTrainOptions,
    mut on_epoch: impl FnMut(&TsnetEpochStats),
) -> Result<(Tsnet<T>, TsnetTrainingLog)> {
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let grid = samples[0].grid;
    for (i, s) in samples.iter().enumerate() {
        if (s.grid.height, s.grid.width) != (grid.height, grid.width) {
            return Err(Error::Dimension("training samples differ in grid size".into()));
        }
        s.target.validate(config.waypoints).map_err(|e| Error::Data(format!("sample {i}: {e}")))?;
    }
    let mut net = Tsnet::<T>::new(config.clone(), opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let steps = opts.steps_per_epoch.unwrap_or_else(|| samples.len().div_ceil(opts.batch_size)).max(1);
    let scale = [(grid.height - 1) as f64, (grid.width - 1) as f64];
    let mut log = TsnetTrainingLog::default();
    for epoch in 0..opts.epochs {
        let mut stats = TsnetEpochStats { epoch, step: 0, loss: 0.0, lr: optim.lr(), ade: 0.0 };
        for _ in 0..steps {
            let batch: Vec<&TsnetSample> =
                (0..opts.batch_size).map(|_| &samples[rng.gen_range(0..samples.len())]).collect();
            let proposals: Vec<&[f64]> = batch.iter().map(|s| s.proposal.as_slice()).collect();
            let egos: Vec<[f64; 2]> = batch.iter().map(|s| s.ego).collect();
            let targets: Vec<Vec<T>> = (0..config.waypoints)
                .map(|t| batch.iter().flat_map(|s| s.target.points[t].map(T::lit)).collect())
                .collect();
            let mut g = Graph::<T>::new();
            let (x, e) = batch_inputs(&mut g, &proposals, &egos, &grid)?;
            let out = net.forward_graph(&mut g, x, e)?;
            let loss = sequence_loss_graph(&mut g, &out, &targets)?;
            let grads = g.backward(loss)?.params(&g, net.params());
            stats.lr = optim.lr();
            sgd_step(net.params_mut(), &grads, optim);
            stats.loss += g.value(loss).item().as_f64();
            let mut ade = 0.0;
            for (v, t) in out.iter().zip(&targets) {
                for (p, q) in g.value(*v).data().chunks(2).zip(t.chunks(2)) {
                    let dr = (p[0].as_f64() - q[0].as_f64()) * scale[0];
                    let dc = (p[1].as_f64() - q[1].as_f64()) * scale[1];
                    ade += dr.hypot(dc);
                }
            }
            stats.ade += ade / (config.waypoints * batch.len()) as f64;
        }
        stats.loss /= steps as f64;
        stats.ade /= steps as f64;
        stats.step = optim.step_count;
        if !stats.loss.is_finite() {
            return Err(Error::Data(format!("training diverged at epoch {epoch}")));
        }
        on_epoch(&stats);
        log.epochs.push(stats);
    }
    Ok((net, log))
}

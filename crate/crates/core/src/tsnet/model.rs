use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{TsnetConfig, WaypointSequence};
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::nn::{self, lstm_cell, Conv2d, ConvSpec, Graph, Linear, LstmParams, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

const CONFIG_KEY: &str = "tsnet.config";
pub const LSTM_LAYERS: usize = 3;
const STRIDED_CONVS: usize = 3;

/// Convolutional encoder plus a three-layer LSTM decoder that emits one
/// normalized waypoint per step.
pub struct Tsnet<T> {
    config: TsnetConfig,
    params: ParamStore<T>,
    stem: Conv2d,
    strided: Vec<Conv2d>,
    lstm: Vec<LstmParams>,
    output: Linear,
}

impl<T: Scalar> Tsnet<T> {
    pub fn new(config: TsnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let c = config.channels;
        let stem = Conv2d::new(&mut p, "stem", ConvSpec::new(1, c, 7), &mut rng)?;
        let strided = (0..STRIDED_CONVS)
            .map(|i| Conv2d::new(&mut p, &format!("stride{i}"), ConvSpec::new(c, c, 3).stride(2).padding(1), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let hs = config.hidden_size;
        let mut lstm = Vec::with_capacity(LSTM_LAYERS);
        for l in 0..LSTM_LAYERS {
            let input = if l == 0 { c + 2 } else { hs };
            lstm.push(LstmParams::new(&mut p, &format!("lstm{l}"), input, hs, &mut rng)?);
        }
        let output = Linear::new(&mut p, "output", hs, 2, &mut rng)?;
        Ok(Tsnet { config, params: p, stem, strided, lstm, output })
    }

    pub fn from_params(config: TsnetConfig, params: &ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        net.params.load_from(params)?;
        Ok(net)
    }

    pub fn config(&self) -> &TsnetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Output layer weight and bias, e.g. for zeroing in tests.
    pub fn output_layer(&self) -> &Linear {
        &self.output
    }

    /// Feature map after each encoder convolution of an `[N, 1, H, W]` map.
    pub fn encoder_maps(&self, g: &mut Graph<T>, proposal: Var) -> Result<Vec<Var>> {
        let p = &self.params;
        let mut x = proposal;
        let mut out = Vec::with_capacity(1 + self.strided.len());
        for conv in std::iter::once(&self.stem).chain(&self.strided) {
            let y = conv.forward(g, p, x)?;
            x = g.relu(y);
            out.push(x);
        }
        Ok(out)
    }

    /// Pooled encoder features `[N, channels]`.
    pub fn encode_graph(&self, g: &mut Graph<T>, proposal: Var) -> Result<Var> {
        let maps = self.encoder_maps(g, proposal)?;
        g.global_avg_pool(*maps.last().expect("encoder has layers"))
    }

    /// Unrolls the decoder for `T` steps from the `[N, 2]` ego node. Each
    /// step feeds the previous prediction back in.
    pub fn forward_graph(&self, g: &mut Graph<T>, proposal: Var, ego: Var) -> Result<Vec<Var>> {
        let n = g.value(proposal).shape()[0];
        let features = self.encode_graph(g, proposal)?;
        let hs = self.config.hidden_size;
        let mut h: Vec<Var> = (0..LSTM_LAYERS).map(|_| g.constant(Tensor::zeros(&[n, hs]))).collect();
        let mut c = h.clone();
        let mut prev = ego;
        let mut out = Vec::with_capacity(self.config.waypoints);
        for _ in 0..self.config.waypoints {
            let mut x = g.concat(&[features, prev])?;
            for (l, params) in self.lstm.iter().enumerate() {
                let (hn, cn) = lstm_cell(g, &self.params, params, x, h[l], c[l])?;
                h[l] = hn;
                c[l] = cn;
                x = hn;
            }
            let logits = self.output.forward(g, &self.params, x)?;
            prev = g.sigmoid(logits);
            out.push(prev);
        }
        Ok(out)
    }

    /// Waypoints for a batch of `R⁰` maps on one grid.
    pub fn forward_batch(&self, proposals: &[&[f64]], egos: &[[f64; 2]], grid: &GridConfig) -> Result<Vec<WaypointSequence>> {
        if proposals.len() != egos.len() {
            return Err(Error::Dimension("one ego position per proposal required".into()));
        }
        if proposals.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let (x, e) = batch_inputs(&mut g, proposals, egos, grid)?;
        let steps = self.forward_graph(&mut g, x, e)?;
        Ok((0..proposals.len())
            .map(|i| WaypointSequence {
                points: steps
                    .iter()
                    .map(|v| {
                        let d = g.value(*v).data();
                        [d[2 * i].as_f64(), d[2 * i + 1].as_f64()]
                    })
                    .collect(),
            })
            .collect())
    }

    pub fn forward(&self, proposal: &[f64], ego: [f64; 2], grid: &GridConfig) -> Result<WaypointSequence> {
        Ok(self.forward_batch(&[proposal], &[ego], grid)?.remove(0))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut store = self.params.clone();
        let c = &self.config;
        let meta = [c.waypoints, c.hidden_size, c.channels].map(|v| T::lit(v as f64)).to_vec();
        store.add(CONFIG_KEY, Tensor::new(vec![3], meta)?)?;
        nn::encode_checkpoint(&store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Architecture comes from the file; thresholds take their defaults.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let store: ParamStore<T> = nn::decode_checkpoint(bytes)?;
        let meta = store
            .by_name(CONFIG_KEY)
            .ok_or_else(|| Error::format("weight file has no sampler network configuration"))?;
        let v: Vec<f64> = meta.data().iter().map(|x| x.as_f64()).collect();
        if v.len() != 3 || v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
            return Err(Error::format("malformed sampler network configuration"));
        }
        let config = TsnetConfig {
            waypoints: v[0] as usize,
            hidden_size: v[1] as usize,
            channels: v[2] as usize,
            ..TsnetConfig::default()
        };
        Self::from_params(config, &store)
    }
}

/// Proposal batch `[N, 1, H, W]` and ego batch `[N, 2]` as graph constants.
pub fn batch_inputs<T: Scalar>(
    g: &mut Graph<T>,
    proposals: &[&[f64]],
    egos: &[[f64; 2]],
    grid: &GridConfig,
) -> Result<(Var, Var)> {
    let cells = grid.cells();
    let mut data = Vec::with_capacity(proposals.len() * cells);
    for p in proposals {
        if p.len() != cells {
            return Err(Error::Dimension(format!("proposal has {} cells, grid {cells}", p.len())));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("proposal contains non-finite values".into()));
        }
        data.extend(p.iter().map(|v| T::lit(*v)));
    }
    if egos.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Input("ego position is not finite".into()));
    }
    let x = g.constant(Tensor::new(vec![proposals.len(), 1, grid.height, grid.width], data)?);
    let e = g.constant(Tensor::new(vec![egos.len(), 2], egos.iter().flatten().map(|v| T::lit(*v)).collect())?);
    Ok((x, e))
}

/// Mean over steps of the per-sample Euclidean waypoint error, averaged
/// over the batch. `targets[t]` holds the step-`t` points of every sample.
pub fn sequence_loss_graph<T: Scalar>(g: &mut Graph<T>, steps: &[Var], targets: &[Vec<T>]) -> Result<Var> {
    if steps.len() != targets.len() || steps.is_empty() {
        return Err(Error::Dimension(format!("{} predicted steps vs {} targets", steps.len(), targets.len())));
    }
    let mut total: Option<Var> = None;
    for (v, t) in steps.iter().zip(targets) {
        let d = g.point_distance(*v, t)?;
        let m = g.mean(d);
        total = Some(match total {
            Some(acc) => g.add(acc, m)?,
            None => m,
        });
    }
    Ok(g.scale(total.expect("non-empty"), T::lit(1.0 / steps.len() as f64)))
}

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ProposalSet, TpnetConfig};
use crate::error::{Error, Result};
use crate::grid::NetworkInput;
use crate::nn::{self, Conv2d, ConvSpec, Graph, ParamStore, Tensor, Var};
use crate::scalar::Scalar;

const CONFIG_KEY: &str = "tpnet.config";

struct Stage {
    conv: Conv2d,
    down: Conv2d,
}

struct DecoderStage {
    up: Conv2d,
    conv: Conv2d,
}

/// Encoder-decoder proposal network with its weights.
pub struct Tpnet<T> {
    config: TpnetConfig,
    params: ParamStore<T>,
    encoder: Vec<Stage>,
    bottleneck: Conv2d,
    decoder: Vec<DecoderStage>,
    refine: Conv2d,
    head: Conv2d,
    intermediate: Option<Conv2d>,
}

/// Probability maps produced inside a graph: `[N, 2k, H, W]` each.
pub struct ForwardVars {
    pub heads: Var,
    pub intermediate: Option<Var>,
}

impl<T: Scalar> Tpnet<T> {
    /// Fresh network with Glorot-uniform weights drawn from `seed`.
    pub fn new(config: TpnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let widths = config.stage_widths();
        let dil = |i: usize| if config.enable_dilation && i > 0 { 2 } else { 1 };
        let mut encoder = Vec::with_capacity(config.depth);
        let mut cin = crate::grid::NetworkInput::CHANNELS;
        for (i, &c) in widths.iter().enumerate() {
            let d = dil(i);
            let conv = Conv2d::new(&mut p, &format!("enc{i}"), ConvSpec::new(cin, c, 3).dilation(d).padding(d), &mut rng)?;
            let next = widths.get(i + 1).copied().unwrap_or(c);
            let down = Conv2d::new(&mut p, &format!("down{i}"), ConvSpec::new(c, next, 3).stride(2).padding(1), &mut rng)?;
            encoder.push(Stage { conv, down });
            cin = next;
        }
        let bottleneck = Conv2d::new(&mut p, "bottleneck", ConvSpec::new(cin, cin, 3), &mut rng)?;
        let mut decoder = Vec::with_capacity(config.depth);
        for i in (0..config.depth).rev() {
            let c = widths[i];
            let up = Conv2d::transposed(&mut p, &format!("up{i}"), ConvSpec::new(cin, c, 4).stride(2).padding(1), &mut rng)?;
            let merged = if config.enable_skip { 2 * c } else { c };
            let conv = Conv2d::new(&mut p, &format!("dec{i}"), ConvSpec::new(merged, c, 3), &mut rng)?;
            decoder.push(DecoderStage { up, conv });
            cin = c;
        }
        let out = 2 * config.heads();
        let refine = Conv2d::new(&mut p, "refine", ConvSpec::new(cin, cin, 3), &mut rng)?;
        let head = Conv2d::new(&mut p, "head", ConvSpec::new(cin, out, 1), &mut rng)?;
        let intermediate = if config.enable_deep_supervision {
            Some(Conv2d::transposed(&mut p, "aux_head", ConvSpec::new(cin, out, 3).padding(1), &mut rng)?)
        } else {
            None
        };
        Ok(Tpnet { config, params: p, encoder, bottleneck, decoder, refine, head, intermediate })
    }

    /// Network for `config` carrying the given weights.
    pub fn from_params(config: TpnetConfig, params: &ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        net.params.load_from(params)?;
        Ok(net)
    }

    pub fn config(&self) -> &TpnetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Builds the forward pass for an `[N, 4, H, W]` input node.
    pub fn forward_graph(&self, g: &mut Graph<T>, input: Var) -> Result<ForwardVars> {
        let shape = g.value(input).shape().to_vec();
        let [_, _, h, w] = shape[..] else {
            return Err(Error::Dimension(format!("proposal network expects NCHW input, got {shape:?}")));
        };
        let m = 1usize << self.config.depth;
        if h % m != 0 || w % m != 0 {
            return Err(Error::Dimension(format!("input {h}x{w} is not divisible by 2^{}", self.config.depth)));
        }
        let p = &self.params;
        let mut x = input;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for stage in &self.encoder {
            let y = stage.conv.forward(g, p, x)?;
            let y = g.relu(y);
            skips.push(y);
            let d = stage.down.forward(g, p, y)?;
            x = g.relu(d);
        }
        let b = self.bottleneck.forward(g, p, x)?;
        x = g.relu(b);
        for (stage, skip) in self.decoder.iter().zip(skips.iter().rev()) {
            let u = stage.up.forward(g, p, x)?;
            let u = g.relu(u);
            let merged = if self.config.enable_skip { g.concat(&[u, *skip])? } else { u };
            let y = stage.conv.forward(g, p, merged)?;
            x = g.relu(y);
        }
        let r = self.refine.forward(g, p, x)?;
        let r = g.relu(r);
        let logits = self.head.forward(g, p, r)?;
        let heads = g.pair_softmax(logits)?;
        let intermediate = match &self.intermediate {
            Some(layer) => {
                let logits = layer.forward(g, p, x)?;
                Some(g.pair_softmax(logits)?)
            }
            None => None,
        };
        Ok(ForwardVars { heads, intermediate })
    }

    /// Proposal sets for a batch of inputs sharing one grid size.
    pub fn forward_batch(&self, inputs: &[&NetworkInput]) -> Result<Vec<ProposalSet>> {
        let Some(first) = inputs.first() else {
            return Ok(Vec::new());
        };
        let mut g = Graph::new();
        let x = g.constant(stack_inputs(inputs)?);
        let out = self.forward_graph(&mut g, x)?;
        let cfg = first.config;
        let inter = out.intermediate.map(|v| g.value(v).cast::<f64>());
        let heads = g.value(out.heads).cast::<f64>();
        (0..inputs.len()).map(|n| ProposalSet::from_batch(&heads, inter.as_ref(), n, cfg)).collect()
    }

    pub fn forward(&self, input: &NetworkInput) -> Result<ProposalSet> {
        Ok(self.forward_batch(&[input])?.remove(0))
    }

    /// Weights plus the configuration, as a `TGWT` file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut store = self.params.clone();
        store.add(CONFIG_KEY, Tensor::new(vec![7], self.config.encode())?)?;
        nn::encode_checkpoint(&store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let store: ParamStore<T> = nn::decode_checkpoint(bytes)?;
        let meta = store
            .by_name(CONFIG_KEY)
            .ok_or_else(|| Error::format("weight file has no proposal network configuration"))?;
        let config = TpnetConfig::decode(meta.data())?;
        Self::from_params(config, &store)
    }
}

/// Copies head 0's output filters to every other head. Heads then start
/// identical, and the winner-takes-all tie rule breaks the symmetry.
/// Stacks inputs into an `[N, 4, H, W]` tensor.
pub fn stack_inputs<T: Scalar>(inputs: &[&NetworkInput]) -> Result<Tensor<T>> {
    let cfg = inputs.first().ok_or_else(|| Error::Input("empty batch".into()))?.config;
    let mut data = Vec::with_capacity(inputs.len() * NetworkInput::CHANNELS * cfg.cells());
    for inp in inputs {
        if (inp.config.height, inp.config.width) != (cfg.height, cfg.width) {
            return Err(Error::Dimension("batch mixes grid sizes".into()));
        }
        data.extend(inp.channels.iter().map(|v| T::lit(*v as f64)));
    }
    Tensor::new(vec![inputs.len(), NetworkInput::CHANNELS, cfg.height, cfg.width], data)
}

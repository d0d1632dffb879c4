//! Parameterised building blocks over the tape.

use rand::Rng;

use super::conv::ConvSpec;
use super::graph::{Graph, Var};
use super::params::{glorot_uniform, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

/// Convolution with bias; `transpose` selects the adjoint map.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub spec: ConvSpec,
    pub transpose: bool,
    weight: ParamId,
    bias: ParamId,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, rng: &mut R) -> Result<Self> {
        Self::build(store, name, spec, false, rng)
    }

    pub fn transposed<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        spec: ConvSpec,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(store, name, spec, true, rng)
    }

    fn build<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        spec: ConvSpec,
        transpose: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let area = spec.kernel * spec.kernel;
        let (fan_in, fan_out) = (spec.in_channels * area, spec.out_channels * area);
        let shape = if transpose {
            [spec.in_channels, spec.out_channels, spec.kernel, spec.kernel]
        } else {
            [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel]
        };
        let weight = store.add(format!("{name}.weight"), glorot_uniform(&shape, fan_in, fan_out, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]))?;
        Ok(Conv2d { spec, transpose, weight, bias })
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        if self.transpose {
            g.conv_transpose2d(x, w, Some(b), self.spec)
        } else {
            g.conv2d(x, w, Some(b), self.spec)
        }
    }
}

/// Fully connected layer, weight shaped `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(&[out_features, in_features], in_features, out_features, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_features]))?;
        Ok(Linear { in_features, out_features, weight, bias })
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.linear(x, w, Some(b))
    }
}

/// Gate parameters of one LSTM layer. Gate order along the `4·hidden` axis
/// is input, forget, cell candidate, output.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

impl LstmParams {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let gates = 4 * hidden_size;
        let w_ih = store.add(format!("{name}.w_ih"), glorot_uniform(&[gates, input_size], input_size, gates, rng))?;
        let w_hh =
            store.add(format!("{name}.w_hh"), glorot_uniform(&[gates, hidden_size], hidden_size, gates, rng))?;
        let bias = Tensor::from_fn(&[gates], |i| {
            if (hidden_size..2 * hidden_size).contains(&i) {
                T::one()
            } else {
                T::zero()
            }
        });
        let bias = store.add(format!("{name}.bias"), bias)?;
        Ok(LstmParams { input_size, hidden_size, w_ih, w_hh, bias })
    }

    pub fn ids(&self) -> [ParamId; 3] {
        [self.w_ih, self.w_hh, self.bias]
    }
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_cell<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    params: &LstmParams,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    let hs = params.hidden_size;
    let w_ih = g.param(store, params.w_ih);
    let w_hh = g.param(store, params.w_hh);
    let bias = g.param(store, params.bias);
    let from_x = g.linear(x, w_ih, Some(bias))?;
    let from_h = g.linear(h_prev, w_hh, None)?;
    let gates = g.add(from_x, from_h)?;
    let i = g.slice(gates, 0, hs)?;
    let f = g.slice(gates, hs, hs)?;
    let cand = g.slice(gates, 2 * hs, hs)?;
    let o = g.slice(gates, 3 * hs, hs)?;
    let (i, f, cand, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(cand), g.sigmoid(o));
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.mul(o, squashed)?;
    Ok((h, c))
}

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGrads, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Denominator floor of the relative error, keeping near-zero gradients from
/// dominating the maximum.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Outcome of comparing reverse-mode and central-difference gradients.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradient returned by `objective` with
/// `(f(p+eps) − f(p−eps)) / 2eps` on `samples` coordinates drawn without
/// replacement (all of them when fewer exist).
pub fn grad_check<F>(params: &ParamStore<f64>, eps: f64, samples: usize, seed: u64, objective: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore<f64>) -> Result<(f64, ParamGrads<f64>)>,
{
    if !(eps > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let (_, grads) = objective(params)?;
    let coords: Vec<(ParamId, usize)> =
        params.ids().flat_map(|id| (0..params.get(id).len()).map(move |i| (id, i))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if coords.len() <= samples {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut rng, coords.len(), samples).into_vec();
        v.sort_unstable();
        v
    };
    let mut probe = params.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: None };
    for idx in picked {
        let (id, i) = coords[idx];
        let original = params.get(id).data()[i];
        probe.get_mut(id).data_mut()[i] = original + eps;
        let (plus, _) = objective(&probe)?;
        probe.get_mut(id).data_mut()[i] = original - eps;
        let (minus, _) = objective(&probe)?;
        probe.get_mut(id).data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
        let err = relative_error(analytic, numeric);
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((params.name(id).to_string(), i));
        }
        report.checked += 1;
    }
    Ok(report)
}

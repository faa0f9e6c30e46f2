use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::data::DataDistribution;
use super::params::ParamVector;
use crate::error::{Error, Result};

/// Activations `z^(ℓ)_i` for `ℓ ∈ [0:L+1]` (layer 0 holds the input) and the
/// network output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub dims: Vec<usize>,
    /// `z[ℓ]` is neuron-major, `N_ℓ × d_ℓ`.
    pub z: Vec<Vec<f64>>,
    pub yhat: Vec<f64>,
}

impl ForwardTrace {
    #[inline]
    pub fn neuron(&self, l: usize, i: usize) -> &[f64] {
        let d = self.dims[l];
        &self.z[l][i * d..(i + 1) * d]
    }

    pub fn neurons(&self, l: usize) -> usize {
        self.z[l].len() / self.dims[l]
    }
}

pub fn forward(x: &[f64], params: &ParamVector, cfg: &NetworkConfig) -> Result<ForwardTrace> {
    if x.len() != cfg.dims[0] {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: cfg.dims[0],
            actual: x.len(),
        });
    }
    params.check_shape(cfg)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    let trace = forward_trace(x, params, cfg);
    if !trace.yhat.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(trace)
}

/// Forward pass without shape validation.
pub(crate) fn forward_trace(x: &[f64], params: &ParamVector, cfg: &NetworkConfig) -> ForwardTrace {
    let depth = cfg.depth;
    let mut z = Vec::with_capacity(depth + 2);
    z.push(x.to_vec());
    for l in 0..=depth {
        let map = cfg.hidden(l);
        let layer = params.layer(l);
        let (d_in, d_out) = (map.d_in, map.d_out);
        let mut next = vec![0.0; layer.n_out * d_out];
        let inv = 1.0 / layer.n_in as f64;
        for j in 0..layer.n_out {
            let out = &mut next[j * d_out..(j + 1) * d_out];
            for i in 0..layer.n_in {
                map.accumulate(&z[l][i * d_in..(i + 1) * d_in], layer.edge(i, j), out);
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        z.push(next);
    }
    let yhat = cfg.output.eval(&z[depth + 1]);
    ForwardTrace {
        dims: cfg.dims.clone(),
        z,
        yhat,
    }
}

/// Network output `ŷ_N(x)`.
pub fn predict(x: &[f64], params: &ParamVector, cfg: &NetworkConfig) -> Result<Vec<f64>> {
    forward(x, params, cfg).map(|t| t.yhat)
}

pub(crate) fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()
}

/// Population loss `L_N(θ) = ½ Σ_b w_b |y_b − ŷ_N(x_b)|²`.
pub fn loss_ln(params: &ParamVector, data: &DataDistribution, cfg: &NetworkConfig) -> Result<f64> {
    data.check_dims(cfg)?;
    params.check_shape(cfg)?;
    let mut total = 0.0;
    for (b, (x, y)) in data.points().enumerate() {
        let t = forward_trace(x, params, cfg);
        total += data.weight(b) * half_sq_dist(y, &t.yhat);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(total)
}

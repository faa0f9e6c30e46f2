use serde::{Deserialize, Serialize};

use super::activation::{ActivationSpec, HiddenMap, OutputActivation};
use crate::error::{Error, Result};

fn default_weight_radius() -> f64 {
    6.0
}

fn default_input_radius() -> f64 {
    1.0
}

/// Architecture of the network: `L` hidden layers of `N` neurons each,
/// single-neuron input and output layers, per-layer activation dims.
///
/// Layer indices run `0..=L` for weights and `0..=L+1` for activations,
/// exactly as in the network definition; `dims[ℓ]` is `d_ℓ`, with
/// `dims[0] = d_X` and `dims[L+1] = d_Y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Number of hidden layers `L` (at least 3).
    pub depth: usize,
    /// Neurons per hidden layer `N`.
    pub width: usize,
    /// `d_0, …, d_{L+1}`.
    pub dims: Vec<usize>,
    /// One entry per weight layer `0..=L`; empty means tanh-affine throughout.
    #[serde(default)]
    pub activations: Vec<ActivationSpec>,
    #[serde(default)]
    pub output: OutputActivation,
    /// Radius certified for every edge weight vector; feeds the constant `C`.
    #[serde(default = "default_weight_radius")]
    pub weight_radius: f64,
    /// Inputs are confined to `[-r, r]^{d_X}`.
    #[serde(default = "default_input_radius")]
    pub input_radius: f64,
}

impl NetworkConfig {
    /// `L` hidden layers of width `N` with `d_X = d_in`, all inner dims
    /// `d_inner`, `d_Y = d_out`, tanh-affine activations and identity output.
    pub fn uniform(depth: usize, width: usize, d_in: usize, d_inner: usize, d_out: usize) -> Self {
        let mut dims = vec![d_inner; depth + 2];
        dims[0] = d_in;
        dims[depth + 1] = d_out;
        NetworkConfig {
            depth,
            width,
            dims,
            activations: Vec::new(),
            output: OutputActivation::Identity,
            weight_radius: default_weight_radius(),
            input_radius: default_input_radius(),
        }
    }

    pub fn with_width(&self, width: usize) -> Self {
        NetworkConfig {
            width,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 3 {
            return Err(Error::config(
                "network.depth",
                format!("L >= 3 hidden layers required, got L = {}", self.depth),
            ));
        }
        if self.width == 0 {
            return Err(Error::config("network.width", "N >= 1 required"));
        }
        if self.dims.len() != self.depth + 2 {
            return Err(Error::config(
                "network.dims",
                format!(
                    "expected L + 2 = {} entries, got {}",
                    self.depth + 2,
                    self.dims.len()
                ),
            ));
        }
        if let Some(l) = self.dims.iter().position(|&d| d == 0) {
            return Err(Error::config(format!("network.dims[{l}]"), "must be >= 1"));
        }
        if !self.activations.is_empty() && self.activations.len() != self.depth + 1 {
            return Err(Error::config(
                "network.activations",
                format!("expected L + 1 = {} entries", self.depth + 1),
            ));
        }
        if !(self.weight_radius > 0.0 && self.weight_radius.is_finite()) {
            return Err(Error::config("network.weight_radius", "must be positive"));
        }
        if !(self.input_radius > 0.0 && self.input_radius.is_finite()) {
            return Err(Error::config("network.input_radius", "must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `N_ℓ`: 1 for `ℓ ∈ {0, L+1}`, `N` otherwise.
    #[inline]
    pub fn neurons(&self, layer: usize) -> usize {
        if layer == 0 || layer == self.depth + 1 {
            1
        } else {
            self.width
        }
    }

    #[inline]
    pub fn dim(&self, layer: usize) -> usize {
        self.dims[layer]
    }

    pub fn activation(&self, layer: usize) -> ActivationSpec {
        self.activations.get(layer).copied().unwrap_or_default()
    }

    /// The activation of weight layer `ℓ ∈ [0:L]`.
    #[inline]
    pub fn hidden(&self, layer: usize) -> HiddenMap {
        HiddenMap {
            spec: self.activation(layer),
            d_in: self.dims[layer],
            d_out: self.dims[layer + 1],
        }
    }

    /// `D_ℓ`.
    pub fn param_dim(&self, layer: usize) -> usize {
        self.hidden(layer).param_dim()
    }

    /// `D = Σ_ℓ D_ℓ`, the dimension of one input-to-output path.
    pub fn path_dim(&self) -> usize {
        (0..=self.depth).map(|l| self.param_dim(l)).sum()
    }

    /// `p_N = Σ_ℓ N_ℓ N_{ℓ+1} D_ℓ`.
    pub fn param_count(&self) -> usize {
        (0..=self.depth)
            .map(|l| self.neurons(l) * self.neurons(l + 1) * self.param_dim(l))
            .sum()
    }

    /// `max_ℓ d_ℓ`.
    pub fn max_dim(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// Euclidean radius of the activations entering weight layer `ℓ`.
    pub fn input_radius_at(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.input_radius * (self.dims[0] as f64).sqrt()
        } else {
            (self.dims[layer] as f64).sqrt()
        }
    }

    /// The constant `C` for weights confined to `weight_radius`.
    pub fn bound(&self) -> f64 {
        self.bound_for_radius(self.weight_radius)
    }

    /// The constant `C` for weights confined to the given radius.
    pub fn bound_for_radius(&self, weight_radius: f64) -> f64 {
        let hidden = (0..=self.depth).map(|l| {
            self.activation(l)
                .bound(self.dims[l + 1], weight_radius, self.input_radius_at(l))
        });
        hidden
            .chain([self.output.bound(), self.input_radius, 1.0])
            .fold(f64::MIN, f64::max)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg;

/// Edge weights of one layer, shape `[n_in, n_out, dim]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub n_in: usize,
    pub n_out: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(n_in: usize, n_out: usize, dim: usize) -> Self {
        LayerParams {
            n_in,
            n_out,
            dim,
            values: vec![0.0; n_in * n_out * dim],
        }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_in && j < self.n_out);
        (i * self.n_out + j) * self.dim
    }

    #[inline]
    pub fn edge(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.dim]
    }

    #[inline]
    pub fn edge_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.values[o..o + self.dim]
    }

    pub fn edge_count(&self) -> usize {
        self.n_in * self.n_out
    }

    /// Mean Euclidean norm over the edges of the layer.
    pub fn mean_edge_norm(&self) -> f64 {
        let total: f64 = self.values.chunks(self.dim).map(linalg::norm).sum();
        total / self.edge_count() as f64
    }
}

/// All weights `θ_N` of a network, one [`LayerParams`] per layer `0..=L`.
///
/// The same container carries gradients (one `D_ℓ` vector per edge).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layers: Vec<LayerParams>,
}

pub type GradVector = ParamVector;

impl ParamVector {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        let layers = (0..=cfg.depth)
            .map(|l| LayerParams::zeros(cfg.neurons(l), cfg.neurons(l + 1), cfg.param_dim(l)))
            .collect();
        ParamVector { layers }
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector {
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams::zeros(p.n_in, p.n_out, p.dim))
                .collect(),
        }
    }

    #[inline]
    pub fn layer(&self, l: usize) -> &LayerParams {
        &self.layers[l]
    }

    #[inline]
    pub fn layer_mut(&mut self, l: usize) -> &mut LayerParams {
        &mut self.layers[l]
    }

    #[inline]
    pub fn edge(&self, l: usize, i: usize, j: usize) -> &[f64] {
        self.layers[l].edge(i, j)
    }

    #[inline]
    pub fn edge_mut(&mut self, l: usize, i: usize, j: usize) -> &mut [f64] {
        self.layers[l].edge_mut(i, j)
    }

    /// Number of scalars, `p_N`.
    pub fn len(&self) -> usize {
        self.layers.iter().map(|p| p.values.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|p| p.values.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &ParamVector) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| (a.n_in, a.n_out, a.dim) == (b.n_in, b.n_out, b.dim))
    }

    /// Fails unless the shape is the one `cfg` prescribes.
    pub fn check_shape(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.layers.len() != cfg.depth + 1 {
            return Err(Error::DimensionMismatch {
                context: "parameter layers",
                expected: cfg.depth + 1,
                actual: self.layers.len(),
            });
        }
        for (l, p) in self.layers.iter().enumerate() {
            let want = (cfg.neurons(l), cfg.neurons(l + 1), cfg.param_dim(l));
            if (p.n_in, p.n_out, p.dim) != want {
                return Err(Error::Mismatch(format!(
                    "layer {l} has shape {:?}, expected {:?}",
                    (p.n_in, p.n_out, p.dim),
                    want
                )));
            }
            if p.values.len() != p.n_in * p.n_out * p.dim {
                return Err(Error::DimensionMismatch {
                    context: "parameter values",
                    expected: p.n_in * p.n_out * p.dim,
                    actual: p.values.len(),
                });
            }
        }
        Ok(())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &ParamVector) {
        assert!(self.same_shape(other), "axpy on mismatched parameter shapes");
        for (p, q) in self.layers.iter_mut().zip(&other.layers) {
            linalg::axpy(&mut p.values, a, &q.values);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for p in &mut self.layers {
            for v in &mut p.values {
                *v *= s;
            }
        }
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// The layer-average norm `max_ℓ (1/(N_ℓ N_{ℓ+1})) Σ |θ^(ℓ)_{i,j}|`.
    pub fn lnorm(&self) -> f64 {
        self.layers
            .iter()
            .map(LayerParams::mean_edge_norm)
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        assert!(self.same_shape(other));
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    /// Relabels the neurons of hidden layer `l`: neuron `k` of the result is
    /// neuron `perm[k]` of `self`. Both adjacent weight layers are updated.
    pub fn permute_hidden_layer(&self, l: usize, perm: &[usize]) -> Result<ParamVector> {
        let depth = self.layers.len() - 1;
        if l == 0 || l > depth {
            return Err(Error::config(
                "layer",
                format!("hidden layer index must lie in [1, {depth}], got {l}"),
            ));
        }
        let n = self.layers[l].n_in;
        let mut seen = vec![false; n];
        if perm.len() != n || !perm.iter().all(|&p| p < n && !std::mem::replace(&mut seen[p], true)) {
            return Err(Error::config("perm", format!("not a permutation of 0..{n}")));
        }
        let mut out = self.clone();
        let incoming = &self.layers[l - 1];
        for i in 0..incoming.n_in {
            for (k, &p) in perm.iter().enumerate() {
                out.layers[l - 1].edge_mut(i, k).copy_from_slice(incoming.edge(i, p));
            }
        }
        let outgoing = &self.layers[l];
        for (k, &p) in perm.iter().enumerate() {
            for j in 0..outgoing.n_out {
                out.layers[l].edge_mut(k, j).copy_from_slice(outgoing.edge(p, j));
            }
        }
        Ok(out)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<ParamVector> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

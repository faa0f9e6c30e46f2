use rand::distributions::WeightedIndex;
use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::linalg;

/// The data law `P`: finitely many weighted pairs `(x_b, y_b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataDistribution {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DataDistribution {
    /// Uniform weights when `weights` is `None`.
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::config("data", "dataset is empty"));
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                context: "data targets",
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        let weights = weights.unwrap_or_else(|| vec![1.0 / xs.len() as f64; xs.len()]);
        if weights.len() != xs.len() {
            return Err(Error::DimensionMismatch {
                context: "data weights",
                expected: xs.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("data.weights", "weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config("data.weights", format!("weights sum to {total}, not 1")));
        }
        let (dx, dy) = (xs[0].len(), ys[0].len());
        if xs.iter().any(|x| x.len() != dx) || ys.iter().any(|y| y.len() != dy) {
            return Err(Error::config("data", "ragged input or target vectors"));
        }
        if xs.iter().chain(&ys).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(DataDistribution { xs, ys, weights })
    }

    /// `B` equally spaced inputs on `[-1, 1]` with targets `sin(πx)`.
    pub fn sine(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::config("data.points", "need at least 2 points"));
        }
        let xs: Vec<Vec<f64>> = (0..points)
            .map(|b| vec![-1.0 + 2.0 * b as f64 / (points - 1) as f64])
            .collect();
        let ys = xs
            .iter()
            .map(|x| vec![(std::f64::consts::PI * x[0]).sin()])
            .collect();
        DataDistribution::new(xs, ys, None)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    #[inline]
    pub fn x(&self, b: usize) -> &[f64] {
        &self.xs[b]
    }

    #[inline]
    pub fn y(&self, b: usize) -> &[f64] {
        &self.ys[b]
    }

    #[inline]
    pub fn weight(&self, b: usize) -> f64 {
        self.weights[b]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    pub fn check_dims(&self, cfg: &NetworkConfig) -> Result<()> {
        let (dx, dy) = (cfg.dims[0], cfg.dims[cfg.depth + 1]);
        if self.xs[0].len() != dx {
            return Err(Error::DimensionMismatch {
                context: "data inputs",
                expected: dx,
                actual: self.xs[0].len(),
            });
        }
        if self.ys[0].len() != dy {
            return Err(Error::DimensionMismatch {
                context: "data targets",
                expected: dy,
                actual: self.ys[0].len(),
            });
        }
        Ok(())
    }

    /// Dimensions, `|y| ≤ C` and inputs inside the configured box.
    pub fn check_contract(&self, cfg: &NetworkConfig) -> Result<()> {
        self.check_dims(cfg)?;
        let bound = cfg.bound();
        for y in &self.ys {
            let n = linalg::norm(y);
            if n > bound {
                return Err(Error::DataBound { norm: n, bound });
            }
        }
        let r = cfg.input_radius;
        if self.xs.iter().flatten().any(|v| v.abs() > r) {
            return Err(Error::config(
                "data",
                format!("inputs must lie in [-{r}, {r}]"),
            ));
        }
        Ok(())
    }

    /// Sampler for i.i.d. draws of the point index.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("weights validated at construction")
    }

    /// `Σ_b w_b f(x_b, y_b)`, in ascending `b`.
    pub fn expect(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        self.points()
            .zip(&self.weights)
            .map(|((x, y), w)| w * f(x, y))
            .sum()
    }
}

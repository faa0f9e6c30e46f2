//! Activation families and their derivatives.
//!
//! A hidden activation maps `(z, θ) ∈ R^{d_in} × R^{D}` to `R^{d_out}`. The
//! only smooth bounded family shipped is tanh-affine:
//! `σ(z, θ) = tanh(W z + b)` with θ packed as `W` (row-major, `d_out × d_in`)
//! followed by `b`, so `D = d_out (d_in + 1)`.

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

/// Largest value of `|tanh''|`, attained at `tanh(x) = ±1/√3`.
pub const TANH_SECOND_DERIVATIVE_MAX: f64 = 0.769_800_358_919_501;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSpec {
    #[default]
    TanhAffine,
}

impl ActivationSpec {
    pub fn param_dim(self, d_in: usize, d_out: usize) -> usize {
        match self {
            ActivationSpec::TanhAffine => d_out * (d_in + 1),
        }
    }

    /// Closed-form bound `C` for this family given `|θ| ≤ weight_radius` and
    /// `|z| ≤ input_radius` (Euclidean norms). Covers the value, both
    /// Jacobians and the Lipschitz constants of both Jacobians.
    pub fn bound(self, d_out: usize, weight_radius: f64, input_radius: f64) -> f64 {
        match self {
            ActivationSpec::TanhAffine => {
                let r = weight_radius;
                let rho = input_radius;
                let tau = TANH_SECOND_DERIVATIVE_MAX;
                let value = (d_out as f64).sqrt();
                let jac_z = r;
                let jac_theta = (rho * rho + 1.0).sqrt();
                let lip_z = tau * r * (r + rho + 1.0) + 1.0;
                let lip_theta = tau * (rho + 1.0) * (r + rho + 1.0) + 1.0;
                [1.0, value, jac_z, jac_theta, lip_z, lip_theta]
                    .into_iter()
                    .fold(f64::MIN, f64::max)
            }
        }
    }
}

/// A hidden activation bound to concrete dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HiddenMap {
    pub spec: ActivationSpec,
    pub d_in: usize,
    pub d_out: usize,
}

impl HiddenMap {
    pub fn param_dim(&self) -> usize {
        self.spec.param_dim(self.d_in, self.d_out)
    }

    #[inline]
    fn pre_activation(&self, z: &[f64], theta: &[f64], k: usize) -> f64 {
        let w = &theta[k * self.d_in..(k + 1) * self.d_in];
        let mut acc = theta[self.d_out * self.d_in + k];
        for (wi, zi) in w.iter().zip(z) {
            acc += wi * zi;
        }
        acc
    }

    /// `out += σ(z, θ)`.
    #[inline]
    pub fn accumulate(&self, z: &[f64], theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.d_in);
        debug_assert_eq!(theta.len(), self.param_dim());
        match self.spec {
            ActivationSpec::TanhAffine => {
                for (k, o) in out.iter_mut().enumerate().take(self.d_out) {
                    *o += self.pre_activation(z, theta, k).tanh();
                }
            }
        }
    }

    pub fn eval(&self, z: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_out];
        self.accumulate(z, theta, &mut out);
        out
    }

    /// `D_z σ(z, θ)` as a `d_out × d_in` matrix.
    pub fn jac_z(&self, z: &[f64], theta: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.d_out, self.d_in);
        match self.spec {
            ActivationSpec::TanhAffine => {
                for k in 0..self.d_out {
                    let t = self.pre_activation(z, theta, k).tanh();
                    let s = 1.0 - t * t;
                    for j in 0..self.d_in {
                        m.set(k, j, s * theta[k * self.d_in + j]);
                    }
                }
            }
        }
        m
    }

    /// `D_θ σ(z, θ)` as a `d_out × D` matrix.
    pub fn jac_theta(&self, z: &[f64], theta: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.d_out, self.param_dim());
        match self.spec {
            ActivationSpec::TanhAffine => {
                let bias = self.d_out * self.d_in;
                for k in 0..self.d_out {
                    let t = self.pre_activation(z, theta, k).tanh();
                    let s = 1.0 - t * t;
                    for j in 0..self.d_in {
                        m.set(k, k * self.d_in + j, s * z[j]);
                    }
                    m.set(k, bias + k, s);
                }
            }
        }
        m
    }

    /// `out += scale · gᵀ D_z σ(z, θ)` for a row vector `g` of length `d_out`.
    #[inline]
    pub fn vjp_z(&self, z: &[f64], theta: &[f64], g: &[f64], scale: f64, out: &mut [f64]) {
        match self.spec {
            ActivationSpec::TanhAffine => {
                for (k, &gk) in g.iter().enumerate().take(self.d_out) {
                    let t = self.pre_activation(z, theta, k).tanh();
                    let c = scale * gk * (1.0 - t * t);
                    let w = &theta[k * self.d_in..(k + 1) * self.d_in];
                    for (o, wi) in out.iter_mut().zip(w) {
                        *o += c * wi;
                    }
                }
            }
        }
    }

    /// `out += scale · gᵀ D_θ σ(z, θ)`; `out` has length `D`.
    #[inline]
    pub fn vjp_theta(&self, z: &[f64], theta: &[f64], g: &[f64], scale: f64, out: &mut [f64]) {
        match self.spec {
            ActivationSpec::TanhAffine => {
                let bias = self.d_out * self.d_in;
                for (k, &gk) in g.iter().enumerate().take(self.d_out) {
                    let t = self.pre_activation(z, theta, k).tanh();
                    let c = scale * gk * (1.0 - t * t);
                    let row = &mut out[k * self.d_in..(k + 1) * self.d_in];
                    for (o, zi) in row.iter_mut().zip(z) {
                        *o += c * zi;
                    }
                    out[bias + k] += c;
                }
            }
        }
    }

    /// `A · D_z σ(z, θ)` for `A` with `d_out` columns.
    pub fn left_mul_jac_z(&self, a: &Mat, z: &[f64], theta: &[f64]) -> Mat {
        debug_assert_eq!(a.cols, self.d_out);
        let mut out = Mat::zeros(a.rows, self.d_in);
        for r in 0..a.rows {
            let row = &mut out.data[r * self.d_in..(r + 1) * self.d_in];
            self.vjp_z(z, theta, a.row(r), 1.0, row);
        }
        out
    }

    /// `A · D_θ σ(z, θ)` for `A` with `d_out` columns.
    pub fn left_mul_jac_theta(&self, a: &Mat, z: &[f64], theta: &[f64]) -> Mat {
        debug_assert_eq!(a.cols, self.d_out);
        let d = self.param_dim();
        let mut out = Mat::zeros(a.rows, d);
        for r in 0..a.rows {
            let row = &mut out.data[r * d..(r + 1) * d];
            self.vjp_theta(z, theta, a.row(r), 1.0, row);
        }
        out
    }
}

/// The parameter-free output activation `σ^(L+1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Identity,
    Tanh,
}

impl OutputActivation {
    pub fn eval(self, z: &[f64]) -> Vec<f64> {
        match self {
            OutputActivation::Identity => z.to_vec(),
            OutputActivation::Tanh => z.iter().map(|v| v.tanh()).collect(),
        }
    }

    pub fn jacobian(self, z: &[f64]) -> Mat {
        let n = z.len();
        match self {
            OutputActivation::Identity => Mat::identity(n),
            OutputActivation::Tanh => {
                let mut m = Mat::zeros(n, n);
                for (i, v) in z.iter().enumerate() {
                    let t = v.tanh();
                    m.set(i, i, 1.0 - t * t);
                }
                m
            }
        }
    }

    /// Bound on `Dσ^(L+1)` and its Lipschitz constant.
    pub fn bound(self) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Tanh => 1.0,
        }
    }
}

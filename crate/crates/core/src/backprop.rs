//! Adjoint recursion, per-edge output Jacobians and scaled gradients.
//!
//! `A^(ℓ)_i` is the normalised average of the multi-index products of
//! `D_z σ` from neuron `i` of layer `ℓ` up to the output. It equals
//! `N_ℓ ∂ŷ/∂z^(ℓ)_i`, and `A^(ℓ+1)_j D_θ σ^(ℓ)(z^(ℓ)_i, θ_{ij})` equals
//! `N_ℓ N_{ℓ+1} ∂ŷ/∂θ_{ij}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::net::forward::forward_trace;
use crate::net::{DataDistribution, ForwardTrace, GradVector, LayerParams, NetworkConfig, ParamVector};

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrace {
    pub d_y: usize,
    /// `a[ℓ]` for `ℓ ∈ [1:L+1]` holds `N_ℓ` matrices of shape `d_Y × d_ℓ`,
    /// neuron-major. `a[0]` is empty.
    pub a: Vec<Vec<f64>>,
    pub dims: Vec<usize>,
}

impl AdjointTrace {
    pub fn get(&self, l: usize, i: usize) -> Mat {
        let size = self.d_y * self.dims[l];
        Mat::from_rows(self.d_y, self.dims[l], self.a[l][i * size..(i + 1) * size].to_vec())
    }

    #[inline]
    fn block(&self, l: usize, i: usize) -> &[f64] {
        let size = self.d_y * self.dims[l];
        &self.a[l][i * size..(i + 1) * size]
    }
}

pub fn adjoints(trace: &ForwardTrace, params: &ParamVector, cfg: &NetworkConfig) -> Result<AdjointTrace> {
    params.check_shape(cfg)?;
    if trace.z.len() != cfg.depth + 2 || trace.dims != cfg.dims {
        return Err(Error::Mismatch("forward trace does not match the network".into()));
    }
    for l in 0..=cfg.depth + 1 {
        if trace.z[l].len() != cfg.neurons(l) * cfg.dims[l] {
            return Err(Error::Mismatch(format!("forward trace layer {l} has wrong size")));
        }
    }
    Ok(adjoint_trace(trace, params, cfg))
}

pub(crate) fn adjoint_trace(trace: &ForwardTrace, params: &ParamVector, cfg: &NetworkConfig) -> AdjointTrace {
    let depth = cfg.depth;
    let d_y = cfg.dims[depth + 1];
    let mut a = vec![Vec::new(); depth + 2];
    a[depth + 1] = cfg.output.jacobian(&trace.z[depth + 1]).data;
    for l in (1..=depth).rev() {
        let map = cfg.hidden(l);
        let layer = params.layer(l);
        let (d_in, d_out) = (map.d_in, map.d_out);
        let inv = 1.0 / layer.n_out as f64;
        let mut cur = vec![0.0; layer.n_in * d_y * d_in];
        for i in 0..layer.n_in {
            let z = trace.neuron(l, i);
            let out = &mut cur[i * d_y * d_in..(i + 1) * d_y * d_in];
            for j in 0..layer.n_out {
                let up = &a[l + 1][j * d_y * d_out..(j + 1) * d_y * d_out];
                let theta = layer.edge(i, j);
                for r in 0..d_y {
                    map.vjp_z(
                        z,
                        theta,
                        &up[r * d_out..(r + 1) * d_out],
                        inv,
                        &mut out[r * d_in..(r + 1) * d_in],
                    );
                }
            }
        }
        a[l] = cur;
    }
    AdjointTrace {
        d_y,
        a,
        dims: cfg.dims.clone(),
    }
}

/// Per-edge `d_Y × D_ℓ` Jacobians `N_ℓ N_{ℓ+1} ∂ŷ/∂θ^(ℓ)_{ij}`, stored
/// row-major in a `D = d_Y · D_ℓ` slot per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeJacobians {
    pub d_y: usize,
    pub layers: Vec<LayerParams>,
}

impl EdgeJacobians {
    pub fn get(&self, l: usize, i: usize, j: usize) -> Mat {
        let p = &self.layers[l];
        Mat::from_rows(self.d_y, p.dim / self.d_y, p.edge(i, j).to_vec())
    }
}

pub fn grad_yhat(trace: &ForwardTrace, adj: &AdjointTrace, params: &ParamVector, cfg: &NetworkConfig) -> EdgeJacobians {
    let d_y = adj.d_y;
    let layers = (0..=cfg.depth)
        .map(|l| {
            let map = cfg.hidden(l);
            let layer = params.layer(l);
            let d = map.param_dim();
            let mut out = LayerParams::zeros(layer.n_in, layer.n_out, d_y * d);
            for i in 0..layer.n_in {
                let z = trace.neuron(l, i);
                for j in 0..layer.n_out {
                    let up = adj.block(l + 1, j);
                    let theta = layer.edge(i, j);
                    let slot = out.edge_mut(i, j);
                    for r in 0..d_y {
                        map.vjp_theta(
                            z,
                            theta,
                            &up[r * map.d_out..(r + 1) * map.d_out],
                            1.0,
                            &mut slot[r * d..(r + 1) * d],
                        );
                    }
                }
            }
            out
        })
        .collect();
    EdgeJacobians { d_y, layers }
}

/// Writes `(ŷ − y)^† N_ℓ N_{ℓ+1} ∂ŷ/∂θ^(ℓ)` for the trained layers
/// `ℓ ∈ [1:L−1]` into `out`, which must be zero on entry to receive a
/// clean gradient. The frozen layers 0 and L are left untouched.
pub(crate) fn residual_grad_into(
    trace: &ForwardTrace,
    residual: &[f64],
    params: &ParamVector,
    cfg: &NetworkConfig,
    out: &mut GradVector,
) {
    let depth = cfg.depth;
    let top = cfg.output.jacobian(&trace.z[depth + 1]).vecmat(residual);
    // rows[ℓ] holds r^† A^(ℓ) per neuron, neuron-major rows of length d_ℓ.
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); depth + 2];
    rows[depth + 1] = top;
    for l in (2..=depth).rev() {
        let map = cfg.hidden(l);
        let layer = params.layer(l);
        let inv = 1.0 / layer.n_out as f64;
        let mut cur = vec![0.0; layer.n_in * map.d_in];
        for i in 0..layer.n_in {
            let z = trace.neuron(l, i);
            let slot = &mut cur[i * map.d_in..(i + 1) * map.d_in];
            for j in 0..layer.n_out {
                let up = &rows[l + 1][j * map.d_out..(j + 1) * map.d_out];
                map.vjp_z(z, layer.edge(i, j), up, inv, slot);
            }
        }
        rows[l] = cur;
    }
    for l in 1..depth {
        let map = cfg.hidden(l);
        let layer = params.layer(l);
        let target = &mut out.layers[l];
        for i in 0..layer.n_in {
            let z = trace.neuron(l, i);
            for j in 0..layer.n_out {
                let up = &rows[l + 1][j * map.d_out..(j + 1) * map.d_out];
                map.vjp_theta(z, layer.edge(i, j), up, 1.0, target.edge_mut(i, j));
            }
        }
    }
}

fn check_target(y: &[f64], cfg: &NetworkConfig) -> Result<()> {
    let d_y = cfg.dims[cfg.depth + 1];
    if y.len() != d_y {
        return Err(Error::DimensionMismatch {
            context: "target",
            expected: d_y,
            actual: y.len(),
        });
    }
    let n = linalg::norm(y);
    let bound = cfg.bound();
    if n > bound {
        return Err(Error::DataBound { norm: n, bound });
    }
    Ok(())
}

/// The single-sample scaled gradient used by SGD: zero on layers 0 and L,
/// `(ŷ_N(x) − y)^† N² ∂ŷ_N/∂θ^(ℓ)` on the trained layers.
pub fn grad_hat(x: &[f64], y: &[f64], params: &ParamVector, cfg: &NetworkConfig) -> Result<GradVector> {
    check_target(y, cfg)?;
    let trace = crate::net::forward(x, params, cfg)?;
    let mut out = params.zeros_like();
    let r: Vec<f64> = trace.yhat.iter().zip(y).map(|(a, b)| a - b).collect();
    residual_grad_into(&trace, &r, params, cfg, &mut out);
    Ok(out)
}

pub(crate) fn point_grad(x: &[f64], y: &[f64], params: &ParamVector, cfg: &NetworkConfig, out: &mut GradVector) {
    let trace = forward_trace(x, params, cfg);
    let r: Vec<f64> = trace.yhat.iter().zip(y).map(|(a, b)| a - b).collect();
    residual_grad_into(&trace, &r, params, cfg, out);
}

/// `Σ_b w_b grad_hat(x_b, y_b)`, which equals `N² ∇L_N` on the trained
/// layers. Accumulated in ascending `b` whatever the thread count.
pub fn grad_loss(params: &ParamVector, data: &DataDistribution, cfg: &NetworkConfig) -> Result<GradVector> {
    params.check_shape(cfg)?;
    data.check_contract(cfg)?;
    Ok(grad_loss_unchecked(params, data, cfg))
}

pub(crate) fn grad_loss_unchecked(params: &ParamVector, data: &DataDistribution, cfg: &NetworkConfig) -> GradVector {
    let mut total = params.zeros_like();
    if rayon::current_num_threads() > 1 && data.len() > 1 {
        let per_point: Vec<GradVector> = (0..data.len())
            .into_par_iter()
            .map(|b| {
                let mut g = params.zeros_like();
                point_grad(data.x(b), data.y(b), params, cfg, &mut g);
                g
            })
            .collect();
        for (b, g) in per_point.iter().enumerate() {
            total.axpy(data.weight(b), g);
        }
    } else {
        let mut g = params.zeros_like();
        for b in 0..data.len() {
            for layer in &mut g.layers {
                layer.values.fill(0.0);
            }
            point_grad(data.x(b), data.y(b), params, cfg, &mut g);
            total.axpy(data.weight(b), &g);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, loss_ln, OutputActivation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> ParamVector {
        let mut p = ParamVector::zeros(cfg);
        for layer in &mut p.layers {
            for v in &mut layer.values {
                *v = rng.gen_range(-1.2..1.2);
            }
        }
        p
    }

    /// Average over all index tails of the literal products of Jacobians.
    fn brute_force_adjoint(trace: &ForwardTrace, p: &ParamVector, cfg: &NetworkConfig, l: usize, i: usize) -> Mat {
        let depth = cfg.depth;
        if l == depth + 1 {
            return cfg.output.jacobian(&trace.z[depth + 1]);
        }
        fn walk(
            trace: &ForwardTrace,
            p: &ParamVector,
            cfg: &NetworkConfig,
            l: usize,
            i: usize,
            right: Mat,
            acc: &mut Mat,
        ) {
            let depth = cfg.depth;
            for j in 0..cfg.neurons(l + 1) {
                let jz = cfg.hidden(l).jac_z(trace.neuron(l, i), p.edge(l, i, j));
                let prod = jz.matmul(&right);
                if l == depth {
                    let m = cfg.output.jacobian(&trace.z[depth + 1]).matmul(&prod);
                    acc.add_scaled(&m, 1.0);
                } else {
                    walk(trace, p, cfg, l + 1, j, prod, acc);
                }
            }
        }
        let d_y = cfg.dims[depth + 1];
        let mut acc = Mat::zeros(d_y, cfg.dims[l]);
        walk(trace, p, cfg, l, i, Mat::identity(cfg.dims[l]), &mut acc);
        let count: usize = (l + 1..=depth).map(|k| cfg.neurons(k)).product();
        acc.scale(1.0 / count as f64);
        acc
    }

    #[test]
    fn adjoints_match_multi_index_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            for d in 1..=2 {
                let mut cfg = NetworkConfig::uniform(3, n, d, d, d);
                cfg.output = OutputActivation::Tanh;
                let p = random_params(&cfg, &mut rng);
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let t = forward(&x, &p, &cfg).unwrap();
                let adj = adjoints(&t, &p, &cfg).unwrap();
                for l in 1..=4 {
                    for i in 0..cfg.neurons(l) {
                        let want = brute_force_adjoint(&t, &p, &cfg, l, i);
                        assert!(adj.get(l, i).max_abs_diff(&want) < 1e-12, "n={n} d={d} l={l}");
                    }
                }
            }
        }
    }

    #[test]
    fn identity_output_has_identity_top_adjoint() {
        let cfg = NetworkConfig::uniform(3, 2, 1, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&cfg, &mut rng);
        let t = forward(&[0.1], &p, &cfg).unwrap();
        assert_eq!(adjoints(&t, &p, &cfg).unwrap().get(4, 0), Mat::identity(2));
    }

    #[test]
    fn scalar_chain_rule() {
        let cfg = NetworkConfig::uniform(3, 1, 1, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&cfg, &mut rng);
        let t = forward(&[0.3], &p, &cfg).unwrap();
        let adj = adjoints(&t, &p, &cfg).unwrap();
        let mut chain = 1.0;
        for l in (1..=3).rev() {
            let th = p.edge(l, 0, 0);
            let s = (th[0] * t.z[l][0] + th[1]).tanh();
            chain *= (1.0 - s * s) * th[0];
            assert!((adj.get(l, 0).data[0] - chain).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let cfg = NetworkConfig::uniform(3, 4, 2, 2, 2);
            let p = random_params(&cfg, &mut rng);
            let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let t = forward(&x, &p, &cfg).unwrap();
            let adj = adjoints(&t, &p, &cfg).unwrap();
            let jac = grad_yhat(&t, &adj, &p, &cfg);
            for l in 0..=3 {
                let scale = 1.0 / (cfg.neurons(l) * cfg.neurons(l + 1)) as f64;
                let d = cfg.param_dim(l);
                let (i, j) = (rng.gen_range(0..cfg.neurons(l)), rng.gen_range(0..cfg.neurons(l + 1)));
                let m = jac.get(l, i, j);
                for k in 0..d {
                    let mut pp = p.clone();
                    let mut pm = p.clone();
                    pp.edge_mut(l, i, j)[k] += h;
                    pm.edge_mut(l, i, j)[k] -= h;
                    let yp = forward(&x, &pp, &cfg).unwrap().yhat;
                    let ym = forward(&x, &pm, &cfg).unwrap().yhat;
                    for r in 0..2 {
                        let fd = (yp[r] - ym[r]) / (2.0 * h);
                        let an = scale * m.get(r, k);
                        let rel = (fd - an).abs() / an.abs().max(1e-3);
                        worst = worst.max(rel);
                    }
                }
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst}");
    }

    #[test]
    fn grad_hat_freezes_outer_layers_and_vanishes_on_fit() {
        let cfg = NetworkConfig::uniform(4, 3, 1, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&cfg, &mut rng);
        let g = grad_hat(&[0.2], &[0.9], &p, &cfg).unwrap();
        assert!(g.layers[0].values.iter().all(|&v| v == 0.0));
        assert!(g.layers[4].values.iter().all(|&v| v == 0.0));
        assert!(g.layers[2].values.iter().any(|&v| v != 0.0));
        let y = forward(&[0.2], &p, &cfg).unwrap().yhat;
        let g0 = grad_hat(&[0.2], &y, &p, &cfg).unwrap();
        assert!(g0.layers.iter().flat_map(|l| &l.values).all(|&v| v == 0.0));
    }

    #[test]
    fn grad_hat_is_residual_times_jacobian() {
        let cfg = NetworkConfig::uniform(3, 3, 1, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(&cfg, &mut rng);
        let (x, y) = ([0.4], [0.3, -0.5]);
        let t = forward(&x, &p, &cfg).unwrap();
        let jac = grad_yhat(&t, &adjoints(&t, &p, &cfg).unwrap(), &p, &cfg);
        let r = [t.yhat[0] - y[0], t.yhat[1] - y[1]];
        let g = grad_hat(&x, &y, &p, &cfg).unwrap();
        for l in 1..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let want = jac.get(l, i, j).vecmat(&r);
                    for (a, b) in g.edge(l, i, j).iter().zip(&want) {
                        assert!((a - b).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn grad_loss_is_scaled_loss_gradient() {
        let cfg = NetworkConfig::uniform(3, 3, 1, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_params(&cfg, &mut rng);
        let data = DataDistribution::sine(5).unwrap();
        let g = grad_loss(&p, &data, &cfg).unwrap();
        let n2 = 9.0;
        let h = 1e-5;
        for l in 1..3 {
            for k in 0..cfg.param_dim(l) {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp.edge_mut(l, 1, 2)[k] += h;
                pm.edge_mut(l, 1, 2)[k] -= h;
                let fd = (loss_ln(&pp, &data, &cfg).unwrap() - loss_ln(&pm, &data, &cfg).unwrap()) / (2.0 * h);
                let an = g.edge(l, 1, 2)[k];
                assert!((n2 * fd - an).abs() / an.abs().max(1e-3) < 1e-6);
            }
        }
        let single = DataDistribution::new(vec![vec![0.3]], vec![vec![0.1]], None).unwrap();
        assert_eq!(
            grad_loss(&p, &single, &cfg).unwrap(),
            grad_hat(&[0.3], &[0.1], &p, &cfg).unwrap()
        );
    }
}

//! The frozen-measure map on path ensembles, its fixed point and
//! diagnostics of the resulting flow.

mod field;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use field::{ColumnFlow, DriftField, FieldNode};

use crate::error::{Error, Result};
use crate::linalg;
use crate::meanfield::{AdjointClosure, PathEnsemble};
use crate::net::{DataDistribution, NetworkConfig};
use crate::sgd::LRSchedule;
use field::{compute_node, first_layer_inputs, Context};

/// The ingredients of the mean-field dynamics.
#[derive(Clone, Copy, Debug)]
pub struct Dynamics<'a> {
    pub cfg: &'a NetworkConfig,
    pub data: &'a DataDistribution,
    pub schedule: &'a LRSchedule,
    pub closure: AdjointClosure,
}

impl<'a> Dynamics<'a> {
    pub fn new(cfg: &'a NetworkConfig, data: &'a DataDistribution, schedule: &'a LRSchedule) -> Self {
        Dynamics {
            cfg,
            data,
            schedule,
            closure: AdjointClosure::default(),
        }
    }

    pub fn with_closure(mut self, closure: AdjointClosure) -> Self {
        self.closure = closure;
        self
    }

    fn ctx(&self) -> Context<'a> {
        Context {
            cfg: self.cfg,
            data: self.data,
            schedule: self.schedule,
            closure: self.closure,
        }
    }

    fn check(&self, ens: &PathEnsemble) -> Result<()> {
        self.cfg.validate()?;
        self.data.check_contract(self.cfg)?;
        self.schedule.validate(self.cfg)?;
        if ens.nodes.len() != ens.grid.nodes() {
            return Err(Error::Mismatch("ensemble node count does not match its grid".into()));
        }
        for node in &ens.nodes {
            node.check(self.cfg)?;
        }
        Ok(())
    }

    /// The drift of the measure flow carried by `ens`.
    pub fn field(&self, ens: &PathEnsemble) -> Result<DriftField> {
        self.check(ens)?;
        Ok(self.field_unchecked(ens))
    }

    fn field_unchecked(&self, ens: &PathEnsemble) -> DriftField {
        let ctx = self.ctx();
        let nodes = ens.nodes.iter().map(|s| compute_node(s, &ctx)).collect();
        DriftField::build(nodes, ens.grid, ens.counts.columns, &ctx)
    }

    /// One application of the frozen-measure map: every particle is
    /// re-integrated from its initial value under the drift of `ens`.
    pub fn psi(&self, ens: &PathEnsemble) -> Result<PathEnsemble> {
        self.check(ens)?;
        self.psi_unchecked(ens)
    }

    fn psi_unchecked(&self, ens: &PathEnsemble) -> Result<PathEnsemble> {
        let field = self.field_unchecked(ens);
        let start = ens.initial().clone();
        let h = first_layer_inputs(&field, self.cfg, &start);
        let mut nodes = Vec::with_capacity(ens.grid.nodes());
        nodes.push(start);
        for k in 0..ens.grid.steps {
            let next = field.step_snapshot(self.cfg, &nodes[k], &h, k)?;
            nodes.push(next);
        }
        Ok(PathEnsemble {
            nodes,
            ..ens.clone_header()
        })
    }

    /// Integrates the interacting particle system directly, recomputing the
    /// drift from the current particles at every node. The result is a fixed
    /// point of [`Dynamics::psi`] on the same grid.
    pub fn forward_solve(&self, seed: &PathEnsemble) -> Result<FixedPoint> {
        self.check(seed)?;
        let ctx = self.ctx();
        let start = seed.initial().clone();
        let first = compute_node(&start, &ctx);
        let mut field = DriftField::build(vec![first], seed.grid, seed.counts.columns, &ctx);
        let h = first_layer_inputs(&field, self.cfg, &start);
        let mut nodes = vec![start];
        for k in 0..seed.grid.steps {
            let next = field.step_snapshot(self.cfg, &nodes[k], &h, k)?;
            field.nodes.push(compute_node(&next, &ctx));
            nodes.push(next);
        }
        Ok(FixedPoint {
            ensemble: PathEnsemble {
                nodes,
                ..seed.clone_header()
            },
            field,
            converged: true,
        })
    }

    /// Picard iteration `ν^{m+1} = ψ(ν^m)` from `seed`. A zero tolerance is
    /// never met, so the iteration runs `max_iter` times.
    pub fn picard_solve(&self, seed: &PathEnsemble, tol: f64, max_iter: usize) -> Result<(FixedPoint, PicardReport)> {
        if !(tol >= 0.0 && tol.is_finite()) || max_iter == 0 {
            return Err(Error::config("picard", "need finite tol >= 0 and max_iter >= 1"));
        }
        self.check(seed)?;
        let clock = Instant::now();
        let mut current = seed.clone();
        let mut deltas = Vec::new();
        let mut converged = false;
        for _ in 0..max_iter {
            let next = self.psi_unchecked(&current)?;
            let delta = ensemble_distance(&next, &current)?;
            deltas.push(delta);
            current = next;
            if tol > 0.0 && delta <= tol {
                converged = true;
                break;
            }
        }
        let field = self.field_unchecked(&current);
        let report = PicardReport {
            iterations: deltas.len(),
            deltas,
            converged,
            tolerance: tol,
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        Ok((
            FixedPoint {
                ensemble: current,
                field,
                converged,
            },
            report,
        ))
    }
}

impl Dynamics<'_> {
    /// Wraps a stored ensemble as a fixed point; converged when one more
    /// application of ψ moves it by at most `tol`.
    pub fn certify(&self, ens: PathEnsemble, tol: f64) -> Result<(FixedPoint, f64)> {
        self.check(&ens)?;
        let next = self.psi_unchecked(&ens)?;
        let delta = ensemble_distance(&next, &ens)?;
        let field = self.field_unchecked(&ens);
        let converged = delta <= tol;
        Ok((
            FixedPoint {
                ensemble: ens,
                field,
                converged,
            },
            delta,
        ))
    }
}

impl PathEnsemble {
    fn clone_header(&self) -> PathEnsemble {
        PathEnsemble {
            grid: self.grid,
            counts: self.counts,
            param_dims: self.param_dims.clone(),
            fiber_init: self.fiber_init.clone(),
            nodes: Vec::new(),
        }
    }
}

/// [`Dynamics::psi`] with the default closure.
pub fn psi(ens: &PathEnsemble, data: &DataDistribution, schedule: &LRSchedule, cfg: &NetworkConfig) -> Result<PathEnsemble> {
    Dynamics::new(cfg, data, schedule).psi(ens)
}

/// [`Dynamics::picard_solve`] with the default closure.
pub fn picard_solve(
    seed: &PathEnsemble,
    data: &DataDistribution,
    schedule: &LRSchedule,
    cfg: &NetworkConfig,
    tol: f64,
    max_iter: usize,
) -> Result<(FixedPoint, PicardReport)> {
    Dynamics::new(cfg, data, schedule).picard_solve(seed, tol, max_iter)
}

/// A solution of the mean-field flow together with its drift.
#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub ensemble: PathEnsemble,
    pub field: DriftField,
    pub converged: bool,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    /// `δ_m = d(ν^m, ν^{m−1})`, starting at `m = 1`.
    pub deltas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Sum over blocks of the mean, over matched particles, of the sup-in-time
/// Euclidean distance between the two trajectories. Blocks are the
/// layer-(0,1) pairs, each middle layer, and the `(fiber, column)` pairs of
/// layers `(L−1, L)`. Both ensembles must share their initial data.
pub fn ensemble_distance(a: &PathEnsemble, b: &PathEnsemble) -> Result<f64> {
    if !a.same_start(b) {
        return Err(Error::Mismatch(
            "ensembles differ in grid, counts or initial values".into(),
        ));
    }
    let c = a.counts;
    let depth = a.depth();
    let sup = |n: usize, dist: &(dyn Fn(usize, usize) -> f64 + Sync)| -> f64 {
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|p| (0..a.nodes.len()).map(|k| dist(k, p)).fold(0.0, f64::max))
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total / n as f64
    };
    let mut total = sup(c.paths, &|k, i| {
        let (s, t) = (&a.nodes[k], &b.nodes[k]);
        pair_dist(
            &[s.input_weight(i), s.first_weight(i)],
            &[t.input_weight(i), t.first_weight(i)],
        )
    });
    for l in 2..depth - 1 {
        total += sup(c.paths, &|k, m| {
            linalg::dist(a.nodes[k].middle_weight(l, m), b.nodes[k].middle_weight(l, m))
        });
    }
    total += sup(c.columns * c.fibers, &|k, p| {
        let (i, j) = (p % c.fibers, p / c.fibers);
        let (s, t) = (&a.nodes[k], &b.nodes[k]);
        pair_dist(&[s.fiber(i, j), s.last_weight(j)], &[t.fiber(i, j), t.last_weight(j)])
    });
    Ok(total)
}

fn pair_dist(a: &[&[f64]], b: &[&[f64]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| p.iter().zip(q.iter()))
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Exact `W₁` between two equal-size empirical measures on the line.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Mismatch(format!(
            "need equal nonzero sample counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Probe layout for the sensitivity curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub count: usize,
    pub delta: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec { count: 32, delta: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialDiagnostics {
    /// Largest grid increment ratio over all trajectories.
    pub lipschitz_estimate: f64,
    /// `s(t_k)`: largest finite-difference sensitivity of a fiber trajectory
    /// to its initial value.
    pub sensitivity: Vec<f64>,
    pub times: Vec<f64>,
    /// `2 α_max C^{L+2}`: bounds both the drift and its Lipschitz constant
    /// in the weights while weights stay inside the certified radius.
    pub lipschitz_bound: f64,
}

impl SpecialDiagnostics {
    pub fn sensitivity_monotone(&self, slack: f64) -> bool {
        self.sensitivity.windows(2).all(|w| w[1] >= w[0] - slack)
    }
}

/// `2 α_max C^{L+2}`.
pub fn lipschitz_bound(cfg: &NetworkConfig, schedule: &LRSchedule) -> f64 {
    2.0 * schedule.max() * cfg.bound().powi(cfg.depth as i32 + 2)
}

/// Lipschitz and sensitivity diagnostics of a fixed point. Probe `p`
/// perturbs coordinate `p mod D_{L−1}` of fiber `p mod M_{L−1}` in column
/// `p mod M_L` by `±δ` and re-integrates both against the frozen drift.
pub fn special_diagnostics(fixed: &FixedPoint, cfg: &NetworkConfig, schedule: &LRSchedule, probes: ProbeSpec) -> Result<SpecialDiagnostics> {
    if !fixed.converged {
        return Err(Error::Mismatch("diagnostics need a converged fixed point".into()));
    }
    if !(probes.delta > 0.0) || probes.count == 0 {
        return Err(Error::config("probes", "need count >= 1 and delta > 0"));
    }
    let ens = &fixed.ensemble;
    let c = ens.counts;
    let d = ens.param_dims[ens.depth() - 1];
    let curves: Vec<Vec<f64>> = (0..probes.count)
        .into_par_iter()
        .map(|p| {
            let (i, j, e) = (p % c.fibers, p % c.columns, p % d);
            let base = &ens.fiber_init[i * d..(i + 1) * d];
            let mut up = base.to_vec();
            let mut down = base.to_vec();
            up[e] += probes.delta;
            down[e] -= probes.delta;
            let span = up[e] - down[e];
            let fu = fixed.field.flow_fiber(cfg, j, &up);
            let fd = fixed.field.flow_fiber(cfg, j, &down);
            fu.iter().zip(&fd).map(|(u, v)| linalg::dist(u, v) / span).collect()
        })
        .collect();
    let nodes = ens.grid.nodes();
    let sensitivity = (0..nodes).map(|k| curves.iter().map(|c| c[k]).fold(0.0, f64::max)).collect();
    Ok(SpecialDiagnostics {
        lipschitz_estimate: ens.max_increment_rate(),
        sensitivity,
        times: (0..nodes).map(|k| ens.grid.time(k)).collect(),
        lipschitz_bound: lipschitz_bound(cfg, schedule),
    })
}

//! Ideal particles: every network edge flowed under the frozen mean-field
//! drift from its own initial weight, and the coupling quantities built on
//! them.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mckean_vlasov::{ColumnFlow, FixedPoint};
use crate::meanfield::{average_map, loss_bar_unchecked, zbar_unchecked, TimeGrid};
use crate::net::forward::forward_trace;
use crate::net::{loss_ln, DataDistribution, NetworkConfig, ParamVector};
use crate::seeding;
use crate::sgd::WeightHistory;

/// Per-edge ideal trajectories on the fixed point's grid.
#[derive(Clone, Debug)]
pub struct IdealWeights {
    pub grid: TimeGrid,
    /// The full ideal parameter set at every grid node.
    pub nodes: Vec<ParamVector>,
    /// Fresh fiber column per layer-L neuron.
    pub columns: Vec<ColumnFlow>,
}

fn key(parts: &[&[f64]]) -> Vec<u64> {
    parts.iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
}

/// Flows every edge of `params0` under the drift of `fixed`. Flows are
/// shared between edges with bit-identical initial data.
pub fn build_ideal(params0: &ParamVector, fixed: &FixedPoint, cfg: &NetworkConfig) -> Result<IdealWeights> {
    if !fixed.converged {
        return Err(Error::Mismatch("ideal particles need a converged fixed point".into()));
    }
    params0.check_shape(cfg)?;
    if fixed.ensemble.param_dims != (0..=cfg.depth).map(|l| cfg.param_dim(l)).collect::<Vec<_>>() {
        return Err(Error::Mismatch("fixed point was solved for a different architecture".into()));
    }
    let field = &fixed.field;
    let grid = fixed.ensemble.grid;
    let depth = cfg.depth;
    let n = cfg.width;
    let mut nodes = vec![params0.clone(); grid.nodes()];

    let write = |l: usize, i: usize, j: usize, path: &[Vec<f64>], nodes: &mut Vec<ParamVector>| {
        for (k, v) in path.iter().enumerate() {
            nodes[k].edge_mut(l, i, j).copy_from_slice(v);
        }
    };

    // layer 1, keyed by the (layer-0, layer-1) initial pair
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    let mut owner = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let k = key(&[params0.edge(0, 0, i), params0.edge(1, i, j)]);
            let next = jobs.len();
            let slot = *index.entry(k).or_insert_with(|| {
                jobs.push((i, j));
                next
            });
            owner.push(slot);
        }
    }
    let flows: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(i, j)| field.flow_first(cfg, params0.edge(0, 0, i), params0.edge(1, i, j)))
        .collect();
    for i in 0..n {
        for j in 0..n {
            write(1, i, j, &flows[owner[i * n + j]], &mut nodes);
        }
    }

    for l in 2..depth - 1 {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut jobs: Vec<(usize, usize)> = Vec::new();
        let mut owner = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let next = jobs.len();
                let slot = *index.entry(key(&[params0.edge(l, i, j)])).or_insert_with(|| {
                    jobs.push((i, j));
                    next
                });
                owner.push(slot);
            }
        }
        let flows: Vec<Vec<Vec<f64>>> = jobs
            .par_iter()
            .map(|&(i, j)| field.flow_middle(cfg, l, params0.edge(l, i, j)))
            .collect();
        for i in 0..n {
            for j in 0..n {
                write(l, i, j, &flows[owner[i * n + j]], &mut nodes);
            }
        }
    }

    // layer L−1: one fresh column per distinct layer-L constant
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut distinct: Vec<usize> = Vec::new();
    let mut column_of = Vec::with_capacity(n);
    for j in 0..n {
        let next = distinct.len();
        let slot = *index.entry(key(&[params0.edge(depth, j, 0)])).or_insert_with(|| {
            distinct.push(j);
            next
        });
        column_of.push(slot);
    }
    let fresh: Vec<ColumnFlow> = distinct
        .par_iter()
        .map(|&j| field.flow_column(cfg, &fixed.ensemble.fiber_init, params0.edge(depth, j, 0)))
        .collect();
    let columns: Vec<ColumnFlow> = column_of.iter().map(|&c| fresh[c].clone()).collect();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    let mut owner = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let k = key(&[params0.edge(depth - 1, i, j), params0.edge(depth, j, 0)]);
            let next = jobs.len();
            let slot = *index.entry(k).or_insert_with(|| {
                jobs.push((i, j));
                next
            });
            owner.push(slot);
        }
    }
    let flows: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(i, j)| field.flow_rider(cfg, &columns[j], params0.edge(depth - 1, i, j)))
        .collect();
    for i in 0..n {
        for j in 0..n {
            write(depth - 1, i, j, &flows[owner[i * n + j]], &mut nodes);
        }
    }

    Ok(IdealWeights { grid, nodes, columns })
}

impl IdealWeights {
    pub fn initial(&self) -> &ParamVector {
        &self.nodes[0]
    }

    /// Ideal weights at time `t`, linear between grid nodes.
    pub fn at_time(&self, t: f64) -> Result<ParamVector> {
        let (k, w) = self.grid.locate(t)?;
        if w == 0.0 {
            return Ok(self.nodes[k].clone());
        }
        let mut out = self.nodes[k].clone();
        out.axpy(w, &self.nodes[k + 1].sub(&self.nodes[k]));
        Ok(out)
    }
}

/// `|z^(ℓ)_i(x, θ̄_N(t_k)) − z̄^(ℓ)(x, μ_{t_k})|` per neuron, for
/// `ℓ ∈ [2:L+1]`; entries 0 and 1 are empty. Layer L compares each neuron
/// against its own fresh column.
pub fn delta_z(x: &[f64], ideal: &IdealWeights, k: usize, fixed: &FixedPoint, cfg: &NetworkConfig) -> Result<Vec<Vec<f64>>> {
    if x.len() != cfg.dims[0] {
        return Err(Error::DimensionMismatch {
            context: "delta_z input",
            expected: cfg.dims[0],
            actual: x.len(),
        });
    }
    if k >= ideal.nodes.len() || ideal.grid != fixed.ensemble.grid {
        return Err(Error::Mismatch("grid node outside the ideal trajectory".into()));
    }
    let depth = cfg.depth;
    let net = forward_trace(x, &ideal.nodes[k], cfg);
    let mf = zbar_unchecked(x, fixed.ensemble.snapshot(k), cfg);
    let mut out = vec![Vec::new(); depth + 2];
    for l in 2..depth {
        out[l] = (0..net.neurons(l)).map(|i| linalg::dist(net.neuron(l, i), mf.zbar(l))).collect();
    }
    let below = cfg.hidden(depth - 1);
    let mut col = vec![0.0; cfg.dims[depth]];
    out[depth] = (0..net.neurons(depth))
        .map(|i| {
            average_map(&below, mf.zbar(depth - 1), &ideal.columns[i].fibers[k], &mut col);
            linalg::dist(net.neuron(depth, i), &col)
        })
        .collect();
    out[depth + 1] = vec![linalg::dist(net.neuron(depth + 1, 0), &mf.top)];
    Ok(out)
}

/// How `dθ̄/dt` is obtained in [`delta_grad`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDerivative {
    /// The drift the trajectory was integrated with.
    #[default]
    Drift,
    /// Symmetric grid differences, one-sided at the ends.
    Difference,
}

/// `|dθ̄/dt + α(t_k) N² ∂L_N/∂θ (θ̄_N(t_k))|` per edge, laid out like the
/// parameter layers.
pub fn delta_grad(
    k: usize,
    ideal: &IdealWeights,
    fixed: &FixedPoint,
    data: &DataDistribution,
    cfg: &NetworkConfig,
    mode: TimeDerivative,
) -> Result<Vec<Vec<f64>>> {
    if k >= ideal.nodes.len() {
        return Err(Error::Mismatch("grid node outside the ideal trajectory".into()));
    }
    data.check_contract(cfg)?;
    let field = &fixed.field;
    let theta = &ideal.nodes[k];
    let rate = field.rates[k];
    let grad = backprop::grad_loss_unchecked(theta, data, cfg);
    let depth = cfg.depth;
    let dt = ideal.grid.dt();
    let last = ideal.nodes.len() - 1;
    let (lo, hi) = match k {
        0 => (0, 1),
        _ if k == last => (last - 1, last),
        _ => (k - 1, k + 1),
    };
    let span = (hi - lo) as f64 * dt;
    let mut out = Vec::with_capacity(depth + 1);
    for l in 0..=depth {
        let layer = theta.layer(l);
        if l == 0 || l == depth {
            out.push(vec![0.0; layer.edge_count()]);
            continue;
        }
        let gaps: Vec<f64> = (0..layer.n_in)
            .into_par_iter()
            .flat_map_iter(|i| {
                let h = if l == 1 {
                    field.first_inputs(cfg, theta.edge(0, 0, i))
                } else {
                    Vec::new()
                };
                let grad = &grad;
                (0..layer.n_out).map(move |j| {
                    let edge = theta.edge(l, i, j);
                    let mut v = vec![0.0; edge.len()];
                    match mode {
                        TimeDerivative::Drift => {
                            let aux: &[f64] = if l == depth - 1 { &ideal.columns[j].rows[k] } else { &h };
                            field.particle_drift(cfg, l, k, aux, edge, &mut v);
                        }
                        TimeDerivative::Difference => {
                            let (a, b) = (ideal.nodes[lo].edge(l, i, j), ideal.nodes[hi].edge(l, i, j));
                            for c in 0..v.len() {
                                v[c] = (b[c] - a[c]) / span;
                            }
                        }
                    }
                    linalg::axpy(&mut v, rate, grad.edge(l, i, j));
                    linalg::norm(&v)
                })
            })
            .collect();
        out.push(gaps);
    }
    Ok(out)
}

/// `(i_1, …, i_L)`; the endpoints `i_0 = i_{L+1}` are the single input and
/// output neurons.
pub type WeightPath = Vec<usize>;

/// The canonical path `(0, …, 0)` followed by `random` uniform paths from
/// the `paths` stream.
pub fn sample_paths(cfg: &NetworkConfig, random: usize, seed: u64) -> Vec<WeightPath> {
    let mut rng = seeding::stream_rng(seed, seeding::PATHS, 0);
    let mut out = vec![vec![0; cfg.depth]];
    for _ in 0..random {
        out.push((0..cfg.depth).map(|_| rng.gen_range(0..cfg.width)).collect());
    }
    out
}

/// `Σ_ℓ |θ^(ℓ)_{i_ℓ i_{ℓ+1}} − θ̄^(ℓ)_{i_ℓ i_{ℓ+1}}|` along `path`.
pub fn path_error(a: &ParamVector, b: &ParamVector, path: &[usize]) -> f64 {
    let depth = path.len();
    (0..=depth)
        .map(|l| {
            let i = if l == 0 { 0 } else { path[l - 1] };
            let j = if l == depth { 0 } else { path[l] };
            linalg::dist(a.edge(l, i, j), b.edge(l, i, j))
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub step: usize,
    pub time: f64,
    pub loss_sgd: f64,
    pub loss_ctgd: f64,
    pub loss_ideal: f64,
    pub loss_meanfield: f64,
    /// `|L_N(θ(k)) − L̄(μ_{kε})|`.
    pub gap: f64,
    /// SGD against CTGD.
    pub term_sgd_ctgd: f64,
    /// CTGD against the ideal particles.
    pub term_ctgd_ideal: f64,
    /// Ideal particles against the mean field.
    pub term_ideal_meanfield: f64,
    pub path_error_canonical: f64,
    pub path_error_mean: f64,
    pub path_error_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub rows: Vec<CouplingRow>,
    pub paths: Vec<WeightPath>,
    /// Per-path error at the last checkpoint, in the order of `paths`.
    pub terminal_path_errors: Vec<f64>,
}

pub const COUPLING_CSV_HEADER: &str = "step,time,loss_sgd,loss_ctgd,loss_ideal,loss_meanfield,gap,term_sgd_ctgd,term_ctgd_ideal,term_ideal_meanfield,path_error_canonical,path_error_mean,path_error_max";

impl CouplingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(COUPLING_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.step,
                r.time,
                r.loss_sgd,
                r.loss_ctgd,
                r.loss_ideal,
                r.loss_meanfield,
                r.gap,
                r.term_sgd_ctgd,
                r.term_ctgd_ideal,
                r.term_ideal_meanfield,
                r.path_error_canonical,
                r.path_error_mean,
                r.path_error_max
            ));
        }
        s
    }

    pub fn write(&self, csv: &Path, json: &Path) -> Result<()> {
        let mut f = std::fs::File::create(csv).map_err(|e| Error::io(csv, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(csv, e))?;
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(json, e))?;
        std::fs::write(json, text).map_err(|e| Error::io(json, e))
    }
}

/// Loss gap, its three-term split and per-path coupling errors at every SGD
/// checkpoint inside the fixed point's horizon.
pub fn coupling_report(
    sgd: &WeightHistory,
    ctgd: &WeightHistory,
    ideal: &IdealWeights,
    fixed: &FixedPoint,
    data: &DataDistribution,
    cfg: &NetworkConfig,
    paths: &[WeightPath],
) -> Result<CouplingReport> {
    if sgd.initial() != ctgd.initial() || sgd.initial() != ideal.initial() {
        return Err(Error::Mismatch(
            "SGD, CTGD and ideal weights must share their initial condition".into(),
        ));
    }
    if ideal.grid != fixed.ensemble.grid {
        return Err(Error::Mismatch("ideal weights and fixed point use different grids".into()));
    }
    sgd.initial().check_shape(cfg)?;
    data.check_dims(cfg)?;
    if paths.iter().any(|p| p.len() != cfg.depth || p.iter().any(|&i| i >= cfg.width)) {
        return Err(Error::Mismatch("path indices do not fit the network".into()));
    }
    let horizon = fixed.ensemble.grid.horizon * (1.0 + 1e-12);
    let picks: Vec<usize> = (0..sgd.checkpoints.len())
        .filter(|&c| sgd.times[c] <= horizon && sgd.times[c] <= ctgd.final_time() * (1.0 + 1e-12))
        .collect();
    let rows: Vec<(CouplingRow, Vec<f64>)> = picks
        .par_iter()
        .map(|&c| -> Result<(CouplingRow, Vec<f64>)> {
            let t = sgd.times[c];
            let theta = &sgd.checkpoints[c];
            let tilde = ctgd.at_time(t)?;
            let bar = ideal.at_time(t)?;
            let snap = fixed.ensemble.snapshot_at(t)?;
            let loss_sgd = loss_ln(theta, data, cfg)?;
            let loss_ctgd = loss_ln(&tilde, data, cfg)?;
            let loss_ideal = loss_ln(&bar, data, cfg)?;
            let loss_meanfield = loss_bar_unchecked(&snap, data, cfg);
            let errors: Vec<f64> = paths.iter().map(|p| path_error(theta, &bar, p)).collect();
            let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
            let max = errors.iter().copied().fold(0.0, f64::max);
            Ok((
                CouplingRow {
                    step: sgd.steps[c],
                    time: t,
                    loss_sgd,
                    loss_ctgd,
                    loss_ideal,
                    loss_meanfield,
                    gap: (loss_sgd - loss_meanfield).abs(),
                    term_sgd_ctgd: (loss_sgd - loss_ctgd).abs(),
                    term_ctgd_ideal: (loss_ctgd - loss_ideal).abs(),
                    term_ideal_meanfield: (loss_ideal - loss_meanfield).abs(),
                    path_error_canonical: errors.first().copied().unwrap_or(0.0),
                    path_error_mean: mean,
                    path_error_max: max,
                },
                errors,
            ))
        })
        .collect::<Result<_>>()?;
    let terminal_path_errors = rows.last().map(|r| r.1.clone()).unwrap_or_default();
    Ok(CouplingReport {
        rows: rows.into_iter().map(|r| r.0).collect(),
        paths: paths.to_vec(),
        terminal_path_errors,
    })
}

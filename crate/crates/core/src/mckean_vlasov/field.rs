use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meanfield::{average_map, zbar_unchecked, AdjointClosure, MeasureSnapshot, TimeGrid};
use crate::net::{DataDistribution, HiddenMap, NetworkConfig};
use crate::sgd::LRSchedule;

/// Everything a single particle needs from the measure at one grid node.
///
/// Rows are the residual-contracted adjoints `(ȳ − y)^† M̄^(ℓ)`, one per data
/// point, data-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldNode {
    /// `z̄^(ℓ)` for `ℓ ∈ [2:L−1]` at index `ℓ − 2`, `B × d_ℓ`.
    pub zbar: Vec<Vec<f64>>,
    /// Adjoint rows for `ℓ ∈ [2:L−1]` at index `ℓ − 2`, `B × d_ℓ`.
    pub rows: Vec<Vec<f64>>,
    /// `(ȳ − y)^† Dσ^(L+1)(z̄^(L+1))`, `B × d_{L+1}`.
    pub head: Vec<f64>,
    /// Layer-L adjoint rows per column, `(b · M_L + j) · d_L`.
    pub column_rows: Vec<f64>,
    pub ybar: Vec<f64>,
    pub loss: f64,
}

/// The frozen drift of a measure flow: one [`FieldNode`] per grid node plus
/// the rates and data it was built with.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftField {
    pub grid: TimeGrid,
    pub dims: Vec<usize>,
    pub columns: usize,
    pub rates: Vec<f64>,
    pub weights: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub nodes: Vec<FieldNode>,
}

pub(crate) struct Context<'a> {
    pub cfg: &'a NetworkConfig,
    pub data: &'a DataDistribution,
    pub schedule: &'a LRSchedule,
    pub closure: AdjointClosure,
}

struct PointNode {
    zbar: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    head: Vec<f64>,
    column_rows: Vec<f64>,
    ybar: Vec<f64>,
    loss: f64,
}

fn point_node(x: &[f64], y: &[f64], snap: &MeasureSnapshot, cfg: &NetworkConfig, closure: AdjointClosure) -> PointNode {
    let depth = cfg.depth;
    let c = snap.counts;
    let t = zbar_unchecked(x, snap, cfg);
    let r: Vec<f64> = t.ybar.iter().zip(y).map(|(a, b)| a - b).collect();
    let loss = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let head = cfg.output.jacobian(&t.top).vecmat(&r);
    let last = cfg.hidden(depth);
    let d_l = cfg.dims[depth];
    let mut column_rows = vec![0.0; c.columns * d_l];
    for (j, row) in column_rows.chunks_mut(d_l).enumerate() {
        last.vjp_z(t.column(j), snap.last_weight(j), &head, 1.0, row);
    }
    let below = cfg.hidden(depth - 1);
    let z = t.zbar(depth - 1);
    let mut g = vec![0.0; cfg.dims[depth - 1]];
    let scale = 1.0 / (c.columns * c.fibers) as f64;
    match closure {
        AdjointClosure::Joint => {
            for j in 0..c.columns {
                let up = &column_rows[j * d_l..(j + 1) * d_l];
                for i in 0..c.fibers {
                    below.vjp_z(z, snap.fiber(i, j), up, scale, &mut g);
                }
            }
        }
        AdjointClosure::Product => {
            let mut avg = vec![0.0; d_l];
            for row in column_rows.chunks(d_l) {
                for (a, v) in avg.iter_mut().zip(row) {
                    *a += v;
                }
            }
            for a in avg.iter_mut() {
                *a /= c.columns as f64;
            }
            for j in 0..c.columns {
                for i in 0..c.fibers {
                    below.vjp_z(z, snap.fiber(i, j), &avg, scale, &mut g);
                }
            }
        }
    }
    let mut rows = vec![Vec::new(); depth - 2];
    rows[depth - 3] = g;
    for l in (2..depth - 1).rev() {
        let map = cfg.hidden(l);
        let mut cur = vec![0.0; cfg.dims[l]];
        let inv = 1.0 / c.paths as f64;
        for theta in snap.middle[l - 2].chunks_exact(map.param_dim()) {
            map.vjp_z(t.zbar(l), theta, &rows[l - 1], inv, &mut cur);
        }
        rows[l - 2] = cur;
    }
    PointNode {
        zbar: t.chain,
        rows,
        head,
        column_rows,
        ybar: t.ybar,
        loss,
    }
}

pub(crate) fn compute_node(snap: &MeasureSnapshot, ctx: &Context) -> FieldNode {
    let data = ctx.data;
    let per_point: Vec<PointNode> = (0..data.len())
        .into_par_iter()
        .map(|b| point_node(data.x(b), data.y(b), snap, ctx.cfg, ctx.closure))
        .collect();
    let layers = per_point[0].zbar.len();
    let mut node = FieldNode {
        zbar: vec![Vec::new(); layers],
        rows: vec![Vec::new(); layers],
        head: Vec::new(),
        column_rows: Vec::new(),
        ybar: Vec::new(),
        loss: 0.0,
    };
    for (b, p) in per_point.into_iter().enumerate() {
        for n in 0..layers {
            node.zbar[n].extend_from_slice(&p.zbar[n]);
            node.rows[n].extend_from_slice(&p.rows[n]);
        }
        node.head.extend_from_slice(&p.head);
        node.column_rows.extend_from_slice(&p.column_rows);
        node.ybar.extend_from_slice(&p.ybar);
        node.loss += data.weight(b) * p.loss;
    }
    node
}

/// `out = Σ_b coef_b · g_b^† D_θσ(z_b, θ)`.
#[inline]
fn accumulate_drift<'s>(
    map: &HiddenMap,
    coef: &[f64],
    z: impl Fn(usize) -> &'s [f64],
    g: impl Fn(usize) -> &'s [f64],
    theta: &[f64],
    out: &mut [f64],
) {
    out.fill(0.0);
    for (b, &c) in coef.iter().enumerate() {
        map.vjp_theta(z(b), theta, g(b), c, out);
    }
}

#[inline]
fn euler(theta: &[f64], dt: f64, v: &[f64], out: &mut [f64]) {
    for ((o, t), d) in out.iter_mut().zip(theta).zip(v) {
        *o = t + dt * d;
    }
}

#[inline]
fn slice(v: &[f64], d: usize, k: usize) -> &[f64] {
    &v[k * d..(k + 1) * d]
}

impl DriftField {
    pub(crate) fn build(nodes: Vec<FieldNode>, grid: TimeGrid, columns: usize, ctx: &Context) -> DriftField {
        DriftField {
            grid,
            dims: ctx.cfg.dims.clone(),
            columns,
            rates: (0..grid.nodes()).map(|k| ctx.schedule.at(grid.time(k))).collect(),
            weights: ctx.data.weights().to_vec(),
            inputs: ctx.data.points().map(|(x, _)| x.to_vec()).collect(),
            nodes,
        }
    }

    pub fn depth(&self) -> usize {
        self.dims.len() - 2
    }

    /// `ℒ̄(μ_{t_k})` at every node.
    pub fn losses(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.loss).collect()
    }

    fn coef(&self, k: usize) -> Vec<f64> {
        self.weights.iter().map(|w| -self.rates[k] * w).collect()
    }

    pub(crate) fn first_inputs(&self, cfg: &NetworkConfig, a0: &[f64]) -> Vec<f64> {
        let m0 = cfg.hidden(0);
        self.inputs.iter().flat_map(|x| m0.eval(x, a0)).collect()
    }

    /// Drift of a layer-1 particle whose layer-0 partner produced `h`.
    pub(crate) fn first_drift(&self, cfg: &NetworkConfig, k: usize, coef: &[f64], h: &[f64], theta: &[f64], out: &mut [f64]) {
        let map = cfg.hidden(1);
        let node = &self.nodes[k];
        accumulate_drift(&map, coef, |b| slice(h, map.d_in, b), |b| slice(&node.rows[0], map.d_out, b), theta, out);
    }

    /// Drift of a particle of middle layer `l ∈ [2:L−2]`.
    pub(crate) fn middle_drift(&self, cfg: &NetworkConfig, l: usize, k: usize, coef: &[f64], theta: &[f64], out: &mut [f64]) {
        let map = cfg.hidden(l);
        let node = &self.nodes[k];
        accumulate_drift(
            &map,
            coef,
            |b| slice(&node.zbar[l - 2], map.d_in, b),
            |b| slice(&node.rows[l - 1], map.d_out, b),
            theta,
            out,
        );
    }

    /// Drift of a layer-(L−1) particle given its own layer-L rows (`B × d_L`,
    /// or the strided column rows when `stride > 1`).
    pub(crate) fn fiber_drift(&self, cfg: &NetworkConfig, k: usize, coef: &[f64], rows: &[f64], stride: usize, column: usize, theta: &[f64], out: &mut [f64]) {
        let depth = cfg.depth;
        let map = cfg.hidden(depth - 1);
        let node = &self.nodes[k];
        accumulate_drift(
            &map,
            coef,
            |b| slice(&node.zbar[depth - 3], map.d_in, b),
            |b| slice(rows, map.d_out, b * stride + column),
            theta,
            out,
        );
    }

    /// Integrates one layer-1 particle; returns its value at every node.
    pub fn flow_first(&self, cfg: &NetworkConfig, a0: &[f64], a1: &[f64]) -> Vec<Vec<f64>> {
        let h = self.first_inputs(cfg, a0);
        let mut out = vec![a1.to_vec()];
        let mut v = vec![0.0; a1.len()];
        for k in 0..self.grid.steps {
            let coef = self.coef(k);
            self.first_drift(cfg, k, &coef, &h, &out[k], &mut v);
            let mut next = vec![0.0; a1.len()];
            euler(&out[k], self.grid.dt(), &v, &mut next);
            out.push(next);
        }
        out
    }

    /// Integrates one particle of middle layer `l`.
    pub fn flow_middle(&self, cfg: &NetworkConfig, l: usize, init: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![init.to_vec()];
        let mut v = vec![0.0; init.len()];
        for k in 0..self.grid.steps {
            let coef = self.coef(k);
            self.middle_drift(cfg, l, k, &coef, &out[k], &mut v);
            let mut next = vec![0.0; init.len()];
            euler(&out[k], self.grid.dt(), &v, &mut next);
            out.push(next);
        }
        out
    }

    /// Integrates one layer-(L−1) particle against the frozen rows of
    /// column `j`.
    pub fn flow_fiber(&self, cfg: &NetworkConfig, j: usize, init: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![init.to_vec()];
        let mut v = vec![0.0; init.len()];
        for k in 0..self.grid.steps {
            let coef = self.coef(k);
            self.fiber_drift(cfg, k, &coef, &self.nodes[k].column_rows, self.columns, j, &out[k], &mut v);
            let mut next = vec![0.0; init.len()];
            euler(&out[k], self.grid.dt(), &v, &mut next);
            out.push(next);
        }
        out
    }

    /// Layer-L adjoint rows `B × d_L` of a column with constant `a` whose
    /// fibers at node `k` are `fibers`; also returns the column's `z̄^(L)`.
    pub(crate) fn column_rows(&self, cfg: &NetworkConfig, k: usize, fibers: &[f64], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let depth = cfg.depth;
        let below = cfg.hidden(depth - 1);
        let last = cfg.hidden(depth);
        let (d_l, d_top) = (last.d_in, last.d_out);
        let n_data = self.inputs.len();
        let node = &self.nodes[k];
        let mut zl = vec![0.0; n_data * d_l];
        let mut rows = vec![0.0; n_data * d_l];
        for b in 0..n_data {
            let z = slice(&node.zbar[depth - 3], below.d_in, b);
            average_map(&below, z, fibers, &mut zl[b * d_l..(b + 1) * d_l]);
            last.vjp_z(
                &zl[b * d_l..(b + 1) * d_l],
                a,
                slice(&node.head, d_top, b),
                1.0,
                &mut rows[b * d_l..(b + 1) * d_l],
            );
        }
        (zl, rows)
    }

    /// Builds a fresh column for the layer-L constant `a`: the fiber sample
    /// `fiber_init` is integrated jointly, with the column's own `z̄^(L)`
    /// recomputed from its fibers at each node.
    pub fn flow_column(&self, cfg: &NetworkConfig, fiber_init: &[f64], a: &[f64]) -> ColumnFlow {
        let d = cfg.param_dim(cfg.depth - 1);
        let mut fibers = vec![fiber_init.to_vec()];
        let mut rows = Vec::with_capacity(self.grid.nodes());
        let mut zbar_column = Vec::with_capacity(self.grid.nodes());
        let mut v = vec![0.0; d];
        let dt = self.grid.dt();
        for k in 0..=self.grid.steps {
            let (zl, r) = self.column_rows(cfg, k, &fibers[k], a);
            zbar_column.push(zl);
            rows.push(r);
            if k == self.grid.steps {
                break;
            }
            let coef = self.coef(k);
            let mut next = vec![0.0; fibers[k].len()];
            for (cur, nxt) in fibers[k].chunks_exact(d).zip(next.chunks_exact_mut(d)) {
                self.fiber_drift(cfg, k, &coef, &rows[k], 1, 0, cur, &mut v);
                euler(cur, dt, &v, nxt);
            }
            fibers.push(next);
        }
        ColumnFlow {
            fibers,
            rows,
            zbar_column,
        }
    }

    /// Integrates one layer-(L−1) particle carried by a fresh column.
    pub fn flow_rider(&self, cfg: &NetworkConfig, column: &ColumnFlow, init: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![init.to_vec()];
        let mut v = vec![0.0; init.len()];
        for k in 0..self.grid.steps {
            let coef = self.coef(k);
            self.fiber_drift(cfg, k, &coef, &column.rows[k], 1, 0, &out[k], &mut v);
            let mut next = vec![0.0; init.len()];
            euler(&out[k], self.grid.dt(), &v, &mut next);
            out.push(next);
        }
        out
    }

    /// The drift at node `k` of a particle of layer `l ∈ [1:L−1]` with value
    /// `theta`. Layer 1 needs its layer-0 outputs `h`, layer L−1 its column
    /// rows.
    pub(crate) fn particle_drift(&self, cfg: &NetworkConfig, l: usize, k: usize, aux: &[f64], theta: &[f64], out: &mut [f64]) {
        let coef = self.coef(k);
        if l == 1 {
            self.first_drift(cfg, k, &coef, aux, theta, out);
        } else if l == cfg.depth - 1 {
            self.fiber_drift(cfg, k, &coef, aux, 1, 0, theta, out);
        } else {
            self.middle_drift(cfg, l, k, &coef, theta, out);
        }
    }

    /// Advances every particle of `prev` by one Euler step with the drift at
    /// node `k`. `first_h` caches the layer-0 outputs per layer-1 particle.
    pub(crate) fn step_snapshot(&self, cfg: &NetworkConfig, prev: &MeasureSnapshot, first_h: &[Vec<f64>], k: usize) -> Result<MeasureSnapshot> {
        let depth = cfg.depth;
        let dt = self.grid.dt();
        let coef = self.coef(k);
        let mut next = prev.clone();
        let d1 = prev.param_dims[1];
        next.first
            .par_chunks_mut(d1)
            .zip(prev.first.par_chunks(d1))
            .zip(first_h.par_iter())
            .for_each_init(
                || vec![0.0; d1],
                |v, ((out, cur), h)| {
                    self.first_drift(cfg, k, &coef, h, cur, v);
                    euler(cur, dt, v, out);
                },
            );
        for l in 2..depth - 1 {
            let d = prev.param_dims[l];
            next.middle[l - 2]
                .par_chunks_mut(d)
                .zip(prev.middle[l - 2].par_chunks(d))
                .for_each_init(
                    || vec![0.0; d],
                    |v, (out, cur)| {
                        self.middle_drift(cfg, l, k, &coef, cur, v);
                        euler(cur, dt, v, out);
                    },
                );
        }
        let d = prev.param_dims[depth - 1];
        let fibers = prev.counts.fibers;
        let rows = &self.nodes[k].column_rows;
        next.fibers
            .par_chunks_mut(d)
            .zip(prev.fibers.par_chunks(d))
            .enumerate()
            .for_each_init(
                || vec![0.0; d],
                |v, (n, (out, cur))| {
                    self.fiber_drift(cfg, k, &coef, rows, self.columns, n / fibers, cur, v);
                    euler(cur, dt, v, out);
                },
            );
        let finite = next.first.iter().chain(next.fibers.iter()).chain(next.middle.iter().flatten()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("mean-field drift at grid node {k}")));
        }
        Ok(next)
    }
}

/// A fresh fiber column integrated against a frozen field.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnFlow {
    /// Fiber values per node, back to back.
    pub fibers: Vec<Vec<f64>>,
    /// Layer-L adjoint rows per node, `B × d_L`.
    pub rows: Vec<Vec<f64>>,
    /// The column's `z̄^(L)` per node, `B × d_L`.
    pub zbar_column: Vec<Vec<f64>>,
}

pub(crate) fn first_layer_inputs(field: &DriftField, cfg: &NetworkConfig, snap: &MeasureSnapshot) -> Vec<Vec<f64>> {
    (0..snap.counts.paths)
        .into_par_iter()
        .map(|i| field.first_inputs(cfg, snap.input_weight(i)))
        .collect()
}

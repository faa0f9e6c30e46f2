use serde::{Deserialize, Serialize};

use super::ensemble::MeasureSnapshot;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::net::{DataDistribution, HiddenMap, NetworkConfig};

/// How the layer-(L−1) adjoint averages over the last two weight layers.
///
/// `Product` multiplies the column average of the layer-L adjoint by the
/// marginal average of the layer-(L−1) Jacobian. `Joint` averages the
/// product over matched `(fiber, column)` pairs, which keeps the dependence
/// between a fiber and the column it belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointClosure {
    #[default]
    Product,
    Joint,
}

/// `out = (1/n) Σ_k σ(z, θ_k)` over the back-to-back particles in `block`.
pub(crate) fn average_map(map: &HiddenMap, z: &[f64], block: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    let d = map.param_dim();
    let n = block.len() / d;
    for theta in block.chunks_exact(d) {
        map.accumulate(z, theta, out);
    }
    let inv = 1.0 / n as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Mean-field activations and adjoints for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldTrace {
    pub dims: Vec<usize>,
    pub x: Vec<f64>,
    /// `z̄^(ℓ)` for `ℓ ∈ [2:L−1]`, stored at index `ℓ − 2`.
    pub chain: Vec<Vec<f64>>,
    /// `z̄^(L)(x, μ, a^(L)_j)`, column-major `M_L × d_L`.
    pub columns: Vec<f64>,
    pub top: Vec<f64>,
    pub ybar: Vec<f64>,
    /// `M̄^(L+1)`; empty until [`mbar`] runs.
    pub m_top: Option<Mat>,
    /// `M̄^(L)(·, a^(L)_j)` per column.
    pub m_columns: Vec<Mat>,
    /// `M̄^(ℓ)` for `ℓ ∈ [2:L−1]`, stored at index `ℓ − 2`.
    pub m_chain: Vec<Mat>,
}

impl MeanFieldTrace {
    pub fn depth(&self) -> usize {
        self.dims.len() - 2
    }

    /// `z̄^(ℓ)` for `ℓ ∈ [2:L−1]`.
    pub fn zbar(&self, l: usize) -> &[f64] {
        &self.chain[l - 2]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dims[self.depth()];
        &self.columns[j * d..(j + 1) * d]
    }

    /// `M̄^(ℓ)` for `ℓ ∈ [2:L−1]`.
    pub fn m(&self, l: usize) -> &Mat {
        &self.m_chain[l - 2]
    }
}

fn check_input(x: &[f64], snap: &MeasureSnapshot, cfg: &NetworkConfig) -> Result<()> {
    snap.check(cfg)?;
    if x.len() != cfg.dims[0] {
        return Err(Error::DimensionMismatch {
            context: "mean-field input",
            expected: cfg.dims[0],
            actual: x.len(),
        });
    }
    Ok(())
}

/// The `z̄` chain, the column values `z̄^(L)(x, μ, a^(L)_j)` and `ȳ`.
pub fn zbar_forward(x: &[f64], snap: &MeasureSnapshot, cfg: &NetworkConfig) -> Result<MeanFieldTrace> {
    check_input(x, snap, cfg)?;
    Ok(zbar_unchecked(x, snap, cfg))
}

pub(crate) fn zbar_unchecked(x: &[f64], snap: &MeasureSnapshot, cfg: &NetworkConfig) -> MeanFieldTrace {
    let depth = cfg.depth;
    let c = snap.counts;
    let (m0, m1) = (cfg.hidden(0), cfg.hidden(1));
    let mut z2 = vec![0.0; cfg.dims[2]];
    for i in 0..c.paths {
        let h = m0.eval(x, snap.input_weight(i));
        m1.accumulate(&h, snap.first_weight(i), &mut z2);
    }
    let inv = 1.0 / c.paths as f64;
    for v in z2.iter_mut() {
        *v *= inv;
    }
    let mut chain = vec![z2];
    for l in 2..depth - 1 {
        let mut next = vec![0.0; cfg.dims[l + 1]];
        average_map(&cfg.hidden(l), &chain[l - 2], &snap.middle[l - 2], &mut next);
        chain.push(next);
    }
    let below = cfg.hidden(depth - 1);
    let d_l = cfg.dims[depth];
    let mut columns = vec![0.0; c.columns * d_l];
    for (j, out) in columns.chunks_mut(d_l).enumerate() {
        average_map(&below, &chain[depth - 3], snap.column(j), out);
    }
    let last = cfg.hidden(depth);
    let mut top = vec![0.0; cfg.dims[depth + 1]];
    for j in 0..c.columns {
        last.accumulate(&columns[j * d_l..(j + 1) * d_l], snap.last_weight(j), &mut top);
    }
    let inv = 1.0 / c.columns as f64;
    for v in top.iter_mut() {
        *v *= inv;
    }
    let ybar = cfg.output.eval(&top);
    MeanFieldTrace {
        dims: cfg.dims.clone(),
        x: x.to_vec(),
        chain,
        columns,
        top,
        ybar,
        m_top: None,
        m_columns: Vec::new(),
        m_chain: Vec::new(),
    }
}

/// Fills in the `M̄` operators of a trace produced by [`zbar_forward`].
pub fn mbar(trace: &mut MeanFieldTrace, snap: &MeasureSnapshot, cfg: &NetworkConfig, closure: AdjointClosure) -> Result<()> {
    snap.check(cfg)?;
    if trace.dims != cfg.dims || trace.columns.len() != snap.counts.columns * cfg.dims[cfg.depth] {
        return Err(Error::Mismatch("trace does not belong to this snapshot".into()));
    }
    let depth = cfg.depth;
    let c = snap.counts;
    let m_top = cfg.output.jacobian(&trace.top);
    let last = cfg.hidden(depth);
    let m_columns: Vec<Mat> = (0..c.columns)
        .map(|j| last.left_mul_jac_z(&m_top, trace.column(j), snap.last_weight(j)))
        .collect();
    let below = cfg.hidden(depth - 1);
    let z = trace.zbar(depth - 1).to_vec();
    let d_y = m_top.rows;
    let mut m_below = Mat::zeros(d_y, cfg.dims[depth - 1]);
    let pairs = (c.columns * c.fibers) as f64;
    match closure {
        AdjointClosure::Product => {
            let mut avg = Mat::zeros(d_y, cfg.dims[depth]);
            for m in &m_columns {
                avg.add_scaled(m, 1.0 / c.columns as f64);
            }
            let mut jac = Mat::zeros(cfg.dims[depth], cfg.dims[depth - 1]);
            for j in 0..c.columns {
                for i in 0..c.fibers {
                    jac.add_scaled(&below.jac_z(&z, snap.fiber(i, j)), 1.0 / pairs);
                }
            }
            m_below = avg.matmul(&jac);
        }
        AdjointClosure::Joint => {
            for (j, m) in m_columns.iter().enumerate() {
                for i in 0..c.fibers {
                    m_below.add_scaled(&below.left_mul_jac_z(m, &z, snap.fiber(i, j)), 1.0 / pairs);
                }
            }
        }
    }
    let mut m_chain = vec![Mat::zeros(0, 0); depth - 2];
    m_chain[depth - 3] = m_below;
    for l in (2..depth - 1).rev() {
        let map = cfg.hidden(l);
        let mut acc = Mat::zeros(d_y, cfg.dims[l]);
        for theta in snap.middle[l - 2].chunks_exact(map.param_dim()) {
            acc.add_scaled(&map.left_mul_jac_z(&m_chain[l - 1], trace.zbar(l), theta), 1.0 / c.paths as f64);
        }
        m_chain[l - 2] = acc;
    }
    trace.m_top = Some(m_top);
    trace.m_columns = m_columns;
    trace.m_chain = m_chain;
    Ok(())
}

/// [`zbar_forward`] followed by [`mbar`].
pub fn mean_field_trace(x: &[f64], snap: &MeasureSnapshot, cfg: &NetworkConfig, closure: AdjointClosure) -> Result<MeanFieldTrace> {
    let mut trace = zbar_forward(x, snap, cfg)?;
    mbar(&mut trace, snap, cfg, closure)?;
    Ok(trace)
}

/// One weight path `θ^(0), …, θ^(L)` evaluated against a measure. `column`
/// names the layer-L particle whose `z̄^(L)` the path uses; when absent it is
/// looked up by matching `θ^(L)` against the snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub weights: Vec<Vec<f64>>,
    pub column: Option<usize>,
}

impl PathPoint {
    pub fn from_snapshot(snap: &MeasureSnapshot, path: usize, middle: &[usize], fiber: usize, column: usize) -> PathPoint {
        let depth = snap.depth();
        let mut weights = vec![snap.input_weight(path).to_vec(), snap.first_weight(path).to_vec()];
        for l in 2..depth - 1 {
            weights.push(snap.middle_weight(l, middle[l - 2]).to_vec());
        }
        weights.push(snap.fiber(fiber, column).to_vec());
        weights.push(snap.last_weight(column).to_vec());
        PathPoint {
            weights,
            column: Some(column),
        }
    }

    fn resolve_column(&self, snap: &MeasureSnapshot) -> Result<usize> {
        let depth = snap.depth();
        if let Some(j) = self.column {
            if j >= snap.counts.columns {
                return Err(Error::Mismatch(format!("column {j} out of range")));
            }
            return Ok(j);
        }
        (0..snap.counts.columns)
            .find(|&j| snap.last_weight(j) == self.weights[depth].as_slice())
            .ok_or_else(|| Error::Mismatch("layer-L weight is not a column of the snapshot".into()))
    }
}

/// `Γ̄^(ℓ)` for `ℓ ∈ [1:L−1]` as `d_Y × D_ℓ` matrices, `None` on the
/// frozen layers.
pub fn gammabar(point: &PathPoint, trace: &MeanFieldTrace, snap: &MeasureSnapshot, cfg: &NetworkConfig) -> Result<Vec<Option<Mat>>> {
    let depth = cfg.depth;
    if point.weights.len() != depth + 1 || (0..=depth).any(|l| point.weights[l].len() != cfg.param_dim(l)) {
        return Err(Error::Mismatch("path weights do not match the network".into()));
    }
    if trace.m_top.is_none() {
        return Err(Error::Mismatch("trace has no adjoints; run mbar first".into()));
    }
    let j = point.resolve_column(snap)?;
    let w = &point.weights;
    let mut out = vec![None; depth + 1];
    let h = cfg.hidden(0).eval(&trace.x, &w[0]);
    out[1] = Some(cfg.hidden(1).left_mul_jac_theta(trace.m(2), &h, &w[1]));
    for l in 2..depth - 1 {
        out[l] = Some(cfg.hidden(l).left_mul_jac_theta(trace.m(l + 1), trace.zbar(l), &w[l]));
    }
    out[depth - 1] = Some(cfg.hidden(depth - 1).left_mul_jac_theta(
        &trace.m_columns[j],
        trace.zbar(depth - 1),
        &w[depth - 1],
    ));
    Ok(out)
}

/// `(ȳ − y)^† Γ̄^(ℓ)` on the trained layers, zero on layers 0 and L.
pub fn gradbar(
    x: &[f64],
    y: &[f64],
    point: &PathPoint,
    snap: &MeasureSnapshot,
    cfg: &NetworkConfig,
    closure: AdjointClosure,
) -> Result<Vec<Vec<f64>>> {
    let bound = cfg.bound();
    if y.len() != cfg.dims[cfg.depth + 1] {
        return Err(Error::DimensionMismatch {
            context: "target",
            expected: cfg.dims[cfg.depth + 1],
            actual: y.len(),
        });
    }
    if linalg::norm(y) > bound {
        return Err(Error::DataBound {
            norm: linalg::norm(y),
            bound,
        });
    }
    let trace = mean_field_trace(x, snap, cfg, closure)?;
    let gammas = gammabar(point, &trace, snap, cfg)?;
    let r: Vec<f64> = trace.ybar.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(gammas
        .iter()
        .enumerate()
        .map(|(l, g)| match g {
            Some(m) => m.vecmat(&r),
            None => vec![0.0; cfg.param_dim(l)],
        })
        .collect())
}

/// `½ Σ_b w_b |y_b − ȳ(x_b, μ)|²`.
pub fn loss_bar(snap: &MeasureSnapshot, data: &DataDistribution, cfg: &NetworkConfig) -> Result<f64> {
    snap.check(cfg)?;
    data.check_dims(cfg)?;
    Ok(loss_bar_unchecked(snap, data, cfg))
}

pub(crate) fn loss_bar_unchecked(snap: &MeasureSnapshot, data: &DataDistribution, cfg: &NetworkConfig) -> f64 {
    let mut total = 0.0;
    for (b, (x, y)) in data.points().enumerate() {
        let t = zbar_unchecked(x, snap, cfg);
        total += data.weight(b) * 0.5 * t.ybar.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    total
}

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::net::NetworkConfig;
use crate::sgd::{edge_stream, InitSpec};
use crate::seeding;

/// Uniform grid of `steps + 1` nodes on `[0, horizon]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(Error::config("grid", "need T > 0 and K >= 1"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Node index and interpolation weight for time `t`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= -1e-12 && t <= self.horizon * (1.0 + 1e-12) + 1e-12) {
            return Err(Error::config("time", format!("{t} outside [0, {}]", self.horizon)));
        }
        let s = (t / self.dt()).clamp(0.0, self.steps as f64);
        let k = s.floor() as usize;
        let near = s.round();
        if (s - near).abs() < 1e-9 {
            return Ok((near as usize, 0.0));
        }
        Ok((k, s - k as f64))
    }
}

/// Particle counts: `paths` for the layer-(0,1) pairs and middle layers,
/// `columns` for the layer-L constants, `fibers` for the shared layer-(L−1)
/// sample carried by every column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleCounts {
    pub paths: usize,
    pub columns: usize,
    pub fibers: usize,
}

impl EnsembleCounts {
    pub fn uniform(m: usize) -> Self {
        EnsembleCounts {
            paths: m,
            columns: m,
            fibers: m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.columns == 0 || self.fibers == 0 {
            return Err(Error::config("counts", "all particle counts must be >= 1"));
        }
        Ok(())
    }
}

/// The time-`t` marginal of a path ensemble.
///
/// Particles are stored back to back, `D_ℓ` scalars each. Fibers are
/// column-major: fiber `(i, j)` sits at `j · fibers + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSnapshot {
    pub param_dims: Vec<usize>,
    pub counts: EnsembleCounts,
    pub input: Vec<f64>,
    pub first: Vec<f64>,
    /// Layers `2..=L−2`, in order.
    pub middle: Vec<Vec<f64>>,
    pub last: Vec<f64>,
    pub fibers: Vec<f64>,
}

impl MeasureSnapshot {
    pub fn depth(&self) -> usize {
        self.param_dims.len() - 1
    }

    #[inline]
    pub fn input_weight(&self, i: usize) -> &[f64] {
        let d = self.param_dims[0];
        &self.input[i * d..(i + 1) * d]
    }

    #[inline]
    pub fn first_weight(&self, i: usize) -> &[f64] {
        let d = self.param_dims[1];
        &self.first[i * d..(i + 1) * d]
    }

    /// Particle `m` of middle layer `l ∈ [2:L−2]`.
    #[inline]
    pub fn middle_weight(&self, l: usize, m: usize) -> &[f64] {
        let d = self.param_dims[l];
        &self.middle[l - 2][m * d..(m + 1) * d]
    }

    #[inline]
    pub fn last_weight(&self, j: usize) -> &[f64] {
        let d = self.param_dims[self.depth()];
        &self.last[j * d..(j + 1) * d]
    }

    #[inline]
    pub fn fiber(&self, i: usize, j: usize) -> &[f64] {
        let d = self.param_dims[self.depth() - 1];
        let o = (j * self.counts.fibers + i) * d;
        &self.fibers[o..o + d]
    }

    /// All fibers of column `j`, back to back.
    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let size = self.counts.fibers * self.param_dims[self.depth() - 1];
        &self.fibers[j * size..(j + 1) * size]
    }

    pub fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        let depth = cfg.depth;
        let want: Vec<usize> = (0..=depth).map(|l| cfg.param_dim(l)).collect();
        if self.param_dims != want {
            return Err(Error::Mismatch(format!(
                "snapshot parameter dims {:?} do not match the network {:?}",
                self.param_dims, want
            )));
        }
        let c = self.counts;
        let sizes = [
            (self.input.len(), c.paths * want[0]),
            (self.first.len(), c.paths * want[1]),
            (self.last.len(), c.columns * want[depth]),
            (self.fibers.len(), c.columns * c.fibers * want[depth - 1]),
        ];
        if sizes.iter().any(|(a, b)| a != b) || self.middle.len() != depth.saturating_sub(3) {
            return Err(Error::Mismatch("snapshot block sizes do not match counts".into()));
        }
        for (n, block) in self.middle.iter().enumerate() {
            if block.len() != c.paths * want[n + 2] {
                return Err(Error::Mismatch("middle block size does not match counts".into()));
            }
        }
        Ok(())
    }

    fn blocks(&self) -> impl Iterator<Item = &Vec<f64>> {
        [&self.input, &self.first]
            .into_iter()
            .chain(self.middle.iter())
            .chain([&self.last, &self.fibers])
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        [&mut self.input, &mut self.first]
            .into_iter()
            .chain(self.middle.iter_mut())
            .chain([&mut self.last, &mut self.fibers])
    }

    /// `(1 − w) a + w b`, blockwise.
    pub fn lerp(a: &MeasureSnapshot, b: &MeasureSnapshot, w: f64) -> MeasureSnapshot {
        let mut out = a.clone();
        for (o, q) in out.blocks_mut().zip(b.blocks()) {
            for (x, y) in o.iter_mut().zip(q) {
                *x += w * (y - *x);
            }
        }
        out
    }

    /// The same marginal with every particle replaced by one fixed path
    /// `θ^(0), …, θ^(L)`.
    pub fn dirac(path: &[&[f64]], counts: EnsembleCounts) -> MeasureSnapshot {
        let depth = path.len() - 1;
        let rep = |v: &[f64], n: usize| v.iter().copied().cycle().take(v.len() * n).collect::<Vec<f64>>();
        MeasureSnapshot {
            param_dims: path.iter().map(|p| p.len()).collect(),
            counts,
            input: rep(path[0], counts.paths),
            first: rep(path[1], counts.paths),
            middle: (2..depth - 1).map(|l| rep(path[l], counts.paths)).collect(),
            last: rep(path[depth], counts.columns),
            fibers: rep(path[depth - 1], counts.columns * counts.fibers),
        }
    }
}

/// Particle representation of a trajectory measure on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub counts: EnsembleCounts,
    pub param_dims: Vec<usize>,
    /// Shared initial layer-(L−1) sample `ã_i`, `fibers × D_{L−1}`.
    pub fiber_init: Vec<f64>,
    /// One snapshot per grid node.
    pub nodes: Vec<MeasureSnapshot>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleHeader {
    format: String,
    grid: TimeGrid,
    counts: EnsembleCounts,
    param_dims: Vec<usize>,
    nodes: usize,
    scalars: usize,
}

impl PathEnsemble {
    pub fn depth(&self) -> usize {
        self.param_dims.len() - 1
    }

    pub fn initial(&self) -> &MeasureSnapshot {
        &self.nodes[0]
    }

    pub fn terminal(&self) -> &MeasureSnapshot {
        self.nodes.last().expect("ensemble has nodes")
    }

    pub fn snapshot(&self, k: usize) -> &MeasureSnapshot {
        &self.nodes[k]
    }

    /// Marginal at time `t`, linear between grid nodes.
    pub fn snapshot_at(&self, t: f64) -> Result<MeasureSnapshot> {
        let (k, w) = self.grid.locate(t)?;
        if w == 0.0 {
            return Ok(self.nodes[k].clone());
        }
        Ok(MeasureSnapshot::lerp(&self.nodes[k], &self.nodes[k + 1], w))
    }

    /// Every trajectory starts where the constant-in-time seed does.
    pub fn constant(initial: MeasureSnapshot, fiber_init: Vec<f64>, grid: TimeGrid) -> PathEnsemble {
        PathEnsemble {
            grid,
            counts: initial.counts,
            param_dims: initial.param_dims.clone(),
            fiber_init,
            nodes: vec![initial; grid.nodes()],
        }
    }

    /// Same grid, counts and initial values.
    pub fn same_start(&self, other: &PathEnsemble) -> bool {
        self.grid == other.grid
            && self.counts == other.counts
            && self.param_dims == other.param_dims
            && self.fiber_init == other.fiber_init
            && self.nodes.len() == other.nodes.len()
            && self.nodes[0] == other.nodes[0]
    }

    /// Largest grid increment ratio `|Θ(t_{k+1}) − Θ(t_k)| / dt` over all
    /// trajectories.
    pub fn max_increment_rate(&self) -> f64 {
        let dt = self.grid.dt();
        let mut worst: f64 = 0.0;
        for w in self.nodes.windows(2) {
            for (a, b) in w[0].blocks().zip(w[1].blocks()) {
                let dims = block_dim(&self.param_dims, a.len(), self.counts);
                for (p, q) in a.chunks(dims).zip(b.chunks(dims)) {
                    worst = worst.max(linalg::dist(p, q) / dt);
                }
            }
        }
        worst
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        let mut scalars = self.fiber_init.len();
        let mut bytes = Vec::new();
        for v in &self.fiber_init {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for node in &self.nodes {
            for block in node.blocks() {
                scalars += block.len();
                for v in block {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = EnsembleHeader {
            format: "f64-le".into(),
            grid: self.grid,
            counts: self.counts,
            param_dims: self.param_dims.clone(),
            nodes: self.nodes.len(),
            scalars,
        };
        let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(json_path, e))?;
        std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))?;
        let bin = json_path.with_extension("bin");
        let mut f = std::fs::File::create(&bin).map_err(|e| Error::io(&bin, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&bin, e))
    }

    pub fn load(json_path: &Path) -> Result<PathEnsemble> {
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let h: EnsembleHeader = serde_json::from_str(&text).map_err(|e| Error::json(json_path, e))?;
        let bin = json_path.with_extension("bin");
        let mut raw = Vec::new();
        std::fs::File::open(&bin)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| Error::io(&bin, e))?;
        if raw.len() != h.scalars * 8 || h.param_dims.len() < 4 || h.nodes != h.grid.nodes() {
            return Err(Error::Mismatch(format!("{} does not match its header", bin.display())));
        }
        let mut values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let dims = &h.param_dims;
        let depth = dims.len() - 1;
        let c = h.counts;
        let fiber_init = take(c.fibers * dims[depth - 1]);
        let mut nodes = Vec::with_capacity(h.nodes);
        for _ in 0..h.nodes {
            let input = take(c.paths * dims[0]);
            let first = take(c.paths * dims[1]);
            let middle = (2..depth - 1).map(|l| take(c.paths * dims[l])).collect();
            let last = take(c.columns * dims[depth]);
            let fibers = take(c.columns * c.fibers * dims[depth - 1]);
            nodes.push(MeasureSnapshot {
                param_dims: dims.clone(),
                counts: c,
                input,
                first,
                middle,
                last,
                fibers,
            });
        }
        Ok(PathEnsemble {
            grid: h.grid,
            counts: c,
            param_dims: h.param_dims,
            fiber_init,
            nodes,
        })
    }
}

/// Per-particle dimension of a block, recovered from its length.
fn block_dim(param_dims: &[usize], len: usize, c: EnsembleCounts) -> usize {
    let depth = param_dims.len() - 1;
    if len == c.columns * c.fibers * param_dims[depth - 1] && len > 0 {
        param_dims[depth - 1]
    } else if len == c.columns * param_dims[depth] {
        param_dims[depth]
    } else {
        // input, first and middle blocks all carry `paths` particles
        len / c.paths
    }
}

/// Draws the initial values from `μ_0` with the factorised structure and
/// returns the constant-trajectory ensemble.
pub fn sample_ensemble(cfg: &NetworkConfig, init: &InitSpec, grid: TimeGrid, counts: EnsembleCounts) -> Result<PathEnsemble> {
    cfg.validate()?;
    init.validate(cfg)?;
    counts.validate()?;
    let depth = cfg.depth;
    let dims: Vec<usize> = (0..=depth).map(|l| cfg.param_dim(l)).collect();
    let draw_block = |l: usize, n: usize| {
        let d = dims[l];
        let mut out = vec![0.0; n * d];
        for (i, slot) in out.chunks_mut(d).enumerate() {
            init.draw(l, seeding::ENSEMBLE, edge_stream(l, i, 0), slot);
        }
        out
    };
    let fiber_init = draw_block(depth - 1, counts.fibers);
    let fibers = fiber_init.repeat(counts.columns);
    let initial = MeasureSnapshot {
        param_dims: dims.clone(),
        counts,
        input: draw_block(0, counts.paths),
        first: draw_block(1, counts.paths),
        middle: (2..depth - 1).map(|l| draw_block(l, counts.paths)).collect(),
        last: draw_block(depth, counts.columns),
        fibers,
    };
    Ok(PathEnsemble::constant(initial, fiber_init, grid))
}

//! Initialisation, the SGD process, continuous-time gradient descent and
//! their comparison.

use std::path::Path;

use rand::distributions::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backprop;
use crate::error::{Error, Result};
use crate::net::{DataDistribution, NetworkConfig, ParamVector};
use crate::seeding;

/// Law of every coordinate of one layer's initial weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitFamily {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl Default for InitFamily {
    fn default() -> Self {
        InitFamily::Gaussian { mean: 0.0, std: 1.0 }
    }
}

impl InitFamily {
    pub fn validate(&self, field: &str) -> Result<()> {
        match *self {
            InitFamily::Gaussian { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std >= 0.0) {
                    return Err(Error::config(field, "gaussian needs finite mean and std >= 0"));
                }
            }
            InitFamily::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low <= high) {
                    return Err(Error::config(field, "uniform needs finite low <= high"));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            InitFamily::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            InitFamily::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.gen_range(low..high)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InitFamily::Gaussian { mean, .. } => mean,
            InitFamily::Uniform { low, high } => 0.5 * (low + high),
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            InitFamily::Gaussian { std, .. } => std,
            InitFamily::Uniform { low, high } => (high - low) / 12f64.sqrt(),
        }
    }
}

/// Initial law `μ_0 = Π_ℓ μ_0^(ℓ)`, one family per layer, plus a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// One entry per weight layer, or a single entry shared by all.
    pub layers: Vec<InitFamily>,
    #[serde(default)]
    pub seed: u64,
}

impl InitSpec {
    pub fn uniform_across_layers(family: InitFamily, seed: u64) -> Self {
        InitSpec {
            layers: vec![family],
            seed,
        }
    }

    pub fn family(&self, l: usize) -> InitFamily {
        if self.layers.len() == 1 {
            self.layers[0]
        } else {
            self.layers[l]
        }
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.layers.len() != 1 && self.layers.len() != cfg.depth + 1 {
            return Err(Error::config(
                "init.layers",
                format!("expected 1 or L + 1 = {} entries", cfg.depth + 1),
            ));
        }
        for (l, f) in self.layers.iter().enumerate() {
            f.validate(&format!("init.layers[{l}]"))?;
        }
        Ok(())
    }

    /// Fills `out` with one draw from `μ_0^(ℓ)` using stream `index` of `name`.
    pub fn draw(&self, l: usize, name: &str, index: u64, out: &mut [f64]) {
        let family = self.family(l);
        let mut rng = seeding::stream_rng(self.seed, name, index);
        for v in out {
            *v = family.sample(&mut rng);
        }
    }
}

/// Stream index of edge `(ℓ, i, j)`: layer in the top bits.
pub(crate) fn edge_stream(l: usize, i: usize, j: usize) -> u64 {
    ((l as u64) << 48) | ((i as u64) << 24) | j as u64
}

/// i.i.d. draws for every edge, each edge on its own counter-based stream.
pub fn init_params(cfg: &NetworkConfig, init: &InitSpec) -> Result<ParamVector> {
    cfg.validate()?;
    init.validate(cfg)?;
    let mut p = ParamVector::zeros(cfg);
    for l in 0..=cfg.depth {
        let layer = p.layer_mut(l);
        for i in 0..layer.n_in {
            for j in 0..layer.n_out {
                init.draw(l, seeding::INIT, edge_stream(l, i, j), layer.edge_mut(i, j));
            }
        }
    }
    Ok(p)
}

/// Learning-rate profile `α(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LRSchedule {
    Constant { value: f64 },
    /// `value · exp(−rate t)`.
    Exponential { value: f64, rate: f64 },
    /// `value / (1 + rate t)`.
    InverseTime { value: f64, rate: f64 },
}

impl Default for LRSchedule {
    fn default() -> Self {
        LRSchedule::Constant { value: 1.0 }
    }
}

impl LRSchedule {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            LRSchedule::Constant { value } => value,
            LRSchedule::Exponential { value, rate } => value * (-rate * t).exp(),
            LRSchedule::InverseTime { value, rate } => value / (1.0 + rate * t),
        }
    }

    /// `sup_t α(t)` on `t ≥ 0`.
    pub fn max(&self) -> f64 {
        match *self {
            LRSchedule::Constant { value }
            | LRSchedule::Exponential { value, .. }
            | LRSchedule::InverseTime { value, .. } => value,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.max() == 0.0
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        let (value, rate) = match *self {
            LRSchedule::Constant { value } => (value, 0.0),
            LRSchedule::Exponential { value, rate } | LRSchedule::InverseTime { value, rate } => (value, rate),
        };
        if !(value >= 0.0 && value <= cfg.bound()) {
            return Err(Error::config(
                "schedule.value",
                format!("must lie in [0, C] = [0, {}]", cfg.bound()),
            ));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::config("schedule.rate", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

fn default_grid_steps() -> usize {
    50
}

/// Horizon, SGD step, continuous-time grid and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub integrator: Integrator,
    /// Store every n-th state; `None` keeps about 100 checkpoints.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

impl RunSpec {
    pub fn new(horizon: f64, step: f64, grid_steps: usize, seed: u64) -> Self {
        RunSpec {
            horizon,
            step,
            grid_steps,
            seed,
            integrator: Integrator::Euler,
            checkpoint_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("run.horizon", "T must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::config("run.step", "ε must be positive"));
        }
        if self.grid_steps == 0 {
            return Err(Error::config("run.grid_steps", "K must be >= 1"));
        }
        if self.sgd_steps() > 100_000_000 {
            return Err(Error::config("run.step", "too many SGD steps"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("run.checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }

    /// `⌈T/ε⌉`, tolerant of rounding in `T/ε`.
    pub fn sgd_steps(&self) -> usize {
        (self.horizon / self.step - 1e-9).ceil().max(0.0) as usize
    }

    pub fn grid_dt(&self) -> f64 {
        self.horizon / self.grid_steps as f64
    }

    fn cadence(&self, steps: usize) -> usize {
        self.checkpoint_every.unwrap_or_else(|| steps.div_ceil(100).max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Sgd,
    Ctgd,
}

/// Checkpointed weights of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightHistory {
    pub process: Process,
    /// Step index of each checkpoint (SGD step or grid node).
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub checkpoints: Vec<ParamVector>,
}

#[derive(Serialize, Deserialize)]
struct HistoryManifest {
    process: Process,
    steps: Vec<usize>,
    times: Vec<f64>,
    files: Vec<String>,
}

impl WeightHistory {
    fn new(process: Process) -> Self {
        WeightHistory {
            process,
            steps: Vec::new(),
            times: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    fn push(&mut self, step: usize, time: f64, params: &ParamVector) {
        self.steps.push(step);
        self.times.push(time);
        self.checkpoints.push(params.clone());
    }

    pub fn initial(&self) -> &ParamVector {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &ParamVector {
        self.checkpoints.last().expect("history is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("history is never empty")
    }

    /// Linear interpolation between stored checkpoints.
    pub fn at_time(&self, t: f64) -> Result<ParamVector> {
        let last = self.final_time();
        if t < -1e-12 || t > last + 1e-9 {
            return Err(Error::config(
                "time",
                format!("{t} outside the stored range [0, {last}]"),
            ));
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Ok(self.checkpoints[0].clone());
        }
        if k >= self.times.len() {
            return Ok(self.last().clone());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t == t0 {
            return Ok(self.checkpoints[k - 1].clone());
        }
        let w = (t - t0) / (t1 - t0);
        let mut out = self.checkpoints[k - 1].clone();
        out.axpy(w, &self.checkpoints[k].sub(&self.checkpoints[k - 1]));
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.checkpoints.len());
        for (n, p) in self.checkpoints.iter().enumerate() {
            let name = format!("checkpoint_{n:05}.json");
            p.save_json(&dir.join(&name))?;
            files.push(name);
        }
        let manifest = HistoryManifest {
            process: self.process,
            steps: self.steps.clone(),
            times: self.times.clone(),
            files,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: HistoryManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let checkpoints = m
            .files
            .iter()
            .map(|f| ParamVector::load_json(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if checkpoints.is_empty() || checkpoints.len() != m.steps.len() || m.steps.len() != m.times.len() {
            return Err(Error::Mismatch(format!("inconsistent history manifest in {}", dir.display())));
        }
        Ok(WeightHistory {
            process: m.process,
            steps: m.steps,
            times: m.times,
            checkpoints,
        })
    }
}

/// `θ ← θ + scale · g` on the trained layers only.
fn update_trained(theta: &mut ParamVector, scale: f64, g: &ParamVector) {
    let depth = theta.layers.len() - 1;
    for l in 1..depth {
        crate::linalg::axpy(&mut theta.layers[l].values, scale, &g.layers[l].values);
    }
}

fn check_run(params0: &ParamVector, data: &DataDistribution, spec: &RunSpec, sched: &LRSchedule, cfg: &NetworkConfig) -> Result<()> {
    cfg.validate()?;
    params0.check_shape(cfg)?;
    if !params0.is_finite() {
        return Err(Error::NonFinite("initial parameters".into()));
    }
    data.check_contract(cfg)?;
    spec.validate()?;
    sched.validate(cfg)
}

/// `θ(k+1) = θ(k) − ε α(kε) grad_hat(X_{k+1}, Y_{k+1}, θ(k))`, `⌈T/ε⌉` steps.
pub fn sgd_run(
    params0: &ParamVector,
    data: &DataDistribution,
    spec: &RunSpec,
    sched: &LRSchedule,
    cfg: &NetworkConfig,
) -> Result<WeightHistory> {
    check_run(params0, data, spec, sched, cfg)?;
    let steps = spec.sgd_steps();
    let every = spec.cadence(steps);
    let sampler = data.sampler();
    let mut rng = seeding::stream_rng(spec.seed, seeding::SGD_SAMPLES, 0);
    let mut theta = params0.clone();
    let mut g = params0.zeros_like();
    let mut hist = WeightHistory::new(Process::Sgd);
    hist.push(0, 0.0, &theta);
    for k in 0..steps {
        let b = sampler.sample(&mut rng);
        for layer in &mut g.layers {
            layer.values.fill(0.0);
        }
        backprop::point_grad(data.x(b), data.y(b), &theta, cfg, &mut g);
        let t = k as f64 * spec.step;
        update_trained(&mut theta, -spec.step * sched.at(t), &g);
        if !theta.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        if (k + 1) % every == 0 || k + 1 == steps {
            hist.push(k + 1, (k + 1) as f64 * spec.step, &theta);
        }
    }
    Ok(hist)
}

/// Integrates `dθ/dt = −α(t) N² ∇L_N(θ)` on the trained layers over a
/// uniform grid of `K` steps.
pub fn ctgd_run(
    params0: &ParamVector,
    data: &DataDistribution,
    spec: &RunSpec,
    sched: &LRSchedule,
    cfg: &NetworkConfig,
) -> Result<WeightHistory> {
    check_run(params0, data, spec, sched, cfg)?;
    let k_steps = spec.grid_steps;
    let dt = spec.grid_dt();
    let every = spec.cadence(k_steps);
    let drift = |theta: &ParamVector, t: f64| {
        let mut g = backprop::grad_loss_unchecked(theta, data, cfg);
        g.scale(-sched.at(t));
        g
    };
    let mut theta = params0.clone();
    let mut hist = WeightHistory::new(Process::Ctgd);
    hist.push(0, 0.0, &theta);
    for n in 0..k_steps {
        let t = n as f64 * dt;
        match spec.integrator {
            Integrator::Euler => {
                let f = drift(&theta, t);
                update_trained(&mut theta, dt, &f);
            }
            Integrator::Rk4 => {
                let k1 = drift(&theta, t);
                let mut s = theta.clone();
                update_trained(&mut s, 0.5 * dt, &k1);
                let k2 = drift(&s, t + 0.5 * dt);
                let mut s = theta.clone();
                update_trained(&mut s, 0.5 * dt, &k2);
                let k3 = drift(&s, t + 0.5 * dt);
                let mut s = theta.clone();
                update_trained(&mut s, dt, &k3);
                let k4 = drift(&s, t + dt);
                update_trained(&mut theta, dt / 6.0, &k1);
                update_trained(&mut theta, dt / 3.0, &k2);
                update_trained(&mut theta, dt / 3.0, &k3);
                update_trained(&mut theta, dt / 6.0, &k4);
            }
        }
        if !theta.is_finite() {
            return Err(Error::Divergence { step: n + 1 });
        }
        if (n + 1) % every == 0 || n + 1 == k_steps {
            hist.push(n + 1, (n + 1) as f64 * dt, &theta);
        }
    }
    Ok(hist)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub step: usize,
    pub time: f64,
    pub gap: f64,
}

/// `‖θ(k) − θ̃(kε)‖_(L)` at every SGD checkpoint inside the CTGD horizon.
pub fn compare_sgd_ctgd(sgd: &WeightHistory, ctgd: &WeightHistory) -> Result<Vec<GapPoint>> {
    if !sgd.initial().same_shape(ctgd.initial()) || sgd.initial() != ctgd.initial() {
        return Err(Error::Mismatch("SGD and CTGD histories start from different weights".into()));
    }
    let horizon = ctgd.final_time();
    let mut out = Vec::new();
    for ((&step, &time), p) in sgd.steps.iter().zip(&sgd.times).zip(&sgd.checkpoints) {
        if time > horizon + 1e-9 {
            break;
        }
        let smooth = ctgd.at_time(time.min(horizon))?;
        out.push(GapPoint {
            step,
            time,
            gap: p.sub(&smooth).lnorm(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::loss_ln;

    fn setup(width: usize) -> (NetworkConfig, DataDistribution, ParamVector) {
        let cfg = NetworkConfig::uniform(4, width, 1, 2, 1);
        let data = DataDistribution::sine(8).unwrap();
        let init = InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.3, std: 1.0 }, 3);
        let p = init_params(&cfg, &init).unwrap();
        (cfg, data, p)
    }

    #[test]
    fn degenerate_init_hits_the_mean() {
        let cfg = NetworkConfig::uniform(3, 4, 1, 2, 1);
        let init = InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.7, std: 0.0 }, 1);
        let p = init_params(&cfg, &init).unwrap();
        assert!(p.layers.iter().flat_map(|l| &l.values).all(|&v| v == 0.7));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = NetworkConfig::uniform(3, 5, 1, 2, 1);
        let init = InitSpec::uniform_across_layers(InitFamily::default(), 99);
        assert_eq!(init_params(&cfg, &init).unwrap(), init_params(&cfg, &init).unwrap());
        let other = InitSpec { seed: 100, ..init.clone() };
        assert_ne!(init_params(&cfg, &init).unwrap(), init_params(&cfg, &other).unwrap());
    }

    #[test]
    fn init_moments_match_the_family() {
        let cfg = NetworkConfig::uniform(3, 45, 1, 1, 1);
        let init = InitSpec {
            layers: vec![
                InitFamily::Gaussian { mean: 0.0, std: 1.0 },
                InitFamily::Gaussian { mean: 0.5, std: 2.0 },
                InitFamily::Uniform { low: -1.0, high: 3.0 },
                InitFamily::Gaussian { mean: -1.0, std: 0.5 },
            ],
            seed: 4,
        };
        let p = init_params(&cfg, &init).unwrap();
        for l in 1..=2 {
            let v = &p.layers[l].values;
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let f = init.family(l);
            assert!((mean - f.mean()).abs() < 5.0 * f.std() / n.sqrt(), "layer {l} mean {mean}");
            assert!((var.sqrt() - f.std()).abs() < 5.0 * f.std() / (2.0 * n).sqrt(), "layer {l}");
        }
    }

    #[test]
    fn zero_rate_keeps_weights() {
        let (cfg, data, p) = setup(4);
        let spec = RunSpec::new(0.3, 0.01, 20, 1);
        let sched = LRSchedule::Constant { value: 0.0 };
        let h = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        assert!(h.checkpoints.iter().all(|c| *c == p));
        let c = ctgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        assert!(c.checkpoints.iter().all(|q| *q == p));
        assert!(compare_sgd_ctgd(&h, &c).unwrap().iter().all(|g| g.gap == 0.0));
    }

    #[test]
    fn sgd_matches_hand_stepped_recursion() {
        let (cfg, _, p) = setup(3);
        let data = DataDistribution::new(vec![vec![0.4]], vec![vec![-0.2]], None).unwrap();
        let mut spec = RunSpec::new(0.03, 0.01, 10, 5);
        spec.checkpoint_every = Some(1);
        let sched = LRSchedule::Exponential { value: 1.0, rate: 2.0 };
        let h = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        assert_eq!(h.steps, vec![0, 1, 2, 3]);
        let mut theta = p.clone();
        for k in 0..3 {
            let g = backprop::grad_hat(&[0.4], &[-0.2], &theta, &cfg).unwrap();
            let a = 0.01 * (-2.0 * k as f64 * 0.01).exp();
            for l in 1..4 {
                for (t, d) in theta.layers[l].values.iter_mut().zip(&g.layers[l].values) {
                    *t += -a * d;
                }
            }
            assert_eq!(h.checkpoints[k + 1], theta);
        }
    }

    #[test]
    fn frozen_layers_never_move() {
        let (cfg, data, p) = setup(4);
        let spec = RunSpec::new(0.5, 0.05, 20, 2);
        let sched = LRSchedule::default();
        for h in [
            sgd_run(&p, &data, &spec, &sched, &cfg).unwrap(),
            ctgd_run(&p, &data, &spec, &sched, &cfg).unwrap(),
        ] {
            assert_eq!(h.last().layers[0], p.layers[0]);
            assert_eq!(h.last().layers[4], p.layers[4]);
            assert_ne!(h.last().layers[2], p.layers[2]);
        }
    }

    #[test]
    fn full_batch_step_is_one_euler_step() {
        let (cfg, data, p) = setup(3);
        let mut spec = RunSpec::new(0.01, 0.01, 1, 0);
        spec.checkpoint_every = Some(1);
        let c = ctgd_run(&p, &data, &spec, &LRSchedule::default(), &cfg).unwrap();
        let g = backprop::grad_loss(&p, &data, &cfg).unwrap();
        let mut q = p.clone();
        update_trained(&mut q, -0.01, &g);
        assert_eq!(*c.last(), q);
    }

    #[test]
    fn small_full_batch_steps_descend() {
        let (cfg, data, p) = setup(4);
        let mut theta = p;
        let mut prev = loss_ln(&theta, &data, &cfg).unwrap();
        for _ in 0..5 {
            let g = backprop::grad_loss(&theta, &data, &cfg).unwrap();
            update_trained(&mut theta, -1e-3, &g);
            let next = loss_ln(&theta, &data, &cfg).unwrap();
            assert!(next < prev);
            prev = next;
        }
    }

    #[test]
    fn ctgd_loss_is_monotone_on_a_fine_grid() {
        let (cfg, data, p) = setup(4);
        let mut spec = RunSpec::new(0.5, 0.01, 2000, 0);
        spec.checkpoint_every = Some(20);
        let h = ctgd_run(&p, &data, &spec, &LRSchedule::default(), &cfg).unwrap();
        let losses: Vec<f64> = h.checkpoints.iter().map(|c| loss_ln(c, &data, &cfg).unwrap()).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn euler_endpoint_error_is_first_order() {
        let (cfg, data, p) = setup(3);
        let sched = LRSchedule::default();
        let end = |k: usize| {
            let spec = RunSpec::new(0.5, 0.01, k, 0);
            ctgd_run(&p, &data, &spec, &sched, &cfg).unwrap().last().clone()
        };
        let (a, b, c) = (end(50), end(100), end(200));
        let ratio = a.sub(&b).lnorm() / b.sub(&c).lnorm();
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn sgd_is_reproducible() {
        let (cfg, data, p) = setup(4);
        let spec = RunSpec::new(0.2, 0.01, 10, 17);
        let sched = LRSchedule::default();
        let a = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        let b = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn history_round_trips_through_disk() {
        let (cfg, data, p) = setup(3);
        let spec = RunSpec::new(0.05, 0.01, 10, 3);
        let h = sgd_run(&p, &data, &spec, &LRSchedule::default(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        h.save(dir.path()).unwrap();
        assert_eq!(WeightHistory::load(dir.path()).unwrap(), h);
    }

    #[test]
    fn interpolation_hits_checkpoints() {
        let (cfg, data, p) = setup(3);
        let mut spec = RunSpec::new(0.1, 0.01, 10, 3);
        spec.checkpoint_every = Some(2);
        let h = ctgd_run(&p, &data, &spec, &LRSchedule::default(), &cfg).unwrap();
        assert_eq!(h.at_time(h.times[2]).unwrap(), h.checkpoints[2]);
        let mid = h.at_time(0.5 * (h.times[1] + h.times[2])).unwrap();
        let mut avg = h.checkpoints[1].clone();
        avg.scale(0.5);
        avg.axpy(0.5, &h.checkpoints[2]);
        assert!(mid.max_abs_diff(&avg) < 1e-14);
    }
}

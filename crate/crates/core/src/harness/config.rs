use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::meanfield::{AdjointClosure, EnsembleCounts, TimeGrid};
use crate::mckean_vlasov::{ProbeSpec, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use crate::net::{DataDistribution, NetworkConfig};
use crate::sgd::{InitFamily, InitSpec, Integrator, LRSchedule, RunSpec};

/// Training data: the synthetic sine set or an explicit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Sine {
        points: usize,
    },
    Table {
        xs: Vec<Vec<f64>>,
        ys: Vec<Vec<f64>>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
        /// Divide every input by `max |x| / input_radius` so it fits the box.
        #[serde(default)]
        rescale_inputs: bool,
    },
}

impl DataSpec {
    pub fn build(&self, cfg: &NetworkConfig) -> Result<DataDistribution> {
        match self {
            DataSpec::Sine { points } => DataDistribution::sine(*points),
            DataSpec::Table {
                xs,
                ys,
                weights,
                rescale_inputs,
            } => {
                let mut xs = xs.clone();
                if *rescale_inputs {
                    let top = xs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
                    if top > 0.0 {
                        let s = cfg.input_radius / top;
                        xs.iter_mut().flatten().for_each(|v| *v *= s);
                    }
                }
                DataDistribution::new(xs, ys.clone(), weights.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Picard,
    /// Direct integration of the particle system; an exact fixed point.
    Forward,
}

fn default_counts() -> EnsembleCounts {
    EnsembleCounts::uniform(64)
}

fn default_tol() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldSpec {
    #[serde(default = "default_counts")]
    pub counts: EnsembleCounts,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub closure: AdjointClosure,
    #[serde(default)]
    pub probes: ProbeSpec,
}

impl Default for MeanFieldSpec {
    fn default() -> Self {
        MeanFieldSpec {
            counts: default_counts(),
            solver: Solver::default(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            closure: AdjointClosure::default(),
            probes: ProbeSpec::default(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    /// Also integrate continuous-time gradient descent and report the gap.
    #[serde(default = "yes")]
    pub ctgd: bool,
    /// Write every checkpoint as JSON.
    #[serde(default = "yes")]
    pub save_history: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            ctgd: true,
            save_history: true,
        }
    }
}

fn default_random_paths() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSpec {
    /// Ensemble written by `meanfield`; solved in place when absent.
    #[serde(default)]
    pub fixed_point: Option<PathBuf>,
    #[serde(default = "default_random_paths")]
    pub random_paths: usize,
}

impl Default for CoupleSpec {
    fn default() -> Self {
        CoupleSpec {
            fixed_point: None,
            random_paths: default_random_paths(),
        }
    }
}

/// Quantities a sweep can record per point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `L_N` at the last SGD step.
    LossSgd,
    /// `|L_N(θ(⌈T/ε⌉)) − L̄(μ*_T)|`.
    LossGap,
    /// `‖θ(⌈T/ε⌉) − θ̃(T)‖_(L)`.
    SgdCtgd,
    /// Data-mean `|Δz^(L+1)|` at `T`.
    DeltaZTop,
    /// Mean over trained edges of the ideal-particle gradient defect at `T`.
    DeltaGrad,
    /// Terminal SGD-to-ideal error on the all-zeros path.
    PathErrorCanonical,
    /// Terminal SGD-to-ideal error on the all-ones path.
    PathErrorDisjoint,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::LossSgd,
        Metric::LossGap,
        Metric::SgdCtgd,
        Metric::DeltaZTop,
        Metric::DeltaGrad,
        Metric::PathErrorCanonical,
        Metric::PathErrorDisjoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::LossSgd => "loss_sgd",
            Metric::LossGap => "loss_gap",
            Metric::SgdCtgd => "sgd_ctgd",
            Metric::DeltaZTop => "delta_z_top",
            Metric::DeltaGrad => "delta_grad",
            Metric::PathErrorCanonical => "path_error_canonical",
            Metric::PathErrorDisjoint => "path_error_disjoint",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn needs_reference(self) -> bool {
        !matches!(self, Metric::LossSgd | Metric::SgdCtgd)
    }

    pub fn needs_ideal(self) -> bool {
        matches!(
            self,
            Metric::DeltaZTop | Metric::DeltaGrad | Metric::PathErrorCanonical | Metric::PathErrorDisjoint
        )
    }
}

fn default_bootstrap() -> usize {
    1000
}

/// Axes of a sweep. Point seeds are offsets added to the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub widths: Vec<usize>,
    pub steps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub metrics: Vec<Metric>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::config("sweep.widths", "must not be empty"));
        }
        if let Some(i) = self.widths.iter().position(|&n| n == 0) {
            return Err(Error::config(format!("sweep.widths[{i}]"), "N >= 1 required"));
        }
        if self.steps.is_empty() {
            return Err(Error::config("sweep.steps", "must not be empty"));
        }
        if let Some(i) = self.steps.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::config(format!("sweep.steps[{i}]"), "ε must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "must not be empty"));
        }
        if self.metrics.is_empty() {
            return Err(Error::config("sweep.metrics", "must not be empty"));
        }
        let dup = |v: &[String]| {
            let mut s = v.to_vec();
            s.sort();
            s.windows(2).any(|w| w[0] == w[1])
        };
        if dup(&self.widths.iter().map(|n| n.to_string()).collect::<Vec<_>>())
            || dup(&self.steps.iter().map(|e| e.to_string()).collect::<Vec<_>>())
            || dup(&self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>())
            || dup(&self.metrics.iter().map(|m| m.name().to_string()).collect::<Vec<_>>())
        {
            return Err(Error::config("sweep", "axis values and metrics must be distinct"));
        }
        if self.metrics.contains(&Metric::PathErrorDisjoint) && self.widths.iter().any(|&n| n < 2) {
            return Err(Error::config("sweep.widths", "path_error_disjoint needs N >= 2"));
        }
        Ok(())
    }
}

/// Everything a CLI subcommand needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkConfig,
    pub init: InitSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub schedule: LRSchedule,
    pub data: DataSpec,
    /// Master seed for every random stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub meanfield: MeanFieldSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub couple: CoupleSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// The desk-scale default: `L = 4`, inner dims 2, `N = 32`, `T = 0.5`,
    /// `ε = 0.01`, `K = 50`, `M = 64`, 16 sine points and `α ≡ 1`.
    pub fn desk() -> Self {
        let mut run = RunSpec::new(0.5, 0.01, 50, 0);
        run.integrator = Integrator::Rk4;
        ExperimentConfig {
            network: NetworkConfig::uniform(4, 32, 1, 2, 1),
            init: InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.5, std: 1.0 }, 0),
            run,
            schedule: LRSchedule::Constant { value: 1.0 },
            data: DataSpec::Sine { points: 16 },
            seed: 0,
            meanfield: MeanFieldSpec {
                tol: 1e-6,
                max_iter: 20,
                ..MeanFieldSpec::default()
            },
            train: TrainSpec::default(),
            couple: CoupleSpec::default(),
            sweep: None,
            out: PathBuf::from("results"),
        }
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.init.validate(&self.network)?;
        if self.init.seed != 0 || self.run.seed != 0 {
            return Err(Error::config(
                if self.init.seed != 0 { "init.seed" } else { "run.seed" },
                "set the top-level `seed` instead",
            ));
        }
        self.run.validate()?;
        self.schedule.validate(&self.network)?;
        let data = self.data.build(&self.network)?;
        data.check_contract(&self.network)?;
        TimeGrid::new(self.run.horizon, self.run.grid_steps)?;
        self.meanfield.counts.validate()?;
        if !(self.meanfield.tol >= 0.0 && self.meanfield.tol.is_finite()) {
            return Err(Error::config("meanfield.tol", "must be finite and >= 0"));
        }
        if self.meanfield.max_iter == 0 {
            return Err(Error::config("meanfield.max_iter", "must be >= 1"));
        }
        if self.meanfield.probes.count == 0 || !(self.meanfield.probes.delta > 0.0) {
            return Err(Error::config("meanfield.probes", "need count >= 1 and delta > 0"));
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::config("out", "output directory must be set"));
        }
        Ok(())
    }

    /// Init and run specs carrying the master seed, or `seed` when given.
    pub fn seeded(&self, seed: u64) -> (InitSpec, RunSpec) {
        let mut init = self.init.clone();
        init.seed = seed;
        let mut run = self.run.clone();
        run.seed = seed;
        (init, run)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.run.horizon, self.run.grid_steps).expect("validated")
    }

    pub fn dataset(&self) -> Result<DataDistribution> {
        self.data.build(&self.network)
    }

    /// SHA-256 of the canonical JSON with the output directory blanked.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

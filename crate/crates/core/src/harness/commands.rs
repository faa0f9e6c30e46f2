use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Solver};
use super::{Outcome, Run};
use crate::error::{Error, Result};
use crate::ideal::{build_ideal, coupling_report, delta_grad, delta_z, sample_paths, TimeDerivative};
use crate::mckean_vlasov::{special_diagnostics, Dynamics, FixedPoint, PicardReport, SpecialDiagnostics};
use crate::meanfield::{sample_ensemble, PathEnsemble};
use crate::net::loss_ln;
use crate::sgd::{compare_sgd_ctgd, ctgd_run, init_params, sgd_run};

/// SGD (and optionally CTGD) from the seeded initial weights.
pub fn train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut run = Run::start(cfg, "train")?;
    let data = cfg.dataset()?;
    let net = &cfg.network;
    let (init, spec) = cfg.seeded(cfg.seed);
    let params0 = init_params(net, &init)?;
    let sgd = run.time("sgd", || sgd_run(&params0, &data, &spec, &cfg.schedule, net))?;
    let ctgd = if cfg.train.ctgd {
        Some(run.time("ctgd", || ctgd_run(&params0, &data, &spec, &cfg.schedule, net))?)
    } else {
        None
    };
    let gaps = match &ctgd {
        Some(c) => compare_sgd_ctgd(&sgd, c)?,
        None => Vec::new(),
    };
    let mut csv = String::from("step,time,loss_sgd,loss_ctgd,gap\n");
    for (c, p) in sgd.checkpoints.iter().enumerate() {
        let (step, time) = (sgd.steps[c], sgd.times[c]);
        let loss = loss_ln(p, &data, net)?;
        match (ctgd.as_ref(), gaps.iter().find(|g| g.step == step)) {
            (Some(ct), Some(g)) => {
                let lc = loss_ln(&ct.at_time(time)?, &data, net)?;
                csv.push_str(&format!("{step},{time},{loss},{lc},{}\n", g.gap));
            }
            _ => csv.push_str(&format!("{step},{time},{loss},,\n")),
        }
    }
    run.text("metrics.csv", &csv)?;
    if cfg.train.save_history {
        sgd.save(&run.path("sgd"))?;
        run.record(run.path("sgd"));
        if let Some(c) = &ctgd {
            c.save(&run.path("ctgd"))?;
            run.record(run.path("ctgd"));
        }
    }
    run.finish(None)
}

/// Diagnostics of a converged fixed point with the checks they support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(flatten)]
    pub diagnostics: SpecialDiagnostics,
    pub horizon: f64,
    pub starts_at_one: bool,
    pub growth_within_bound: bool,
    pub increments_within_bound: bool,
    pub monotone: bool,
}

impl DiagnosticsReport {
    pub fn new(diagnostics: SpecialDiagnostics, horizon: f64) -> Self {
        let s = &diagnostics.sensitivity;
        let starts_at_one = s.first().is_some_and(|&v| v <= 1.0 + 1e-9);
        let growth_within_bound = s.last().is_some_and(|&v| v.ln() <= diagnostics.lipschitz_bound * horizon);
        let increments_within_bound = diagnostics.lipschitz_estimate <= diagnostics.lipschitz_bound;
        let monotone = diagnostics.sensitivity_monotone(1e-9);
        DiagnosticsReport {
            diagnostics,
            horizon,
            starts_at_one,
            growth_within_bound,
            increments_within_bound,
            monotone,
        }
    }
}

/// Samples the initial ensemble from the master seed and solves for the
/// fixed point with the configured solver.
pub fn solve_reference(cfg: &ExperimentConfig) -> Result<(FixedPoint, Option<PicardReport>)> {
    let data = cfg.dataset()?;
    let (init, _) = cfg.seeded(cfg.seed);
    let ens = sample_ensemble(&cfg.network, &init, cfg.grid(), cfg.meanfield.counts)?;
    let dynamics = Dynamics::new(&cfg.network, &data, &cfg.schedule).with_closure(cfg.meanfield.closure);
    match cfg.meanfield.solver {
        Solver::Forward => Ok((dynamics.forward_solve(&ens)?, None)),
        Solver::Picard => {
            let (fp, report) = dynamics.picard_solve(&ens, cfg.meanfield.tol, cfg.meanfield.max_iter)?;
            Ok((fp, Some(report)))
        }
    }
}

/// Solves the mean-field flow and writes the ensemble, the iteration
/// report and the diagnostics.
pub fn meanfield(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut run = Run::start(cfg, "meanfield")?;
    if cfg.meanfield.solver == Solver::Picard && cfg.meanfield.tol == 0.0 {
        run.warn(format!(
            "meanfield.tol = 0 cannot be met; running all {} iterations",
            cfg.meanfield.max_iter
        ));
    }
    let (fp, report) = run.time("solve", || solve_reference(cfg))?;
    if let Some(r) = &report {
        run.json("picard.json", r)?;
        if !r.converged {
            run.warn(format!(
                "Picard iteration stopped after {} iterations without reaching tol = {} (last δ = {:e})",
                r.iterations,
                r.tolerance,
                r.deltas.last().copied().unwrap_or(f64::NAN)
            ));
        }
    }
    let path = run.path("ensemble.json");
    run.time("save", || fp.ensemble.save(&path))?;
    run.record(path.clone());
    run.record(path.with_extension("bin"));
    let grid = fp.ensemble.grid;
    let mut csv = String::from("node,time,loss_meanfield\n");
    for (k, l) in fp.field.losses().iter().enumerate() {
        csv.push_str(&format!("{k},{},{l}\n", grid.time(k)));
    }
    run.text("losses.csv", &csv)?;
    if fp.converged {
        let d = run.time("diagnostics", || {
            special_diagnostics(&fp, &cfg.network, &cfg.schedule, cfg.meanfield.probes)
        })?;
        run.json("diagnostics.json", &DiagnosticsReport::new(d, grid.horizon))?;
    } else {
        run.warn("diagnostics skipped: no converged fixed point");
    }
    run.finish(None)
}

fn load_fixed_point(cfg: &ExperimentConfig, path: &std::path::Path) -> Result<FixedPoint> {
    if !path.exists() {
        return Err(Error::config(
            "couple.fixed_point",
            format!("{} does not exist; write one with the meanfield command", path.display()),
        ));
    }
    let ens = PathEnsemble::load(path)?;
    if ens.grid != cfg.grid() {
        return Err(Error::Mismatch(format!(
            "{} was solved on T = {}, K = {}; the config asks for T = {}, K = {}",
            path.display(),
            ens.grid.horizon,
            ens.grid.steps,
            cfg.run.horizon,
            cfg.run.grid_steps
        )));
    }
    let data = cfg.dataset()?;
    let dynamics = Dynamics::new(&cfg.network, &data, &cfg.schedule).with_closure(cfg.meanfield.closure);
    let tol = if cfg.meanfield.tol > 0.0 { cfg.meanfield.tol } else { f64::EPSILON };
    let (fp, delta) = dynamics.certify(ens, tol)?;
    if !fp.converged {
        return Err(Error::Mismatch(format!(
            "{} is not a fixed point: one more Picard step moves it by {delta:e} > {tol:e}",
            path.display()
        )));
    }
    Ok(fp)
}

/// Terminal summaries written next to the coupling report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupleSummary {
    /// Mean `|Δz^(ℓ)|` at `T` over data and neurons, for `ℓ = 2, …, L+1`.
    pub delta_z: Vec<f64>,
    /// Mean ideal-particle gradient defect at `T/2` per trained layer `1, …, L−1`.
    pub delta_grad: Vec<f64>,
    pub gap_terminal: f64,
    pub path_errors_terminal: Vec<f64>,
}

/// SGD, CTGD and ideal particles against one fixed point.
pub fn couple(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut run = Run::start(cfg, "couple")?;
    let data = cfg.dataset()?;
    let net = &cfg.network;
    let fp = match &cfg.couple.fixed_point {
        Some(p) => run.time("load", || load_fixed_point(cfg, p))?,
        None => {
            let (fp, _) = run.time("solve", || solve_reference(cfg))?;
            if !fp.converged {
                return Err(Error::Mismatch(
                    "the mean-field solve did not converge; raise meanfield.max_iter or tol".into(),
                ));
            }
            fp
        }
    };
    let (init, spec) = cfg.seeded(cfg.seed);
    let params0 = init_params(net, &init)?;
    let sgd = run.time("sgd", || sgd_run(&params0, &data, &spec, &cfg.schedule, net))?;
    let ctgd = run.time("ctgd", || ctgd_run(&params0, &data, &spec, &cfg.schedule, net))?;
    let ideal = run.time("ideal", || build_ideal(&params0, &fp, net))?;
    let paths = sample_paths(net, cfg.couple.random_paths, cfg.seed);
    let report = run.time("report", || coupling_report(&sgd, &ctgd, &ideal, &fp, &data, net, &paths))?;
    let (csv, json) = (run.path("coupling.csv"), run.path("coupling.json"));
    report.write(&csv, &json)?;
    run.record(csv);
    run.record(json);

    let steps = fp.ensemble.grid.steps;
    let depth = net.depth;
    let summary = run.time("summary", || {
        let mut dz = vec![0.0; depth + 2];
        for (x, _) in data.points() {
            let d = delta_z(x, &ideal, steps, &fp, net)?;
            for l in 2..=depth + 1 {
                dz[l] += d[l].iter().sum::<f64>() / d[l].len() as f64 / data.len() as f64;
            }
        }
        let g = delta_grad(steps / 2, &ideal, &fp, &data, net, TimeDerivative::Drift)?;
        Ok(CoupleSummary {
            delta_z: dz[2..].to_vec(),
            delta_grad: g[1..depth].iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect(),
            gap_terminal: report.rows.last().map_or(0.0, |r| r.gap),
            path_errors_terminal: report.terminal_path_errors.clone(),
        })
    })?;
    run.json("summary.json", &summary)?;
    run.finish(None)
}

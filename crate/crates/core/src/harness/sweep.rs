use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Metric};
use super::stats::{bootstrap_slope, mean, pearson, std_dev};
use super::{commands::solve_reference, Outcome, Run};
use crate::error::{Error, Result};
use crate::ideal::{build_ideal, delta_grad, delta_z, path_error, TimeDerivative};
use crate::mckean_vlasov::FixedPoint;
use crate::net::loss_ln;
use crate::sgd::{ctgd_run, init_params, sgd_run};

pub const RESULTS_CSV_HEADER: &str = "experiment,width,step,seed,metric,value";

/// One metric at one sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub width: usize,
    pub step: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_seconds: f64,
}

pub fn experiment_id(width: usize, step: f64, seed: u64) -> String {
    format!("n{width}_eps{step}_seed{seed}")
}

/// Runs one sweep point. Point seed `s` uses master seed `seed + s`, so the
/// point with `s = 0` reproduces the single-run commands.
pub fn evaluate_point(
    cfg: &ExperimentConfig,
    reference: Option<&FixedPoint>,
    width: usize,
    step: f64,
    seed: u64,
    metrics: &[Metric],
) -> Result<Vec<f64>> {
    let net = cfg.network.with_width(width);
    let data = cfg.dataset()?;
    let (init, mut spec) = cfg.seeded(cfg.seed.wrapping_add(seed));
    spec.step = step;
    let need_ref = metrics.iter().any(|m| m.needs_reference());
    let fp = match (need_ref, reference) {
        (true, None) => return Err(Error::Unsupported("metric needs a mean-field reference".into())),
        (_, r) => r,
    };
    let params0 = init_params(&net, &init)?;
    let sgd = sgd_run(&params0, &data, &spec, &cfg.schedule, &net)?;
    let last = sgd.last();
    let ctgd = if metrics.contains(&Metric::SgdCtgd) {
        Some(ctgd_run(&params0, &data, &spec, &cfg.schedule, &net)?)
    } else {
        None
    };
    let ideal = match fp {
        Some(fp) if metrics.iter().any(|m| m.needs_ideal()) => Some(build_ideal(&params0, fp, &net)?),
        _ => None,
    };
    let depth = net.depth;
    metrics
        .iter()
        .map(|m| {
            let v = match m {
                Metric::LossSgd => loss_ln(last, &data, &net)?,
                Metric::LossGap => {
                    let fp = fp.expect("checked above");
                    let terminal = *fp.field.losses().last().expect("field has nodes");
                    (loss_ln(last, &data, &net)? - terminal).abs()
                }
                Metric::SgdCtgd => last.sub(ctgd.as_ref().expect("ran").last()).lnorm(),
                Metric::DeltaZTop => {
                    let (fp, ideal) = (fp.expect("checked"), ideal.as_ref().expect("built"));
                    let k = fp.ensemble.grid.steps;
                    let mut s = 0.0;
                    for (x, _) in data.points() {
                        s += delta_z(x, ideal, k, fp, &net)?[depth + 1][0];
                    }
                    s / data.len() as f64
                }
                Metric::DeltaGrad => {
                    let (fp, ideal) = (fp.expect("checked"), ideal.as_ref().expect("built"));
                    let g = delta_grad(fp.ensemble.grid.steps / 2, ideal, fp, &data, &net, TimeDerivative::Drift)?;
                    let trained: Vec<f64> = g[1..depth].iter().flatten().copied().collect();
                    mean(&trained)
                }
                Metric::PathErrorCanonical | Metric::PathErrorDisjoint => {
                    let ideal = ideal.as_ref().expect("built");
                    let i = usize::from(*m == Metric::PathErrorDisjoint);
                    path_error(last, ideal.nodes.last().expect("nodes"), &vec![i; depth])
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("metric {}", m.name())));
            }
            Ok(v)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub width: usize,
    pub step: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Log-log slope of a metric's seed mean along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub metric: String,
    /// `width` or `step`.
    pub axis: String,
    /// Value of the other axis.
    pub fixed: f64,
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub width: usize,
    pub step: f64,
    pub rho: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: Vec<PointSummary>,
    pub slopes: Vec<SlopeRow>,
    /// Canonical against disjoint path errors across seeds.
    pub correlations: Vec<CorrelationRow>,
}

#[derive(Serialize)]
struct Lock<'a> {
    config_hash: &'a str,
}

fn read_journal(path: &std::path::Path) -> Vec<ResultRow> {
    let Ok(mut rdr) = csv::Reader::from_path(path) else {
        return Vec::new();
    };
    // a torn last line from an interrupted run is dropped
    rdr.deserialize().filter_map(|r| r.ok()).collect()
}

/// Every (N, ε, seed) point of the sweep, resuming from `journal.csv`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::config("sweep", "the sweep command needs a `sweep` section"))?;
    let lock_path = cfg.out.join("sweep.lock");
    let hash = cfg.hash();
    if let Ok(text) = std::fs::read_to_string(&lock_path) {
        let old: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(&lock_path, e))?;
        if old["config_hash"].as_str() != Some(hash.as_str()) {
            return Err(Error::config(
                "out",
                format!("{} holds a sweep with a different config", cfg.out.display()),
            ));
        }
    }
    let mut run = Run::start(cfg, "sweep")?;
    run.json("sweep.lock", &Lock { config_hash: &hash })?;

    let mut points = Vec::new();
    for &n in &sweep.widths {
        for &e in &sweep.steps {
            for &s in &sweep.seeds {
                points.push((n, e, s));
            }
        }
    }
    let journal_path = run.path("journal.csv");
    let mut done: HashMap<String, Vec<ResultRow>> = HashMap::new();
    for r in read_journal(&journal_path) {
        done.entry(r.experiment.clone()).or_default().push(r);
    }
    let names: Vec<&str> = sweep.metrics.iter().map(|m| m.name()).collect();
    done.retain(|_, rows| {
        rows.len() == names.len() && rows.iter().zip(&names).all(|(r, n)| r.metric == *n && r.value.is_finite())
    });
    let pending: Vec<(usize, f64, u64)> = points
        .iter()
        .copied()
        .filter(|&(n, e, s)| !done.contains_key(&experiment_id(n, e, s)))
        .collect();

    let mut extra = BTreeMap::new();
    let reference = if !pending.is_empty() && sweep.metrics.iter().any(|m| m.needs_reference()) {
        let t0 = std::time::Instant::now();
        let (fp, _) = solve_reference(cfg)?;
        extra.insert("reference".to_string(), t0.elapsed().as_secs_f64());
        if !fp.converged {
            return Err(Error::Mismatch("the mean-field reference did not converge".into()));
        }
        Some(fp)
    } else {
        None
    };

    // rewrite the journal with only complete points so appends start clean
    {
        let mut w = csv::Writer::from_path(&journal_path).map_err(|e| Error::Unsupported(e.to_string()))?;
        for p in &points {
            if let Some(rows) = done.get(&experiment_id(p.0, p.1, p.2)) {
                for r in rows {
                    w.serialize(r).map_err(|e| Error::Unsupported(e.to_string()))?;
                }
            }
        }
        if done.is_empty() {
            w.write_record(["experiment", "width", "step", "seed", "metric", "value", "wall_seconds"])
                .map_err(|e| Error::Unsupported(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&journal_path, e))?;
    }
    let journal = Mutex::new(
        OpenOptions::new()
            .append(true)
            .open(&journal_path)
            .map_err(|e| Error::io(&journal_path, e))?,
    );
    let fresh: Vec<Vec<ResultRow>> = pending
        .par_iter()
        .with_max_len(1)
        .map(|&(n, e, s)| -> Result<Vec<ResultRow>> {
            let t0 = std::time::Instant::now();
            let values = evaluate_point(cfg, reference.as_ref(), n, e, s, &sweep.metrics)?;
            let wall = t0.elapsed().as_secs_f64();
            let id = experiment_id(n, e, s);
            let rows: Vec<ResultRow> = sweep
                .metrics
                .iter()
                .zip(values)
                .map(|(m, value)| ResultRow {
                    experiment: id.clone(),
                    width: n,
                    step: e,
                    seed: s,
                    metric: m.name().to_string(),
                    value,
                    wall_seconds: wall,
                })
                .collect();
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| Error::Unsupported(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Unsupported(e.to_string()))?;
            let mut f = journal.lock().expect("journal lock");
            f.write_all(&bytes).and_then(|_| f.flush()).map_err(|e| Error::io(&journal_path, e))?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    for rows in fresh {
        done.insert(rows[0].experiment.clone(), rows);
    }

    let ordered: Vec<&ResultRow> = points
        .iter()
        .flat_map(|p| done[&experiment_id(p.0, p.1, p.2)].iter())
        .collect();
    let mut csv = String::from(RESULTS_CSV_HEADER);
    csv.push('\n');
    let mut journal_csv = String::from("experiment,width,step,seed,metric,value,wall_seconds\n");
    for r in &ordered {
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.experiment, r.width, r.step, r.seed, r.metric, r.value));
        journal_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.experiment, r.width, r.step, r.seed, r.metric, r.value, r.wall_seconds
        ));
    }
    run.text("results.csv", &csv)?;
    run.text("journal.csv", &journal_csv)?;
    let summary = summarize(&ordered, &sweep.widths, &sweep.steps, &sweep.metrics, sweep.bootstrap, cfg.seed, &mut run);
    run.json("summary.json", &summary)?;
    extra.insert(
        "points".to_string(),
        ordered.iter().step_by(names.len()).map(|r| r.wall_seconds).sum(),
    );
    run.finish(Some(extra))
}

fn summarize(
    rows: &[&ResultRow],
    widths: &[usize],
    steps: &[f64],
    metrics: &[Metric],
    resamples: usize,
    seed: u64,
    run: &mut Run,
) -> SweepSummary {
    let values = |n: usize, e: f64, m: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.width == n && r.step == e && r.metric == m)
            .map(|r| r.value)
            .collect()
    };
    let mut points = Vec::new();
    for &n in widths {
        for &e in steps {
            for m in metrics {
                let v = values(n, e, m.name());
                points.push(PointSummary {
                    width: n,
                    step: e,
                    metric: m.name().to_string(),
                    mean: mean(&v),
                    std: std_dev(&v),
                    count: v.len(),
                });
            }
        }
    }
    let mut slopes = Vec::new();
    for m in metrics {
        let name = m.name();
        if widths.len() >= 2 {
            for &e in steps {
                let xs: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
                let samples: Vec<Vec<f64>> = widths.iter().map(|&n| values(n, e, name)).collect();
                push_slope(&mut slopes, run, name, "width", e, &xs, &samples, resamples, seed);
            }
        }
        if steps.len() >= 2 {
            for &n in widths {
                let samples: Vec<Vec<f64>> = steps.iter().map(|&e| values(n, e, name)).collect();
                push_slope(&mut slopes, run, name, "step", n as f64, steps, &samples, resamples, seed);
            }
        }
    }
    let mut correlations = Vec::new();
    if metrics.contains(&Metric::PathErrorCanonical) && metrics.contains(&Metric::PathErrorDisjoint) {
        for &n in widths {
            for &e in steps {
                let a = values(n, e, Metric::PathErrorCanonical.name());
                let b = values(n, e, Metric::PathErrorDisjoint.name());
                if let Ok(rho) = pearson(&a, &b) {
                    correlations.push(CorrelationRow {
                        width: n,
                        step: e,
                        rho,
                        count: a.len(),
                    });
                }
            }
        }
    }
    SweepSummary {
        points,
        slopes,
        correlations,
    }
}

#[allow(clippy::too_many_arguments)]
fn push_slope(
    out: &mut Vec<SlopeRow>,
    run: &mut Run,
    metric: &str,
    axis: &str,
    fixed: f64,
    xs: &[f64],
    samples: &[Vec<f64>],
    resamples: usize,
    seed: u64,
) {
    match bootstrap_slope(xs, samples, resamples, seed) {
        Ok(s) => out.push(SlopeRow {
            metric: metric.to_string(),
            axis: axis.to_string(),
            fixed,
            slope: s.slope,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            resamples: s.resamples,
        }),
        Err(e) => run.warn(format!("no {axis} slope for {metric} at {fixed}: {e}")),
    }
}

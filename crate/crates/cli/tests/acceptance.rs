//! The eleven acceptance criteria. Each test prints one PASS/FAIL line to
//! stderr, uncaptured, and then asserts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use deepmf::backprop::{adjoints, grad_hat, grad_loss, grad_yhat};
use deepmf::harness::{self, evaluate_point, stats, ExperimentConfig, Metric, Solver, TIMING_FILES};
use deepmf::ideal::build_ideal;
use deepmf::linalg::{self, Mat};
use deepmf::mckean_vlasov::{special_diagnostics, Dynamics, FixedPoint};
use deepmf::meanfield::{gammabar, gradbar, loss_bar, mean_field_trace, sample_ensemble, EnsembleCounts, PathPoint};
use deepmf::sgd::{ctgd_run, init_params, sgd_run, InitFamily, InitSpec};
use deepmf::{forward, loss_ln, ForwardTrace, NetworkConfig, OutputActivation, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, what: &str, pass: bool, detail: &str, secs: f64, budget: f64) -> bool {
    let ok = pass && secs <= budget;
    let line = format!(
        "{} criterion {id:>2} {what}: {detail} [{secs:.1} s, budget {budget:.0} s]\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    ok
}

fn desk() -> ExperimentConfig {
    ExperimentConfig::desk()
}

/// Fine fixed point shared by the width and chaos criteria.
fn reference() -> &'static (ExperimentConfig, FixedPoint) {
    static REF: OnceLock<(ExperimentConfig, FixedPoint)> = OnceLock::new();
    REF.get_or_init(|| {
        let mut cfg = desk();
        cfg.meanfield.counts = EnsembleCounts {
            paths: 1024,
            columns: 1024,
            fibers: 256,
        };
        cfg.meanfield.solver = Solver::Forward;
        let (fp, _) = harness::solve_reference(&cfg).expect("reference solve");
        (cfg, fp)
    })
}

fn random_params(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> ParamVector {
    let mut p = ParamVector::zeros(cfg);
    for layer in &mut p.layers {
        for v in &mut layer.values {
            *v = rng.gen_range(-1.2..1.2);
        }
    }
    p
}

fn enumerate_adjoint(t: &ForwardTrace, p: &ParamVector, cfg: &NetworkConfig, l: usize, i: usize) -> Mat {
    fn walk(t: &ForwardTrace, p: &ParamVector, cfg: &NetworkConfig, l: usize, i: usize, right: Mat, acc: &mut Mat) {
        let depth = cfg.depth;
        for j in 0..cfg.neurons(l + 1) {
            let prod = cfg.hidden(l).jac_z(t.neuron(l, i), p.edge(l, i, j)).matmul(&right);
            if l == depth {
                acc.add_scaled(&cfg.output.jacobian(&t.z[depth + 1]).matmul(&prod), 1.0);
            } else {
                walk(t, p, cfg, l + 1, j, prod, acc);
            }
        }
    }
    let depth = cfg.depth;
    if l == depth + 1 {
        return cfg.output.jacobian(&t.z[depth + 1]);
    }
    let mut acc = Mat::zeros(cfg.dims[depth + 1], cfg.dims[l]);
    walk(t, p, cfg, l, i, Mat::identity(cfg.dims[l]), &mut acc);
    let tails: usize = (l + 1..=depth).map(|k| cfg.neurons(k)).product();
    acc.scale(1.0 / tails as f64);
    acc
}

#[test]
fn c01_backprop_oracles() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut adj_err: f64 = 0.0;
    for n in 1..=3 {
        for d in 1..=2 {
            for output in [OutputActivation::Identity, OutputActivation::Tanh] {
                let mut cfg = NetworkConfig::uniform(3, n, d, d, d);
                cfg.output = output;
                let p = random_params(&cfg, &mut rng);
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let t = forward(&x, &p, &cfg).unwrap();
                let adj = adjoints(&t, &p, &cfg).unwrap();
                for l in 1..=4 {
                    for i in 0..cfg.neurons(l) {
                        adj_err = adj_err.max(adj.get(l, i).max_abs_diff(&enumerate_adjoint(&t, &p, &cfg, l, i)));
                    }
                }
            }
        }
    }
    let h = 1e-5;
    let mut fd_err: f64 = 0.0;
    let mut instances = 0;
    for _ in 0..24 {
        let n = rng.gen_range(1..=3);
        let d = rng.gen_range(1..=2);
        let cfg = NetworkConfig::uniform(3, n, d, d, d);
        let p = random_params(&cfg, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = forward(&x, &p, &cfg).unwrap();
        let jac = grad_yhat(&t, &adjoints(&t, &p, &cfg).unwrap(), &p, &cfg);
        for l in 0..=3 {
            let scale = 1.0 / (cfg.neurons(l) * cfg.neurons(l + 1)) as f64;
            let (i, j) = (rng.gen_range(0..cfg.neurons(l)), rng.gen_range(0..cfg.neurons(l + 1)));
            let m = jac.get(l, i, j);
            for k in 0..cfg.param_dim(l) {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.edge_mut(l, i, j)[k] += h;
                pm.edge_mut(l, i, j)[k] -= h;
                let yp = forward(&x, &pp, &cfg).unwrap().yhat;
                let ym = forward(&x, &pm, &cfg).unwrap().yhat;
                for r in 0..d {
                    let fd = (yp[r] - ym[r]) / (2.0 * h);
                    let an = scale * m.get(r, k);
                    fd_err = fd_err.max((fd - an).abs() / an.abs().max(1e-3));
                }
            }
        }
        instances += 1;
    }
    let pass = adj_err < 1e-12 && fd_err < 1e-6 && instances >= 20;
    let detail = format!("adjoint vs enumeration {adj_err:.2e} (< 1e-12), jacobian vs FD rel {fd_err:.2e} (< 1e-6) on {instances} nets");
    assert!(report(1, "backprop oracles", pass, &detail, t0.elapsed().as_secs_f64(), 10.0));
}

#[test]
fn c02_average_gradient_identity() {
    let t0 = Instant::now();
    let cfg = desk();
    let data = cfg.dataset().unwrap();
    let net = &cfg.network;
    let p = init_params(net, &cfg.seeded(cfg.seed).0).unwrap();
    let mut mean = ParamVector::zeros(net);
    for b in 0..data.len() {
        mean.axpy(data.weight(b), &grad_hat(data.x(b), data.y(b), &p, net).unwrap());
    }
    let n2 = (net.width * net.width) as f64;
    // N²∇L_N from the per-edge output Jacobians, summed in the same order
    let mut scaled = ParamVector::zeros(net);
    for b in 0..data.len() {
        let t = forward(data.x(b), &p, net).unwrap();
        let jac = grad_yhat(&t, &adjoints(&t, &p, net).unwrap(), &p, net);
        let r: Vec<f64> = t.yhat.iter().zip(data.y(b)).map(|(a, y)| a - y).collect();
        for l in 1..net.depth {
            let scale = n2 / (net.neurons(l) * net.neurons(l + 1)) as f64;
            for i in 0..net.width {
                for j in 0..net.width {
                    let g = jac.get(l, i, j).vecmat(&r);
                    linalg::axpy(scaled.edge_mut(l, i, j), data.weight(b) * scale, &g);
                }
            }
        }
    }
    let lib = grad_loss(&p, &data, net).unwrap();
    let diff = mean.max_abs_diff(&scaled).max(mean.max_abs_diff(&lib));
    // a finite-difference spot check of the N² scaling itself
    let h = 1e-5;
    let (mut pp, mut pm) = (p.clone(), p.clone());
    pp.edge_mut(2, 3, 5)[1] += h;
    pm.edge_mut(2, 3, 5)[1] -= h;
    let fd = n2 * (loss_ln(&pp, &data, net).unwrap() - loss_ln(&pm, &data, net).unwrap()) / (2.0 * h);
    let rel = (fd - mean.edge(2, 3, 5)[1]).abs() / fd.abs().max(1e-3);
    let pass = diff < 1e-12 && rel < 1e-5;
    let detail = format!("max |mean grad_hat − N²∇L_N| = {diff:.2e} (< 1e-12), FD spot check rel {rel:.1e}");
    assert!(report(2, "average-gradient identity", pass, &detail, t0.elapsed().as_secs_f64(), 1.0));
}

#[test]
fn c03_structural_exactness() {
    let t0 = Instant::now();
    let mut cfg = desk();
    cfg.network.width = 8;
    cfg.meanfield.counts = EnsembleCounts::uniform(12);
    let net = &cfg.network;
    let data = cfg.dataset().unwrap();
    let depth = net.depth;
    let (init, spec) = cfg.seeded(3);
    let p0 = init_params(net, &init).unwrap();
    let mut frozen = true;

    let sgd = sgd_run(&p0, &data, &spec, &cfg.schedule, net).unwrap();
    let ctgd = ctgd_run(&p0, &data, &spec, &cfg.schedule, net).unwrap();
    for p in sgd.checkpoints.iter().chain(&ctgd.checkpoints) {
        frozen &= p.layers[0] == p0.layers[0] && p.layers[depth] == p0.layers[depth];
    }

    let dynamics = Dynamics::new(net, &data, &cfg.schedule);
    let mut ens = sample_ensemble(net, &init, cfg.grid(), cfg.meanfield.counts).unwrap();
    // equal starts: a middle pair, an (input, first) pair and a fiber pair
    let d2 = ens.param_dims[2];
    let (d0, d1, df) = (ens.param_dims[0], ens.param_dims[1], ens.param_dims[depth - 1]);
    let f = ens.counts.fibers;
    for node in ens.nodes.iter_mut() {
        let m = node.middle[0][..d2].to_vec();
        node.middle[0][3 * d2..4 * d2].copy_from_slice(&m);
        let (a, b) = (node.input[..d0].to_vec(), node.first[..d1].to_vec());
        node.input[2 * d0..3 * d0].copy_from_slice(&a);
        node.first[2 * d1..3 * d1].copy_from_slice(&b);
        for j in 0..ens.counts.columns {
            let src = node.fibers[j * f * df..(j * f + 1) * df].to_vec();
            node.fibers[(j * f + 5) * df..(j * f + 6) * df].copy_from_slice(&src);
        }
    }
    let src = ens.fiber_init[..df].to_vec();
    ens.fiber_init[5 * df..6 * df].copy_from_slice(&src);
    let out = dynamics.psi(&ens).unwrap();
    let mut same = true;
    for node in &out.nodes {
        frozen &= node.input == ens.nodes[0].input && node.last == ens.nodes[0].last;
        same &= node.middle_weight(2, 0) == node.middle_weight(2, 3);
        same &= node.first_weight(0) == node.first_weight(2);
        same &= (0..ens.counts.columns).all(|j| node.fiber(0, j) == node.fiber(5, j));
    }
    let moved = out.terminal().middle_weight(2, 0) != ens.nodes[0].middle_weight(2, 0);

    let fp = dynamics.forward_solve(&sample_ensemble(net, &init, cfg.grid(), cfg.meanfield.counts).unwrap()).unwrap();
    let ideal = build_ideal(&p0, &fp, net).unwrap();
    for p in &ideal.nodes {
        frozen &= p.layers[0] == p0.layers[0] && p.layers[depth] == p0.layers[depth];
    }

    let mut perm_err: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for l in 1..=depth {
        let mut perm: Vec<usize> = (0..net.width).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let q = p0.permute_hidden_layer(l, &perm).unwrap();
        for (x, _) in data.points() {
            let a = forward(x, &p0, net).unwrap().yhat;
            let b = forward(x, &q, net).unwrap().yhat;
            perm_err = perm_err.max(linalg::dist(&a, &b));
        }
    }
    let pass = frozen && same && moved && perm_err < 1e-12;
    let detail = format!(
        "frozen layers bit-exact: {frozen}, equal starts bit-identical: {same}, permutation |Δŷ| = {perm_err:.1e} (< 1e-12)"
    );
    assert!(report(3, "structural exactness", pass, &detail, t0.elapsed().as_secs_f64(), 5.0));
}

#[test]
fn c04_dirac_collapse() {
    let t0 = Instant::now();
    let mut cfg = desk();
    cfg.init = InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.5, std: 0.0 }, 0);
    let data = cfg.dataset().unwrap();
    let one = cfg.network.with_width(1);
    let init = cfg.seeded(cfg.seed).0;
    let p = init_params(&one, &init).unwrap();
    let ens = sample_ensemble(&cfg.network, &init, cfg.grid(), cfg.meanfield.counts).unwrap();
    let snap = ens.initial();
    let depth = one.depth;
    let closure = cfg.meanfield.closure;
    let mut err: f64 = 0.0;
    for (x, y) in data.points() {
        let fw = forward(x, &p, &one).unwrap();
        let adj = adjoints(&fw, &p, &one).unwrap();
        let jac = grad_yhat(&fw, &adj, &p, &one);
        let t = mean_field_trace(x, snap, &one, closure).unwrap();
        for l in 2..depth {
            err = err.max(linalg::dist(t.zbar(l), &fw.z[l]));
            err = err.max(t.m(l).max_abs_diff(&adj.get(l, 0)));
        }
        err = err.max(linalg::dist(t.column(0), &fw.z[depth]));
        err = err.max(t.m_columns[0].max_abs_diff(&adj.get(depth, 0)));
        err = err.max(linalg::dist(&t.ybar, &fw.yhat));
        let point = PathPoint::from_snapshot(snap, 0, &vec![0; depth], 0, 0);
        let gammas = gammabar(&point, &t, snap, &one).unwrap();
        for l in 1..depth {
            err = err.max(gammas[l].as_ref().unwrap().max_abs_diff(&jac.get(l, 0, 0)));
        }
        let g = gradbar(x, y, &point, snap, &one, closure).unwrap();
        let gh = grad_hat(x, y, &p, &one).unwrap();
        for l in 0..=depth {
            err = err.max(linalg::dist(&g[l], gh.edge(l, 0, 0)));
        }
    }
    let loss = (loss_bar(snap, &data, &one).unwrap() - loss_ln(&p, &data, &one).unwrap()).abs();
    err = err.max(loss);
    let pass = err < 1e-12;
    let detail = format!("max deviation of z̄, M̄, Γ̄, gradbar, L̄ from the N = 1 net: {err:.1e} (< 1e-12)");
    assert!(report(4, "Dirac collapse", pass, &detail, t0.elapsed().as_secs_f64(), 1.0));
}

#[test]
fn c05_picard_contraction() {
    let t0 = Instant::now();
    let cfg = desk();
    let (fp, rep) = harness::solve_reference(&cfg).unwrap();
    let rep = rep.expect("picard report");
    let d = &rep.deltas;
    let ratio = if d.len() >= 4 { d[3] / d[0] } else { 0.0 };
    let contracted = d.len() < 4 && rep.converged || ratio < 0.05;
    let pass = contracted && rep.converged && rep.iterations <= 20 && rep.tolerance == 1e-6 && fp.converged;
    let detail = format!(
        "δ_4/δ_1 = {ratio:.2e} (< 0.05), converged to 1e-6 in {} iterations (≤ 20), δ = {:?}",
        rep.iterations,
        d.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
    );
    assert!(report(5, "Picard contraction", pass, &detail, t0.elapsed().as_secs_f64(), 60.0));
}

fn seed_means(cfg: &ExperimentConfig, fp: Option<&FixedPoint>, widths: &[usize], steps: &[f64], seeds: u64, metrics: &[Metric]) -> Vec<Vec<Vec<f64>>> {
    // [metric][axis point][seed]
    let mut out = vec![Vec::new(); metrics.len()];
    for &n in widths {
        for &e in steps {
            let mut per = vec![Vec::new(); metrics.len()];
            for s in 0..seeds {
                let v = evaluate_point(cfg, fp, n, e, s, metrics).unwrap();
                for (m, x) in v.into_iter().enumerate() {
                    per[m].push(x);
                }
            }
            for (m, p) in per.into_iter().enumerate() {
                out[m].push(p);
            }
        }
    }
    out
}

#[test]
fn c06_loss_gap_width_scaling() {
    let t0 = Instant::now();
    let (cfg, fp) = reference();
    let widths = [8usize, 16, 32, 64];
    let samples = &seed_means(cfg, Some(fp), &widths, &[0.01], 20, &[Metric::LossGap])[0];
    let xs: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
    let est = stats::bootstrap_slope(&xs, samples, 1000, 0).unwrap();
    let means: Vec<String> = samples.iter().map(|s| format!("{:.4}", stats::mean(s))).collect();
    let pass = (-0.8..=-0.2).contains(&est.slope);
    let detail = format!(
        "slope {:.3} in [-0.8, -0.2] (95% CI [{:.3}, {:.3}]), means {means:?} over 20 seeds",
        est.slope, est.ci_low, est.ci_high
    );
    assert!(report(6, "loss-gap N-scaling", pass, &detail, t0.elapsed().as_secs_f64(), 900.0));
}

#[test]
fn c07_sgd_ctgd_step_scaling() {
    let t0 = Instant::now();
    let cfg = desk();
    let steps = [0.04, 0.02, 0.01, 0.005];
    let samples = &seed_means(&cfg, None, &[32], &steps, 10, &[Metric::SgdCtgd])[0];
    let est = stats::bootstrap_slope(&steps, samples, 1000, 0).unwrap();
    let means: Vec<String> = samples.iter().map(|s| format!("{:.4}", stats::mean(s))).collect();
    let pass = (0.4..=1.1).contains(&est.slope);
    let detail = format!(
        "slope {:.3} in [0.4, 1.1] (95% CI [{:.3}, {:.3}]), means {means:?} over 10 seeds",
        est.slope, est.ci_low, est.ci_high
    );
    assert!(report(7, "SGD-to-CTGD ε-scaling", pass, &detail, t0.elapsed().as_secs_f64(), 600.0));
}

#[test]
fn c08_activation_width_scaling() {
    let t0 = Instant::now();
    let (cfg, fp) = reference();
    let widths = [8usize, 16, 32, 64, 128];
    let samples = &seed_means(cfg, Some(fp), &widths, &[0.01], 10, &[Metric::DeltaZTop])[0];
    let xs: Vec<f64> = widths.iter().map(|&n| n as f64).collect();
    let est = stats::bootstrap_slope(&xs, samples, 1000, 0).unwrap();
    let means: Vec<String> = samples.iter().map(|s| format!("{:.4}", stats::mean(s))).collect();
    let pass = (-0.8..=-0.2).contains(&est.slope);
    let detail = format!(
        "slope {:.3} in [-0.8, -0.2] (95% CI [{:.3}, {:.3}]), means {means:?} over 10 seeds",
        est.slope, est.ci_low, est.ci_high
    );
    assert!(report(8, "|Δz^(L+1)| N-scaling", pass, &detail, t0.elapsed().as_secs_f64(), 600.0));
}

#[test]
fn c09_special_diagnostics() {
    let t0 = Instant::now();
    let cfg = desk();
    let (fp, _) = harness::solve_reference(&cfg).unwrap();
    let d = special_diagnostics(&fp, &cfg.network, &cfg.schedule, cfg.meanfield.probes).unwrap();
    let r = harness::DiagnosticsReport::new(d, cfg.run.horizon);
    let s0 = r.diagnostics.sensitivity[0];
    let st = *r.diagnostics.sensitivity.last().unwrap();
    let pass = r.starts_at_one && r.growth_within_bound && r.increments_within_bound;
    let detail = format!(
        "s(0) = {s0:.12}, log s(T) = {:.3e} ≤ R·T = {:.3e}, R̂ = {:.3} ≤ R = {:.3e}, monotone: {}",
        st.ln(),
        r.diagnostics.lipschitz_bound * cfg.run.horizon,
        r.diagnostics.lipschitz_estimate,
        r.diagnostics.lipschitz_bound,
        r.monotone
    );
    assert!(report(9, "R-special diagnostics", pass, &detail, t0.elapsed().as_secs_f64(), 30.0));
}

#[test]
fn c10_propagation_of_chaos() {
    let t0 = Instant::now();
    let (cfg, fp) = reference();
    let metrics = [Metric::PathErrorCanonical, Metric::PathErrorDisjoint];
    let s = seed_means(cfg, Some(fp), &[64], &[0.01], 30, &metrics);
    let rho = stats::pearson(&s[0][0], &s[1][0]).unwrap();
    let pass = rho.abs() <= 0.2;
    let detail = format!(
        "ρ = {rho:.3} (|ρ| ≤ 0.2) between paths (0,0,0,0) and (1,1,1,1) over 30 seeds, mean errors {:.4} / {:.4}",
        stats::mean(&s[0][0]),
        stats::mean(&s[1][0])
    );
    assert!(report(10, "propagation of chaos", pass, &detail, t0.elapsed().as_secs_f64(), 600.0));
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn c11_cli_determinism() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = desk();
    cfg.network.width = 8;
    cfg.meanfield.counts = EnsembleCounts::uniform(16);
    cfg.couple.fixed_point = Some(tmp.path().join("meanfield_a/ensemble.json"));
    cfg.sweep = Some(harness::SweepSpec {
        widths: vec![4, 8],
        steps: vec![0.02, 0.01],
        seeds: vec![0, 1, 2],
        metrics: Metric::ALL.to_vec(),
        bootstrap: 200,
    });
    cfg.out = tmp.path().join("unused");
    let config = tmp.path().join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for cmd in ["meanfield", "train", "couple", "sweep"] {
        for run in ["a", "b"] {
            let status = Command::new(env!("CARGO_BIN_EXE_deepmf"))
                .args([cmd, "--threads", "1", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(tmp.path().join(format!("{cmd}_{run}")))
                .output()
                .unwrap();
            assert!(status.status.success(), "{cmd}: {}", String::from_utf8_lossy(&status.stderr));
        }
        let (a, b) = (tmp.path().join(format!("{cmd}_a")), tmp.path().join(format!("{cmd}_b")));
        let (fa, fb) = (files(&a), files(&b));
        let rel = |v: &[PathBuf], root: &Path| v.iter().map(|p| p.strip_prefix(root).unwrap().to_path_buf()).collect::<Vec<_>>();
        if rel(&fa, &a) != rel(&fb, &b) {
            mismatches.push(format!("{cmd}: file sets differ"));
            continue;
        }
        for (x, y) in fa.iter().zip(&fb) {
            let name = x.file_name().unwrap().to_str().unwrap();
            if TIMING_FILES.contains(&name) {
                continue;
            }
            compared += 1;
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                mismatches.push(format!("{cmd}: {}", x.strip_prefix(&a).unwrap().display()));
            }
        }
    }
    let pass = mismatches.is_empty() && compared > 20;
    let detail = format!("{compared} files byte-compared across two single-threaded runs of 4 commands, mismatches {mismatches:?}");
    assert!(report(11, "CLI determinism", pass, &detail, t0.elapsed().as_secs_f64(), 120.0));
}

#[test]
fn exchangeable_initial_coordinates() {
    // first-layer coordinates of two different neurons share one law
    let cfg = desk();
    let p = init_params(&cfg.network.with_width(400), &cfg.seeded(1).0).unwrap();
    let a: Vec<f64> = (0..400).map(|j| p.edge(1, 0, j)[0]).collect();
    let b: Vec<f64> = (0..400).map(|j| p.edge(1, 7, j)[0]).collect();
    // 1% critical value for n = m = 400
    assert!(stats::ks_statistic(&a, &b) < 1.63 * (2.0 / 400.0f64).sqrt());
}

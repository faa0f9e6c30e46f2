use deepmf::backprop::{grad_hat, grad_loss};
use deepmf::harness::{stats, ExperimentConfig};
use deepmf::mckean_vlasov::{ensemble_distance, psi, wasserstein_1d};
use deepmf::meanfield::{loss_bar, sample_ensemble, EnsembleCounts, MeasureSnapshot, TimeGrid};
use deepmf::sgd::{init_params, sgd_run, InitFamily, InitSpec, LRSchedule, RunSpec};
use deepmf::{forward, loss_ln, DataDistribution, NetworkConfig, ParamVector};
use proptest::prelude::*;

fn net(depth: usize, width: usize, seed: u64, std: f64) -> (NetworkConfig, ParamVector) {
    let cfg = NetworkConfig::uniform(depth, width, 1, 2, 1);
    let init = InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.3, std }, seed);
    let p = init_params(&cfg, &init).unwrap();
    (cfg, p)
}

fn small_ensemble(seed: u64, m: usize) -> (NetworkConfig, deepmf::meanfield::PathEnsemble) {
    let cfg = NetworkConfig::uniform(4, 1, 1, 2, 1);
    let init = InitSpec::uniform_across_layers(InitFamily::Gaussian { mean: 0.5, std: 1.0 }, seed);
    let ens = sample_ensemble(&cfg, &init, TimeGrid::new(0.2, 4).unwrap(), EnsembleCounts::uniform(m)).unwrap();
    (cfg, ens)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permuting_hidden_neurons_keeps_the_output(
        seed in 0u64..1000,
        width in 1usize..6,
        layer in 1usize..=4,
        x in -1.0f64..1.0,
        shuffle in any::<u64>(),
    ) {
        let (cfg, p) = net(4, width, seed, 1.0);
        let mut perm: Vec<usize> = (0..width).collect();
        let mut s = shuffle;
        for i in (1..width).rev() {
            perm.swap(i, (s % (i as u64 + 1)) as usize);
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        }
        let q = p.permute_hidden_layer(layer, &perm).unwrap();
        let a = forward(&[x], &p, &cfg).unwrap().yhat;
        let b = forward(&[x], &q, &cfg).unwrap().yhat;
        prop_assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn grad_hat_freezes_outer_layers(seed in 0u64..1000, width in 1usize..5, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (cfg, p) = net(4, width, seed, 1.0);
        let g = grad_hat(&[x], &[y], &p, &cfg).unwrap();
        prop_assert!(g.layers[0].values.iter().all(|&v| v == 0.0));
        prop_assert!(g.layers[4].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dataset_gradient_is_weighted_mean_of_point_gradients(seed in 0u64..1000, width in 1usize..5, points in 2usize..7) {
        let (cfg, p) = net(3, width, seed, 1.0);
        let data = DataDistribution::sine(points).unwrap();
        let mut mean = ParamVector::zeros(&cfg);
        for b in 0..data.len() {
            mean.axpy(data.weight(b), &grad_hat(data.x(b), data.y(b), &p, &cfg).unwrap());
        }
        prop_assert!(mean.max_abs_diff(&grad_loss(&p, &data, &cfg).unwrap()) < 1e-12);
    }

    #[test]
    fn dirac_measure_reproduces_the_single_neuron_loss(seed in 0u64..1000, m in 1usize..5) {
        let (cfg, p) = net(4, 1, seed, 0.8);
        let path: Vec<&[f64]> = (0..=4).map(|l| p.edge(l, 0, 0)).collect();
        let snap = MeasureSnapshot::dirac(&path, EnsembleCounts::uniform(m));
        let data = DataDistribution::sine(5).unwrap();
        let a = loss_bar(&snap, &data, &cfg).unwrap();
        let b = loss_ln(&p, &data, &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sgd_is_seed_deterministic(seed in 0u64..1000, run_seed in 0u64..1000) {
        let (cfg, p) = net(3, 3, seed, 1.0);
        let data = DataDistribution::sine(4).unwrap();
        let spec = RunSpec::new(0.1, 0.02, 5, run_seed);
        let sched = LRSchedule::Constant { value: 1.0 };
        let a = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        let b = sgd_run(&p, &data, &spec, &sched, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn wasserstein_is_a_metric_on_the_line(
        a in prop::collection::vec(-5.0f64..5.0, 6),
        b in prop::collection::vec(-5.0f64..5.0, 6),
        c in prop::collection::vec(-5.0f64..5.0, 6),
        shift in -3.0f64..3.0,
    ) {
        let ab = wasserstein_1d(&a, &b).unwrap();
        prop_assert!((ab - wasserstein_1d(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(wasserstein_1d(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= wasserstein_1d(&a, &c).unwrap() + wasserstein_1d(&c, &b).unwrap() + 1e-12);
        let moved: Vec<f64> = a.iter().map(|v| v + shift).collect();
        prop_assert!((wasserstein_1d(&a, &moved).unwrap() - shift.abs()).abs() < 1e-12);
    }

    #[test]
    fn ensemble_distance_is_symmetric_and_zero_on_the_diagonal(seed in 0u64..100, rate in 0.1f64..2.0) {
        let (cfg, a) = small_ensemble(seed, 3);
        let data = DataDistribution::sine(4).unwrap();
        let b = psi(&a, &data, &LRSchedule::Constant { value: rate }, &cfg).unwrap();
        let d = ensemble_distance(&a, &b).unwrap();
        prop_assert_eq!(ensemble_distance(&a, &a).unwrap(), 0.0);
        prop_assert!((d - ensemble_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(d > 0.0);
    }

    #[test]
    fn psi_keeps_initial_values_and_frozen_blocks(seed in 0u64..100, rate in 0.0f64..2.0) {
        let (cfg, ens) = small_ensemble(seed, 3);
        let data = DataDistribution::sine(4).unwrap();
        let out = psi(&ens, &data, &LRSchedule::Constant { value: rate }, &cfg).unwrap();
        prop_assert_eq!(&out.nodes[0], &ens.nodes[0]);
        for node in &out.nodes {
            prop_assert_eq!(&node.input, &ens.nodes[0].input);
            prop_assert_eq!(&node.last, &ens.nodes[0].last);
        }
    }

    #[test]
    fn loglog_slope_recovers_exponents(c in 0.1f64..10.0, k in -2.0f64..2.0) {
        let xs = [2.0, 4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| c * x.powf(k)).collect();
        prop_assert!((stats::loglog_slope(&xs, &ys).unwrap() - k).abs() < 1e-10);
    }

    #[test]
    fn config_round_trips_through_json(seed in any::<u64>(), width in 1usize..100, tol in 0.0f64..1.0) {
        let mut cfg = ExperimentConfig::desk();
        cfg.seed = seed;
        cfg.network.width = width;
        cfg.meanfield.tol = tol;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

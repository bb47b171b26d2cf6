use plantbench_core::data::gen_circle;
use plantbench_core::net::TargetBatch;
use plantbench_core::pruning::{
    edge_popup, edge_popup_keep_fraction, hessian_gradient_product, layer_quotas, multishot,
    schedule_density, score, score_synflow, select_mask, singleshot, EdgePopupOptions, Method,
    MultishotOptions, Scope, SingleshotOptions,
};
use plantbench_core::train::TrainConfig;
use plantbench_core::{rng_from_seed, Architecture, InitSpec, LossKind, MaskedMLP, Params};
use proptest::prelude::*;
use rand::Rng;

fn net(widths: Vec<usize>, seed: u64) -> MaskedMLP {
    let a = Architecture::new(widths).unwrap();
    MaskedMLP::new(a.clone(), &InitSpec::constant(&a, 1.0, seed)).unwrap()
}

fn rel_err(a: &Params, b: &Params) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / b.norm().max(1e-12)
}

#[test]
fn hessian_product_matches_the_closed_form_of_a_linear_least_squares_loss() {
    // One linear layer with one output: L = mean_s (w·x_s + b − y_s)², so
    // H = (2/n) Σ_s z_s z_sᵀ with z = (x, 1), independent of θ.
    let n_in = 4;
    let m = net(vec![n_in, 1], 3);
    let mut rng = rng_from_seed(5);
    let n = 12;
    let xs: Vec<f64> = (0..n * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = TargetBatch::Values(&ys);
    let (_, g) = m.loss_and_grad(&xs, t, LossKind::Mse).unwrap();
    let g: Vec<f64> = g.iter().copied().collect();
    let z = |s: usize, i: usize| if i < n_in { xs[s * n_in + i] } else { 1.0 };
    let dim = n_in + 1;
    let mut want = Params::zeros(m.arch());
    for (i, w) in want.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, gj) in g.iter().enumerate().take(dim) {
            let h: f64 = (0..n).map(|s| z(s, i) * z(s, j)).sum::<f64>() * 2.0 / n as f64;
            acc += h * gj;
        }
        *w = acc;
    }
    let got = hessian_gradient_product(&m, &xs, t, LossKind::Mse).unwrap();
    assert!(rel_err(&got, &want) < 1e-3, "{}", rel_err(&got, &want));
}

#[test]
fn hessian_product_matches_a_gradient_difference_on_a_deep_network() {
    let m = net(vec![2, 8, 8, 4], 11);
    let d = gen_circle(32, 0.0, 2).unwrap();
    let (xs, t) = d.batch(0, 32);
    let kind = LossKind::SoftmaxCrossEntropy;
    let (_, g) = m.loss_and_grad(xs, t, kind).unwrap();
    let h = 1e-6;
    let mut plus = m.clone();
    plus.params_mut().axpy(h, &g);
    let mut minus = m.clone();
    minus.params_mut().axpy(-h, &g);
    let (_, gp) = plus.loss_and_grad(xs, t, kind).unwrap();
    let (_, gm) = minus.loss_and_grad(xs, t, kind).unwrap();
    let mut want = gp;
    want.axpy(-1.0, &gm);
    want.iter_mut().for_each(|v| *v /= 2.0 * h);
    let got = hessian_gradient_product(&m, xs, t, kind).unwrap();
    assert!(rel_err(&got, &want) < 1e-3, "{}", rel_err(&got, &want));
}

#[test]
fn synflow_needs_no_data() {
    let m = net(vec![2, 10, 10, 4], 1);
    let without = score(Method::Synflow, &m, None, 32, 0).unwrap();
    let d = gen_circle(64, 0.0, 1).unwrap();
    let with = score(Method::Synflow, &m, Some(&d), 32, 99).unwrap();
    assert_eq!(without, with);
    assert_eq!(without, score_synflow(&m));
    assert!(score(Method::Snip, &m, None, 32, 0).is_err());
    assert!(score(Method::Grasp, &m, None, 32, 0).is_err());
}

#[test]
fn every_strategy_is_deterministic() {
    let m = net(vec![2, 12, 12, 4], 4);
    let d = gen_circle(200, 0.01, 3).unwrap();
    for method in Method::ALL {
        let opts = SingleshotOptions {
            seed: 8,
            synflow_iterations: 3,
            ..SingleshotOptions::default()
        };
        let a = singleshot(&m, method, 0.2, Some(&d), &opts).unwrap();
        assert_eq!(a, singleshot(&m, method, 0.2, Some(&d), &opts).unwrap(), "{method}");
    }
    let opts = MultishotOptions {
        rounds: 3,
        train: TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
        seed: 2,
        ..MultishotOptions::default()
    };
    let a = multishot(&m, Method::Magnitude, 0.1, &d, &opts).unwrap();
    assert_eq!(a, multishot(&m, Method::Magnitude, 0.1, &d, &opts).unwrap());
    let opts = EdgePopupOptions {
        epochs: 2,
        anneal: true,
        ..EdgePopupOptions::default()
    };
    let a = edge_popup(&m, 0.3, &d, &opts).unwrap();
    assert_eq!(a, edge_popup(&m, 0.3, &d, &opts).unwrap());
}

#[test]
fn schedules_follow_the_geometric_path() {
    for rho in [0.001f64, 0.01, 0.1, 0.5] {
        for r in 1..=10 {
            let want = rho.powf(r as f64 / 10.0);
            assert!((schedule_density(rho, r, 10) - want).abs() < 1e-14);
            assert!((edge_popup_keep_fraction(rho, r, 10, true) - want).abs() < 1e-14);
        }
        assert_eq!(schedule_density(rho, 10, 10), rho);
    }
}

#[test]
fn multishot_densities_follow_the_schedule() {
    let m = net(vec![2, 20, 20, 4], 6);
    let d = gen_circle(100, 0.0, 6).unwrap();
    let opts = MultishotOptions {
        rounds: 10,
        train: TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
        ..MultishotOptions::default()
    };
    let out = multishot(&m, Method::Random, 0.05, &d, &opts).unwrap();
    let total = m.arch().weight_count() as f64;
    for (i, &got) in out.densities.iter().enumerate() {
        let want = schedule_density(0.05, i + 1, 10);
        assert!((got - want).abs() <= 1.0 / total, "round {}: {got} vs {want}", i + 1);
    }
}

fn widths() -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(1usize..30, 2..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn achieved_density_is_within_one_weight_of_the_target(
        w in widths(),
        rho in 0.0005f64..=1.0,
        local in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let m = net(w, seed);
        let mut rng = rng_from_seed(seed);
        let mut scores = m.params().clone();
        scores.iter_mut().for_each(|s| *s = rng.random_range(-1.0..1.0));
        let scope = if local { Scope::Local } else { Scope::Global };
        let masks = select_mask(&scores, m.arch(), rho, scope).unwrap();
        let n = m.arch().weight_count() as f64;
        prop_assert!((masks.weight_density() - rho).abs() <= 1.0 / n + 1e-12);
        if local {
            let q = layer_quotas(m.arch(), rho);
            for (l, layer) in masks.layers.iter().enumerate() {
                prop_assert_eq!(layer.weights.iter().filter(|&&k| k).count(), q[l]);
            }
        }
        for (l, layer) in masks.layers.iter().enumerate() {
            let (_, inputs) = m.arch().layer_shape(l);
            for (o, &b) in layer.biases.iter().enumerate() {
                let row_kept = layer.weights[o * inputs..(o + 1) * inputs].iter().any(|&k| k);
                prop_assert_eq!(b, row_kept);
            }
        }
    }

    #[test]
    fn the_kept_weights_outscore_the_pruned_ones(w in widths(), rho in 0.01f64..1.0, seed in any::<u64>()) {
        let m = net(w, seed);
        let mut rng = rng_from_seed(seed ^ 9);
        let mut scores = m.params().clone();
        scores.iter_mut().for_each(|s| *s = rng.random());
        let masks = select_mask(&scores, m.arch(), rho, Scope::Global).unwrap();
        let mut kept_min = f64::INFINITY;
        let mut pruned_max = f64::NEG_INFINITY;
        for (s, k) in scores.layers.iter().zip(&masks.layers) {
            for (v, &keep) in s.weights.iter().zip(&k.weights) {
                if keep { kept_min = kept_min.min(*v) } else { pruned_max = pruned_max.max(*v) }
            }
        }
        prop_assert!(kept_min >= pruned_max);
    }
}

use plantbench_core::net::TargetBatch;
use plantbench_core::{rng_from_seed, Architecture, InitSpec, LossKind, MaskedMLP, Masks};
use proptest::prelude::*;
use rand::Rng;

fn random_net(widths: &[usize], seed: u64) -> MaskedMLP {
    let a = Architecture::new(widths.to_vec()).unwrap();
    MaskedMLP::new(a.clone(), &InitSpec::constant(&a, 0.8, seed)).unwrap()
}

fn arch_strategy() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=5, 1usize..=4, 1usize..=4)
        .prop_flat_map(|(depth, input, output)| {
            proptest::collection::vec(1usize..=20, depth - 1)
                .prop_map(move |hidden| {
                    let mut w = vec![input];
                    w.extend(hidden);
                    w.push(output);
                    w
                })
        })
}

fn loss_at(net: &MaskedMLP, xs: &[f64], t: TargetBatch<'_>, kind: LossKind) -> f64 {
    net.loss(xs, t, kind).unwrap()
}

// Max over entries of |backprop − central difference|, relative to the
// larger of the two magnitudes with a floor for entries that are ~0.
fn max_rel_err(net: &MaskedMLP, xs: &[f64], t: TargetBatch<'_>, kind: LossKind) -> f64 {
    let (_, g) = net.loss_and_grad(xs, t, kind).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    let grads: Vec<f64> = g.iter().copied().collect();
    for (i, &gi) in grads.iter().enumerate() {
        let mut p = net.clone();
        *p.params_mut().iter_mut().nth(i).unwrap() += h;
        let up = loss_at(&p, xs, t, kind);
        let mut m = net.clone();
        *m.params_mut().iter_mut().nth(i).unwrap() -= h;
        let down = loss_at(&m, xs, t, kind);
        let fd = (up - down) / (2.0 * h);
        let err = (gi - fd).abs() / gi.abs().max(fd.abs()).max(1e-3);
        worst = worst.max(err);
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn backprop_matches_central_differences(widths in arch_strategy(), seed in any::<u64>(), n in 1usize..4) {
        let net = random_net(&widths, seed);
        let d = widths[0];
        let m = *widths.last().unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let mse = max_rel_err(&net, &xs, TargetBatch::Values(&ys), LossKind::Mse);
        prop_assert!(mse < 1e-5, "mse rel err {mse}");
        let ce = max_rel_err(&net, &xs, TargetBatch::Classes(&labels), LossKind::SoftmaxCrossEntropy);
        prop_assert!(ce < 1e-5, "cross-entropy rel err {ce}");
    }

    #[test]
    fn rescaling_a_hidden_neuron_leaves_the_function_unchanged(
        widths in arch_strategy().prop_filter("needs a hidden layer", |w| w.len() > 2),
        seed in any::<u64>(),
        c in 0.01f64..100.0,
    ) {
        let net = random_net(&widths, seed);
        let mut scaled = net.clone();
        let layer = (seed as usize) % (widths.len() - 2);
        let neuron = (seed as usize / 7) % widths[layer + 1];
        {
            let p = scaled.params_mut();
            let l = &mut p.layers[layer];
            let inputs = l.inputs;
            l.weights[neuron * inputs..(neuron + 1) * inputs].iter_mut().for_each(|w| *w *= c);
            l.biases[neuron] *= c;
            let next = &mut p.layers[layer + 1];
            for r in 0..next.outputs {
                *next.weight_mut(r, neuron) /= c;
            }
        }
        let mut rng = rng_from_seed(seed ^ 2);
        for _ in 0..5 {
            let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (a, b) = (net.forward(&x).unwrap(), scaled.forward(&x).unwrap());
            for (a, b) in a.iter().zip(&b) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn without_biases_the_network_is_positively_homogeneous(widths in arch_strategy(), seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut net = random_net(&widths, seed);
        for l in net.params_mut().layers.iter_mut() {
            l.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let mut rng = rng_from_seed(seed ^ 3);
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let (fx, fcx) = (net.forward(&x).unwrap(), net.forward(&cx).unwrap());
        for (a, b) in fx.iter().zip(&fcx) {
            prop_assert!((c * a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn a_mask_acts_like_zeroed_parameters(widths in arch_strategy(), seed in any::<u64>()) {
        let net = random_net(&widths, seed);
        let mut rng = rng_from_seed(seed ^ 4);
        let mut masks = Masks::ones(net.arch());
        for l in masks.layers.iter_mut() {
            l.weights.iter_mut().for_each(|k| *k = rng.random_bool(0.6));
            l.biases.iter_mut().for_each(|k| *k = rng.random_bool(0.6));
        }
        let mut masked = net.clone();
        masked.apply_mask(masks.clone()).unwrap();
        let mut zeroed = net.clone();
        for (p, keep) in zeroed.params_mut().iter_mut().zip(masks.iter()) {
            if !keep {
                *p = 0.0;
            }
        }
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        prop_assert_eq!(masked.forward(&x).unwrap(), zeroed.forward(&x).unwrap());
        prop_assert!(masked.params().iter().zip(masks.iter()).all(|(p, k)| *k || *p == 0.0));
    }
}

use rand::Rng as _;

use crate::net::{MaskedMLP, Params, TargetBatch};
use crate::{rng_from_seed, LossKind, Result};

/// One score per weight and bias, laid out like [`Params`].
pub type ScoreSet = Params;

/// `|θ|`.
pub fn score_magnitude(net: &MaskedMLP) -> ScoreSet {
    net.params().map(f64::abs)
}

/// Independent `U[0, 1)` draws.
pub fn score_random(net: &MaskedMLP, seed: u64) -> ScoreSet {
    let mut rng = rng_from_seed(seed);
    let mut s = Params::zeros(net.arch());
    s.iter_mut().for_each(|v| *v = rng.random::<f64>());
    s
}

/// Loss gradient with the entries of masked parameters set to zero.
fn masked_grad(
    net: &MaskedMLP,
    inputs: &[f64],
    targets: TargetBatch<'_>,
    kind: LossKind,
) -> Result<Params> {
    let (_, mut g) = net.loss_and_grad(inputs, targets, kind)?;
    for (g, keep) in g.iter_mut().zip(net.masks().iter()) {
        if !keep {
            *g = 0.0;
        }
    }
    Ok(g)
}

/// SNIP connection sensitivity `|θ ∘ ∂L/∂θ|` on one batch.
pub fn score_snip(
    net: &MaskedMLP,
    inputs: &[f64],
    targets: TargetBatch<'_>,
    kind: LossKind,
) -> Result<ScoreSet> {
    let g = masked_grad(net, inputs, targets, kind)?;
    let mut s = g;
    for (s, p) in s.iter_mut().zip(net.params().iter()) {
        *s = (*s * p).abs();
    }
    Ok(s)
}

/// Hessian-gradient product `H g` of the batch loss, by a central difference
/// of gradients along the unit gradient direction with step
/// `h = 1e-4 (1 + ‖θ‖)`. Masked parameters are held fixed.
pub fn hessian_gradient_product(
    net: &MaskedMLP,
    inputs: &[f64],
    targets: TargetBatch<'_>,
    kind: LossKind,
) -> Result<Params> {
    let g = masked_grad(net, inputs, targets, kind)?;
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Ok(Params::zeros(net.arch()));
    }
    let h = 1e-4 * (1.0 + net.params().norm());
    let step = h / gnorm;
    let mut probe = net.clone();
    probe.params_mut().axpy(step, &g);
    let plus = masked_grad(&probe, inputs, targets, kind)?;
    let mut probe = net.clone();
    probe.params_mut().axpy(-step, &g);
    let minus = masked_grad(&probe, inputs, targets, kind)?;
    // H ĝ ≈ (g₊ − g₋) / 2h, and H g = ‖g‖ H ĝ.
    let mut hg = plus;
    hg.axpy(-1.0, &minus);
    let scale = gnorm / (2.0 * h);
    hg.iter_mut().for_each(|v| *v *= scale);
    Ok(hg)
}

/// GraSP score `−θ ∘ H g`; the highest scores are kept.
pub fn score_grasp(
    net: &MaskedMLP,
    inputs: &[f64],
    targets: TargetBatch<'_>,
    kind: LossKind,
) -> Result<ScoreSet> {
    let mut s = hessian_gradient_product(net, inputs, targets, kind)?;
    for (s, p) in s.iter_mut().zip(net.params().iter()) {
        *s *= -p;
    }
    Ok(s)
}

/// SynFlow: with every parameter replaced by its magnitude and an all-ones
/// input, `R` is the sum of the outputs and the score is `|θ| ∘ ∂R/∂|θ|`.
/// Needs no data.
pub fn score_synflow(net: &MaskedMLP) -> ScoreSet {
    let mut abs = net.clone();
    abs.params_mut().iter_mut().for_each(|p| *p = p.abs());
    let mut ws = abs.workspace();
    let ones = alloc::vec![1.0; abs.arch().input_dim()];
    abs.forward_into(&ones, &mut ws);
    let mut grads = Params::zeros(abs.arch());
    let seed = alloc::vec![1.0; abs.arch().output_dim()];
    abs.backward_into(&mut ws, &seed, &mut grads);
    for (g, p) in grads.iter_mut().zip(abs.params().iter()) {
        *g *= p;
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Architecture, InitSpec, Masks};
    use alloc::vec;
    use alloc::vec::Vec;

    fn net(widths: &[usize], seed: u64) -> MaskedMLP {
        let a = Architecture::new(widths.to_vec()).unwrap();
        MaskedMLP::new(a.clone(), &InitSpec::fan_in(&a, seed)).unwrap()
    }

    #[test]
    fn magnitude_is_symmetric_and_zero_at_zero() {
        let n = net(&[3, 5, 2], 1);
        let mut neg = n.clone();
        neg.params_mut().iter_mut().for_each(|p| *p = -*p);
        assert_eq!(score_magnitude(&n), score_magnitude(&neg));
        let z = MaskedMLP::zeros(n.arch().clone());
        assert!(score_magnitude(&z).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn magnitude_order_matches_sorting_by_abs() {
        let n = net(&[4, 6, 3], 2);
        let s: Vec<f64> = score_magnitude(&n).iter().copied().collect();
        let p: Vec<f64> = n.params().iter().copied().collect();
        let mut a: Vec<usize> = (0..s.len()).collect();
        let mut b = a.clone();
        a.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        b.sort_by(|&i, &j| libm::fabs(p[j]).total_cmp(&libm::fabs(p[i])));
        assert_eq!(a, b);
    }

    #[test]
    fn random_scores_are_seeded_unit_draws() {
        let n = net(&[3, 40, 2], 1);
        let a = score_random(&n, 5);
        assert_eq!(a, score_random(&n, 5));
        assert_ne!(a, score_random(&n, 6));
        assert!(a.iter().all(|&s| (0.0..1.0).contains(&s)));
    }

    #[test]
    fn random_scores_look_uniform() {
        let n = net(&[1, 300, 300, 1], 1);
        let mut s: Vec<f64> = score_random(&n, 3).iter().copied().collect();
        s.sort_by(f64::total_cmp);
        let len = s.len() as f64;
        let ks = s
            .iter()
            .enumerate()
            .map(|(i, &v)| libm::fabs((i + 1) as f64 / len - v).max(libm::fabs(i as f64 / len - v)))
            .fold(0.0, f64::max);
        // 1.63 / √n is the 1% critical value of the Kolmogorov statistic
        assert!(ks < 1.63 / libm::sqrt(len), "{ks}");
    }

    #[test]
    fn snip_on_a_single_unit_matches_closed_form() {
        let a = Architecture::new(vec![1, 1]).unwrap();
        let mut p = Params::zeros(&a);
        p.layers[0].weights[0] = 0.8;
        let n = MaskedMLP::from_parts(a, p, Masks::ones(&Architecture::new(vec![1, 1]).unwrap())).unwrap();
        let xs = [0.5, -1.0, 2.0];
        let ts = [1.0, 0.0, 1.0];
        let s = score_snip(&n, &xs, TargetBatch::Values(&ts), LossKind::Mse).unwrap();
        // L = mean (w x − t)², dL/dw = 2 mean x (w x − t)
        let g: f64 = xs.iter().zip(&ts).map(|(x, t)| 2.0 * x * (0.8 * x - t)).sum::<f64>() / 3.0;
        assert!(libm::fabs(s.layers[0].weights[0] - libm::fabs(0.8 * g)) < 1e-15);
        assert_eq!(s.layers[0].biases[0], 0.0);
    }

    #[test]
    fn grasp_quadratic_oracle() {
        // one linear unit, one sample x = √a, target 0: L = a w², H = 2a, g = 2aw
        let a_arch = Architecture::new(vec![1, 1]).unwrap();
        let a = 3.0;
        let w = 0.7;
        let mut p = Params::zeros(&a_arch);
        p.layers[0].weights[0] = w;
        let mut m = Masks::ones(&a_arch);
        m.layers[0].biases[0] = false;
        let n = MaskedMLP::from_parts(a_arch, p, m).unwrap();
        let x = [libm::sqrt(a)];
        let s = score_grasp(&n, &x, TargetBatch::Values(&[0.0]), LossKind::Mse).unwrap();
        let expected = -w * (2.0 * a) * (2.0 * a * w);
        assert!(libm::fabs(s.layers[0].weights[0] - expected) < 1e-6 * libm::fabs(expected));
    }

    #[test]
    fn grasp_vanishes_at_stationary_points() {
        let n = MaskedMLP::zeros(Architecture::new(vec![2, 3, 1]).unwrap());
        let s = score_grasp(&n, &[0.3, 0.2], TargetBatch::Values(&[0.0]), LossKind::Mse).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn synflow_single_path_product() {
        let a = Architecture::new(vec![1, 1, 1]).unwrap();
        let mut p = Params::zeros(&a);
        p.layers[0].weights[0] = -0.5;
        p.layers[1].weights[0] = 3.0;
        let n = MaskedMLP::from_parts(a.clone(), p, Masks::ones(&a)).unwrap();
        let s = score_synflow(&n);
        assert!(libm::fabs(s.layers[0].weights[0] - 1.5) < 1e-15);
        assert!(libm::fabs(s.layers[1].weights[0] - 1.5) < 1e-15);
    }

    #[test]
    fn synflow_two_unit_paths() {
        let a = Architecture::new(vec![1, 2, 1]).unwrap();
        let mut p = Params::zeros(&a);
        p.layers.iter_mut().for_each(|l| l.weights.iter_mut().for_each(|w| *w = 1.0));
        let n = MaskedMLP::from_parts(a.clone(), p, Masks::ones(&a)).unwrap();
        let s = score_synflow(&n);
        for l in &s.layers {
            assert!(l.weights.iter().all(|&w| w == 1.0));
        }
    }
}

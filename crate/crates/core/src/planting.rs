//! Hiding a sparse ticket inside a mother network.
//!
//! Layer by layer, every target neuron is matched to the unused mother
//! neuron whose parameters (restricted to the target's support) are closest
//! to the target parameters up to a positive scale `λ`. The mother entries
//! are then overwritten with `θ / λ`, so the mother neuron computes the
//! target neuron divided by `λ`. ReLU is positively homogeneous, so the
//! scale is carried into the next layer and finally reported per output as
//! `lambda_out`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::net::{Architecture, MaskedMLP, Masks};
use crate::tickets::{check_fits, SparseTicket};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantOptions {
    /// Set the mother bias of a placed neuron to zero when the target has
    /// no bias there.
    pub zero_unused_biases: bool,
    /// Use the least-squares scale. When off every `λ` is 1 and the target
    /// values are written verbatim.
    pub rescale: bool,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            zero_unused_biases: true,
            rescale: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantReport {
    /// Mother architecture the report refers to.
    pub arch: Architecture,
    /// `placement[l][i]`: mother neuron holding target neuron `i` of layer `l`.
    pub placement: Vec<Vec<usize>>,
    /// `neuron_scales[l][i]`: the `λ` of target neuron `i` of layer `l`.
    pub neuron_scales: Vec<Vec<f64>>,
    /// Multiply the extracted network's outputs by this to get the target.
    pub lambda_out: Vec<f64>,
    /// Planted weight positions `[layer, row, col]` in mother coordinates.
    pub weights: Vec<[usize; 3]>,
    /// Planted bias positions `[layer, index]` in mother coordinates.
    pub biases: Vec<[usize; 2]>,
    /// Biases set to zero on placed neurons. Not part of the support.
    pub zeroed_biases: Vec<[usize; 2]>,
}

impl PlantReport {
    /// Masks keeping exactly the planted entries.
    pub fn support(&self) -> Result<Masks> {
        let mut m = Masks::zeros(&self.arch);
        for &[l, r, c] in &self.weights {
            if l >= self.arch.depth() {
                return Err(Error::InconsistentReport(alloc::format!("layer {l}")));
            }
            let (out, inp) = self.arch.layer_shape(l);
            if r >= out || c >= inp {
                return Err(Error::InconsistentReport(alloc::format!(
                    "weight ({l}, {r}, {c}) outside {out}x{inp}"
                )));
            }
            m.layers[l].weights[r * inp + c] = true;
        }
        for &[l, i] in &self.biases {
            if l >= self.arch.depth() || i >= self.arch.layer_shape(l).0 {
                return Err(Error::InconsistentReport(alloc::format!("bias ({l}, {i})")));
            }
            m.layers[l].biases[i] = true;
        }
        Ok(m)
    }
}

/// Least-squares scale `λ = θ·m / ‖m‖²` and residual `‖θ − λ m‖`, returned
/// as `(q, λ)`.
pub fn match_quality(theta: &[f64], m: &[f64]) -> Result<(f64, f64)> {
    if theta.len() != m.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            actual: m.len(),
        });
    }
    let mm: f64 = m.iter().map(|v| v * v).sum();
    if mm == 0.0 {
        return Err(Error::OutOfRange("all-zero candidate".into()));
    }
    let lambda = theta.iter().zip(m).map(|(t, m)| t * m).sum::<f64>() / mm;
    Ok((residual(theta, m, lambda), lambda))
}

fn residual(theta: &[f64], m: &[f64], lambda: f64) -> f64 {
    libm::sqrt(
        theta
            .iter()
            .zip(m)
            .map(|(t, m)| (t - lambda * m) * (t - lambda * m))
            .sum(),
    )
}

/// Incoming target parameters of one neuron: optional bias, then weights
/// by input column.
struct NeuronSpec {
    bias: Option<f64>,
    weights: Vec<(usize, f64)>,
}

fn neuron_specs(t: &SparseTicket, layer: usize) -> Vec<NeuronSpec> {
    let n = t.arch.layer_shape(layer).0;
    let mut specs: Vec<NeuronSpec> = (0..n)
        .map(|_| NeuronSpec {
            bias: None,
            weights: Vec::new(),
        })
        .collect();
    for w in t.weights.iter().filter(|w| w.layer == layer) {
        specs[w.row].weights.push((w.col, w.value));
    }
    for b in t.biases.iter().filter(|b| b.layer == layer) {
        specs[b.index].bias = Some(b.value);
    }
    specs
}

/// Plants `target` into a copy of `mother`.
pub fn plant(
    target: &SparseTicket,
    mother: &MaskedMLP,
    opts: PlantOptions,
) -> Result<(MaskedMLP, PlantReport)> {
    check_fits(target, mother.arch())?;
    let mut net = mother.clone();
    let depth = target.depth();
    let mut report = PlantReport {
        arch: mother.arch().clone(),
        placement: Vec::with_capacity(depth),
        neuron_scales: Vec::with_capacity(depth),
        lambda_out: Vec::new(),
        weights: Vec::new(),
        biases: Vec::new(),
        zeroed_biases: Vec::new(),
    };
    // Inputs are not rescaled and map to themselves.
    let mut prev_place: Vec<usize> = (0..target.arch.input_dim()).collect();
    let mut prev_scale = vec![1.0; target.arch.input_dim()];

    for l in 0..depth {
        let specs = neuron_specs(target, l);
        let out_layer = l + 1 == depth;
        let mother_width = net.arch().layer_shape(l).0;
        let mut place = vec![usize::MAX; specs.len()];
        let mut scale = vec![1.0; specs.len()];
        let mut used = vec![false; mother_width];

        let mut order: Vec<usize> = (0..specs.len()).collect();
        let k = |s: &NeuronSpec| s.weights.len() + s.bias.is_some() as usize;
        order.sort_by(|&a, &b| k(&specs[b]).cmp(&k(&specs[a])).then(a.cmp(&b)));

        for &i in &order {
            let spec = &specs[i];
            let mut theta = Vec::with_capacity(k(spec));
            theta.extend(spec.bias);
            theta.extend(spec.weights.iter().map(|&(j, w)| w * prev_scale[j]));
            let layer = &net.params().layers[l];
            let candidate = |c: usize| -> Vec<f64> {
                let mut m = Vec::with_capacity(theta.len());
                if spec.bias.is_some() {
                    m.push(layer.biases[c]);
                }
                m.extend(spec.weights.iter().map(|&(j, _)| layer.weight(c, prev_place[j])));
                m
            };

            let (c, lambda) = if out_layer {
                let m = candidate(i);
                let lambda = if theta.is_empty() || !opts.rescale {
                    1.0
                } else {
                    match match_quality(&theta, &m) {
                        Ok((_, lam)) if lam > 0.0 => lam,
                        Ok(_) => norm(&theta) / norm(&m),
                        Err(_) => 1.0,
                    }
                };
                (i, lambda)
            } else if theta.is_empty() {
                let c = (0..mother_width)
                    .find(|&c| !used[c])
                    .ok_or(Error::WidthInsufficient {
                        layer: l,
                        mother: mother_width,
                        target: specs.len(),
                    })?;
                (c, 1.0)
            } else {
                let mut best: Option<(usize, f64, f64)> = None;
                for c in (0..mother_width).filter(|&c| !used[c]) {
                    let m = candidate(c);
                    let (q, lambda) = if opts.rescale {
                        match match_quality(&theta, &m) {
                            Ok((q, lam)) if lam > 0.0 => (q, lam),
                            _ => continue,
                        }
                    } else {
                        (residual(&theta, &m, 1.0), 1.0)
                    };
                    if best.map_or(true, |(_, bq, _)| q < bq) {
                        best = Some((c, q, lambda));
                    }
                }
                let (c, _, lambda) = best.ok_or(Error::NoPositiveCandidate { layer: l, neuron: i })?;
                (c, lambda)
            };

            used[c] = true;
            place[i] = c;
            scale[i] = lambda;
            let layer = &mut net.params_mut().layers[l];
            match spec.bias {
                Some(b) => {
                    layer.biases[c] = b / lambda;
                    report.biases.push([l, c]);
                }
                None if opts.zero_unused_biases && !theta.is_empty() => {
                    layer.biases[c] = 0.0;
                    report.zeroed_biases.push([l, c]);
                }
                None => {}
            }
            for &(j, w) in &spec.weights {
                let col = prev_place[j];
                *layer.weight_mut(c, col) = w * prev_scale[j] / lambda;
                report.weights.push([l, c, col]);
            }
        }
        report.placement.push(place.clone());
        report.neuron_scales.push(scale.clone());
        prev_place = place;
        prev_scale = scale;
    }
    report.lambda_out = prev_scale;
    report.weights.sort_unstable();
    report.biases.sort_unstable();
    report.zeroed_biases.sort_unstable();
    // Planted entries must stay live even if the mother had them masked.
    let mut masks = net.masks().clone();
    let support = report.support()?;
    for (m, s) in masks.layers.iter_mut().zip(&support.layers) {
        m.weights.iter_mut().zip(&s.weights).for_each(|(m, &s)| *m |= s);
        m.biases.iter_mut().zip(&s.biases).for_each(|(m, &s)| *m |= s);
    }
    net.apply_mask(masks)?;
    Ok((net, report))
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// The planted network masked to the planted support. Its outputs times
/// `report.lambda_out` reproduce the target.
pub fn extract_subnet(planted: &MaskedMLP, report: &PlantReport) -> Result<MaskedMLP> {
    if &report.arch != planted.arch() {
        return Err(Error::InconsistentReport("architecture differs".into()));
    }
    if report.lambda_out.len() != planted.arch().output_dim()
        || report.placement.len() != planted.arch().depth()
    {
        return Err(Error::InconsistentReport("placement does not cover every layer".into()));
    }
    let mut net = planted.clone();
    net.apply_mask(report.support()?)?;
    Ok(net)
}

/// Per layer, RMS of the planted weights over RMS of the other weights.
/// `None` when a layer has no planted weights or no nonzero background.
pub fn hiding_score(planted: &MaskedMLP, report: &PlantReport) -> Result<Vec<Option<f64>>> {
    let support = report.support()?;
    if !support.matches(planted.arch()) {
        return Err(Error::InconsistentReport("architecture differs".into()));
    }
    Ok(planted
        .params()
        .layers
        .iter()
        .zip(&support.layers)
        .map(|(p, s)| {
            let (mut fg, mut nf, mut bg, mut nb) = (0.0, 0usize, 0.0, 0usize);
            for (&w, &planted) in p.weights.iter().zip(&s.weights) {
                if planted {
                    fg += w * w;
                    nf += 1;
                } else {
                    bg += w * w;
                    nb += 1;
                }
            }
            if nf == 0 || nb == 0 || bg == 0.0 {
                None
            } else {
                Some(libm::sqrt(fg / nf as f64) / libm::sqrt(bg / nb as f64))
            }
        })
        .collect())
}

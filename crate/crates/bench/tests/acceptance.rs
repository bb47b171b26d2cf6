//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p plantbench --test acceptance -- 4 6`.

use std::process::ExitCode;
use std::time::Instant;

use plantbench::experiment::{prepare, prune, ExperimentConfig, Strategy};
use plantbench::tsv::to_tsv;
use plantbench::{run_experiment, ResultRow, SparsityTarget};
use plantbench_core::data::{generate, split};
use plantbench_core::net::TargetBatch;
use plantbench_core::planting::extract_subnet;
use plantbench_core::pruning::{
    edge_popup, edge_popup_keep_fraction, multishot, schedule_density, singleshot,
    EdgePopupOptions, Method, MultishotOptions, Scope, SingleshotOptions,
};
use plantbench_core::theory::{
    domain_grid, eps_layer, estimate_sup_norms, match_frequency, relu_path_frequency,
    verify_error_propagation,
};
use plantbench_core::tickets::{build_ticket, ticket_sparsity_in};
use plantbench_core::train::{evaluate, TrainConfig};
use plantbench_core::{
    plant, rng_from_seed, Architecture, InitSpec, LossKind, MaskedMLP, PlantOptions, Task,
};
use rand::Rng;

const TASKS: [Task; 3] = [Task::Relu, Task::Circle, Task::Helix];
const SEEDS: u64 = 10;

type Outcome = anyhow::Result<(bool, String)>;

fn count(xs: impl IntoIterator<Item = bool>) -> usize {
    xs.into_iter().filter(|&b| b).count()
}

fn c1_gradients() -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let depth = rng.random_range(1..=5);
        let mut widths = vec![rng.random_range(1..=4)];
        widths.extend((1..depth).map(|_| rng.random_range(1..=20)));
        widths.push(rng.random_range(2..=4));
        let a = Architecture::new(widths.clone())?;
        let net = MaskedMLP::new(a.clone(), &InitSpec::constant(&a, 0.8, i))?;
        let (d, m, n) = (widths[0], *widths.last().unwrap(), 3);
        let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let cases = [
            (TargetBatch::Values(&ys), LossKind::Mse),
            (TargetBatch::Classes(&labels), LossKind::SoftmaxCrossEntropy),
        ];
        for (t, kind) in cases {
            let (_, g) = net.loss_and_grad(&xs, t, kind)?;
            let h = 1e-6;
            for (j, &gj) in g.iter().enumerate() {
                let mut up = net.clone();
                *up.params_mut().iter_mut().nth(j).unwrap() += h;
                let mut down = net.clone();
                *down.params_mut().iter_mut().nth(j).unwrap() -= h;
                let fd = (up.loss(&xs, t, kind)? - down.loss(&xs, t, kind)?) / (2.0 * h);
                worst = worst.max((gj - fd).abs() / gj.abs().max(fd.abs()).max(1e-3));
            }
        }
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e}")))
}

fn c2_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for task in TASKS {
        let t = build_ticket(task, 5)?;
        let a = Architecture::uniform(task.input_dim(), 100, 5, task.output_dim())?;
        let d = task.input_dim();
        let grid = domain_grid(d, 1000);
        for seed in 0..20 {
            let mother = MaskedMLP::new(a.clone(), &InitSpec::constant(&a, 0.5, seed))?;
            let (planted, report) = plant(&t, &mother, PlantOptions::default())?;
            let sub = extract_subnet(&planted, &report)?;
            for x in grid.chunks(d) {
                let got = sub.forward(x)?;
                for ((g, l), w) in got.iter().zip(&report.lambda_out).zip(t.eval(x)?) {
                    worst = worst.max((g * l - w).abs());
                }
            }
        }
    }
    Ok((worst < 1e-9, format!("max deviation {worst:.2e}")))
}

fn c3_ticket_quality() -> Outcome {
    let limits = [(Task::Circle, 0.96), (Task::Relu, 2e-4), (Task::Helix, 6e-4)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (task, limit) in limits {
        let net = build_ticket(task, 5)?.to_dense();
        let accuracy = task == Task::Circle;
        let mut worst: f64 = if accuracy { 1.0 } else { 0.0 };
        for seed in 0..5 {
            let (_, test) = split(&generate(task, 10_000, seed)?, 0.1, seed)?;
            let v = evaluate(&net, &test)?;
            worst = if accuracy { worst.min(v) } else { worst.max(v) };
        }
        ok &= if accuracy { worst >= limit } else { worst <= limit };
        detail.push(format!("{task} worst {worst:.3e} (limit {limit:e})"));
    }
    Ok((ok, detail.join(", ")))
}

fn c4_error_propagation() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for task in TASKS {
        let t = build_ticket(task, 5)?;
        let sup = estimate_sup_norms(&t);
        for eps in [0.05, 0.1, 0.3] {
            let b = eps_layer(eps, &t, &sup)?;
            let dev = verify_error_propagation(&t, &b, 1000, 200, 3)?;
            ok &= dev <= eps;
            detail.push(format!("{task}@{eps}: {:.3}", dev / eps));
        }
    }
    Ok((ok, format!("deviation/eps {}", detail.join(" "))))
}

fn c5_existence() -> Outcome {
    let trials = 10_000;
    let mut ok = true;
    let mut detail = Vec::new();
    // Each parameter lands within eps_l of its target with probability
    // eps_l, so a neuron of in-degree k has (1 − eps_l^k)^n odds of no match.
    let cases: [(Vec<f64>, f64, usize); 4] = [
        (vec![0.3], 0.1, 20),
        (vec![-0.6], 0.05, 10),
        (vec![0.2, -0.4], 0.3, 20),
        (vec![0.5, 0.1], 0.2, 60),
    ];
    for (i, (theta, eps_l, n)) in cases.into_iter().enumerate() {
        let k = theta.len() as i32;
        let bound = 1.0 - (1.0 - eps_l.powi(k)).powi(n as i32);
        let f = match_frequency(&[theta], eps_l, n, trials, 100 + i as u64)?;
        let sd = (bound * (1.0 - bound) / trials as f64).sqrt();
        ok &= f >= bound - 3.0 * sd;
        detail.push(format!("k={k} n={n}: {f:.4} vs {bound:.4}"));
    }
    Ok((ok, detail.join(", ")))
}

fn c6_paths() -> Outcome {
    let trials = 100_000;
    let mut ok = true;
    let mut detail = Vec::new();
    for (widths, exact) in [(vec![3, 3], 0.765625), (vec![1, 1], 0.25)] {
        let f = relu_path_frequency(&widths, trials, 6)?;
        let sd = (exact * (1.0 - exact) / trials as f64).sqrt();
        ok &= (f - exact).abs() <= 3.0 * sd;
        detail.push(format!("{widths:?}: {f:.4} vs {exact}"));
    }
    Ok((ok, detail.join(", ")))
}

fn circle(strategy: Strategy, methods: Vec<Method>, sparsities: Vec<SparsityTarget>) -> ExperimentConfig {
    ExperimentConfig {
        task: Task::Circle,
        methods,
        sparsities,
        strategy,
        repetitions: SEEDS as usize,
        oracle: false,
        ..ExperimentConfig::default()
    }
}

fn rows_for<'a>(rows: &'a [ResultRow], method: &str, target: SparsityTarget) -> Vec<&'a ResultRow> {
    rows.iter().filter(|r| r.method == method && r.target == target).collect()
}

fn c7_singleshot() -> Outcome {
    let half = SparsityTarget::Density(0.5);
    let tiny = SparsityTarget::Density(0.01);
    let cfg = circle(
        Strategy::singleshot(),
        Method::ALL.to_vec(),
        vec![SparsityTarget::Planted, half, tiny],
    );
    let rows = run_experiment(&cfg)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for m in [Method::Magnitude, Method::Snip, Method::Synflow] {
        let n = count(rows_for(&rows, m.name(), half).iter().map(|r| r.post_train >= 0.9));
        ok &= n >= 8;
        detail.push(format!("{m}@0.5 {n}/10"));
    }
    for m in Method::ALL {
        let rs = rows_for(&rows, m.name(), SparsityTarget::Planted);
        let n = count(rs.iter().map(|r| r.post_prune <= 0.5));
        ok &= n >= 8;
        detail.push(format!("{m}@planted untrained<=0.5 {n}/10"));
    }
    let collapsed: Vec<String> = Method::ALL
        .iter()
        .map(|m| (m, count(rows_for(&rows, m.name(), tiny).iter().map(|r| r.collapse))))
        .filter(|(_, n)| *n > 0)
        .map(|(m, n)| format!("{m} {n}/10"))
        .collect();
    ok &= !collapsed.is_empty();
    detail.push(format!("collapse@0.01 [{}]", collapsed.join(" ")));
    Ok((ok, detail.join(", ")))
}

fn c8_multishot() -> Outcome {
    let cfg = circle(Strategy::multishot(), vec![Method::Synflow], vec![SparsityTarget::Density(0.01)]);
    let rows = run_experiment(&cfg)?;
    let n = count(rows.iter().map(|r| r.post_train >= 0.9));
    Ok((n >= 7, format!("synflow multishot@0.01 post-train>=0.9 {n}/10")))
}

fn c9_edge_popup() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (anneal, rho, floor, needed) in [(false, 0.5, 0.9, 7), (true, 0.1, 0.8, 5)] {
        let cfg = circle(Strategy::edge_popup(anneal), vec![], vec![SparsityTarget::Density(rho)]);
        let mut hits = 0;
        let mut frozen = true;
        for seed in 0..SEEDS {
            let rep = prepare(&cfg, seed)?;
            let before: Vec<u64> = rep.planted.params().iter().map(|p| p.to_bits()).collect();
            let masks = prune(&cfg, &rep, None, rho)?;
            let mut net = rep.planted.clone();
            net.apply_mask(masks)?;
            for ((p, b), keep) in net.params().iter().zip(&before).zip(net.masks().iter()) {
                frozen &= !keep || p.to_bits() == *b;
            }
            frozen &= rep.planted.params().iter().map(|p| p.to_bits()).eq(before.iter().copied());
            if evaluate(&net, &rep.test)? >= floor {
                hits += 1;
            }
        }
        ok &= hits >= needed && frozen;
        let name = if anneal { "annealed" } else { "plain" };
        detail.push(format!("{name}@{rho} >={floor} {hits}/10, weights frozen {frozen}"));
    }
    Ok((ok, detail.join(", ")))
}

fn c10_invariants() -> Outcome {
    let cfg = ExperimentConfig::default();
    let rep = prepare(&cfg, 0)?;
    let net = &rep.planted;
    let n = net.arch().weight_count() as f64;
    let planted = ticket_sparsity_in(&rep.ticket, net.arch())?;
    let mut worst = 0.0f64;
    let mut deterministic = true;
    for m in Method::ALL {
        for rho in [planted, 0.001, 0.01, 0.1, 0.5, 1.0] {
            for scope in [Scope::Global, Scope::Local] {
                let opts = SingleshotOptions {
                    scope,
                    seed: 3,
                    ..SingleshotOptions::default()
                };
                let out = singleshot(net, m, rho, Some(&rep.train), &opts)?;
                worst = worst.max((out.masks.weight_density() - rho).abs() * n);
                if rho == 0.1 {
                    deterministic &= out == singleshot(net, m, rho, Some(&rep.train), &opts)?;
                }
            }
        }
    }
    let opts = MultishotOptions {
        rounds: 10,
        train: TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        },
        ..MultishotOptions::default()
    };
    let ms = multishot(net, Method::Magnitude, 0.01, &rep.train, &opts)?;
    let mut schedule = ms.densities.len() == 10;
    for (r, &got) in ms.densities.iter().enumerate() {
        let want = 0.01f64.powf((r + 1) as f64 / 10.0);
        schedule &= (schedule_density(0.01, r + 1, 10) - want).abs() < 1e-14;
        worst = worst.max((got - want).abs() * n);
    }
    let popup = EdgePopupOptions {
        epochs: 10,
        anneal: true,
        ..EdgePopupOptions::default()
    };
    let ep = edge_popup(net, 0.1, &rep.train, &popup)?;
    schedule &= ep.densities.len() == 10;
    for (i, &got) in ep.densities.iter().enumerate() {
        let want = 0.1f64.powf((i + 1) as f64 / 10.0);
        schedule &= (edge_popup_keep_fraction(0.1, i + 1, 10, true) - want).abs() < 1e-14;
        worst = worst.max((got - want).abs() * n);
    }
    deterministic &= ep == edge_popup(net, 0.1, &rep.train, &popup)?;

    let small = ExperimentConfig {
        repetitions: 2,
        epochs: 2,
        width: 40,
        samples: 500,
        ..ExperimentConfig::default()
    };
    let first = to_tsv(&run_experiment(&small)?);
    deterministic &= first == to_tsv(&run_experiment(&small)?);
    let ok = worst <= 1.0 + 1e-9 && schedule && deterministic;
    Ok((
        ok,
        format!("max density error {worst:.3} weights, schedules {schedule}, deterministic {deterministic}"),
    ))
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient correctness", c1_gradients),
        (2, "plant-extract round trip", c2_round_trip),
        (3, "planted ticket quality", c3_ticket_quality),
        (4, "error propagation budget", c4_error_propagation),
        (5, "existence bound Monte Carlo", c5_existence),
        (6, "ReLU path probability", c6_paths),
        (7, "singleshot trends", c7_singleshot),
        (8, "multishot trend", c8_multishot),
        (9, "edge-popup strong tickets", c9_edge_popup),
        (10, "mask and schedule invariants", c10_invariants),
    ];
    let mut failed = 0;
    for (i, name, run) in criteria {
        if !only.is_empty() && !only.contains(&i) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e:#}")));
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {i:>2} {verdict} {name} ({:.1}s): {detail}", start.elapsed().as_secs_f64());
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

//! Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.
//! Runs without the libtest harness so the lines always reach stdout.

mod common;

use std::time::{Duration, Instant};

use umsk_core::generators::{gen_cantor, gen_grid, gen_random_doubling, gen_sierpinski};
use umsk_core::oracle::oracle_check_ramsey;
use umsk_core::pipeline::{
    dvoretzky_extract, dyadic_ultrametric, exact_ball_constants, verify_um_ball_bounds, DvoretzkyRun, PipelineOptions,
    SkeletonRun,
};
use umsk_core::tree_measure::{strong_triangle_violations, verify_trim};
use umsk_core::{
    build_net_tree, check_corollary, estimate_regularity, extract_beta_regular_um, ramsey_decompose, trim_balanced,
    um_skeleton, verify_net_tree, verify_skeleton, MeasuredMetric, MetricMeasureSpace, TrimmedTree,
};

use common::{
    box_count_exponent, lca_distances, mid_size_families, ramsey_instance, random_subadditive, trim_contract_failures,
};

type Outcome = Result<String, String>;

struct Run {
    space: MetricMeasureSpace,
    t: usize,
    run: SkeletonRun,
}

fn fail_if(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Err(msg.into())
    } else {
        Ok(())
    }
}

fn net_tree_validity() -> Outcome {
    let mut spaces = Vec::new();
    for level in 0..=10 {
        spaces.push(gen_cantor(level, 1.0 / 3.0).unwrap());
    }
    spaces.push(gen_cantor(10, 0.25).unwrap());
    spaces.push(gen_grid(1, 2000).unwrap());
    spaces.push(gen_grid(2, 44).unwrap());
    spaces.push(gen_grid(3, 12).unwrap());
    for level in 0..=6 {
        spaces.push(gen_sierpinski(level).unwrap());
    }
    for seed in 1..=4 {
        spaces.push(gen_random_doubling(seed, 2000).unwrap());
    }
    spaces.push(gen_random_doubling(11, 37).unwrap());
    let mut slowest = Duration::ZERO;
    for space in &spaces {
        let start = Instant::now();
        let tree = build_net_tree(space).map_err(|e| format!("{}: {e}", space.name()))?;
        let report = verify_net_tree(&tree, space).map_err(|e| format!("{}: {e}", space.name()))?;
        let took = start.elapsed();
        slowest = slowest.max(took);
        fail_if(!report.is_empty(), format!("{}: {report}", space.name()))?;
        fail_if(
            took > Duration::from_secs(30),
            format!("{} took {took:?}", space.name()),
        )?;
    }
    Ok(format!("{} instances, slowest {slowest:.2?}", spaces.len()))
}

fn ramsey_oracle() -> Outcome {
    let start = Instant::now();
    let mut passed = 0;
    for seed in 0..1000u64 {
        let (space, z, delta, t) = ramsey_instance(seed);
        let r = ramsey_decompose(&space, &z, delta, t).map_err(|e| format!("seed {seed}: {e}"))?;
        let ok = oracle_check_ramsey(&space, &z, delta, t, &r) && check_corollary(&r, &space, &z).unwrap_or(false);
        fail_if(!ok, format!("seed {seed}: oracle rejected the split"))?;
        passed += 1;
    }
    let took = start.elapsed();
    fail_if(took > Duration::from_secs(60), format!("took {took:?}"))?;
    Ok(format!("{passed}/1000 in {took:.2?}"))
}

fn skeleton_inequalities(runs: &[Run]) -> Outcome {
    for r in runs {
        let report = verify_skeleton(&r.run.skeleton, &r.space, r.run.report.lambda_hat as f64);
        fail_if(!report.is_empty(), format!("{} t={}: {report}", r.space.name(), r.t))?;
    }
    let nodes: usize = runs.iter().map(|r| r.run.skeleton.len()).sum();
    Ok(format!("{} runs, {nodes} skeleton nodes", runs.len()))
}

fn distortion(runs: &[Run]) -> Outcome {
    let mut worst: f64 = 1.0;
    for r in runs {
        let support = &r.run.measure.support;
        let rho = lca_distances(&r.run.trimmed.tree, support);
        let bound = 16.0 * r.t as f64;
        for i in 0..support.len() {
            for j in i + 1..support.len() {
                let d = r.space.dist(support[i], support[j]);
                let p = rho[i][j];
                fail_if(p < d - 1e-12 * d, format!("{}: ρ = {p} < d = {d}", r.space.name()))?;
                fail_if(
                    p > bound * d,
                    format!("{}: ρ = {p} > {bound}·d, d = {d}", r.space.name()),
                )?;
                worst = worst.max(p / d);
            }
        }
        fail_if(
            r.run.report.distortion_violations != 0,
            format!("{}: report lists violations", r.space.name()),
        )?;
    }
    Ok(format!("{} runs, worst ρ/d = {worst:.2}", runs.len()))
}

fn measure_bounds(runs: &[Run]) -> Outcome {
    let mut pairs = 0;
    for r in runs {
        let rep = &r.run.report;
        for table in [&rep.growth_check, &rep.shrink_check] {
            fail_if(
                table.checked == 0,
                format!("{}: {} checked nothing", r.space.name(), table.inequality),
            )?;
            fail_if(
                !table.passed(),
                format!(
                    "{} t={}: {} failures of {}",
                    r.space.name(),
                    r.t,
                    table.failures.len(),
                    table.inequality
                ),
            )?;
            pairs += table.checked;
        }
    }
    Ok(format!("{} runs, {pairs} (center, radius) pairs", runs.len()))
}

fn trim_ok(tr: &TrimmedTree) -> Result<(), String> {
    let mine = trim_contract_failures(tr);
    fail_if(!mine.is_empty(), mine.join("; "))?;
    let report = verify_trim(tr);
    fail_if(!report.is_empty(), report.to_string())
}

fn trimming_contract(runs: &[Run]) -> Outcome {
    for seed in 0..500u64 {
        let (tree, xi, delta) = random_subadditive(seed);
        let tr = trim_balanced(&tree, &xi, delta).map_err(|e| format!("seed {seed}: {e}"))?;
        trim_ok(&tr).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    for r in runs {
        trim_ok(&r.run.trimmed).map_err(|e| format!("{} t={}: {e}", r.space.name(), r.t))?;
    }
    Ok(format!("500 random trees + {} pipeline runs", runs.len()))
}

fn strong_triangle(outputs: &[(&str, &TrimmedTree, &[usize])]) -> Outcome {
    let mut checked = 0;
    for &(name, tr, support) in outputs {
        if support.len() > 300 {
            continue;
        }
        let rho = lca_distances(&tr.tree, support);
        let k = support.len();
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    fail_if(
                        rho[a][c] > rho[a][b].max(rho[b][c]),
                        format!("{name}: triple ({}, {}, {})", support[a], support[b], support[c]),
                    )?;
                }
            }
        }
        let report = strong_triangle_violations(&tr.tree, support).map_err(|e| e.to_string())?;
        fail_if(!report.is_empty(), format!("{name}: {report}"))?;
        checked += 1;
    }
    Ok(format!("{checked} outputs"))
}

const BAND: (f64, f64) = (1.0 / 6561.0, 1.0 / 9.0);

fn dvoretzky_calibration(
    space: &MetricMeasureSpace,
    alpha: f64,
    beta: f64,
) -> (Result<DvoretzkyRun, String>, Duration) {
    let start = Instant::now();
    let run = dvoretzky_extract(space, alpha, beta, 0.15, Some(BAND), &PipelineOptions::default());
    (run.map_err(|e| e.to_string()), start.elapsed())
}

fn check_dvoretzky(
    space: &MetricMeasureSpace,
    run: &Result<DvoretzkyRun, String>,
    took: Duration,
    beta: f64,
    calibration: (f64, f64),
) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let (box_alpha, alpha) = calibration;
    fail_if(
        (box_alpha - alpha).abs() > 0.05,
        format!("box count of the input gives {box_alpha:.3}, expected {alpha:.3}"),
    )?;
    let rep = &run.report;
    fail_if(rep.t != 2, format!("t = {}", rep.t))?;
    let support = &run.measure.support;
    fail_if(support.len() < 32, format!("only {} points", support.len()))?;
    let rho = lca_distances(&run.trimmed.tree, support);
    let mut worst: f64 = 1.0;
    for i in 0..support.len() {
        for j in i + 1..support.len() {
            worst = worst.max(rho[i][j] / space.dist(support[i], support[j]));
        }
    }
    fail_if(worst > 32.0, format!("distortion {worst}"))?;
    let fit =
        estimate_regularity(support, &run.measure.nu, |a, b| space.dist(a, b), BAND, 24).map_err(|e| e.to_string())?;
    fail_if(
        (fit.alpha - beta).abs() > 0.15,
        format!("fitted {:.3}, target {beta:.3}", fit.alpha),
    )?;
    fail_if(took > Duration::from_secs(120), format!("took {took:?}"))?;
    Ok(format!(
        "|Y| = {}, distortion {worst:.2}, exponent {:.3} vs {beta:.3} (input box count {box_alpha:.3}), {took:.2?}",
        support.len(),
        fit.alpha
    ))
}

fn dyadic_bounds() -> Outcome {
    let (tree, nu) = dyadic_ultrametric(10);
    let keep = vec![true; tree.len()];
    let below = tree.points_below(&keep);
    let mass: Vec<f64> = below.iter().map(|p| p.iter().map(|&x| nu[x]).sum()).collect();
    let (c, big) = exact_ball_constants(&tree, &mass, 1.0).ok_or("no constants")?;
    // a depth-k subtree has mass 2^-k and radius range [2^-k, 2^-(k-1))
    fail_if(
        (c, big) != (0.5, 1.0),
        format!("constants ({c}, {big}), expected (0.5, 1)"),
    )?;
    let (tr, measure) = extract_beta_regular_um(&tree, &nu, 1.0, 0.5).map_err(|e| e.to_string())?;
    let report = verify_um_ball_bounds(&tr, (c, big), 1.0, 0.5);
    fail_if(!report.is_empty(), report.to_string())?;

    // brute force over kept points and radii just at and just below each label
    let support = &measure.support;
    let rho = lca_distances(&tr.tree, support);
    let mut radii: Vec<f64> = tr.tree.label.iter().copied().filter(|&l| l >= 1.0 / 512.0).collect();
    radii.extend(
        radii
            .clone()
            .iter()
            .filter(|&&l| l > 1.0 / 512.0)
            .map(|l| l * (1.0 - 1e-6)),
    );
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let mut balls = 0;
    for (i, _) in support.iter().enumerate() {
        for &r in &radii {
            let m: f64 = (0..support.len())
                .filter(|&j| rho[i][j] <= r)
                .map(|j| measure.nu[support[j]])
                .sum();
            let lower = 0.5 * c.sqrt() * r.sqrt();
            let upper = big.sqrt() * r.sqrt();
            fail_if(
                m < lower * (1.0 - 1e-12),
                format!("ball at {} radius {r}: {m} < {lower}", support[i]),
            )?;
            fail_if(
                m > upper * (1.0 + 1e-12),
                format!("ball at {} radius {r}: {m} > {upper}", support[i]),
            )?;
            balls += 1;
        }
    }
    Ok(format!("|Y| = {}, {balls} balls within bounds", support.len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("net-tree validity", net_tree_validity()));
    results.push(("ramsey oracle equivalence", ramsey_oracle()));

    let runs: Vec<Run> = mid_size_families()
        .into_iter()
        .flat_map(|space| {
            [2usize, 3, 5].map(|t| {
                let run = um_skeleton(&space, t, &PipelineOptions::default())
                    .unwrap_or_else(|e| panic!("{} t={t}: {e}", space.name()));
                Run {
                    space: space.clone(),
                    t,
                    run,
                }
            })
        })
        .collect();
    results.push(("skeleton inequalities", skeleton_inequalities(&runs)));
    results.push(("distortion", distortion(&runs)));
    results.push(("measure growth and shrink bounds", measure_bounds(&runs)));
    results.push(("trimming contract", trimming_contract(&runs)));

    let alpha_c = 2f64.ln() / 3f64.ln();
    let cantor = gen_cantor(10, 1.0 / 3.0).unwrap();
    let cantor_cells: Vec<f64> = (2..=8).map(|k| 3f64.powi(k)).collect();
    let cantor_box = box_count_exponent(&cantor, &cantor_cells);
    let (cantor_run, cantor_time) = dvoretzky_calibration(&cantor, alpha_c, alpha_c / 2.0);
    let grid = gen_grid(1, 1024).unwrap();
    let grid_cells: Vec<f64> = (2..=6).map(|k| 3f64.powi(k)).collect();
    let grid_box = box_count_exponent(&grid, &grid_cells);
    let (grid_run, grid_time) = dvoretzky_calibration(&grid, 1.0, 0.5);

    let mut outputs: Vec<(String, &TrimmedTree, &[usize])> = runs
        .iter()
        .map(|r| {
            (
                format!("{} t={}", r.space.name(), r.t),
                &r.run.trimmed,
                r.run.measure.support.as_slice(),
            )
        })
        .collect();
    for (name, run) in [("cantor extraction", &cantor_run), ("grid extraction", &grid_run)] {
        if let Ok(run) = run {
            outputs.push((name.to_string(), &run.trimmed, run.measure.support.as_slice()));
        }
    }
    let borrowed: Vec<(&str, &TrimmedTree, &[usize])> = outputs.iter().map(|(n, t, s)| (n.as_str(), *t, *s)).collect();
    results.push(("ultrametric axiom", strong_triangle(&borrowed)));
    results.push((
        "cantor extraction",
        check_dvoretzky(&cantor, &cantor_run, cantor_time, alpha_c / 2.0, (cantor_box, alpha_c)),
    ));
    results.push((
        "grid extraction",
        check_dvoretzky(&grid, &grid_run, grid_time, 0.5, (grid_box, 1.0)),
    ));
    results.push(("dyadic ball bounds", dyadic_bounds()));

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

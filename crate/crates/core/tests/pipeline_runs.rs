mod common;

use umsk_core::generators::{gen_cantor, gen_grid};
use umsk_core::pipeline::{dvoretzky_t, extract_near_alpha, verify_growth, verify_shrink, DeltaMode, PipelineOptions};
use umsk_core::{estimate_regularity, extract_beta_regular_um, um_skeleton, MeasuredMetric, MetricMeasureSpace};

fn max_ratio(space: &MetricMeasureSpace, run: &umsk_core::pipeline::SkeletonRun) -> f64 {
    let s = &run.measure.support;
    let rho = common::lca_distances(&run.trimmed.tree, s);
    let mut worst: f64 = 1.0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            worst = worst.max(rho[i][j] / space.dist(s[i], s[j]));
        }
    }
    worst
}

#[test]
fn grid_line_t2_within_distortion_32() {
    let space = gen_grid(1, 128).unwrap();
    let run = um_skeleton(&space, 2, &PipelineOptions::default()).unwrap();
    assert!(max_ratio(&space, &run) <= 32.0);
    assert!(run.report.all_bounds_hold());
}

#[test]
fn cantor_t3_within_distortion_48() {
    let space = gen_cantor(8, 1.0 / 3.0).unwrap();
    let run = um_skeleton(&space, 3, &PipelineOptions::default()).unwrap();
    assert!(max_ratio(&space, &run) <= 48.0);
    assert!(run.report.all_bounds_hold());
}

#[test]
fn growth_holds_on_small_square_grid() {
    let space = gen_grid(2, 8).unwrap();
    let run = um_skeleton(&space, 2, &PipelineOptions::default()).unwrap();
    let table = verify_growth(&space, &run.measure, 2, run.report.lambda_hat as f64, true);
    assert!(table.passed());
    let rows = table.rows.unwrap();
    // every center at radius 0 plus every pairwise distance
    assert!(rows.len() >= space.len() * 2);
    assert!(rows.iter().any(|v| v.radius == 0.0));
}

#[test]
fn shrink_holds_on_cantor_with_constructive_witness() {
    let space = gen_cantor(7, 1.0 / 3.0).unwrap();
    for t in [2, 3] {
        let options = PipelineOptions {
            concentric_probe: true,
            ..PipelineOptions::default()
        };
        let run = um_skeleton(&space, t, &options).unwrap();
        let table = verify_shrink(
            &space,
            &run.trimmed,
            &run.measure,
            t,
            run.report.lambda_hat as f64,
            &options,
        );
        assert!(table.passed(), "t = {t}: {:?}", table.failures.first());
        assert!(table.concentric.is_some());
    }
}

#[test]
fn lambda_mode_runs_also_pass() {
    let space = gen_cantor(6, 1.0 / 3.0).unwrap();
    let options = PipelineOptions {
        delta_mode: DeltaMode::Lambda,
        ..PipelineOptions::default()
    };
    let run = um_skeleton(&space, 2, &options).unwrap();
    assert!(run.report.all_bounds_hold());
    assert!(common::trim_contract_failures(&run.trimmed).is_empty());
}

#[test]
fn single_point_is_degenerate() {
    let space = gen_cantor(0, 1.0 / 3.0).unwrap();
    let run = extract_near_alpha(&space, 2, 1.0, 0.15, None, &PipelineOptions::default()).unwrap();
    assert!(run.report.degenerate);
    assert_eq!(run.report.subset, vec![0]);
    assert_eq!(run.report.distortion, 1.0);
    assert!(run.report.regularity.is_none());
    assert!((run.measure.total() - 1.0).abs() < 1e-12);
}

#[test]
fn ceiling_formula_for_t() {
    let a = 2f64.ln() / 3f64.ln();
    assert_eq!(dvoretzky_t(a, a / 2.0).unwrap(), 2);
    assert_eq!(dvoretzky_t(1.0, 0.9).unwrap(), 10);
    // rounded inputs: 0.6309 / (0.6309 − 0.3155) is just above 2
    assert_eq!(dvoretzky_t(0.6309, 0.3155).unwrap(), 3);
    assert!(dvoretzky_t(1.0, 1.0).is_err());
}

#[test]
fn exponent_fit_of_inputs() {
    let line = gen_grid(1, 1024).unwrap();
    let all: Vec<usize> = line.points().collect();
    let fit = estimate_regularity(&all, line.weights(), |a, b| line.dist(a, b), (0.01, 0.1), 24).unwrap();
    assert!((fit.alpha - 1.0).abs() < 0.05, "line exponent {}", fit.alpha);

    let cantor = gen_cantor(10, 1.0 / 3.0).unwrap();
    let all: Vec<usize> = cantor.points().collect();
    let band = (3f64.powi(-8), 3f64.powi(-2));
    let fit = estimate_regularity(&all, cantor.weights(), |a, b| cantor.dist(a, b), band, 24).unwrap();
    let alpha = 2f64.ln() / 3f64.ln();
    assert!((fit.alpha - alpha).abs() <= 0.05, "cantor exponent {}", fit.alpha);
    let cells: Vec<f64> = (2..=8).map(|k| 3f64.powi(k)).collect();
    assert!((common::box_count_exponent(&cantor, &cells) - alpha).abs() <= 0.05);
}

#[test]
fn half_exponent_on_dyadic_tree() {
    let (tree, nu) = umsk_core::pipeline::dyadic_ultrametric(6);
    let (tr, m) = extract_beta_regular_um(&tree, &nu, 1.0, 0.5).unwrap();
    // σ′(root) = ν(U)^{1/2} = 1
    assert!((tr.sigma[tree.root] - 1.0).abs() < 1e-12);
    assert!((m.total() - 1.0).abs() < 1e-12);
}

#[test]
fn single_leaf_tree_keeps_its_point() {
    let tree = umsk_core::UltrametricTree::from_parents(vec![None], vec![0.0], vec![Some(0)], vec![0]).unwrap();
    let (_, m) = extract_beta_regular_um(&tree, &[0.25], 1.0, 0.5).unwrap();
    assert_eq!(m.support, vec![0]);
    assert!((m.nu[0] - 0.5).abs() < 1e-15);
}

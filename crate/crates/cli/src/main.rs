use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use umsk_core::generators::{Family, GeneratorSpec};
use umsk_core::io::{
    net_tree_from_json, net_tree_to_json, read_json, read_space, to_newick, write_json, write_space, write_verdicts_csv,
};
use umsk_core::pipeline::{
    distortion_check, dvoretzky_extract, extract_near_alpha, verify_growth, verify_shrink, DeltaMode, PipelineOptions,
    DEFAULT_EXPONENT_TOLERANCE,
};
use umsk_core::tree_measure::{strong_triangle_violations, verify_trim};
use umsk_core::{
    induce_measure, verify_net_tree, verify_skeleton, ExtractionReport, MeasuredMetric, MetricMeasureSpace,
    SkeletonMeasure, SkeletonTree, TrimmedTree,
};

#[derive(Parser)]
#[command(
    name = "umsk",
    version,
    about = "Regular ultrametric skeletons of finite metric-measure spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance (JSON, or CSV when the output ends in .csv).
    Generate(GenerateArgs),
    /// Build the skeleton, trim it and check the measure bounds.
    Skeleton(SkeletonArgs),
    /// Extract a subset whose measure has exponent close to --beta.
    Extract(ExtractArgs),
    /// Re-run every verifier on a directory of stored artifacts.
    Verify(VerifyArgs),
    /// Print a summary of stored artifacts and write CSV tables for plotting.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Construction depth (cantor, sierpinski); fallback for --side and --n.
    #[arg(long, default_value_t = 6)]
    level: usize,
    #[arg(long, default_value_t = 1)]
    dimension: usize,
    /// Grid points per axis.
    #[arg(long)]
    side: Option<usize>,
    /// Number of points (random-doubling).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cantor contraction ratio, in (0, 1/2).
    #[arg(long, default_value_t = 1.0 / 3.0)]
    ratio: f64,
    #[arg(long, default_value_t = umsk_core::generators::DEFAULT_POINT_CAP)]
    cap: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DeltaArg {
    Effective,
    Lambda,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, value_enum, default_value_t = DeltaArg::Effective)]
    delta_mode: DeltaArg,
    /// Also test the concentric form of the shrink bound and log its pass rate.
    #[arg(long)]
    concentric_probe: bool,
    /// Allowed distance between fitted and target exponents.
    #[arg(long, default_value_t = DEFAULT_EXPONENT_TOLERANCE)]
    tolerance: f64,
}

impl PipelineArgs {
    fn options(&self) -> PipelineOptions {
        PipelineOptions {
            delta_mode: match self.delta_mode {
                DeltaArg::Effective => DeltaMode::Effective,
                DeltaArg::Lambda => DeltaMode::Lambda,
            },
            concentric_probe: self.concentric_probe,
            ..PipelineOptions::default()
        }
    }
}

#[derive(Args)]
struct SkeletonArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short = 't', long = "t", default_value_t = 2)]
    t: usize,
    /// Regularity exponent of the input; enables the exponent fit.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory written by `skeleton` or `extract`.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    concentric_probe: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Where to write the CSV tables (defaults to the input directory).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

const SPACE: &str = "space.json";
const NET_TREE: &str = "net_tree.json";
const SKELETON: &str = "skeleton.json";
const TREE: &str = "tree.json";
const MEASURE: &str = "measure.json";
const REPORT: &str = "report.json";
const NEWICK: &str = "tree.nwk";
/// Skeleton-stage tree and measure of an extraction run (where `tree.json`
/// and `measure.json` hold the extracted subset).
const SKELETON_TREE: &str = "skeleton_tree.json";
const SKELETON_MEASURE: &str = "skeleton_measure.json";

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("UMSK_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("UMSK_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<bool> {
    let size = match args.family {
        Family::Grid => args.side.unwrap_or(args.level),
        Family::RandomDoubling => args.n.unwrap_or(args.level),
        _ => args.level,
    };
    let spec = GeneratorSpec {
        family: args.family,
        level: size,
        dimension: args.dimension,
        seed: args.seed,
        ratio: args.ratio,
        cap: args.cap,
    };
    let space = spec.generate()?;
    if let Some(dir) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_space(&space, &args.output)?;
    println!("wrote {} points to {}", space.len(), args.output.display());
    Ok(true)
}

fn write_common(
    dir: &Path,
    space: &MetricMeasureSpace,
    net: &umsk_core::NetTree,
    skeleton: &SkeletonTree,
    trimmed: &TrimmedTree,
    measure: &SkeletonMeasure,
    report: &ExtractionReport,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_space(space, &dir.join(SPACE))?;
    fs::write(dir.join(NET_TREE), net_tree_to_json(net, space)? + "\n")?;
    write_json(skeleton, &dir.join(SKELETON))?;
    write_json(trimmed, &dir.join(TREE))?;
    write_json(measure, &dir.join(MEASURE))?;
    write_json(report, &dir.join(REPORT))?;
    fs::write(
        dir.join(NEWICK),
        to_newick(&trimmed.tree, Some(&trimmed.kept), space.ids()) + "\n",
    )?;
    Ok(())
}

fn print_outcome(report: &ExtractionReport) {
    println!(
        "{}: {} of {} points kept, t = {}, distortion {:.3} (bound {}), growth {}/{} ok, shrink {}/{} ok",
        report.space,
        report.subset.len(),
        report.n_points,
        report.t,
        report.distortion,
        report.distortion_bound,
        report.growth_check.checked - report.growth_check.failures.len(),
        report.growth_check.checked,
        report.shrink_check.checked - report.shrink_check.failures.len(),
        report.shrink_check.checked,
    );
    if let Some(fit) = &report.regularity {
        println!(
            "fitted exponent {:.4} (target {:.4})",
            fit.alpha,
            report.target_exponent.unwrap_or(f64::NAN)
        );
    }
}

fn skeleton(args: &SkeletonArgs) -> Result<bool> {
    let space = read_space(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let options = args.pipeline.options();
    let run = match args.alpha {
        Some(alpha) => extract_near_alpha(&space, args.t, alpha, args.pipeline.tolerance, None, &options)?,
        None => umsk_core::um_skeleton(&space, args.t, &options)?,
    };
    write_common(
        &args.output,
        &space,
        &run.net,
        &run.skeleton,
        &run.trimmed,
        &run.measure,
        &run.report,
    )?;
    print_outcome(&run.report);
    Ok(run.report.all_bounds_hold())
}

fn extract(args: &ExtractArgs) -> Result<bool> {
    let space = read_space(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let run = dvoretzky_extract(
        &space,
        args.alpha,
        args.beta,
        args.pipeline.tolerance,
        None,
        &args.pipeline.options(),
    )?;
    let sk = &run.skeleton;
    write_common(
        &args.output,
        &space,
        &sk.net,
        &sk.skeleton,
        &run.trimmed,
        &run.measure,
        &run.report,
    )?;
    write_json(&sk.trimmed, &args.output.join(SKELETON_TREE))?;
    write_json(&sk.measure, &args.output.join(SKELETON_MEASURE))?;
    print_outcome(&run.report);
    Ok(run.report.all_bounds_hold())
}

struct Artifacts {
    space: MetricMeasureSpace,
    report: ExtractionReport,
    net: umsk_core::NetTree,
    skeleton: SkeletonTree,
    tree: TrimmedTree,
    measure: SkeletonMeasure,
    /// Tree and measure the growth and shrink bounds refer to.
    stage: Option<(TrimmedTree, SkeletonMeasure)>,
}

fn load(dir: &Path) -> Result<Artifacts> {
    let ctx = |name: &str| format!("reading {}", dir.join(name).display());
    let space = read_space(&dir.join(SPACE)).with_context(|| ctx(SPACE))?;
    let net_text = fs::read_to_string(dir.join(NET_TREE)).with_context(|| ctx(NET_TREE))?;
    let net = net_tree_from_json(&net_text, &space).with_context(|| ctx(NET_TREE))?;
    let stage = if dir.join(SKELETON_TREE).exists() {
        Some((
            read_json(&dir.join(SKELETON_TREE)).with_context(|| ctx(SKELETON_TREE))?,
            read_json(&dir.join(SKELETON_MEASURE)).with_context(|| ctx(SKELETON_MEASURE))?,
        ))
    } else {
        None
    };
    let measure: SkeletonMeasure = read_json(&dir.join(MEASURE)).with_context(|| ctx(MEASURE))?;
    if measure.nu.len() != space.len() {
        bail!("{MEASURE} has {} masses for {} points", measure.nu.len(), space.len());
    }
    Ok(Artifacts {
        report: read_json(&dir.join(REPORT)).with_context(|| ctx(REPORT))?,
        skeleton: read_json(&dir.join(SKELETON)).with_context(|| ctx(SKELETON))?,
        tree: read_json(&dir.join(TREE)).with_context(|| ctx(TREE))?,
        measure,
        space,
        net,
        stage,
    })
}

fn measures_agree(a: &SkeletonMeasure, b: &SkeletonMeasure) -> bool {
    a.support == b.support
        && a.nu.len() == b.nu.len()
        && a.nu
            .iter()
            .zip(&b.nu)
            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let a = load(&args.input)?;
    let t = a.report.t;
    let lambda = a.report.lambda_hat as f64;
    let mut failures: Vec<String> = Vec::new();
    let mut note = |name: &str, problems: Vec<String>| {
        if problems.is_empty() {
            println!("ok    {name}");
        } else {
            println!("FAIL  {name}: {} problem(s)", problems.len());
            for p in problems.iter().take(5) {
                println!("      {p}");
            }
            failures.push(name.to_string());
        }
    };
    let lines = |r: umsk_core::ValidationReport| r.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>();

    note("net-tree", lines(verify_net_tree(&a.net, &a.space)?));
    note("skeleton", lines(verify_skeleton(&a.skeleton, &a.space, lambda)));
    note("trim", lines(verify_trim(&a.tree)));
    let induced = induce_measure(&a.tree, a.space.len())?;
    note(
        "measure-consistency",
        if measures_agree(&induced, &a.measure) {
            vec![]
        } else {
            vec![format!(
                "{MEASURE} differs from the masses of the kept leaves in {TREE}"
            )]
        },
    );
    let (_, dist) = distortion_check(&a.space, &a.tree, 16.0 * t as f64);
    note("distortion", lines(dist));
    if a.measure.support.len() <= 300 {
        note(
            "ultrametric",
            lines(strong_triangle_violations(&a.tree.tree, &a.measure.support)?),
        );
    }

    let (tree, measure) = a.stage.as_ref().map_or((&a.tree, &a.measure), |(t, m)| (t, m));
    if a.stage.is_some() {
        let induced = induce_measure(tree, a.space.len())?;
        note(
            "skeleton-measure-consistency",
            if measures_agree(&induced, measure) {
                vec![]
            } else {
                vec![format!(
                    "{SKELETON_MEASURE} differs from the masses of the kept leaves in {SKELETON_TREE}"
                )]
            },
        );
    }
    let options = PipelineOptions {
        concentric_probe: args.concentric_probe,
        ..PipelineOptions::default()
    };
    let growth = verify_growth(&a.space, measure, t, lambda, false);
    let shrink = verify_shrink(&a.space, tree, measure, t, lambda, &options);
    for table in [&growth, &shrink] {
        let problems = table
            .failures
            .iter()
            .map(|v| {
                format!(
                    "center {} radius {}: lhs {} rhs {}",
                    a.space.id(v.center),
                    v.radius,
                    v.lhs,
                    v.rhs
                )
            })
            .collect();
        note(&table.inequality, problems);
    }
    if let Some(p) = &shrink.concentric {
        println!("      concentric shrink probe: {}/{} passed", p.passed, p.checked);
    }
    if failures.is_empty() {
        println!("all checks passed");
        Ok(true)
    } else {
        println!("failed: {}", failures.join(", "));
        Ok(false)
    }
}

fn report(args: &ReportArgs) -> Result<bool> {
    let a = load(&args.input)?;
    let out = args.output.clone().unwrap_or_else(|| args.input.clone());
    fs::create_dir_all(&out)?;
    let r = &a.report;
    let mut text = String::new();
    writeln!(
        text,
        "space            {} ({} points, scale {})",
        r.space,
        r.n_points,
        a.space.scale_factor()
    )?;
    writeln!(text, "t                {}", r.t)?;
    writeln!(text, "doubling bound   {}", r.lambda_hat)?;
    writeln!(text, "delta            {} ({:?})", r.delta_param, r.delta_mode)?;
    writeln!(
        text,
        "subset           {} points{}",
        r.subset.len(),
        if r.degenerate { " (degenerate)" } else { "" }
    )?;
    writeln!(text, "measure total    {}", a.measure.total())?;
    writeln!(
        text,
        "distortion       {:.4} of at most {}",
        r.distortion, r.distortion_bound
    )?;
    for table in [&r.growth_check, &r.shrink_check] {
        let worst = table
            .worst
            .as_ref()
            .map_or(String::from("-"), |v| format!("{:.3e}", v.margin));
        writeln!(
            text,
            "{:<16} {}/{} pairs hold, smallest margin {worst}",
            table.inequality,
            table.checked - table.failures.len(),
            table.checked
        )?;
    }
    if let Some(p) = &r.shrink_check.concentric {
        writeln!(text, "concentric probe {}/{} pairs hold", p.passed, p.checked)?;
    }
    if let Some(fit) = &r.regularity {
        writeln!(
            text,
            "exponent fit     {:.4} over [{:.3e}, {:.3e}], target {:.4}, c = {:.3e}, C = {:.3e}",
            fit.alpha,
            fit.fit_range.0,
            fit.fit_range.1,
            r.target_exponent.unwrap_or(f64::NAN),
            fit.c_lower,
            fit.c_upper
        )?;
    }
    print!("{text}");
    fs::write(out.join("summary.txt"), &text)?;

    let (tree, measure) = a.stage.as_ref().map_or((&a.tree, &a.measure), |(t, m)| (t, m));
    let lambda = r.lambda_hat as f64;
    let growth = verify_growth(&a.space, measure, r.t, lambda, true);
    let options = PipelineOptions {
        keep_rows: true,
        ..PipelineOptions::default()
    };
    let shrink = verify_shrink(&a.space, tree, measure, r.t, lambda, &options);
    write_verdicts_csv(
        &[&growth, &shrink],
        &a.space,
        BufWriter::new(File::create(out.join("verdicts.csv"))?),
    )?;
    write_ball_profile(&a.space, &a.measure, &out.join("ball_profile.csv"))?;
    println!(
        "wrote summary.txt, verdicts.csv and ball_profile.csv to {}",
        out.display()
    );
    Ok(true)
}

/// Mean input and subset mass of balls around support points, per radius.
fn write_ball_profile(space: &MetricMeasureSpace, measure: &SkeletonMeasure, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["radius", "mean_input_mass", "mean_subset_mass"])?;
    let support = &measure.support;
    let lo = space.min_positive_distance().unwrap_or(1.0);
    let steps = 32;
    for k in 0..=steps {
        let r = lo * (1.0 / lo).powf(k as f64 / steps as f64);
        let (mut mu, mut nu) = (0.0, 0.0);
        for &x in support {
            for y in space.points() {
                if space.dist(x, y) <= r {
                    mu += space.weight(y);
                    nu += measure.nu[y];
                }
            }
        }
        let n = support.len().max(1) as f64;
        w.write_record([r.to_string(), (mu / n).to_string(), (nu / n).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Skeleton(a) => skeleton(a),
        Command::Extract(a) => extract(a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stylesplit_core::harness::{
    default_grid, prepare_cohort, render_report, run_correlation, run_grid_to_dir, write_run_dir,
    ExperimentConfig, ExperimentKind, Reports,
};
use stylesplit_core::io::{read_cohort, write_cohort};
use stylesplit_core::objective::{compute_baseline, Evaluator, LogLine, ObjectiveKind};
use stylesplit_core::optimizer::StopReason;
use stylesplit_core::{
    misclassification, optimize_partition, partition_misclassification, recursive_partition,
    Layout, Partition, PartitionTreeNode, StyleSpec,
};

#[derive(Parser)]
#[command(
    name = "stylesplit",
    version,
    about = "Discover segmentation styles in a cohort"
)]
struct Cli {
    /// Worker threads for fits and evaluations.
    #[arg(long, global = true, env = "STYLESPLIT_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a styled phantom cohort on disk.
    Synth(SynthArgs),
    /// Split a cohort on disk into style groups.
    Partition(PartitionArgs),
    /// Run the variation grid.
    Grid(GridArgs),
    /// Sample F and G around the true-label partition.
    Correlate(CorrelateArgs),
    /// Re-render the reports of a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_json(&text)
                    .with_context(|| format!("parsing {}", path.display()))
            }
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Cohort seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated `op:mean:std` styles.
    #[arg(long)]
    styles: Option<String>,
    /// `two-style` or `three-style`.
    #[arg(long)]
    layout: Option<Layout>,
    /// Output cohort directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Cohort directory written by `synth`.
    #[arg(long)]
    cohort: PathBuf,
    /// Maximum true evaluations per split.
    #[arg(long)]
    budget: Option<usize>,
    /// Warm-up evaluations per split.
    #[arg(long)]
    warmup: Option<usize>,
    /// Optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Split recursively until this many groups exist.
    #[arg(long)]
    groups: Option<usize>,
    /// Output JSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    /// JSON array of experiment configs; defaults to the nine built-in rows.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the built-in rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Cohort and optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated `op:mean:std` styles.
    #[arg(long)]
    styles: Option<String>,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding `report.json`.
    #[arg(long)]
    run: PathBuf,
    /// Output directory; defaults to the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Synth(args) => synth(args),
        Command::Partition(args) => partition(args),
        Command::Grid(args) => grid(args),
        Command::Correlate(args) => correlate(args),
        Command::Report(args) => report(args),
    }
}

fn apply_styles(cfg: &mut ExperimentConfig, styles: Option<&str>) -> Result<()> {
    if let Some(list) = styles {
        cfg.cohort.styles = StyleSpec::parse_list(list)?;
    }
    Ok(())
}

fn apply_seed(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.cohort.seed = s;
        cfg.ga.seed = s;
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    apply_seed(&mut cfg, args.seed);
    apply_styles(&mut cfg, args.styles.as_deref())?;
    if let Some(layout) = args.layout {
        cfg.cohort.layout = layout;
    }
    cfg.validate()?;
    let cohort = cfg.cohort.build()?;
    write_cohort(&args.out, &cohort)?;
    println!(
        "wrote {} scans ({} to optimize) to {}",
        cohort.scans.len(),
        cohort.optimize_ids.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PartitionRun {
    scan_ids: Vec<String>,
    best: Option<Partition>,
    best_value: Option<f64>,
    stop_reason: Option<StopReason>,
    groups: Vec<Vec<String>>,
    misclassified: usize,
    true_evaluations: usize,
    tree: Option<PartitionTreeNode>,
    log: Vec<LogLine>,
}

fn partition(args: PartitionArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(b) = args.budget {
        cfg.ga.max_true_evaluations = b;
    }
    if let Some(w) = args.warmup {
        cfg.ga.warmup_evaluations = w;
    }
    if let Some(s) = args.seed {
        cfg.ga.seed = s;
    }
    cfg.ga.validate()?;
    let cohort = read_cohort(&args.cohort)
        .with_context(|| format!("reading cohort {}", args.cohort.display()))?;
    let prepared = prepare_cohort(cohort, &cfg.learner, cfg.metric)?;
    let trainer = prepared.trainer.as_ref();
    let scan_ids: Vec<String> = prepared.cohort.optimize_ids.clone();
    let ids = |g: &[usize]| g.iter().map(|&i| scan_ids[i].clone()).collect::<Vec<_>>();

    let run = match args.groups {
        Some(k) if k > 2 => {
            cfg.recursive.expected_groups = Some(k);
            let all: Vec<usize> = (0..trainer.len()).collect();
            let tree = recursive_partition(trainer, &all, &cfg.ga, &cfg.recursive)?;
            let leaves = tree.leaves();
            let decisions = tree.decisions();
            PartitionRun {
                scan_ids: scan_ids.clone(),
                best: None,
                best_value: None,
                stop_reason: None,
                groups: leaves.iter().map(|l| ids(l)).collect(),
                misclassified: misclassification(&leaves, &prepared.labels)?,
                true_evaluations: decisions.iter().map(|d| d.true_evaluations).sum(),
                log: decisions
                    .iter()
                    .flat_map(|d| d.log.iter().cloned())
                    .collect(),
                tree: Some(tree),
            }
        }
        Some(k) if k < 2 => bail!("--groups must be at least 2"),
        _ => {
            let baseline = compute_baseline(trainer, cfg.recursive.baseline_floor)?;
            let evaluator = Evaluator::new(trainer, &baseline, ObjectiveKind::ProxyG, cfg.ga.seed);
            let result = optimize_partition(&evaluator, &cfg.ga)?;
            let (a, b) = result.best.groups();
            PartitionRun {
                scan_ids: scan_ids.clone(),
                misclassified: partition_misclassification(&result.best, &prepared.labels)?,
                groups: vec![ids(&a), ids(&b)],
                best: Some(result.best),
                best_value: Some(result.best_value),
                stop_reason: Some(result.stop_reason),
                true_evaluations: result.true_evaluations,
                tree: None,
                log: evaluator.log(),
            }
        }
    };
    write_json(&args.out, &run)?;
    println!(
        "{} groups, {} misclassified, {} true evaluations; wrote {}",
        run.groups.len(),
        run.misclassified,
        run.true_evaluations,
        args.out.display()
    );
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn grid(args: GridArgs) -> Result<()> {
    let rows = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let rows: Vec<ExperimentConfig> = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            for row in &rows {
                row.validate()?;
            }
            rows
        }
        None => default_grid(args.seed),
    };
    if rows
        .iter()
        .any(|r| r.experiment == ExperimentKind::Correlation)
    {
        bail!("grid rows must be grid-row or recursive experiments");
    }
    let outcomes = run_grid_to_dir(&rows, args.jobs, &args.out)?;
    for o in &outcomes {
        println!(
            "{}: misclassified {}, {} true evaluations",
            o.report.label(),
            o.report.misclassified,
            o.report.true_evaluations
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let mut cfg = args.config.load()?;
    cfg.experiment = ExperimentKind::Correlation;
    apply_seed(&mut cfg, args.seed);
    apply_styles(&mut cfg, args.styles.as_deref())?;
    let outcome = run_correlation(&cfg)?;
    let reports = Reports {
        grid: Vec::new(),
        correlation: vec![outcome.report.clone()],
    };
    write_run_dir(
        &args.out,
        &[&outcome.cohort],
        &[(cfg.label(), outcome.log.as_slice())],
        &reports,
    )?;
    println!(
        "{} solutions, rho = {:.3}; wrote {}",
        outcome.report.samples.len(),
        outcome.report.rho,
        args.out.display()
    );
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let path = args.run.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let reports: Reports = serde_json::from_str(&text)?;
    let rendered = render_report(&reports)?;
    let out = args.out.unwrap_or(args.run);
    fs::create_dir_all(&out)?;
    fs::write(out.join("grid.csv"), rendered.grid_csv)?;
    fs::write(out.join("correlation.csv"), rendered.correlation_csv)?;
    fs::write(out.join("report.md"), &rendered.markdown)?;
    print!("{}", rendered.markdown);
    Ok(())
}

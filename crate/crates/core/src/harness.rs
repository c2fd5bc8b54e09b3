//! Experiment driver: variation-grid rows, the F/G correlation study and
//! report rendering.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{CohortTrainer, LearnerSpec};
use crate::metrics::{MetricConfig, ScorePair};
use crate::objective::{
    compute_baseline, direct_f, leave_one_out, mean_scores, write_jsonl, Evaluator, LogLine,
    ObjectiveKind, Partition,
};
use crate::optimizer::{
    misclassification, optimize_partition, partition_misclassification, recursive_partition,
    GaConfig, OptimizationResult, PartitionTreeNode, RecursiveConfig,
};
use crate::sim::{
    build_experiment_cohort, Layout, PhantomConfig, StyleOp, StyleSpec, StyledCohort,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub styles: Vec<StyleSpec>,
    pub layout: Layout,
    pub seed: u64,
    pub phantom: PhantomConfig,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            styles: StyleSpec::parse_list("erosion:10:4,dilation:10:4")
                .expect("default styles parse"),
            layout: Layout::TwoStyle,
            seed: 0,
            phantom: PhantomConfig::default(),
        }
    }
}

impl CohortConfig {
    pub fn build(&self) -> Result<StyledCohort> {
        build_experiment_cohort(self.seed, &self.styles, self.layout, &self.phantom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// One two-way split, scored against the mixture model.
    GridRow,
    /// F and G around the true-label partition.
    Correlation,
    /// Repeated splitting for more than two styles.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub max_distance: usize,
    pub per_distance: usize,
    /// Random flip sets tried per distance before giving up.
    pub max_attempts: usize,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            max_distance: 10,
            per_distance: 5,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub cohort: CohortConfig,
    pub learner: LearnerSpec,
    pub metric: MetricConfig,
    pub ga: GaConfig,
    pub recursive: RecursiveConfig,
    pub correlation: CorrelationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::GridRow,
            cohort: CohortConfig::default(),
            learner: LearnerSpec::default(),
            metric: MetricConfig::default(),
            ga: GaConfig::default(),
            recursive: RecursiveConfig::default(),
            correlation: CorrelationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohort.styles.len() != self.cohort.layout.styles() {
            return Err(Error::Config(format!(
                "layout {:?} needs {} styles, got {}",
                self.cohort.layout,
                self.cohort.layout.styles(),
                self.cohort.styles.len()
            )));
        }
        MetricConfig::new(self.metric.tau)?;
        self.ga.validate()?;
        if self.experiment == ExperimentKind::Correlation && self.cohort.styles.len() != 2 {
            return Err(Error::Config(
                "the correlation study needs two styles".into(),
            ));
        }
        if self.correlation.per_distance == 0 || self.correlation.max_distance == 0 {
            return Err(Error::Config(
                "correlation sample sizes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Row label such as `erosion/dilation N(10,4)`.
    pub fn label(&self) -> String {
        format!(
            "{} {}",
            variation_names(&self.cohort.styles),
            magnitude_label(&self.cohort.styles)
        )
    }
}

fn variation_names(specs: &[StyleSpec]) -> String {
    specs
        .iter()
        .map(|s| s.operation.name())
        .collect::<Vec<_>>()
        .join("/")
}

fn magnitude_label(specs: &[StyleSpec]) -> String {
    let mut labels: Vec<String> = specs.iter().map(StyleSpec::magnitude_label).collect();
    labels.dedup();
    labels.join("/")
}

/// The nine default rows: four operation pairs at two magnitudes, then the
/// three-style row.
pub fn default_grid(seed: u64) -> Vec<ExperimentConfig> {
    let pairs = [
        ("erosion", "dilation"),
        ("shift-up", "shift-down"),
        ("bottom-over", "bottom-under"),
        ("top-over", "top-under"),
    ];
    let mut rows = Vec::new();
    for (a, b) in pairs {
        for magnitude in ["10:4", "5:1"] {
            let styles = StyleSpec::parse_list(&format!("{a}:{magnitude},{b}:{magnitude}"))
                .expect("built-in styles parse");
            rows.push(row_config(
                seed,
                styles,
                Layout::TwoStyle,
                ExperimentKind::GridRow,
            ));
        }
    }
    let styles = StyleSpec::parse_list("top-over:10:4,top-under:10:4,bottom-under:10:4")
        .expect("built-in styles parse");
    let mut three = row_config(seed, styles, Layout::ThreeStyle, ExperimentKind::Recursive);
    three.recursive.expected_groups = Some(3);
    rows.push(three);
    rows
}

fn row_config(
    seed: u64,
    styles: Vec<StyleSpec>,
    layout: Layout,
    experiment: ExperimentKind,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        cohort: CohortConfig {
            styles,
            layout,
            seed,
            ..CohortConfig::default()
        },
        ga: GaConfig {
            seed,
            ..GaConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

/// A cohort with its learner pretrained and bound to the optimize scans.
pub struct PreparedCohort {
    pub cohort: StyledCohort,
    pub trainer: Box<dyn CohortTrainer>,
    pub labels: Vec<usize>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedCohort> {
    let cohort = cfg.cohort.build().map_err(|e| e.in_stage("cohort"))?;
    prepare_cohort(cohort, &cfg.learner, cfg.metric)
}

/// Pretrains `learner` on the cohort's pretraining scans and binds it to the
/// optimize scans.
pub fn prepare_cohort(
    cohort: StyledCohort,
    learner: &LearnerSpec,
    metric: MetricConfig,
) -> Result<PreparedCohort> {
    let spec = learner
        .pretrain(&cohort.pretrain_scans())
        .map_err(|e| e.in_stage("pretrain"))?;
    let trainer = spec
        .bind(cohort.optimize_scans(), metric)
        .map_err(|e| e.in_stage("pretrain"))?;
    let labels = cohort.optimize_labels();
    Ok(PreparedCohort {
        cohort,
        trainer,
        labels,
    })
}

/// One line of the variation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRowReport {
    pub variations: Vec<StyleOp>,
    pub magnitude: String,
    pub seed: u64,
    pub misclassified: usize,
    /// Scan ids of each discovered group.
    pub groups: Vec<Vec<String>>,
    /// Mean leave-one-out scores of one model trained on all scans.
    pub mixture: ScorePair,
    /// Mean leave-one-out scores within the discovered groups; absent when a
    /// group is too small for leave-one-out.
    pub specific: Option<ScorePair>,
    pub true_evaluations: usize,
}

fn improvement(mixture: f64, specific: f64) -> f64 {
    100.0 * (specific - mixture) / mixture
}

impl GridRowReport {
    pub fn label(&self) -> String {
        let names: Vec<&str> = self.variations.iter().map(|v| v.name()).collect();
        format!("{} {}", names.join("/"), self.magnitude)
    }

    /// Relative DSC improvement of the specific over the mixture models, in %.
    pub fn dsc_improvement(&self) -> Option<f64> {
        self.specific.map(|s| improvement(self.mixture.dsc, s.dsc))
    }

    /// Relative SDSC improvement of the specific over the mixture models, in %.
    pub fn sdsc_improvement(&self) -> Option<f64> {
        self.specific
            .map(|s| improvement(self.mixture.sdsc, s.sdsc))
    }
}

/// Everything a grid row produced.
#[derive(Debug, Clone, Serialize)]
pub struct GridRowOutcome {
    pub report: GridRowReport,
    pub cohort: StyledCohort,
    /// Best two-way split, for single-split rows.
    pub optimization: Option<OptimizationResult>,
    /// Split hierarchy, for recursive rows.
    pub tree: Option<PartitionTreeNode>,
    /// True evaluations in order.
    #[serde(skip)]
    pub log: Vec<LogLine>,
}

/// Builds the cohort, optimizes the split and scores mixture and specific
/// models. Ground-truth labels only enter the misclassification count.
pub fn run_grid_row(cfg: &ExperimentConfig) -> Result<GridRowOutcome> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    match cfg.experiment {
        ExperimentKind::GridRow => split_once(cfg, prepared),
        ExperimentKind::Recursive => split_recursively(cfg, prepared),
        ExperimentKind::Correlation => Err(Error::Config(
            "a correlation config cannot run as a grid row".into(),
        )),
    }
}

fn ids_of(trainer: &dyn CohortTrainer, group: &[usize]) -> Vec<String> {
    group
        .iter()
        .map(|&i| trainer.scan_id(i).to_string())
        .collect()
}

fn split_once(cfg: &ExperimentConfig, prepared: PreparedCohort) -> Result<GridRowOutcome> {
    let trainer = prepared.trainer.as_ref();
    let baseline = compute_baseline(trainer, cfg.recursive.baseline_floor)
        .map_err(|e| e.in_stage("baseline"))?;
    let evaluator = Evaluator::new(trainer, &baseline, ObjectiveKind::ProxyG, cfg.ga.seed);
    let run = optimize_partition(&evaluator, &cfg.ga).map_err(|e| e.in_stage("optimize"))?;
    let specific = if run.best.min_group() >= 2 {
        let f = direct_f(trainer, &baseline, &run.best).map_err(|e| e.in_stage("specific"))?;
        Some(mean_scores(&f.scores))
    } else {
        None
    };
    let misclassified = partition_misclassification(&run.best, &prepared.labels)?;
    let (a, b) = run.best.groups();
    let report = GridRowReport {
        variations: cfg.cohort.styles.iter().map(|s| s.operation).collect(),
        magnitude: magnitude_label(&cfg.cohort.styles),
        seed: cfg.cohort.seed,
        misclassified,
        groups: vec![ids_of(trainer, &a), ids_of(trainer, &b)],
        mixture: baseline.mean(),
        specific,
        true_evaluations: run.true_evaluations,
    };
    Ok(GridRowOutcome {
        report,
        cohort: prepared.cohort,
        optimization: Some(run),
        tree: None,
        log: evaluator.log(),
    })
}

fn split_recursively(cfg: &ExperimentConfig, prepared: PreparedCohort) -> Result<GridRowOutcome> {
    let trainer = prepared.trainer.as_ref();
    let all: Vec<usize> = (0..trainer.len()).collect();
    let tree = recursive_partition(trainer, &all, &cfg.ga, &cfg.recursive)
        .map_err(|e| e.in_stage("optimize"))?;
    let leaves = tree.leaves();
    let mixture = match &tree.decision {
        Some(d) => d.mixture,
        None => compute_baseline(trainer, cfg.recursive.baseline_floor)
            .map_err(|e| e.in_stage("baseline"))?
            .mean(),
    };
    let specific = if leaves.iter().all(|l| l.len() >= 2) {
        let mut scores = Vec::with_capacity(all.len());
        for leaf in &leaves {
            scores.extend(leave_one_out(trainer, leaf).map_err(|e| e.in_stage("specific"))?);
        }
        Some(mean_scores(&scores))
    } else {
        None
    };
    let decisions = tree.decisions();
    let report = GridRowReport {
        variations: cfg.cohort.styles.iter().map(|s| s.operation).collect(),
        magnitude: magnitude_label(&cfg.cohort.styles),
        seed: cfg.cohort.seed,
        misclassified: misclassification(&leaves, &prepared.labels)?,
        groups: leaves.iter().map(|l| ids_of(trainer, l)).collect(),
        mixture,
        specific,
        true_evaluations: decisions.iter().map(|d| d.true_evaluations).sum(),
    };
    let log = decisions
        .iter()
        .flat_map(|d| d.log.iter().cloned())
        .collect();
    Ok(GridRowOutcome {
        report,
        cohort: prepared.cohort,
        optimization: None,
        tree: Some(tree),
        log,
    })
}

/// Runs grid rows, up to `jobs` at a time, returning outcomes in row order.
pub fn run_grid(rows: &[ExperimentConfig], jobs: usize) -> Result<Vec<GridRowOutcome>> {
    let jobs = jobs.clamp(1, rows.len().max(1));
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<GridRowOutcome>>> = (0..rows.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= rows.len() {
                    break;
                }
                let outcome = run_grid_row(&rows[i]);
                done.lock()
                    .expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_iter()
        .zip(rows)
        .map(|(slot, row)| {
            slot.expect("every row ran").map_err(|e| Error::Stage {
                stage: "grid row",
                source: Box::new(Error::Config(format!("{}: {e}", row.label()))),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSample {
    pub distance: usize,
    pub partition: Partition,
    pub f: f64,
    pub g: f64,
    pub optimum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub variations: Vec<StyleOp>,
    pub magnitude: String,
    pub seed: u64,
    /// The true-label partition first, then `per_distance` samples per
    /// Hamming distance in increasing order.
    pub samples: Vec<CorrelationSample>,
    /// Pearson correlation of F and G over all samples.
    pub rho: f64,
}

impl CorrelationReport {
    pub fn optimum(&self) -> &CorrelationSample {
        self.samples
            .iter()
            .find(|s| s.optimum)
            .expect("optimum is always sampled")
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationOutcome {
    pub report: CorrelationReport,
    pub cohort: StyledCohort,
    /// G evaluations followed by F evaluations.
    pub log: Vec<LogLine>,
}

/// Pearson correlation coefficient; NaN when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Draws `per_distance` distinct partitions at each Hamming distance from
/// `truth`, by flipping uniformly random sets of scans. Partitions whose
/// smaller group has fewer than two scans are skipped.
pub fn hamming_sample(
    truth: &Partition,
    cfg: &CorrelationConfig,
    seed: u64,
) -> Result<Vec<(usize, Partition)>> {
    let n = truth.len();
    if 2 * cfg.max_distance > n {
        return Err(Error::Config(format!(
            "distance {} is ambiguous for {n} scans",
            cfg.max_distance
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Partition> = HashSet::from([truth.clone()]);
    let mut out = Vec::new();
    for d in 1..=cfg.max_distance {
        let mut found = 0;
        let mut attempts = 0;
        while found < cfg.per_distance {
            if attempts == cfg.max_attempts {
                return Err(Error::Config(format!(
                    "only {found} distinct solutions at distance {d}"
                )));
            }
            attempts += 1;
            let flips = sample(&mut rng, n, d).into_vec();
            let p = truth.flipped(&flips);
            if p.min_group() >= 2 && seen.insert(p.clone()) {
                out.push((d, p));
                found += 1;
            }
        }
    }
    Ok(out)
}

/// Evaluates F and G at the true-label partition and at random partitions
/// around it.
pub fn run_correlation(cfg: &ExperimentConfig) -> Result<CorrelationOutcome> {
    cfg.validate()?;
    let prepared = prepare(cfg)?;
    let trainer = prepared.trainer.as_ref();
    let truth = Partition::from_labels(&prepared.labels)?;
    let mut points = vec![(0, truth.clone())];
    points.extend(
        hamming_sample(&truth, &cfg.correlation, cfg.ga.seed).map_err(|e| e.in_stage("sample"))?,
    );
    let partitions: Vec<Partition> = points.iter().map(|(_, p)| p.clone()).collect();

    let baseline = compute_baseline(trainer, cfg.recursive.baseline_floor)
        .map_err(|e| e.in_stage("baseline"))?;
    let g_eval = Evaluator::new(trainer, &baseline, ObjectiveKind::ProxyG, cfg.ga.seed);
    let f_eval = Evaluator::new(trainer, &baseline, ObjectiveKind::DirectF, cfg.ga.seed);
    let g = g_eval
        .evaluate_batch(&partitions)
        .map_err(|e| e.in_stage("proxy"))?;
    let f = f_eval
        .evaluate_batch(&partitions)
        .map_err(|e| e.in_stage("direct"))?;

    let samples: Vec<CorrelationSample> = points
        .into_iter()
        .zip(f.iter().zip(&g))
        .map(|((distance, partition), (f, g))| CorrelationSample {
            optimum: distance == 0,
            distance,
            partition,
            f: f.value,
            g: g.value,
        })
        .collect();
    let fs: Vec<f64> = samples.iter().map(|s| s.f).collect();
    let gs: Vec<f64> = samples.iter().map(|s| s.g).collect();
    let report = CorrelationReport {
        variations: cfg.cohort.styles.iter().map(|s| s.operation).collect(),
        magnitude: magnitude_label(&cfg.cohort.styles),
        seed: cfg.cohort.seed,
        rho: pearson(&fs, &gs),
        samples,
    };
    let mut log = g_eval.log();
    log.extend(f_eval.log());
    Ok(CorrelationOutcome {
        report,
        cohort: prepared.cohort,
        log,
    })
}

/// Reports collected for rendering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reports {
    pub grid: Vec<GridRowReport>,
    pub correlation: Vec<CorrelationReport>,
}

/// Rendered report files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub grid_csv: String,
    pub correlation_csv: String,
    pub markdown: String,
    pub json: String,
}

pub const GRID_COLUMNS: [&str; 9] = [
    "variations",
    "magnitude",
    "misclassified",
    "dsc_mixture",
    "dsc_specific",
    "dsc_improvement_pct",
    "sdsc_mixture",
    "sdsc_specific",
    "sdsc_improvement_pct",
];

fn two_decimals(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.2}"),
        Some(x) if x.is_nan() => "nan".into(),
        Some(x) if x > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => "n/a".into(),
    }
}

fn grid_cells(r: &GridRowReport) -> [String; 9] {
    let names: Vec<&str> = r.variations.iter().map(|v| v.name()).collect();
    [
        names.join("/"),
        r.magnitude.clone(),
        r.misclassified.to_string(),
        two_decimals(Some(r.mixture.dsc)),
        two_decimals(r.specific.map(|s| s.dsc)),
        two_decimals(r.dsc_improvement()),
        two_decimals(Some(r.mixture.sdsc)),
        two_decimals(r.specific.map(|s| s.sdsc)),
        two_decimals(r.sdsc_improvement()),
    ]
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_grid_csv(rows: &[GridRowReport]) -> Result<String> {
    csv_string(&GRID_COLUMNS, rows.iter().map(|r| grid_cells(r).to_vec()))
}

pub fn render_correlation_csv(reports: &[CorrelationReport]) -> Result<String> {
    let header = ["row", "distance", "partition", "f", "g", "optimum"];
    let rows = reports.iter().flat_map(|r| {
        let label = format!(
            "{} {}",
            r.variations
                .iter()
                .map(|v| v.name())
                .collect::<Vec<_>>()
                .join("/"),
            r.magnitude
        );
        r.samples.iter().map(move |s| {
            vec![
                label.clone(),
                s.distance.to_string(),
                s.partition.to_string(),
                format!("{:.6}", s.f),
                format!("{:.6}", s.g),
                s.optimum.to_string(),
            ]
        })
    });
    csv_string(&header, rows)
}

pub fn render_markdown(reports: &Reports) -> String {
    let mut md = String::new();
    if !reports.grid.is_empty() {
        md.push_str("## Variation grid\n\n");
        md.push_str("| Variations | Magnitude | Misclass. | DSC mixture | DSC specific | DSC impr. (%) | SDSC mixture | SDSC specific | SDSC impr. (%) |\n");
        md.push_str("|---|---|---:|---:|---:|---:|---:|---:|---:|\n");
        for r in &reports.grid {
            let _ = writeln!(md, "| {} |", grid_cells(r).join(" | "));
        }
    }
    if !reports.correlation.is_empty() {
        if !md.is_empty() {
            md.push('\n');
        }
        md.push_str("## F/G correlation\n\n");
        md.push_str("| Variations | Magnitude | Solutions | F at optimum | G at optimum | rho |\n");
        md.push_str("|---|---|---:|---:|---:|---:|\n");
        for r in &reports.correlation {
            let names: Vec<&str> = r.variations.iter().map(|v| v.name()).collect();
            let opt = r.optimum();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                names.join("/"),
                r.magnitude,
                r.samples.len(),
                two_decimals(Some(opt.f)),
                two_decimals(Some(opt.g)),
                two_decimals(Some(r.rho)),
            );
        }
    }
    md
}

pub fn render_report(reports: &Reports) -> Result<RenderedReport> {
    if reports.grid.is_empty() && reports.correlation.is_empty() {
        return Err(Error::Config("nothing to render".into()));
    }
    Ok(RenderedReport {
        grid_csv: render_grid_csv(&reports.grid)?,
        correlation_csv: render_correlation_csv(&reports.correlation)?,
        markdown: render_markdown(reports),
        json: serde_json::to_string_pretty(reports)? + "\n",
    })
}

/// An evaluation log line tagged with the experiment row it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLogLine {
    pub row: String,
    #[serde(flatten)]
    pub line: LogLine,
}

/// Writes `cohort.json`, `evals.jsonl`, `grid.csv`, `correlation.csv`,
/// `report.md` and `report.json` under `dir`.
pub fn write_run_dir(
    dir: &Path,
    cohorts: &[&StyledCohort],
    logs: &[(String, &[LogLine])],
    reports: &Reports,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let rendered = render_report(reports)?;
    fs::write(
        dir.join("cohort.json"),
        serde_json::to_string_pretty(cohorts)? + "\n",
    )?;
    let mut jsonl = Vec::new();
    for (row, lines) in logs {
        for line in lines.iter() {
            serde_json::to_writer(
                &mut jsonl,
                &RowLogLine {
                    row: row.clone(),
                    line: line.clone(),
                },
            )?;
            jsonl.push(b'\n');
        }
    }
    fs::write(dir.join("evals.jsonl"), jsonl)?;
    fs::write(dir.join("grid.csv"), rendered.grid_csv)?;
    fs::write(dir.join("correlation.csv"), rendered.correlation_csv)?;
    fs::write(dir.join("report.md"), rendered.markdown)?;
    fs::write(dir.join("report.json"), rendered.json)?;
    Ok(())
}

/// Writes a plain evaluation log.
pub fn write_log(path: &Path, lines: &[LogLine]) -> Result<()> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, lines)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Runs the grid and writes its artifacts to `dir`.
pub fn run_grid_to_dir(
    rows: &[ExperimentConfig],
    jobs: usize,
    dir: &Path,
) -> Result<Vec<GridRowOutcome>> {
    let outcomes = run_grid(rows, jobs)?;
    let reports = Reports {
        grid: outcomes.iter().map(|o| o.report.clone()).collect(),
        correlation: Vec::new(),
    };
    let cohorts: Vec<&StyledCohort> = outcomes.iter().map(|o| &o.cohort).collect();
    let logs: Vec<(String, &[LogLine])> = outcomes
        .iter()
        .map(|o| (o.report.label(), o.log.as_slice()))
        .collect();
    write_run_dir(dir, &cohorts, &logs, &reports)?;
    Ok(outcomes)
}

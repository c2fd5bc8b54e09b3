//! Trainable segmenters.
//!
//! [`Learner`] is the plain fit/predict contract. Objective evaluation goes
//! through [`CohortTrainer`], which binds a learner to a fixed list of scans
//! so implementations can cache per-scan work across the hundreds of fits an
//! optimization run performs.
//!
//! The built-in [`MorphLearner`] segments the image by thresholding and then
//! learns a style as a small set of morphological parameters: a global disk
//! offset, extra offsets for the top and bottom halves, and a translation.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::OffsetField;
use crate::error::{Error, Result};
use crate::mask::{GrayImage, Mask, Scan};
use crate::metrics::{score_scan, MetricConfig, OverlapCounts, ScorePair, SurfaceCounts};

mod band;
use band::BandSlice;

/// A segmentation model family that can be fitted on scans.
pub trait Learner: Send + Sync {
    type Model: Clone + Send + Sync + Serialize;

    fn kind(&self) -> &'static str;

    fn fit(&self, train: &[&Scan]) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, scan: &Scan) -> Vec<Mask>;
}

/// A learner bound to an indexed list of scans.
pub trait CohortTrainer: Send + Sync {
    fn kind(&self) -> &str;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scan_id(&self, index: usize) -> &str;

    /// Fits on the `train` scans and scores every `test` scan, in order.
    fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>>;

    /// Fitted model for `train`, serialized for reports.
    fn describe_fit(&self, train: &[usize]) -> Result<serde_json::Value>;
}

/// Serializable learner selection, as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: String,
    #[serde(default)]
    pub hyperparams: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain_state: Option<serde_json::Value>,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            kind: MorphLearner::KIND.to_string(),
            hyperparams: BTreeMap::new(),
            pretrain_state: None,
        }
    }
}

pub const REGISTERED_KINDS: [&str; 2] = [MorphLearner::KIND, ThresholdLearner::KIND];

impl LearnerSpec {
    pub fn new(kind: impl Into<String>) -> Result<Self> {
        let spec = LearnerSpec {
            kind: kind.into(),
            ..LearnerSpec::default()
        };
        spec.check_kind()?;
        Ok(spec)
    }

    fn check_kind(&self) -> Result<()> {
        if REGISTERED_KINDS.contains(&self.kind.as_str()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown learner kind `{}` (known: {})",
                self.kind,
                REGISTERED_KINDS.join(", ")
            )))
        }
    }

    /// Calibrates the base segmenter on the pretraining scans.
    pub fn pretrain(&self, scans: &[Scan]) -> Result<LearnerSpec> {
        self.check_kind()?;
        let threshold = calibrate_threshold(scans).map_err(|e| self.learner_error(e))?;
        let state = serde_json::to_value(PretrainState { threshold })?;
        Ok(LearnerSpec {
            pretrain_state: Some(state),
            ..self.clone()
        })
    }

    fn learner_error(&self, e: Error) -> Error {
        Error::Learner {
            kind: self.kind.clone(),
            message: e.to_string(),
        }
    }

    fn pretrained(&self) -> Result<PretrainState> {
        let state = self.pretrain_state.clone().ok_or_else(|| Error::Learner {
            kind: self.kind.clone(),
            message: "learner has not been pretrained".into(),
        })?;
        Ok(serde_json::from_value(state)?)
    }

    /// Instantiates the built-in style learner from this spec.
    pub fn morph(&self, metric: MetricConfig) -> Result<MorphLearner> {
        let state = self.pretrained()?;
        let config = MorphConfig::from_hyperparams(&self.hyperparams, metric)?;
        Ok(MorphLearner {
            config,
            threshold: state.threshold,
        })
    }

    /// Binds the learner to a list of scans for repeated fitting.
    pub fn bind(&self, scans: Vec<Scan>, metric: MetricConfig) -> Result<Box<dyn CohortTrainer>> {
        self.check_kind()?;
        let state = self.pretrained()?;
        match self.kind.as_str() {
            MorphLearner::KIND => Ok(Box::new(MorphSession::new(self.morph(metric)?, scans)?)),
            ThresholdLearner::KIND => Ok(Box::new(FitPredict::new(
                ThresholdLearner {
                    threshold: state.threshold,
                },
                scans,
                metric,
            ))),
            _ => unreachable!("kind checked above"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainState {
    /// Image intensity level in `[0, 1]` at and above which pixels are
    /// foreground.
    pub threshold: f64,
}

/// Picks the intensity threshold maximizing mean per-scan Dice against the
/// (styled) masks of the pretraining mixture. Ties go to the level closest to
/// mid-grey.
pub fn calibrate_threshold(scans: &[Scan]) -> Result<f64> {
    if scans.is_empty() {
        return Err(Error::Config("pretrain set is empty".into()));
    }
    // Per scan: foreground/background pixel counts per intensity value.
    let mut mean_dice = vec![0.0; 256];
    let mut any_foreground = false;
    for scan in scans {
        let mut fg = [0u64; 256];
        let mut bg = [0u64; 256];
        for s in scan.slices() {
            for (&v, &m) in s.image.data().iter().zip(s.mask.pixels()) {
                if m {
                    fg[v as usize] += 1;
                } else {
                    bg[v as usize] += 1;
                }
            }
        }
        let truth: u64 = fg.iter().sum();
        any_foreground |= truth > 0;
        // Suffix sums: pixels with intensity >= level.
        let (mut tp, mut predicted) = (0u64, 0u64);
        for level in (0..256).rev() {
            tp += fg[level];
            predicted += fg[level] + bg[level];
            let denom = truth + predicted;
            let dice = if denom == 0 {
                1.0
            } else {
                2.0 * tp as f64 / denom as f64
            };
            mean_dice[level] += dice / scans.len() as f64;
        }
    }
    if !any_foreground {
        return Err(Error::Config("pretrain set has no foreground".into()));
    }
    let best = (1..256)
        .max_by(|&a, &b| {
            mean_dice[a]
                .total_cmp(&mean_dice[b])
                .then((b as i64 - 128).abs().cmp(&(a as i64 - 128).abs()))
        })
        .expect("nonempty range");
    Ok(best as f64 / 255.0)
}

/// Fitted state of the built-in learner, in pixels.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct StyleParams {
    pub global_offset: i32,
    pub top_offset: i32,
    pub bottom_offset: i32,
    pub shift: (i32, i32),
}

impl StyleParams {
    const COORDS: usize = 5;

    fn get(&self, c: usize) -> i32 {
        match c {
            0 => self.shift.1,
            1 => self.shift.0,
            2 => self.global_offset,
            3 => self.top_offset,
            _ => self.bottom_offset,
        }
    }

    fn with(mut self, c: usize, v: i32) -> Self {
        match c {
            0 => self.shift.1 = v,
            1 => self.shift.0 = v,
            2 => self.global_offset = v,
            3 => self.top_offset = v,
            _ => self.bottom_offset = v,
        }
        self
    }

    pub fn is_identity(&self) -> bool {
        *self == StyleParams::default()
    }

    /// Applies the style to a base segmentation.
    pub fn apply(&self, base: &Mask) -> Mask {
        render(&OffsetField::new(base), base.centroid_row(), self)
    }
}

/// Renders a base segmentation (given as its offset field) under a style.
/// Region membership uses the pre-shift row against the base centroid row.
fn render(field: &OffsetField, split: Option<usize>, p: &StyleParams) -> Mask {
    let (w, h) = field.dims();
    let split = split.unwrap_or(0);
    let (dx, dy) = (p.shift.0 as i64, p.shift.1 as i64);
    let top = p.global_offset + p.top_offset;
    let bottom = p.global_offset + p.bottom_offset;
    let mut pixels = vec![false; w * h];
    for y in 0..h {
        let sy = y as i64 - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        let sy = sy as usize;
        let offset = if sy <= split { top } else { bottom };
        let row = y * w;
        let src_row = sy * w;
        for x in 0..w {
            let sx = x as i64 - dx;
            if sx >= 0 && sx < w as i64 && field.inside(src_row + sx as usize, offset) {
                pixels[row + x] = true;
            }
        }
    }
    Mask::from_pixels(w, h, pixels, field.spacing()).expect("field dims are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitObjective {
    /// Mean per-scan Dice of the styled prediction.
    Dice,
    /// Mean per-scan surface Dice at the configured tolerance.
    SurfaceDice,
}

/// How a training set's styles are combined into one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitAggregation {
    /// One search maximizing the mean objective over the training set.
    Joint,
    /// Per-scan searches; the model is the mean of the per-scan optima.
    Consensus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    pub search_bound: i32,
    pub coarse_step: i32,
    pub max_moves: usize,
    pub objective: FitObjective,
    pub aggregation: FitAggregation,
    pub metric: MetricConfig,
}

impl Default for MorphConfig {
    fn default() -> Self {
        MorphConfig {
            search_bound: 15,
            coarse_step: 3,
            max_moves: 8,
            objective: FitObjective::SurfaceDice,
            aggregation: FitAggregation::Consensus,
            metric: MetricConfig::default(),
        }
    }
}

impl MorphConfig {
    fn from_hyperparams(
        hp: &BTreeMap<String, serde_json::Value>,
        metric: MetricConfig,
    ) -> Result<Self> {
        let mut cfg = MorphConfig {
            metric,
            ..MorphConfig::default()
        };
        for (key, value) in hp {
            let bad = || {
                Error::Config(format!(
                    "bad value for learner hyperparameter `{key}`: {value}"
                ))
            };
            match key.as_str() {
                "search_bound" => cfg.search_bound = value.as_i64().ok_or_else(bad)? as i32,
                "coarse_step" => cfg.coarse_step = value.as_i64().ok_or_else(bad)? as i32,
                "max_moves" => cfg.max_moves = value.as_u64().ok_or_else(bad)? as usize,
                "fit_objective" => {
                    cfg.objective = serde_json::from_value(value.clone()).map_err(|_| bad())?
                }
                "aggregation" => {
                    cfg.aggregation = serde_json::from_value(value.clone()).map_err(|_| bad())?
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown learner hyperparameter `{other}`"
                    )))
                }
            }
        }
        if cfg.search_bound < 0 || cfg.coarse_step < 1 || cfg.max_moves == 0 {
            return Err(Error::Config(format!("invalid search grid: {cfg:?}")));
        }
        Ok(cfg)
    }
}

/// Evaluation of one style on one scan, pooled over its slices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ScanEval {
    overlap: OverlapCounts,
    surface: SurfaceCounts,
}

impl ScanEval {
    fn scores(&self) -> ScorePair {
        ScorePair {
            dsc: self.overlap.dice(),
            sdsc: self.surface.ratio().unwrap_or(0.0),
        }
    }

    fn objective(&self, objective: FitObjective) -> f64 {
        let s = self.scores();
        match objective {
            FitObjective::Dice => s.dsc,
            FitObjective::SurfaceDice => s.sdsc,
        }
    }
}

/// Base segmentation and ground-truth scorers of one scan.
struct PreparedScan {
    slices: Vec<BandSlice>,
}

impl PreparedScan {
    fn new(scan: &Scan, threshold: f64, config: &MorphConfig) -> Result<Self> {
        let spacing = scan.spacing().in_plane()?;
        let max_offset = 2 * config.search_bound;
        let slices = scan
            .slices()
            .iter()
            .map(|s| {
                let base = s.image.threshold(threshold, spacing);
                BandSlice::new(&base, &s.mask, &config.metric, max_offset)
            })
            .collect();
        Ok(PreparedScan { slices })
    }

    fn evaluate(&self, p: &StyleParams) -> ScanEval {
        let mut eval = ScanEval::default();
        for s in &self.slices {
            let (overlap, surface) = s.evaluate(p);
            eval.overlap += overlap;
            eval.surface += surface;
        }
        eval
    }
}

/// Parametric morphological style learner.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphLearner {
    config: MorphConfig,
    threshold: f64,
}

impl MorphLearner {
    pub const KIND: &'static str = "morph";

    pub fn new(config: MorphConfig, threshold: f64) -> Self {
        MorphLearner { config, threshold }
    }

    pub fn config(&self) -> &MorphConfig {
        &self.config
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn base(&self, image: &GrayImage, scan: &Scan) -> Mask {
        let spacing = scan
            .spacing()
            .in_plane()
            .expect("scan spacing validated at construction");
        image.threshold(self.threshold, spacing)
    }

    /// Base segmentation of every slice, before any style is applied.
    pub fn base_prediction(&self, scan: &Scan) -> Vec<Mask> {
        scan.slices()
            .iter()
            .map(|s| self.base(&s.image, scan))
            .collect()
    }

    /// Steepest coordinate descent on a coarse grid with local refinement.
    /// `score` must return the training objective (higher is better).
    ///
    /// Each move scans every coordinate's coarse grid around the incumbent,
    /// takes the single best change, then refines that coordinate within
    /// one coarse step. Candidates are visited nearest-to-zero first and
    /// only strict improvements count, so among equally good parameter sets
    /// the one closest to identity wins.
    fn search(&self, mut score: impl FnMut(&StyleParams) -> f64) -> StyleParams {
        let bound = self.config.search_bound;
        let step = self.config.coarse_step;
        let mut coarse: Vec<i32> = (-bound..=bound).filter(|v| v % step == 0).collect();
        coarse.sort_by_key(|&v| (v.abs(), v));

        let mut best = StyleParams::default();
        let mut best_score = score(&best);
        for _ in 0..self.config.max_moves {
            let mut next = (best, best_score);
            for c in 0..StyleParams::COORDS {
                for &v in &coarse {
                    let cand = best.with(c, v);
                    if cand == best {
                        continue;
                    }
                    let s = score(&cand);
                    if s > next.1 {
                        next = (cand, s);
                    }
                }
            }
            let Some(c) = (0..StyleParams::COORDS).find(|&c| next.0.get(c) != best.get(c)) else {
                break;
            };
            (best, best_score) = next;
            let center = best.get(c);
            let mut fine: Vec<i32> = (1..step)
                .flat_map(|d| [center - d, center + d])
                .filter(|v| v.abs() <= bound)
                .collect();
            fine.sort_by_key(|&v| ((v - center).abs(), v));
            for v in fine {
                let cand = best.with(c, v);
                let s = score(&cand);
                if s > best_score {
                    best = cand;
                    best_score = s;
                }
            }
        }
        best
    }
}

/// Mean of per-scan optima in effective coordinates (vertical and
/// horizontal shift, top and bottom offset), rounded with ties toward zero.
/// The shared part of the two offsets is reported as the global offset.
fn consensus(optima: &[StyleParams]) -> StyleParams {
    let n = optima.len().max(1) as f64;
    let mean = |f: fn(&StyleParams) -> i32| -> i32 {
        let m = optima.iter().map(|p| f64::from(f(p))).sum::<f64>() / n;
        let r = if (m - m.trunc()).abs() == 0.5 {
            m.trunc()
        } else {
            m.round()
        };
        r as i32
    };
    let dy = mean(|p| p.shift.1);
    let dx = mean(|p| p.shift.0);
    let top = mean(|p| p.global_offset + p.top_offset);
    let bottom = mean(|p| p.global_offset + p.bottom_offset);
    let global = if top.signum() == bottom.signum() {
        if top.abs() <= bottom.abs() {
            top
        } else {
            bottom
        }
    } else {
        0
    };
    StyleParams {
        global_offset: global,
        top_offset: top - global,
        bottom_offset: bottom - global,
        shift: (dx, dy),
    }
}

fn mean_objective(evals: impl Iterator<Item = ScanEval>, objective: FitObjective) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in evals {
        sum += e.objective(objective);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl Learner for MorphLearner {
    type Model = StyleParams;

    fn kind(&self) -> &'static str {
        Self::KIND
    }

    fn fit(&self, train: &[&Scan]) -> Result<StyleParams> {
        if train.is_empty() {
            return Err(Error::Learner {
                kind: Self::KIND.into(),
                message: "training set is empty".into(),
            });
        }
        let prepared = train
            .iter()
            .map(|s| PreparedScan::new(s, self.threshold, &self.config))
            .collect::<Result<Vec<_>>>()?;
        let objective = self.config.objective;
        Ok(match self.config.aggregation {
            FitAggregation::Joint => {
                self.search(|p| mean_objective(prepared.iter().map(|s| s.evaluate(p)), objective))
            }
            FitAggregation::Consensus => {
                let optima: Vec<StyleParams> = prepared
                    .iter()
                    .map(|s| self.search(|p| s.evaluate(p).objective(objective)))
                    .collect();
                consensus(&optima)
            }
        })
    }

    fn predict(&self, model: &StyleParams, scan: &Scan) -> Vec<Mask> {
        self.base_prediction(scan)
            .iter()
            .map(|b| model.apply(b))
            .collect()
    }
}

/// [`MorphLearner`] bound to a cohort, caching every (scan, style) evaluation.
pub struct MorphSession {
    learner: MorphLearner,
    ids: Vec<String>,
    prepared: Vec<PreparedScan>,
    cache: Vec<Mutex<HashMap<StyleParams, ScanEval>>>,
    optima: Vec<OnceLock<StyleParams>>,
}

impl MorphSession {
    pub fn new(learner: MorphLearner, scans: Vec<Scan>) -> Result<Self> {
        let prepared = scans
            .par_iter()
            .map(|s| PreparedScan::new(s, learner.threshold, &learner.config))
            .collect::<Result<Vec<_>>>()?;
        Ok(MorphSession {
            ids: scans.iter().map(|s| s.id().to_string()).collect(),
            cache: scans.iter().map(|_| Mutex::new(HashMap::new())).collect(),
            optima: scans.iter().map(|_| OnceLock::new()).collect(),
            prepared,
            learner,
        })
    }

    fn eval(&self, scan: usize, p: &StyleParams) -> ScanEval {
        if let Some(e) = self.cache[scan].lock().get(p) {
            return *e;
        }
        let e = self.prepared[scan].evaluate(p);
        self.cache[scan].lock().insert(*p, e);
        e
    }

    pub fn fit(&self, train: &[usize]) -> Result<StyleParams> {
        if train.is_empty() {
            return Err(Error::Learner {
                kind: MorphLearner::KIND.into(),
                message: "training set is empty".into(),
            });
        }
        let objective = self.learner.config.objective;
        Ok(match self.learner.config.aggregation {
            FitAggregation::Joint => self
                .learner
                .search(|p| mean_objective(train.iter().map(|&i| self.eval(i, p)), objective)),
            FitAggregation::Consensus => {
                let optima: Vec<StyleParams> = train
                    .iter()
                    .map(|&i| {
                        *self.optima[i].get_or_init(|| {
                            self.learner
                                .search(|p| self.eval(i, p).objective(objective))
                        })
                    })
                    .collect();
                consensus(&optima)
            }
        })
    }

    /// Number of distinct (scan, style) evaluations computed so far.
    pub fn cached_evaluations(&self) -> usize {
        self.cache.iter().map(|c| c.lock().len()).sum()
    }
}

impl CohortTrainer for MorphSession {
    fn kind(&self) -> &str {
        MorphLearner::KIND
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn scan_id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>> {
        let model = self.fit(train)?;
        Ok(test
            .iter()
            .map(|&i| self.eval(i, &model).scores())
            .collect())
    }

    fn describe_fit(&self, train: &[usize]) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.fit(train)?)?)
    }
}

/// Base segmentation only; fitting learns nothing. Useful as a reference
/// point and as a second registered learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdLearner {
    pub threshold: f64,
}

impl ThresholdLearner {
    pub const KIND: &'static str = "threshold";
}

impl Learner for ThresholdLearner {
    type Model = ();

    fn kind(&self) -> &'static str {
        Self::KIND
    }

    fn fit(&self, _train: &[&Scan]) -> Result<()> {
        Ok(())
    }

    fn predict(&self, _model: &(), scan: &Scan) -> Vec<Mask> {
        let spacing = scan.spacing().in_plane().expect("validated spacing");
        scan.slices()
            .iter()
            .map(|s| s.image.threshold(self.threshold, spacing))
            .collect()
    }
}

/// Generic [`CohortTrainer`] over any [`Learner`], without caching.
pub struct FitPredict<L> {
    learner: L,
    scans: Vec<Scan>,
    metric: MetricConfig,
}

impl<L: Learner> FitPredict<L> {
    pub fn new(learner: L, scans: Vec<Scan>, metric: MetricConfig) -> Self {
        FitPredict {
            learner,
            scans,
            metric,
        }
    }
}

impl<L: Learner> CohortTrainer for FitPredict<L> {
    fn kind(&self) -> &str {
        self.learner.kind()
    }

    fn len(&self) -> usize {
        self.scans.len()
    }

    fn scan_id(&self, index: usize) -> &str {
        self.scans[index].id()
    }

    fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>> {
        let train_scans: Vec<&Scan> = train.iter().map(|&i| &self.scans[i]).collect();
        let model = self.learner.fit(&train_scans)?;
        test.iter()
            .map(|&i| {
                let scan = &self.scans[i];
                let truth: Vec<Mask> = scan.masks().cloned().collect();
                score_scan(&truth, &self.learner.predict(&model, scan), &self.metric)
                    .map_err(|e| e.in_scan(scan.id()))
            })
            .collect()
    }

    fn describe_fit(&self, train: &[usize]) -> Result<serde_json::Value> {
        let train_scans: Vec<&Scan> = train.iter().map(|&i| &self.scans[i]).collect();
        Ok(serde_json::to_value(self.learner.fit(&train_scans)?)?)
    }
}

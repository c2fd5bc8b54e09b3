//! Partition objectives.
//!
//! Both objectives normalize a scan's validation SDSC `S_i` by its
//! mixture-baseline SDSC `M_i` and average `R_i = S_i / M_i` over all scans.
//! The direct objective `F` uses leave-one-out inside each subgroup (N fits,
//! maximized); the proxy `G` trains on one subgroup and validates on the other
//! (2 fits, minimized).

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::CohortTrainer;
use crate::metrics::ScorePair;

/// Two-way split of the optimize set, stored in canonical form (first bit 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    bits: Vec<bool>,
}

impl Partition {
    /// Canonicalizes by complementing when the first bit is set.
    pub fn new(mut bits: Vec<bool>) -> Self {
        if bits.first() == Some(&true) {
            bits.iter_mut().for_each(|b| *b = !*b);
        }
        Partition { bits }
    }

    /// Builds a partition from two-valued labels (label of scan 0 becomes
    /// subgroup 0).
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > 2 {
            return Err(Error::InvalidPartition(format!(
                "{} distinct labels cannot form a two-way split",
                distinct.len()
            )));
        }
        let first = labels.first().copied().unwrap_or(0);
        Ok(Partition::new(labels.iter().map(|&l| l != first).collect()))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Scan indices of subgroup 0 and subgroup 1.
    pub fn groups(&self) -> (Vec<usize>, Vec<usize>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (i, &bit) in self.bits.iter().enumerate() {
            if bit {
                b.push(i)
            } else {
                a.push(i)
            }
        }
        (a, b)
    }

    /// Smaller subgroup size.
    pub fn min_group(&self) -> usize {
        let ones = self.bits.iter().filter(|&&b| b).count();
        ones.min(self.bits.len() - ones)
    }

    pub fn hamming(&self, other: &Partition) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Partition with the given positions flipped, re-canonicalized.
    pub fn flipped(&self, positions: &[usize]) -> Partition {
        let mut bits = self.bits.clone();
        for &p in positions {
            bits[p] = !bits[p];
        }
        Partition::new(bits)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidPartition(format!(
                    "unexpected character `{other}` in bit string"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Partition::new)
    }
}

impl Serialize for Partition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub const DEFAULT_BASELINE_FLOOR: f64 = 1e-3;

/// Mixture leave-one-out scores of every optimize scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScores {
    pub scores: Vec<ScorePair>,
    pub floor: f64,
}

impl BaselineScores {
    /// `M_i`: the baseline SDSC, clamped from below by the floor.
    pub fn m(&self, i: usize) -> f64 {
        self.scores[i].sdsc.max(self.floor)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Mean raw scores over all scans.
    pub fn mean(&self) -> ScorePair {
        mean_scores(&self.scores)
    }
}

pub fn mean_scores(scores: &[ScorePair]) -> ScorePair {
    let n = scores.len().max(1) as f64;
    ScorePair {
        dsc: scores.iter().map(|s| s.dsc).sum::<f64>() / n,
        sdsc: scores.iter().map(|s| s.sdsc).sum::<f64>() / n,
    }
}

/// Leave-one-out over `indices`; scores come back in the same order.
pub fn leave_one_out(trainer: &dyn CohortTrainer, indices: &[usize]) -> Result<Vec<ScorePair>> {
    if indices.len() < 2 {
        return Err(Error::InvalidPartition(format!(
            "leave-one-out needs at least 2 scans, got {}",
            indices.len()
        )));
    }
    indices
        .par_iter()
        .enumerate()
        .map(|(k, &held)| {
            let train: Vec<usize> = indices
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &i)| i)
                .collect();
            trainer
                .fit_and_score(&train, &[held])
                .map(|s| s[0])
                .map_err(|e| e.in_scan(trainer.scan_id(held)))
        })
        .collect()
}

pub fn compute_baseline(trainer: &dyn CohortTrainer, floor: f64) -> Result<BaselineScores> {
    let all: Vec<usize> = (0..trainer.len()).collect();
    Ok(BaselineScores {
        scores: leave_one_out(trainer, &all)?,
        floor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveKind {
    #[serde(rename = "direct-F")]
    DirectF,
    #[serde(rename = "proxy-G")]
    ProxyG,
}

impl ObjectiveKind {
    /// Lower is better for G, higher is better for F.
    pub fn minimized(self) -> bool {
        self == ObjectiveKind::ProxyG
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub partition: Partition,
    pub kind: ObjectiveKind,
    pub value: f64,
    /// Per-scan validation scores; `sdsc` is `S_i`.
    pub scores: Vec<ScorePair>,
    pub r: Vec<f64>,
    pub fits: usize,
}

fn record(
    partition: &Partition,
    kind: ObjectiveKind,
    baseline: &BaselineScores,
    scores: Vec<ScorePair>,
    fits: usize,
) -> EvaluationRecord {
    let r: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| s.sdsc / baseline.m(i))
        .collect();
    let value = r.iter().sum::<f64>() / r.len() as f64;
    EvaluationRecord {
        partition: partition.clone(),
        kind,
        value,
        scores,
        r,
        fits,
    }
}

fn check_sizes(
    trainer: &dyn CohortTrainer,
    baseline: &BaselineScores,
    p: &Partition,
) -> Result<()> {
    if p.len() != trainer.len() || baseline.len() != trainer.len() {
        return Err(Error::InvalidPartition(format!(
            "partition of {} bits for {} scans with {} baseline entries",
            p.len(),
            trainer.len(),
            baseline.len()
        )));
    }
    Ok(())
}

/// Cross-subgroup generalization score (two fits).
pub fn proxy_g(
    trainer: &dyn CohortTrainer,
    baseline: &BaselineScores,
    p: &Partition,
) -> Result<EvaluationRecord> {
    check_sizes(trainer, baseline, p)?;
    if p.min_group() < 1 {
        return Err(Error::InvalidPartition(format!("{p}: empty subgroup")));
    }
    let (a, b) = p.groups();
    let (on_b, on_a) = rayon::join(
        || trainer.fit_and_score(&a, &b),
        || trainer.fit_and_score(&b, &a),
    );
    let mut scores = vec![ScorePair::default(); p.len()];
    for (&i, s) in b.iter().zip(on_b?) {
        scores[i] = s;
    }
    for (&i, s) in a.iter().zip(on_a?) {
        scores[i] = s;
    }
    Ok(record(p, ObjectiveKind::ProxyG, baseline, scores, 2))
}

/// Within-subgroup leave-one-out score (N fits).
pub fn direct_f(
    trainer: &dyn CohortTrainer,
    baseline: &BaselineScores,
    p: &Partition,
) -> Result<EvaluationRecord> {
    check_sizes(trainer, baseline, p)?;
    if p.min_group() < 2 {
        return Err(Error::InvalidPartition(format!(
            "{p}: leave-one-out needs subgroups of at least 2 scans"
        )));
    }
    let (a, b) = p.groups();
    let mut scores = vec![ScorePair::default(); p.len()];
    for group in [&a, &b] {
        for (&i, s) in group.iter().zip(leave_one_out(trainer, group)?) {
            scores[i] = s;
        }
    }
    Ok(record(p, ObjectiveKind::DirectF, baseline, scores, p.len()))
}

/// One line of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub bits: Partition,
    pub kind: ObjectiveKind,
    pub value: f64,
    pub r: Vec<f64>,
    pub fits: usize,
    pub seed: u64,
}

/// Memoizing objective evaluator with an ordered log of true evaluations.
pub struct Evaluator<'a> {
    trainer: &'a dyn CohortTrainer,
    baseline: &'a BaselineScores,
    kind: ObjectiveKind,
    seed: u64,
    cache: Mutex<HashMap<Partition, EvaluationRecord>>,
    log: Mutex<Vec<LogLine>>,
    fits: AtomicUsize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        trainer: &'a dyn CohortTrainer,
        baseline: &'a BaselineScores,
        kind: ObjectiveKind,
        seed: u64,
    ) -> Self {
        Evaluator {
            trainer,
            baseline,
            kind,
            seed,
            cache: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            fits: AtomicUsize::new(0),
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.trainer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainer.is_empty()
    }

    pub fn trainer(&self) -> &dyn CohortTrainer {
        self.trainer
    }

    pub fn baseline(&self) -> &BaselineScores {
        self.baseline
    }

    fn compute(&self, p: &Partition) -> Result<EvaluationRecord> {
        match self.kind {
            ObjectiveKind::ProxyG => proxy_g(self.trainer, self.baseline, p),
            ObjectiveKind::DirectF => direct_f(self.trainer, self.baseline, p),
        }
    }

    /// Evaluates a batch concurrently. Cached partitions are free; fresh
    /// results are logged in submission order.
    pub fn evaluate_batch(&self, batch: &[Partition]) -> Result<Vec<EvaluationRecord>> {
        let mut fresh: Vec<&Partition> = Vec::new();
        {
            let cache = self.cache.lock();
            for p in batch {
                if !cache.contains_key(p) && !fresh.contains(&p) {
                    fresh.push(p);
                }
            }
        }
        let computed: Vec<EvaluationRecord> = fresh
            .par_iter()
            .map(|p| self.compute(p))
            .collect::<Result<_>>()?;
        {
            let mut cache = self.cache.lock();
            let mut log = self.log.lock();
            for rec in computed {
                self.fits.fetch_add(rec.fits, Ordering::Relaxed);
                log.push(LogLine {
                    bits: rec.partition.clone(),
                    kind: rec.kind,
                    value: rec.value,
                    r: rec.r.clone(),
                    fits: rec.fits,
                    seed: self.seed,
                });
                cache.insert(rec.partition.clone(), rec);
            }
        }
        let cache = self.cache.lock();
        Ok(batch.iter().map(|p| cache[p].clone()).collect())
    }

    pub fn evaluate(&self, p: &Partition) -> Result<EvaluationRecord> {
        Ok(self.evaluate_batch(std::slice::from_ref(p))?.remove(0))
    }

    /// Number of distinct partitions truly evaluated.
    pub fn true_evaluations(&self) -> usize {
        self.log.lock().len()
    }

    pub fn total_fits(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    pub fn log(&self) -> Vec<LogLine> {
        self.log.lock().clone()
    }
}

pub fn write_jsonl<W: Write>(mut out: W, lines: &[LogLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trainer whose validation score is 1 when the training set shares the
    /// held-out scan's label by majority, 0.5 otherwise.
    struct LabelTrainer {
        labels: Vec<usize>,
        ids: Vec<String>,
    }

    impl LabelTrainer {
        fn new(labels: Vec<usize>) -> Self {
            let ids = (0..labels.len()).map(|i| format!("s{i}")).collect();
            LabelTrainer { labels, ids }
        }
    }

    impl CohortTrainer for LabelTrainer {
        fn kind(&self) -> &str {
            "label"
        }
        fn len(&self) -> usize {
            self.labels.len()
        }
        fn scan_id(&self, i: usize) -> &str {
            &self.ids[i]
        }
        fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>> {
            let ones = train.iter().filter(|&&i| self.labels[i] == 1).count();
            Ok(test
                .iter()
                .map(|&t| {
                    let agree = if self.labels[t] == 1 {
                        ones
                    } else {
                        train.len() - ones
                    };
                    let v = 0.5 + 0.5 * agree as f64 / train.len() as f64;
                    ScorePair { dsc: v, sdsc: v }
                })
                .collect())
        }
        fn describe_fit(&self, _train: &[usize]) -> Result<serde_json::Value> {
            Ok(serde_json::Value::Null)
        }
    }

    #[test]
    fn canonical_form_and_roundtrip() {
        let p = Partition::new(vec![true, false, true]);
        assert_eq!(p.to_string(), "010");
        assert_eq!("101".parse::<Partition>().unwrap(), p);
        assert!("10x".parse::<Partition>().is_err());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"010\"");
        assert_eq!(serde_json::from_str::<Partition>(&json).unwrap(), p);
        assert_eq!(p.flipped(&[0]).to_string(), "001");
        assert_eq!(
            Partition::from_labels(&[2, 2, 5]).unwrap().to_string(),
            "001"
        );
        assert!(Partition::from_labels(&[0, 1, 2]).is_err());
    }

    #[test]
    fn objective_costs_and_symmetry() {
        let t = LabelTrainer::new(vec![0, 0, 0, 1, 1, 1]);
        let base = compute_baseline(&t, DEFAULT_BASELINE_FLOOR).unwrap();
        let perfect = Partition::from_labels(&t.labels).unwrap();
        let g = proxy_g(&t, &base, &perfect).unwrap();
        assert_eq!(g.fits, 2);
        let f = direct_f(&t, &base, &perfect).unwrap();
        assert_eq!(f.fits, 6);
        assert!(f.value > 1.0);
        let comp = Partition::new(perfect.bits().iter().map(|b| !b).collect());
        assert_eq!(proxy_g(&t, &base, &comp).unwrap().value, g.value);
        let mixed: Partition = "010101".parse().unwrap();
        assert!(proxy_g(&t, &base, &mixed).unwrap().value > g.value);
    }

    #[test]
    fn degenerate_partitions_are_rejected() {
        let t = LabelTrainer::new(vec![0, 0, 1, 1]);
        let base = compute_baseline(&t, DEFAULT_BASELINE_FLOOR).unwrap();
        assert!(proxy_g(&t, &base, &"0000".parse().unwrap()).is_err());
        assert!(direct_f(&t, &base, &"0001".parse().unwrap()).is_err());
        assert!(proxy_g(&t, &base, &"001".parse().unwrap()).is_err());
    }

    #[test]
    fn floor_clamps_baseline() {
        let b = BaselineScores {
            scores: vec![ScorePair {
                dsc: 0.0,
                sdsc: 0.0,
            }],
            floor: DEFAULT_BASELINE_FLOOR,
        };
        assert_eq!(b.m(0), DEFAULT_BASELINE_FLOOR);
    }

    #[test]
    fn evaluator_caches_and_logs_in_order() {
        let t = LabelTrainer::new(vec![0, 0, 1, 1]);
        let base = compute_baseline(&t, DEFAULT_BASELINE_FLOOR).unwrap();
        let ev = Evaluator::new(&t, &base, ObjectiveKind::ProxyG, 7);
        let ps: Vec<Partition> = ["0011", "0101", "0011", "0110"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let recs = ev.evaluate_batch(&ps).unwrap();
        assert_eq!(recs[0], recs[2]);
        assert_eq!(ev.true_evaluations(), 3);
        assert_eq!(ev.total_fits(), 6);
        ev.evaluate(&"1100".parse().unwrap()).unwrap();
        assert_eq!(ev.true_evaluations(), 3);
        let log: Vec<String> = ev.log().iter().map(|l| l.bits.to_string()).collect();
        assert_eq!(log, ["0011", "0101", "0110"]);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &ev.log()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"bits\":\"0011\",\"kind\":\"proxy-G\""));
    }
}

//! Partition search.
//!
//! [`optimize_partition`] minimizes a partition fitness with gene-pool
//! optimal mixing over a linkage tree. A random warm-up batch seeds the
//! archive; afterwards, with the surrogate enabled, each generation's
//! offspring are screened by a Hamming k-NN estimate and only the most
//! promising are truly evaluated. [`recursive_partition`] applies the
//! two-way split repeatedly to discover more than two styles.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{EvaluationRecord, Evaluator, Partition};

mod linkage;
mod recursive;
mod surrogate;

pub use linkage::{mutual_information, LinkageTree};
pub use recursive::{recursive_partition, PartitionTreeNode, RecursiveConfig, SplitDecision};
pub use surrogate::{split_distance, HammingKnn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateConfig {
    Off,
    HammingKnn { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_true_evaluations: usize,
    pub warmup_evaluations: usize,
    pub surrogate: SurrogateConfig,
    pub seed: u64,
    pub stall_generations: usize,
    /// Offspring truly evaluated per generation when the surrogate screens.
    pub screen_batch: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 32,
            max_true_evaluations: 250,
            warmup_evaluations: 200,
            surrogate: SurrogateConfig::HammingKnn { k: 5 },
            seed: 0,
            stall_generations: 10,
            screen_batch: 8,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_evaluations > self.max_true_evaluations {
            return Err(Error::Config(format!(
                "warm-up ({}) exceeds the evaluation budget ({})",
                self.warmup_evaluations, self.max_true_evaluations
            )));
        }
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population size must be even and at least 4, got {}",
                self.population_size
            )));
        }
        if self.screen_batch == 0 || self.stall_generations == 0 {
            return Err(Error::Config(
                "screen batch and stall generations must be positive".into(),
            ));
        }
        if let SurrogateConfig::HammingKnn { k: 0 } = self.surrogate {
            return Err(Error::Config("surrogate needs k >= 1".into()));
        }
        Ok(())
    }
}

/// Minimized partition fitness.
pub trait PartitionFitness: Sync {
    /// Number of bits.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `p` can be evaluated at all; infeasible partitions are never
    /// submitted and rank worst.
    fn is_feasible(&self, p: &Partition) -> bool {
        p.min_group() >= 1
    }

    /// Truly evaluates a batch (possibly concurrently); results in order.
    fn evaluate(&self, batch: &[Partition]) -> Result<Vec<f64>>;
}

impl PartitionFitness for Evaluator<'_> {
    fn len(&self) -> usize {
        Evaluator::len(self)
    }

    fn is_feasible(&self, p: &Partition) -> bool {
        if self.kind().minimized() {
            p.min_group() >= 1
        } else {
            p.min_group() >= 2
        }
    }

    fn evaluate(&self, batch: &[Partition]) -> Result<Vec<f64>> {
        let sign = if self.kind().minimized() { 1.0 } else { -1.0 };
        Ok(self
            .evaluate_batch(batch)?
            .iter()
            .map(|r: &EvaluationRecord| sign * r.value)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Budget,
    Stall,
    LocalOptimum,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: Partition,
    pub best_value: f64,
    pub true_evaluations: usize,
    pub generations: usize,
    pub stop_reason: StopReason,
    /// Every true evaluation in order.
    pub history: Vec<(Partition, f64)>,
}

/// Truly evaluated solutions in evaluation order.
struct Archive {
    entries: Vec<(Partition, f64)>,
    index: HashMap<Partition, usize>,
}

impl Archive {
    fn get(&self, p: &Partition) -> Option<f64> {
        self.index.get(p).map(|&i| self.entries[i].1)
    }

    fn contains(&self, p: &Partition) -> bool {
        self.index.contains_key(p)
    }

    fn push(&mut self, p: Partition, f: f64) {
        self.index.insert(p.clone(), self.entries.len());
        self.entries.push((p, f));
    }

    /// Best entry; ties keep the earlier evaluation.
    fn best(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, (_, f)) in self.entries.iter().enumerate() {
            if *f < best.1 {
                best = (i, *f);
            }
        }
        best
    }
}

struct Search<'a, F: PartitionFitness + ?Sized> {
    fitness: &'a F,
    cfg: &'a GaConfig,
    n: usize,
    archive: Archive,
    rng: ChaCha8Rng,
}

impl<'a, F: PartitionFitness + ?Sized> Search<'a, F> {
    fn remaining(&self) -> usize {
        self.cfg.max_true_evaluations - self.archive.entries.len()
    }

    /// Truly evaluates the new feasible partitions of `batch` (in order,
    /// truncated to the remaining budget).
    fn evaluate(&mut self, batch: Vec<Partition>) -> Result<()> {
        let mut seen = HashSet::new();
        let fresh: Vec<Partition> = batch
            .into_iter()
            .filter(|p| self.fitness.is_feasible(p) && !self.archive.contains(p))
            .filter(|p| seen.insert(p.clone()))
            .take(self.remaining())
            .collect();
        if fresh.is_empty() {
            return Ok(());
        }
        let values = self.fitness.evaluate(&fresh)?;
        for (p, f) in fresh.into_iter().zip(values) {
            self.archive.push(p, f);
        }
        Ok(())
    }

    fn value(&self, p: &Partition) -> f64 {
        self.archive.get(p).unwrap_or(f64::INFINITY)
    }

    fn warm_up(&mut self) -> Result<()> {
        let n = self.n;
        let target = self.cfg.warmup_evaluations;
        let space: Option<u64> = (n <= 63).then(|| 1u64 << (n - 1));
        let batch: Vec<Partition> = match space {
            // Small spaces are enumerated and shuffled, which is uniform
            // sampling without replacement.
            Some(size) if size <= 4 * target as u64 => {
                let mut all: Vec<Partition> = (0..size)
                    .map(|v| {
                        Partition::new(
                            (0..n)
                                .map(|i| i > 0 && (v >> (n - 1 - i)) & 1 == 1)
                                .collect(),
                        )
                    })
                    .filter(|p| self.fitness.is_feasible(p))
                    .collect();
                all.shuffle(&mut self.rng);
                all.truncate(target);
                all
            }
            _ => {
                let mut out = Vec::with_capacity(target);
                let mut seen = HashSet::new();
                let mut attempts = 0;
                while out.len() < target && attempts < 100 * target.max(1) {
                    attempts += 1;
                    let mut bits: Vec<bool> = (0..n).map(|_| self.rng.gen()).collect();
                    bits[0] = false;
                    let p = Partition::new(bits);
                    if self.fitness.is_feasible(&p) && seen.insert(p.clone()) {
                        out.push(p);
                    }
                }
                out
            }
        };
        self.evaluate(batch)
    }

    fn initial_population(&self) -> Vec<Partition> {
        let mut order: Vec<usize> = (0..self.archive.entries.len()).collect();
        order.sort_by(|&a, &b| {
            self.archive.entries[a]
                .1
                .total_cmp(&self.archive.entries[b].1)
                .then(a.cmp(&b))
        });
        let mut pop: Vec<Partition> = order
            .iter()
            .take(self.cfg.population_size)
            .map(|&i| self.archive.entries[i].0.clone())
            .collect();
        // Pad with copies when the archive is smaller than the population.
        let mut k = 0;
        while !pop.is_empty() && pop.len() < self.cfg.population_size {
            pop.push(pop[k].clone());
            k += 1;
        }
        pop
    }

    /// Canonical Hamming-1 neighbours of `p`.
    fn neighbours(&self, p: &Partition) -> Vec<Partition> {
        (0..self.n).map(|i| p.flipped(&[i])).collect()
    }

    fn is_local_optimum(&self, p: &Partition) -> bool {
        let f = self.value(p);
        self.neighbours(p)
            .iter()
            .all(|q| !self.fitness.is_feasible(q) || self.archive.get(q).is_some_and(|g| g > f))
    }

    fn mix(&mut self, parent: &Partition, subset: &[usize], donor: &Partition) -> Partition {
        let mut bits = parent.bits().to_vec();
        for &i in subset {
            bits[i] = donor.bits()[i];
        }
        Partition::new(bits)
    }

    fn pick_donor(&mut self, pop: &[Partition], i: usize) -> usize {
        let j = self.rng.gen_range(0..pop.len() - 1);
        if j >= i {
            j + 1
        } else {
            j
        }
    }

    /// One generation of true-evaluation optimal mixing.
    fn generation_exact(&mut self, pop: &mut [Partition], fos: &LinkageTree) -> Result<()> {
        for i in 0..pop.len() {
            let mut order: Vec<usize> = (0..fos.clusters().len()).collect();
            order.shuffle(&mut self.rng);
            for c in order {
                if self.remaining() == 0 {
                    return Ok(());
                }
                let d = self.pick_donor(pop, i);
                let donor = pop[d].clone();
                let child = self.mix(&pop[i], &fos.clusters()[c], &donor);
                if child == pop[i] || !self.fitness.is_feasible(&child) {
                    continue;
                }
                self.evaluate(vec![child.clone()])?;
                if self.value(&child) <= self.value(&pop[i]) {
                    pop[i] = child;
                }
            }
        }
        Ok(())
    }

    /// One generation of surrogate-screened optimal mixing.
    fn generation_screened(
        &mut self,
        pop: &mut [Partition],
        fos: &LinkageTree,
        knn: HammingKnn,
    ) -> Result<()> {
        let estimate = |s: &Self, p: &Partition| -> f64 {
            if !s.fitness.is_feasible(p) {
                return f64::INFINITY;
            }
            s.archive
                .get(p)
                .or_else(|| knn.predict(&s.archive.entries, p))
                .unwrap_or(f64::INFINITY)
        };

        // Offspring per parent, mixed against surrogate estimates.
        let mut offspring: Vec<(usize, Partition, f64)> = Vec::new();
        for i in 0..pop.len() {
            let mut current = pop[i].clone();
            let mut current_est = estimate(self, &current);
            let mut order: Vec<usize> = (0..fos.clusters().len()).collect();
            order.shuffle(&mut self.rng);
            for c in order {
                let d = self.pick_donor(pop, i);
                let donor = pop[d].clone();
                let child = self.mix(&current, &fos.clusters()[c], &donor);
                if child == current {
                    continue;
                }
                let est = estimate(self, &child);
                if est <= current_est {
                    current = child;
                    current_est = est;
                }
            }
            if current != pop[i] {
                offspring.push((i, current, current_est));
            }
        }
        // Single-bit moves around the elite.
        let elite = (0..pop.len())
            .min_by(|&a, &b| {
                self.value(&pop[a])
                    .total_cmp(&self.value(&pop[b]))
                    .then(a.cmp(&b))
            })
            .expect("population is nonempty");
        for q in self.neighbours(&pop[elite]) {
            let est = estimate(self, &q);
            offspring.push((elite, q, est));
        }

        // Truly evaluate the most promising unevaluated offspring.
        let mut candidates: Vec<(usize, &Partition, f64)> = offspring
            .iter()
            .enumerate()
            .filter(|(_, (_, p, e))| e.is_finite() && !self.archive.contains(p))
            .map(|(k, (_, p, e))| (k, p, *e))
            .collect();
        candidates.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let mut chosen = Vec::new();
        let mut seen = HashSet::new();
        for (_, p, _) in candidates {
            if chosen.len() >= self.cfg.screen_batch.min(self.remaining()) {
                break;
            }
            if seen.insert(p.clone()) {
                chosen.push(p.clone());
            }
        }
        self.evaluate(chosen)?;

        // Replace parents by truly evaluated offspring that are no worse.
        for (i, child, _) in offspring {
            if let Some(f) = self.archive.get(&child) {
                if f <= self.value(&pop[i]) && !pop.contains(&child) {
                    pop[i] = child;
                }
            }
        }
        Ok(())
    }
}

/// Minimizes `fitness` over canonical partitions within the configured
/// true-evaluation budget.
pub fn optimize_partition<F: PartitionFitness + ?Sized>(
    fitness: &F,
    cfg: &GaConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let n = fitness.len();
    if n < 4 {
        return Err(Error::Config(format!(
            "partition search needs at least 4 scans, got {n}"
        )));
    }
    let mut search = Search {
        fitness,
        cfg,
        n,
        archive: Archive {
            entries: Vec::new(),
            index: HashMap::new(),
        },
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    search.warm_up()?;
    if search.archive.entries.is_empty() {
        search.evaluate(vec![Partition::new((0..n).map(|i| i == n - 1).collect())])?;
    }

    let mut pop = search.initial_population();
    let mut generations = 0;
    let mut stall = 0;
    let mut best = search.archive.best().1;
    let stop_reason = loop {
        let elite = search.archive.entries[search.archive.best().0].0.clone();
        if search.is_local_optimum(&elite) {
            break StopReason::LocalOptimum;
        }
        if search.remaining() == 0 {
            break StopReason::Budget;
        }
        if stall >= cfg.stall_generations {
            break StopReason::Stall;
        }
        let before = search.archive.entries.len();
        let fos = LinkageTree::learn(&pop, n);
        match cfg.surrogate {
            SurrogateConfig::Off => search.generation_exact(&mut pop, &fos)?,
            SurrogateConfig::HammingKnn { k } => {
                search.generation_screened(&mut pop, &fos, HammingKnn { k })?
            }
        }
        generations += 1;
        let now = search.archive.best().1;
        if now < best {
            best = now;
            stall = 0;
        } else {
            stall += 1;
        }
        if search.archive.entries.len() == before && stall >= cfg.stall_generations {
            break StopReason::Exhausted;
        }
    };

    debug_assert!(search.archive.entries.len() <= cfg.max_true_evaluations);
    let (bi, bv) = search.archive.best();
    Ok(OptimizationResult {
        best: search.archive.entries[bi].0.clone(),
        best_value: bv,
        true_evaluations: search.archive.entries.len(),
        generations,
        stop_reason,
        history: search.archive.entries,
    })
}

/// Minimum number of scans placed in the wrong group, over all one-to-one
/// matchings of groups to style labels. Members of a group left without a
/// label, or carrying a label other than their group's, are misplaced.
pub fn misclassification(groups: &[Vec<usize>], labels: &[usize]) -> Result<usize> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if groups.is_empty() {
        return Err(Error::Config("no groups to match against labels".into()));
    }
    let covered: usize = groups.iter().map(Vec::len).sum();
    if covered != labels.len() || groups.iter().flatten().any(|&i| i >= labels.len()) {
        return Err(Error::Config(
            "groups must cover every labelled scan".into(),
        ));
    }
    // counts[g][l]: members of group g carrying label l, padded to square.
    let k = groups.len().max(distinct.len());
    let mut counts = vec![vec![0usize; k]; k];
    for (g, members) in groups.iter().enumerate() {
        for (l, &label) in distinct.iter().enumerate() {
            counts[g][l] = members.iter().filter(|&&i| labels[i] == label).count();
        }
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best_correct = 0;
    permute(&mut perm, 0, &mut |p| {
        let correct = p.iter().enumerate().map(|(g, &l)| counts[g][l]).sum();
        best_correct = best_correct.max(correct);
    });
    Ok(labels.len() - best_correct)
}

fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

pub fn partition_misclassification(p: &Partition, labels: &[usize]) -> Result<usize> {
    let (a, b) = p.groups();
    let groups: Vec<Vec<usize>> = [a, b].into_iter().filter(|g| !g.is_empty()).collect();
    misclassification(&groups, labels)
}

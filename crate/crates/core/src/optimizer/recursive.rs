//! Hierarchical splitting into more than two style groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::CohortTrainer;
use crate::metrics::ScorePair;
use crate::objective::{
    compute_baseline, direct_f, mean_scores, Evaluator, LogLine, ObjectiveKind, Partition,
    DEFAULT_BASELINE_FLOOR,
};

use super::{optimize_partition, GaConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecursiveConfig {
    /// Nodes smaller than twice this are never split.
    pub min_group: usize,
    /// Required margin of specific over mixture mean LOO SDSC.
    pub min_improvement: f64,
    /// Stop once this many leaves exist.
    pub expected_groups: Option<usize>,
    pub baseline_floor: f64,
}

impl Default for RecursiveConfig {
    fn default() -> Self {
        RecursiveConfig {
            min_group: 4,
            min_improvement: 0.0,
            expected_groups: None,
            baseline_floor: DEFAULT_BASELINE_FLOOR,
        }
    }
}

/// Outcome of optimizing one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    /// Best split over the node's scans, in node order.
    pub partition: Partition,
    pub g: f64,
    pub mixture: ScorePair,
    /// Mean within-subgroup LOO scores, if both subgroups allow LOO.
    pub specific: Option<ScorePair>,
    /// `specific.sdsc - mixture.sdsc`.
    pub improvement: Option<f64>,
    pub accepted: bool,
    pub true_evaluations: usize,
    pub seed: u64,
    /// Position of this node in the expansion order.
    pub expansion: u64,
    /// True evaluations in order, with bits indexing this node's scans.
    #[serde(skip)]
    pub log: Vec<LogLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTreeNode {
    /// Trainer indices of the scans at this node.
    pub scans: Vec<usize>,
    pub decision: Option<SplitDecision>,
    /// Empty or exactly two children.
    pub children: Vec<PartitionTreeNode>,
}

impl PartitionTreeNode {
    fn leaf(scans: Vec<usize>) -> Self {
        PartitionTreeNode {
            scans,
            decision: None,
            children: Vec::new(),
        }
    }

    /// Leaf scan sets, left to right.
    pub fn leaves(&self) -> Vec<Vec<usize>> {
        if self.children.is_empty() {
            return vec![self.scans.clone()];
        }
        self.children.iter().flat_map(|c| c.leaves()).collect()
    }

    /// Split decisions in expansion order.
    pub fn decisions(&self) -> Vec<&SplitDecision> {
        let mut all: Vec<&SplitDecision> = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            all.extend(node.decision.as_ref());
            stack.extend(node.children.iter().rev());
        }
        all.sort_by_key(|d| d.expansion);
        all
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }
}

/// A trainer restricted to a subset of another trainer's scans.
struct Subset<'a> {
    inner: &'a dyn CohortTrainer,
    ids: &'a [usize],
}

impl Subset<'_> {
    fn map(&self, local: &[usize]) -> Vec<usize> {
        local.iter().map(|&i| self.ids[i]).collect()
    }
}

impl CohortTrainer for Subset<'_> {
    fn kind(&self) -> &str {
        self.inner.kind()
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn scan_id(&self, index: usize) -> &str {
        self.inner.scan_id(self.ids[index])
    }

    fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>> {
        self.inner.fit_and_score(&self.map(train), &self.map(test))
    }

    fn describe_fit(&self, train: &[usize]) -> Result<serde_json::Value> {
        self.inner.describe_fit(&self.map(train))
    }
}

fn child_seed(seed: u64, expansion: u64) -> u64 {
    seed ^ expansion.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn decide(
    trainer: &dyn CohortTrainer,
    scans: &[usize],
    ga: &GaConfig,
    cfg: &RecursiveConfig,
    expansion: u64,
) -> Result<SplitDecision> {
    let node = Subset {
        inner: trainer,
        ids: scans,
    };
    let baseline = compute_baseline(&node, cfg.baseline_floor)?;
    let evaluator = Evaluator::new(&node, &baseline, ObjectiveKind::ProxyG, ga.seed);
    let run = optimize_partition(&evaluator, ga)?;
    let mixture = baseline.mean();
    let specific = if run.best.min_group() >= 2 {
        Some(mean_scores(&direct_f(&node, &baseline, &run.best)?.scores))
    } else {
        None
    };
    let improvement = specific.map(|s| s.sdsc - mixture.sdsc);
    Ok(SplitDecision {
        accepted: improvement.is_some_and(|d| d > cfg.min_improvement),
        partition: run.best,
        g: run.best_value,
        mixture,
        specific,
        improvement,
        true_evaluations: run.true_evaluations,
        seed: ga.seed,
        expansion,
        log: evaluator.log(),
    })
}

/// Splits `scans` in two repeatedly while splitting pays off. The largest
/// pending node is expanded first, so an expected group count cuts the
/// hierarchy where it is coarsest.
pub fn recursive_partition(
    trainer: &dyn CohortTrainer,
    scans: &[usize],
    ga: &GaConfig,
    cfg: &RecursiveConfig,
) -> Result<PartitionTreeNode> {
    let min_split = (2 * cfg.min_group).max(4);
    if scans.len() < min_split {
        return Err(Error::Config(format!(
            "recursive partitioning needs at least {min_split} scans, got {}",
            scans.len()
        )));
    }
    if scans.iter().any(|&i| i >= trainer.len()) {
        return Err(Error::Config("scan index out of range".into()));
    }

    // Arena of nodes; children refer to arena slots.
    let mut nodes: Vec<(PartitionTreeNode, Vec<usize>)> =
        vec![(PartitionTreeNode::leaf(scans.to_vec()), Vec::new())];
    let mut pending = vec![0usize];
    let mut leaves = 1;
    let mut expansions = 0u64;
    while cfg.expected_groups.is_none_or(|k| leaves < k) {
        let Some(pos) = (0..pending.len()).max_by(|&a, &b| {
            let (la, lb) = (
                nodes[pending[a]].0.scans.len(),
                nodes[pending[b]].0.scans.len(),
            );
            la.cmp(&lb).then(b.cmp(&a))
        }) else {
            break;
        };
        let slot = pending.remove(pos);
        let ids = nodes[slot].0.scans.clone();
        let node_ga = GaConfig {
            seed: child_seed(ga.seed, expansions),
            ..ga.clone()
        };
        let decision = decide(trainer, &ids, &node_ga, cfg, expansions)?;
        expansions += 1;
        if decision.accepted {
            let (a, b) = decision.partition.groups();
            for group in [a, b] {
                let child: Vec<usize> = group.iter().map(|&i| ids[i]).collect();
                let big = child.len() >= min_split;
                nodes.push((PartitionTreeNode::leaf(child), Vec::new()));
                let c = nodes.len() - 1;
                nodes[slot].1.push(c);
                if big {
                    pending.push(c);
                }
            }
            leaves += 1;
        }
        nodes[slot].0.decision = Some(decision);
    }
    Ok(assemble(&mut nodes, 0))
}

fn assemble(nodes: &mut [(PartitionTreeNode, Vec<usize>)], slot: usize) -> PartitionTreeNode {
    let children = std::mem::take(&mut nodes[slot].1);
    let mut node = std::mem::replace(&mut nodes[slot].0, PartitionTreeNode::leaf(Vec::new()));
    node.children = children.into_iter().map(|c| assemble(nodes, c)).collect();
    node
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores a test scan 0.9 when every training scan shares its label,
    /// degrading with the fraction of foreign training scans.
    struct Labelled {
        labels: Vec<usize>,
        ids: Vec<String>,
    }

    impl Labelled {
        fn new(labels: Vec<usize>) -> Self {
            let ids = (0..labels.len()).map(|i| format!("s{i}")).collect();
            Labelled { labels, ids }
        }
    }

    impl CohortTrainer for Labelled {
        fn kind(&self) -> &str {
            "labelled"
        }
        fn len(&self) -> usize {
            self.labels.len()
        }
        fn scan_id(&self, index: usize) -> &str {
            &self.ids[index]
        }
        fn fit_and_score(&self, train: &[usize], test: &[usize]) -> Result<Vec<ScorePair>> {
            Ok(test
                .iter()
                .map(|&t| {
                    let same = train
                        .iter()
                        .filter(|&&i| self.labels[i] == self.labels[t])
                        .count();
                    let s = 0.9 * same as f64 / train.len() as f64;
                    ScorePair { dsc: s, sdsc: s }
                })
                .collect())
        }
        fn describe_fit(&self, _: &[usize]) -> Result<serde_json::Value> {
            Ok(serde_json::Value::Null)
        }
    }

    fn ga() -> GaConfig {
        GaConfig {
            max_true_evaluations: 120,
            warmup_evaluations: 80,
            seed: 5,
            ..GaConfig::default()
        }
    }

    fn sorted(mut leaves: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
        for l in &mut leaves {
            l.sort_unstable();
        }
        leaves.sort();
        leaves
    }

    #[test]
    fn two_styles_split_once() {
        let labels: Vec<usize> = (0..12).map(|i| (i * 7 % 12) % 2).collect();
        let t = Labelled::new(labels.clone());
        let all: Vec<usize> = (0..12).collect();
        let tree = recursive_partition(&t, &all, &ga(), &RecursiveConfig::default()).unwrap();
        assert_eq!(tree.depth(), 2);
        let want: Vec<Vec<usize>> = (0..2)
            .map(|l| (0..12).filter(|&i| labels[i] == l).collect())
            .collect();
        assert_eq!(sorted(tree.leaves()), sorted(want));
    }

    #[test]
    fn three_styles_give_three_leaves() {
        let labels: Vec<usize> = (0..24).map(|i| i % 3).collect();
        let t = Labelled::new(labels.clone());
        let all: Vec<usize> = (0..24).collect();
        let cfg = RecursiveConfig {
            min_group: 3,
            expected_groups: Some(3),
            ..RecursiveConfig::default()
        };
        let tree = recursive_partition(&t, &all, &ga(), &cfg).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 3);
        let want: Vec<Vec<usize>> = (0..3)
            .map(|l| (0..24).filter(|&i| labels[i] == l).collect())
            .collect();
        assert_eq!(sorted(leaves), sorted(want));
    }

    #[test]
    fn one_style_is_a_single_leaf() {
        let t = Labelled::new(vec![0; 10]);
        let all: Vec<usize> = (0..10).collect();
        let tree = recursive_partition(&t, &all, &ga(), &RecursiveConfig::default()).unwrap();
        assert!(tree.children.is_empty());
        let d = tree.decision.clone().unwrap();
        assert!(!d.accepted);
        assert_eq!(tree.leaves(), vec![all]);
    }

    #[test]
    fn rejects_small_inputs() {
        let t = Labelled::new(vec![0, 1, 0, 1, 0, 1, 0]);
        let all: Vec<usize> = (0..7).collect();
        assert!(recursive_partition(&t, &all, &ga(), &RecursiveConfig::default()).is_err());
    }
}

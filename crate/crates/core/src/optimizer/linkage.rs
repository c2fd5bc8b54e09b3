//! Linkage tree learned from a population of bit strings.

use crate::objective::Partition;

/// Family of subsets of bit positions used for gene-pool optimal mixing:
/// every cluster of an average-linkage tree over pairwise mutual
/// information, excluding the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageTree {
    clusters: Vec<Vec<usize>>,
}

impl LinkageTree {
    /// Builds the tree over positions `0..n` of `population`.
    pub fn learn(population: &[Partition], n: usize) -> Self {
        let mi = mutual_information(population, n);
        let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut active: Vec<usize> = (0..n).collect();
        while active.len() > 1 {
            let mut best = (f64::NEG_INFINITY, 0, 0);
            for a in 0..active.len() {
                for b in a + 1..active.len() {
                    let s = average_linkage(&mi, n, &clusters[active[a]], &clusters[active[b]]);
                    if s > best.0 {
                        best = (s, a, b);
                    }
                }
            }
            let (_, a, b) = best;
            let mut merged = clusters[active[a]].clone();
            merged.extend_from_slice(&clusters[active[b]]);
            merged.sort_unstable();
            clusters.push(merged);
            let new = clusters.len() - 1;
            active.remove(b);
            active[a] = new;
        }
        if n > 1 {
            clusters.pop();
        }
        LinkageTree { clusters }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }
}

fn average_linkage(mi: &[f64], n: usize, a: &[usize], b: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            sum += mi[i * n + j];
        }
    }
    sum / (a.len() * b.len()) as f64
}

fn entropy(counts: &[f64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum()
}

/// Pairwise mutual information matrix (row-major, `n × n`).
pub fn mutual_information(population: &[Partition], n: usize) -> Vec<f64> {
    let total = population.len() as f64;
    let mut mi = vec![0.0; n * n];
    if population.is_empty() {
        return mi;
    }
    let ones: Vec<f64> = (0..n)
        .map(|i| population.iter().filter(|p| p.bits()[i]).count() as f64)
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let mut joint = [0.0; 4];
            for p in population {
                let b = p.bits();
                joint[usize::from(b[i]) * 2 + usize::from(b[j])] += 1.0;
            }
            let hi = entropy(&[ones[i], total - ones[i]], total);
            let hj = entropy(&[ones[j], total - ones[j]], total);
            let v = (hi + hj - entropy(&joint, total)).max(0.0);
            mi[i * n + j] = v;
            mi[j * n + i] = v;
        }
    }
    mi
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(rows: &[&str]) -> Vec<Partition> {
        rows.iter().map(|r| r.parse().unwrap()).collect()
    }

    #[test]
    fn tree_covers_positions_and_excludes_root() {
        let p = pop(&["0011", "0101", "0110", "0000", "0111"]);
        let t = LinkageTree::learn(&p, 4);
        assert_eq!(t.clusters().len(), 2 * 4 - 2);
        for i in 0..4 {
            assert!(t.clusters().contains(&vec![i]));
        }
        assert!(!t.clusters().contains(&vec![0, 1, 2, 3]));
        // Every non-leaf cluster is the union of two earlier clusters.
        for (k, c) in t.clusters().iter().enumerate().skip(4) {
            let found = t.clusters()[..k].iter().any(|a| {
                t.clusters()[..k].iter().any(|b| {
                    let mut u = a.clone();
                    u.extend(b);
                    u.sort_unstable();
                    &u == c && a.iter().all(|x| !b.contains(x))
                })
            });
            assert!(found, "{c:?}");
        }
    }

    #[test]
    fn perfectly_linked_bits_merge_first() {
        // Bits 1 and 2 always equal; bit 3 independent of them.
        let p = pop(&["0110", "0001", "0111", "0000", "0110", "0001"]);
        let t = LinkageTree::learn(&p, 4);
        assert_eq!(t.clusters()[4], vec![1, 2]);
    }

    #[test]
    fn mutual_information_is_symmetric_and_nonnegative() {
        let p = pop(&["0101", "0011", "0110", "0000"]);
        let mi = mutual_information(&p, 4);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(mi[i * 4 + j], mi[j * 4 + i]);
                assert!(mi[i * 4 + j] >= 0.0);
            }
        }
    }
}

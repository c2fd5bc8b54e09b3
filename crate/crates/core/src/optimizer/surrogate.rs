//! Distance-weighted k-nearest-neighbour fitness estimate.

use crate::objective::Partition;

/// Hamming distance between the splits two canonical partitions describe,
/// i.e. allowing for complement symmetry.
pub fn split_distance(a: &Partition, b: &Partition) -> usize {
    let d = a.hamming(b);
    d.min(a.len() - d)
}

/// Predicts fitness from the `k` nearest truly evaluated partitions,
/// weighting each by inverse split distance. Ties in distance keep the
/// earlier-evaluated neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HammingKnn {
    pub k: usize,
}

impl HammingKnn {
    pub fn predict(&self, archive: &[(Partition, f64)], x: &Partition) -> Option<f64> {
        let mut near: Vec<(usize, usize, f64)> = archive
            .iter()
            .enumerate()
            .filter(|(_, (_, f))| f.is_finite())
            .map(|(i, (p, f))| (split_distance(p, x), i, *f))
            .collect();
        if near.is_empty() {
            return None;
        }
        near.sort_by_key(|&(d, i, _)| (d, i));
        if near[0].0 == 0 {
            return Some(near[0].2);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, _, f) in near.iter().take(self.k.max(1)) {
            let w = 1.0 / d as f64;
            num += w * f;
            den += w;
        }
        Some(num / den)
    }
}

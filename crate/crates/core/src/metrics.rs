//! Dice and 2D surface-Dice scoring.

use serde::{Deserialize, Serialize};

use crate::distance::{boundary_distance_field, physical_field};
use crate::error::{Error, Result};
use crate::mask::{Mask, Spacing};

/// Above this many tolerance offsets the scorer switches from a windowed
/// neighbourhood scan to a full distance field.
const MAX_WINDOW_OFFSETS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Surface tolerance in millimetres.
    pub tau: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { tau: 0.5 }
    }
}

impl MetricConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Config(format!("tau must be >= 0, got {tau}")));
        }
        Ok(MetricConfig { tau })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub dsc: f64,
    pub sdsc: f64,
}

/// Border points of both masks lying within tolerance of the other border
/// (`hits`) out of all border points (`total`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceCounts {
    pub hits: u64,
    pub total: u64,
}

impl SurfaceCounts {
    pub fn ratio(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

impl std::ops::AddAssign for SurfaceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.total += rhs.total;
    }
}

/// Overlap counts for pooled Dice: `2 * intersection / sizes`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub intersection: u64,
    pub sizes: u64,
}

impl OverlapCounts {
    pub fn of(g: &Mask, p: &Mask) -> Self {
        OverlapCounts {
            intersection: g.intersection_count(p) as u64,
            sizes: (g.count() + p.count()) as u64,
        }
    }

    /// Dice ratio; two empty masks agree perfectly.
    pub fn dice(&self) -> f64 {
        if self.sizes == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / self.sizes as f64
        }
    }
}

impl std::ops::AddAssign for OverlapCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.intersection += rhs.intersection;
        self.sizes += rhs.sizes;
    }
}

pub fn dsc(g: &Mask, p: &Mask) -> Result<f64> {
    g.same_geometry(p)?;
    Ok(OverlapCounts::of(g, p).dice())
}

pub fn sdsc_slice(g: &Mask, p: &Mask, cfg: &MetricConfig) -> Result<SurfaceCounts> {
    g.same_geometry(p)?;
    Ok(SurfaceScorer::new(g, cfg).score(p))
}

/// Scores predicted slices against ground truth, pooling counts over slices.
/// Slices where both masks are empty carry no contour and are skipped.
pub fn score_scan(g: &[Mask], p: &[Mask], cfg: &MetricConfig) -> Result<ScorePair> {
    if g.len() != p.len() {
        return Err(Error::Geometry(format!(
            "slice count mismatch: {} ground truth vs {} predicted",
            g.len(),
            p.len()
        )));
    }
    let mut overlap = OverlapCounts::default();
    let mut surface = SurfaceCounts::default();
    for (gs, ps) in g.iter().zip(p) {
        gs.same_geometry(ps)?;
        overlap += OverlapCounts::of(gs, ps);
        surface += SurfaceScorer::new(gs, cfg).score(ps);
    }
    let sdsc = surface
        .ratio()
        .ok_or_else(|| Error::NoScoreableSlice(String::new()))?;
    Ok(ScorePair {
        dsc: overlap.dice(),
        sdsc,
    })
}

/// Tolerance neighbourhood: all pixel offsets whose center-to-center
/// distance is at most `tau`.
pub(crate) fn tolerance_offsets(spacing: Spacing, tau: f64) -> Vec<(i64, i64)> {
    let rx = (tau / spacing.x).floor() as i64 + 1;
    let ry = (tau / spacing.y).floor() as i64 + 1;
    let mut out = Vec::new();
    for dy in -ry..=ry {
        for dx in -rx..=rx {
            if spacing.distance(dx, dy) <= tau {
                out.push((dx, dy));
            }
        }
    }
    // Nearest first so membership scans stop early.
    out.sort_by(|a, b| {
        spacing
            .distance(a.0, a.1)
            .total_cmp(&spacing.distance(b.0, b.1))
            .then(a.cmp(b))
    });
    out
}

/// Reusable surface-Dice scorer for a fixed ground-truth mask.
#[derive(Debug, Clone)]
pub struct SurfaceScorer {
    width: usize,
    height: usize,
    spacing: Spacing,
    tau: f64,
    border: Vec<bool>,
    border_count: u64,
    offsets: Option<Vec<(i64, i64)>>,
    field: Option<Vec<f64>>,
}

impl SurfaceScorer {
    pub fn new(g: &Mask, cfg: &MetricConfig) -> Self {
        let (border, n) = g.border_grid();
        let spacing = g.spacing();
        let offsets = tolerance_offsets(spacing, cfg.tau);
        let (offsets, field) = if offsets.len() <= MAX_WINDOW_OFFSETS || n == 0 {
            (Some(offsets), None)
        } else {
            let field = boundary_distance_field(&g.boundary()).ok();
            (None, field)
        };
        SurfaceScorer {
            width: g.width(),
            height: g.height(),
            spacing,
            tau: cfg.tau,
            border,
            border_count: n as u64,
            offsets,
            field,
        }
    }

    pub fn border_count(&self) -> u64 {
        self.border_count
    }

    pub fn score(&self, p: &Mask) -> SurfaceCounts {
        debug_assert_eq!(p.dims(), (self.width, self.height));
        let (p_border, p_count) = p.border_grid();
        self.score_border(&p_border, p_count as u64)
    }

    /// Scores a prediction given as a precomputed border indicator grid.
    pub(crate) fn score_border(&self, p_border: &[bool], p_count: u64) -> SurfaceCounts {
        let total = self.border_count + p_count;
        if self.border_count == 0 || p_count == 0 {
            return SurfaceCounts { hits: 0, total };
        }
        let hits = match (&self.offsets, &self.field) {
            (Some(offsets), _) => {
                self.count_within(&self.border, p_border, offsets)
                    + self.count_within(p_border, &self.border, offsets)
            }
            (None, Some(g_field)) => {
                let p_field = physical_field(p_border, self.width, self.height, self.spacing);
                let mut hits = 0;
                for i in 0..p_border.len() {
                    if self.border[i] && p_field[i] <= self.tau {
                        hits += 1;
                    }
                    if p_border[i] && g_field[i] <= self.tau {
                        hits += 1;
                    }
                }
                hits
            }
            (None, None) => unreachable!("scorer always holds offsets or a field"),
        };
        SurfaceCounts { hits, total }
    }

    fn count_within(&self, from: &[bool], to: &[bool], offsets: &[(i64, i64)]) -> u64 {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut hits = 0;
        for (i, _) in from.iter().enumerate().filter(|(_, &b)| b) {
            let x = (i % self.width) as i64;
            let y = (i / self.width) as i64;
            let found = offsets.iter().any(|&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && to[(ny * w + nx) as usize]
            });
            if found {
                hits += 1;
            }
        }
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> Spacing {
        Spacing::isotropic(0.6).unwrap()
    }

    fn block(w: usize, h: usize, x0: usize, y0: usize, bw: usize, bh: usize) -> Mask {
        Mask::from_fn(w, h, sp(), |x, y| {
            x >= x0 && x < x0 + bw && y >= y0 && y < y0 + bh
        })
        .unwrap()
    }

    #[test]
    fn dice_examples() {
        let g = block(6, 6, 0, 0, 2, 2);
        assert_eq!(dsc(&g, &g).unwrap(), 1.0);
        assert_eq!(dsc(&g, &block(6, 6, 4, 4, 2, 2)).unwrap(), 0.0);
        assert_eq!(dsc(&g, &block(6, 6, 1, 0, 2, 2)).unwrap(), 0.5);
        let e = Mask::empty(6, 6, sp()).unwrap();
        assert_eq!(dsc(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn dice_rejects_mismatched_grids() {
        let a = block(6, 6, 0, 0, 2, 2);
        let b = block(5, 6, 0, 0, 2, 2);
        assert!(matches!(dsc(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn surface_identical_and_far_apart() {
        let cfg = MetricConfig::default();
        let g = block(20, 20, 2, 2, 5, 5);
        let c = sdsc_slice(&g, &g, &cfg).unwrap();
        assert_eq!(c.hits, c.total);
        let far = block(20, 20, 12, 12, 5, 5);
        let c = sdsc_slice(&g, &far, &cfg).unwrap();
        assert_eq!(c.hits, 0);
        assert_eq!(c.ratio(), Some(0.0));
    }

    #[test]
    fn surface_one_pixel_dilation_crosses_tau() {
        let p = block(20, 20, 6, 6, 6, 6);
        let g = p.dilate(1);
        let strict = sdsc_slice(&g, &p, &MetricConfig::new(0.5).unwrap()).unwrap();
        assert!(strict.ratio().unwrap() < 1.0);
        let loose = sdsc_slice(&g, &p, &MetricConfig::new(0.7).unwrap()).unwrap();
        assert_eq!(loose.ratio(), Some(1.0));
    }

    #[test]
    fn surface_empty_conventions() {
        let cfg = MetricConfig::default();
        let e = Mask::empty(10, 10, sp()).unwrap();
        let g = block(10, 10, 2, 2, 3, 3);
        assert_eq!(
            sdsc_slice(&e, &e, &cfg).unwrap(),
            SurfaceCounts { hits: 0, total: 0 }
        );
        assert_eq!(
            sdsc_slice(&g, &e, &cfg).unwrap(),
            SurfaceCounts { hits: 0, total: 8 }
        );
        assert_eq!(
            sdsc_slice(&e, &g, &cfg).unwrap(),
            SurfaceCounts { hits: 0, total: 8 }
        );
    }

    #[test]
    fn scan_pooling() {
        let cfg = MetricConfig::default();
        let g1 = block(20, 20, 2, 2, 4, 4);
        let g2 = block(20, 20, 2, 2, 4, 4);
        let p2 = block(20, 20, 12, 12, 4, 4);
        let perfect =
            score_scan(std::slice::from_ref(&g1), std::slice::from_ref(&g1), &cfg).unwrap();
        assert_eq!(
            perfect,
            ScorePair {
                dsc: 1.0,
                sdsc: 1.0
            }
        );
        let half = score_scan(&[g1.clone(), g2], &[g1, p2], &cfg).unwrap();
        assert_eq!(half.sdsc, 0.5);
        assert_eq!(half.dsc, 0.5);
    }

    #[test]
    fn scan_skips_empty_pairs_and_rejects_all_empty() {
        let cfg = MetricConfig::default();
        let e = Mask::empty(8, 8, sp()).unwrap();
        let g = block(8, 8, 1, 1, 3, 3);
        let s = score_scan(&[e.clone(), g.clone()], &[e.clone(), g], &cfg).unwrap();
        assert_eq!(s.sdsc, 1.0);
        assert!(matches!(
            score_scan(std::slice::from_ref(&e), std::slice::from_ref(&e), &cfg),
            Err(Error::NoScoreableSlice(_))
        ));
    }

    #[test]
    fn offsets_are_a_closed_ball() {
        let s = Spacing::isotropic(0.6).unwrap();
        assert_eq!(tolerance_offsets(s, 0.5), vec![(0, 0)]);
        assert_eq!(tolerance_offsets(s, 0.6).len(), 5);
        assert_eq!(tolerance_offsets(s, 0.0), vec![(0, 0)]);
    }

    #[test]
    fn field_path_agrees_with_window_path() {
        let a = Mask::from_fn(40, 40, sp(), |x, y| {
            let (dx, dy) = (x as f64 - 18.0, y as f64 - 20.0);
            dx * dx / 120.0 + dy * dy / 60.0 <= 1.0
        })
        .unwrap();
        let b = a.shift(3, -2).dilate(2);
        // tau = 9 mm is 15 px and exceeds the window budget.
        let cfg = MetricConfig::new(9.0).unwrap();
        let scorer = SurfaceScorer::new(&a, &cfg);
        assert!(scorer.offsets.is_none());
        let via_field = scorer.score(&b);
        let offsets = tolerance_offsets(sp(), 9.0);
        let (ab, an) = a.border_grid();
        let (bb, bn) = b.border_grid();
        let window = SurfaceScorer {
            offsets: Some(offsets),
            field: None,
            ..scorer.clone()
        };
        let via_window = window.score_border(&bb, bn as u64);
        assert_eq!(via_field, via_window);
        assert_eq!(an as u64, scorer.border_count());
        let _ = ab;
    }
}

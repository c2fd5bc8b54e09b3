//! Shared fixtures for the benchmarks.

use stylesplit_core::harness::{prepare, ExperimentConfig, PreparedCohort};
use stylesplit_core::{Mask, Spacing, StyleSpec};

/// Filled disk of radius `r` pixels centred in a `size`-square grid.
pub fn disk(size: usize, r: f64, cx: f64, spacing: f64) -> Mask {
    let spacing = Spacing::isotropic(spacing).expect("positive spacing");
    let c = size as f64 / 2.0;
    Mask::from_fn(size, size, spacing, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - c);
        dx * dx + dy * dy <= r * r
    })
    .expect("valid grid")
}

/// The default erosion/dilation N(10,4) cohort, pretrained and bound.
pub fn erosion_dilation_cohort() -> PreparedCohort {
    let mut cfg = ExperimentConfig::default();
    cfg.cohort.styles = StyleSpec::parse_list("erosion:10:4,dilation:10:4").expect("styles parse");
    prepare(&cfg).expect("default cohort builds")
}

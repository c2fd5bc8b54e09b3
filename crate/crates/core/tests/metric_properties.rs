mod common;

use proptest::prelude::*;
use stylesplit_core::metrics::{dsc, score_scan, sdsc_slice};
use stylesplit_core::{Mask, MetricConfig, Spacing};

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = Mask> {
    (
        any::<u64>(),
        prop::sample::select(vec![0.25, 0.5, 0.8, 1.0]),
    )
        .prop_map(move |(seed, s)| {
            let mut rng = common::rng(seed);
            common::random_mask(&mut rng, w, h, Spacing::isotropic(s).unwrap())
        })
}

fn pair_strategy(w: usize, h: usize) -> impl Strategy<Value = (Mask, Mask)> {
    (
        any::<u64>(),
        prop::sample::select(vec![(0.5, 0.5), (1.0, 1.0), (0.25, 0.75), (0.8, 0.6)]),
    )
        .prop_map(move |(seed, (sx, sy))| {
            let spacing = Spacing::new(sx, sy).unwrap();
            let mut rng = common::rng(seed);
            let g = common::random_mask(&mut rng, w, h, spacing);
            let p = common::random_mask(&mut rng, w, h, spacing);
            (g, p)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdsc_matches_oracle((g, p) in pair_strategy(24, 20), tau in 0.0f64..3.0) {
        let cfg = MetricConfig::new(tau).unwrap();
        let c = sdsc_slice(&g, &p, &cfg).unwrap();
        prop_assert_eq!((c.hits, c.total), common::oracle_counts(&g, &p, tau));
    }

    #[test]
    fn wide_tolerance_matches_oracle((g, p) in pair_strategy(40, 40), tau in 8.0f64..20.0) {
        // Large neighbourhoods take the distance-field path.
        let cfg = MetricConfig::new(tau).unwrap();
        let c = sdsc_slice(&g, &p, &cfg).unwrap();
        prop_assert_eq!((c.hits, c.total), common::oracle_counts(&g, &p, tau));
    }

    #[test]
    fn dsc_matches_oracle((g, p) in pair_strategy(24, 20)) {
        let d = dsc(&g, &p).unwrap();
        prop_assert_eq!(d, common::oracle_dsc(&g, &p));
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn scores_are_symmetric((g, p) in pair_strategy(24, 20), tau in 0.0f64..3.0) {
        let cfg = MetricConfig::new(tau).unwrap();
        prop_assert_eq!(dsc(&g, &p).unwrap(), dsc(&p, &g).unwrap());
        prop_assert_eq!(sdsc_slice(&g, &p, &cfg).unwrap(), sdsc_slice(&p, &g, &cfg).unwrap());
    }

    #[test]
    fn identity_scores_one(m in mask_strategy(24, 20), tau in 0.0f64..3.0) {
        let cfg = MetricConfig::new(tau).unwrap();
        prop_assume!(!m.is_empty());
        let s = score_scan(std::slice::from_ref(&m), std::slice::from_ref(&m), &cfg).unwrap();
        prop_assert_eq!(s.dsc, 1.0);
        prop_assert_eq!(s.sdsc, 1.0);
    }

    #[test]
    fn sdsc_is_monotone_in_tau((g, p) in pair_strategy(24, 20), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let at = |t| sdsc_slice(&g, &p, &MetricConfig::new(t).unwrap()).unwrap().hits;
        prop_assert!(at(lo) <= at(hi));
    }

    #[test]
    fn pooled_scan_score_sums_slices(
        (g1, p1) in pair_strategy(16, 16),
        (g2, p2) in pair_strategy(16, 16),
    ) {
        prop_assume!(g1.spacing() == g2.spacing());
        let cfg = MetricConfig::default();
        let (h1, t1) = common::oracle_counts(&g1, &p1, cfg.tau);
        let (h2, t2) = common::oracle_counts(&g2, &p2, cfg.tau);
        prop_assume!(t1 + t2 > 0);
        let s = score_scan(&[g1, g2], &[p1, p2], &cfg).unwrap();
        prop_assert_eq!(s.sdsc, (h1 + h2) as f64 / (t1 + t2) as f64);
    }
}

#[test]
fn disjoint_masks_score_zero() {
    let s = Spacing::isotropic(0.5).unwrap();
    let g = Mask::from_fn(20, 20, s, |x, _| x < 5).unwrap();
    let p = Mask::from_fn(20, 20, s, |x, _| x > 12).unwrap();
    let cfg = MetricConfig::default();
    let score = score_scan(&[g], &[p], &cfg).unwrap();
    assert_eq!(score.dsc, 0.0);
    assert_eq!(score.sdsc, 0.0);
}

#[test]
fn empty_against_nonempty_scores_zero() {
    let s = Spacing::isotropic(1.0).unwrap();
    let g = Mask::from_fn(10, 10, s, |x, y| x < 4 && y < 4).unwrap();
    let p = Mask::empty(10, 10, s).unwrap();
    let c = sdsc_slice(&g, &p, &MetricConfig::default()).unwrap();
    assert_eq!(c.hits, 0);
    assert_eq!(c.total, 12);
}

#[test]
fn all_empty_scan_is_an_error() {
    let s = Spacing::isotropic(1.0).unwrap();
    let e = Mask::empty(8, 8, s).unwrap();
    assert!(score_scan(
        std::slice::from_ref(&e),
        std::slice::from_ref(&e),
        &MetricConfig::default()
    )
    .is_err());
}

#[test]
fn single_pixel_is_its_own_border() {
    let s = Spacing::isotropic(1.0).unwrap();
    let mut m = Mask::empty(5, 5, s).unwrap();
    m.set(2, 2, true);
    assert_eq!(m.boundary().len(), 1);
    assert_eq!(common::oracle_border(&m), vec![(2, 2)]);
}

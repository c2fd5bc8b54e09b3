//! Shared fixtures: random masks and a brute-force surface-Dice oracle.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylesplit_core::{Mask, Spacing};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Union of a few random rectangles and disks.
pub fn random_blob(rng: &mut ChaCha8Rng, w: usize, h: usize, spacing: Spacing) -> Mask {
    let shapes: Vec<(bool, f64, f64, f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (
                rng.gen(),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(1.0..w as f64 / 3.0),
                rng.gen_range(1.0..h as f64 / 3.0),
            )
        })
        .collect();
    let mask = Mask::from_fn(w, h, spacing, |x, y| {
        let (x, y) = (x as f64, y as f64);
        shapes.iter().any(|&(disk, cx, cy, rx, ry)| {
            if disk {
                ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0
            } else {
                (x - cx).abs() <= rx && (y - cy).abs() <= ry
            }
        })
    })
    .unwrap();
    if mask.is_empty() {
        let mut m = mask;
        m.set(w / 2, h / 2, true);
        m
    } else {
        mask
    }
}

/// Independent pixels with foreground probability `p`.
pub fn random_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64, spacing: Spacing) -> Mask {
    Mask::from_fn(w, h, spacing, |_, _| rng.gen_bool(p)).unwrap()
}

/// Either a blob or a noise mask, so oracles see smooth and ragged contours.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, spacing: Spacing) -> Mask {
    if rng.gen_bool(0.5) {
        random_blob(rng, w, h, spacing)
    } else {
        let p = rng.gen_range(0.05..0.6);
        random_noise(rng, w, h, p, spacing)
    }
}

/// Foreground pixels with a 4-neighbour that is background or off the grid.
pub fn oracle_border(m: &Mask) -> Vec<(i64, i64)> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let inside =
        |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && m.get(x as usize, y as usize);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if inside(x, y)
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| !inside(x + dx, y + dy))
            {
                out.push((x, y));
            }
        }
    }
    out
}

fn within(a: (i64, i64), others: &[(i64, i64)], spacing: Spacing, tau: f64) -> bool {
    others.iter().any(|&b| {
        let dx = (a.0 - b.0) as f64 * spacing.x;
        let dy = (a.1 - b.1) as f64 * spacing.y;
        dx.hypot(dy) <= tau
    })
}

/// All-pairs surface Dice counts: (hits, total).
pub fn oracle_counts(g: &Mask, p: &Mask, tau: f64) -> (u64, u64) {
    let spacing = g.spacing();
    let bg = oracle_border(g);
    let bp = oracle_border(p);
    let total = (bg.len() + bp.len()) as u64;
    let hits = bg.iter().filter(|&&a| within(a, &bp, spacing, tau)).count()
        + bp.iter().filter(|&&a| within(a, &bg, spacing, tau)).count();
    (hits as u64, total)
}

pub fn oracle_dsc(g: &Mask, p: &Mask) -> f64 {
    let both = g
        .pixels()
        .iter()
        .zip(p.pixels())
        .filter(|(a, b)| **a && **b)
        .count();
    let sizes = g.count() + p.count();
    if sizes == 0 {
        1.0
    } else {
        2.0 * both as f64 / sizes as f64
    }
}

//! Exact evaluation of styled predictions without rendering full masks.
//!
//! A prediction is a level set of the base segmentation's offset field, so
//! its border pixels can only have keys in a narrow band just inside the
//! threshold, on the top/bottom seam rows, or on a grid edge. Scoring
//! therefore touches roughly one perimeter of pixels per slice.

use crate::distance::{physical_field, OffsetField};
use crate::mask::Mask;
use crate::metrics::{
    tolerance_offsets, MetricConfig, OverlapCounts, SurfaceCounts, SurfaceScorer,
};

use super::{render, StyleParams};

thread_local! {
    /// Reusable predicted-border indicator; cleared after every use.
    static MARK: std::cell::RefCell<Vec<bool>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Tolerance windows larger than this use the rendering path.
const MAX_WINDOW: usize = 512;

pub(super) struct BandSlice {
    width: usize,
    height: usize,
    field: OffsetField,
    /// Field keys with a one-pixel frame of `i64::MAX` (never inside).
    padded: Vec<i64>,
    split: usize,
    /// Inclusive bounding box of the base foreground.
    bbox: Option<(i64, i64, i64, i64)>,
    /// Pixels of the top and bottom region as `(key, x, y)`, sorted, pruned
    /// to keys reachable by offsets up to `max_offset`.
    regions: [Vec<(i64, u32, u32)>; 2],
    max_offset: i32,
    truth: Mask,
    /// Ground-truth foreground as horizontal runs `(y, x_start, x_end)`.
    truth_runs: Vec<(i64, i64, i64)>,
    truth_count: u64,
    g_border: Vec<(i64, i64)>,
    /// Pixels within tolerance of the ground-truth border.
    g_near: Vec<bool>,
    window: Option<Vec<(i64, i64)>>,
    scorer: SurfaceScorer,
}

/// Keys of the border pixels of `{inside(·, o)}` lie in this closed range.
fn band(o: i32) -> (i64, i64) {
    let o = i64::from(o);
    match o {
        0 => (-1, 0),
        o if o > 0 => ((o - 1) * (o - 1) + 1, o * o),
        o => (-(1 - o) * (1 - o), -o * o - 1),
    }
}

/// Largest key counted as inside for offset `o`.
fn inside_limit(o: i32) -> i64 {
    let o = i64::from(o);
    if o >= 0 {
        o * o
    } else {
        -o * o - 1
    }
}

impl BandSlice {
    pub(super) fn new(base: &Mask, truth: &Mask, metric: &MetricConfig, max_offset: i32) -> Self {
        let (w, h) = base.dims();
        let field = OffsetField::new(base);
        let split = base.centroid_row().unwrap_or(0);
        let mut padded = vec![i64::MAX; (w + 2) * (h + 2)];
        for (y, row) in field.keys().chunks(w).enumerate() {
            let start = (y + 1) * (w + 2) + 1;
            padded[start..start + w].copy_from_slice(row);
        }

        let mut bbox: Option<(i64, i64, i64, i64)> = None;
        for (x, y) in base.foreground() {
            let (x, y) = (x as i64, y as i64);
            bbox = Some(match bbox {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }

        let limit = inside_limit(max_offset);
        let mut regions: [Vec<(i64, u32, u32)>; 2] = [Vec::new(), Vec::new()];
        for (i, &k) in field.keys().iter().enumerate() {
            if k <= limit {
                let (x, y) = (i % w, i / w);
                regions[usize::from(y > split)].push((k, x as u32, y as u32));
            }
        }
        regions.iter_mut().for_each(|r| r.sort_unstable());

        let mut truth_runs = Vec::new();
        for y in 0..h {
            let mut x = 0;
            while x < w {
                if truth.get(x, y) {
                    let start = x;
                    while x < w && truth.get(x, y) {
                        x += 1;
                    }
                    truth_runs.push((y as i64, start as i64, x as i64 - 1));
                } else {
                    x += 1;
                }
            }
        }
        let (border_grid, _) = truth.border_grid();
        let g_border: Vec<(i64, i64)> = border_grid
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| ((i % w) as i64, (i / w) as i64))
            .collect();
        let g_near = if g_border.is_empty() {
            vec![false; w * h]
        } else {
            physical_field(&border_grid, w, h, truth.spacing())
                .iter()
                .map(|&d| d <= metric.tau)
                .collect()
        };
        let window =
            Some(tolerance_offsets(truth.spacing(), metric.tau)).filter(|o| o.len() <= MAX_WINDOW);

        BandSlice {
            width: w,
            height: h,
            field,
            padded,
            split,
            bbox,
            regions,
            max_offset,
            truth_count: truth.count() as u64,
            truth_runs,
            g_border,
            g_near,
            window,
            scorer: SurfaceScorer::new(truth, metric),
            truth: truth.clone(),
        }
    }

    fn rendered(&self, p: &StyleParams) -> (OverlapCounts, SurfaceCounts) {
        let split = self.bbox.map(|_| self.split);
        let pred = render(&self.field, split, p);
        (
            OverlapCounts::of(&self.truth, &pred),
            self.scorer.score(&pred),
        )
    }

    pub(super) fn evaluate(&self, p: &StyleParams) -> (OverlapCounts, SurfaceCounts) {
        let Some((x0, y0, x1, y1)) = self.bbox else {
            // Empty base: every style predicts nothing.
            return (
                OverlapCounts {
                    intersection: 0,
                    sizes: self.truth_count,
                },
                SurfaceCounts {
                    hits: 0,
                    total: self.g_border.len() as u64,
                },
            );
        };
        let o = [
            p.global_offset + p.top_offset,
            p.global_offset + p.bottom_offset,
        ];
        let (w, h) = (self.width as i64, self.height as i64);
        let (dx, dy) = (i64::from(p.shift.0), i64::from(p.shift.1));
        let Some(window) = &self.window else {
            return self.rendered(p);
        };
        if o.iter().any(|v| v.abs() > self.max_offset) {
            return self.rendered(p);
        }

        // Source-space rectangle holding every inside pixel.
        let m = i64::from(o[0].max(o[1]).max(0));
        let (rx0, rx1) = ((x0 - m).max(0), (x1 + m).min(w - 1));
        let (ry0, ry1) = ((y0 - m).max(0), (y1 + m).min(h - 1));

        let split = self.split as i64;
        let keys = self.field.keys();
        let inside_src = |sx: i64, sy: i64| -> bool {
            if sx < 0 || sy < 0 || sx >= w || sy >= h {
                return false;
            }
            let r = usize::from(sy > split);
            keys[(sy * w + sx) as usize] <= inside_limit(o[r])
        };

        let mut size = 0u64;
        for (region, &off) in self.regions.iter().zip(&o) {
            let lim = inside_limit(off);
            size += region.partition_point(|&(k, _, _)| k <= lim) as u64;
        }
        // Inside pixels translated off the grid: whole rows leaving through
        // the top/bottom, then column strips leaving through the sides.
        let rows_on = (ry0.max(-dy), ry1.min(h - 1 - dy));
        let cols_on = (rx0.max(-dx), rx1.min(w - 1 - dx));
        for sy in ry0..=ry1 {
            let row_on = sy >= rows_on.0 && sy <= rows_on.1;
            let strips = if row_on {
                [
                    (rx0, cols_on.0.min(rx1 + 1) - 1),
                    ((cols_on.1 + 1).max(rx0), rx1),
                ]
            } else {
                [(rx0, rx1), (1, 0)]
            };
            for (a, b) in strips {
                for sx in a..=b {
                    if inside_src(sx, sy) {
                        size -= 1;
                    }
                }
            }
        }

        let mut intersection = 0u64;
        for &(y, xa, xb) in &self.truth_runs {
            let sy = y - dy;
            if sy < 0 || sy >= h {
                continue;
            }
            let lim = inside_limit(o[usize::from(sy > split)]);
            let (sa, sb) = ((xa - dx).max(0), (xb - dx).min(w - 1));
            if sa <= sb {
                let row = &keys[(sy * w + sa) as usize..=(sy * w + sb) as usize];
                intersection += row.iter().filter(|&&k| k <= lim).count() as u64;
            }
        }

        MARK.with(|cell| {
            let mut mark = cell.borrow_mut();
            if mark.len() < self.width * self.height {
                mark.resize(self.width * self.height, false);
            }
            let surface = self.score_border(&mut mark, o, (dx, dy), (rx0, rx1, ry0, ry1), window);
            let overlap = OverlapCounts {
                intersection,
                sizes: self.truth_count + size,
            };
            (overlap, surface)
        })
    }

    /// Collects the predicted border into `mark` and scores it against the
    /// ground-truth border. Leaves `mark` all false.
    fn score_border(
        &self,
        mark: &mut [bool],
        o: [i32; 2],
        (dx, dy): (i64, i64),
        (rx0, rx1, ry0, ry1): (i64, i64, i64, i64),
        window: &[(i64, i64)],
    ) -> SurfaceCounts {
        let (w, h) = (self.width as i64, self.height as i64);
        let split = self.split as i64;
        let pw = w + 2;
        let padded = &self.padded;
        let lims = [inside_limit(o[0]), inside_limit(o[1])];
        let row_limit = |sy: i64| lims[usize::from(sy > split)];
        let mut p_border: Vec<usize> = Vec::new();
        // Candidates are on the source grid, so their neighbours stay within
        // the one-pixel padding.
        let mut consider = |sx: i64, sy: i64| {
            let (qx, qy) = (sx + dx, sy + dy);
            if qx < 0 || qy < 0 || qx >= w || qy >= h {
                return;
            }
            let idx = ((sy + 1) * pw + sx + 1) as usize;
            let lim = row_limit(sy);
            if padded[idx] > lim {
                return;
            }
            let on_edge = qx == 0 || qy == 0 || qx == w - 1 || qy == h - 1;
            if !on_edge
                && padded[idx - 1] <= lim
                && padded[idx + 1] <= lim
                && padded[idx - pw as usize] <= row_limit(sy - 1)
                && padded[idx + pw as usize] <= row_limit(sy + 1)
            {
                return;
            }
            let out = (qy * w + qx) as usize;
            if !mark[out] {
                mark[out] = true;
                p_border.push(out);
            }
        };
        for (list, &off) in self.regions.iter().zip(&o) {
            let (lo, hi) = band(off);
            let start = list.partition_point(|&(k, _, _)| k < lo);
            for &(k, x, y) in &list[start..] {
                if k > hi {
                    break;
                }
                consider(i64::from(x), i64::from(y));
            }
        }
        // Seam rows when the halves differ, plus source rows/columns at
        // either grid edge.
        let seam = if o[0] == o[1] {
            [-1, -1]
        } else {
            [split, split + 1]
        };
        for sy in [seam[0], seam[1], 0, h - 1, -dy, h - 1 - dy] {
            if (ry0..=ry1).contains(&sy) {
                for sx in rx0..=rx1 {
                    consider(sx, sy);
                }
            }
        }
        for sx in [0, w - 1, -dx, w - 1 - dx] {
            if (rx0..=rx1).contains(&sx) {
                for sy in ry0..=ry1 {
                    consider(sx, sy);
                }
            }
        }

        let hits_p = p_border.iter().filter(|&&i| self.g_near[i]).count() as u64;
        let hits_g = if p_border.is_empty() || self.g_border.is_empty() {
            0
        } else {
            self.g_border
                .iter()
                .filter(|&&(gx, gy)| {
                    window.iter().any(|&(ox, oy)| {
                        let (nx, ny) = (gx + ox, gy + oy);
                        nx >= 0 && ny >= 0 && nx < w && ny < h && mark[(ny * w + nx) as usize]
                    })
                })
                .count() as u64
        };
        for &i in &p_border {
            mark[i] = false;
        }
        SurfaceCounts {
            hits: if self.g_border.is_empty() {
                0
            } else {
                hits_p + hits_g
            },
            total: self.g_border.len() as u64 + p_border.len() as u64,
        }
    }
}

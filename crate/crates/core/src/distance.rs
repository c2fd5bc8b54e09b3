//! Exact Euclidean distance transforms.
//!
//! The separable lower-envelope algorithm of Felzenszwalb and Huttenlocher is
//! used twice: with unit weights on integer grids (morphology, where squared
//! distances stay exact integers) and with squared-spacing weights for
//! physical distance fields. Both variants track the nearest feature so the
//! final distance can be recomputed from integer pixel offsets.

use crate::error::{Error, Result};
use crate::mask::{BoundarySet, Mask, Spacing};

/// Nearest-feature transform of a row-major indicator grid.
///
/// Returns, per pixel, the squared weighted distance to the nearest feature
/// pixel and that pixel's flat index (`usize::MAX` when there is no feature).
pub(crate) fn feature_transform(
    features: &[bool],
    width: usize,
    height: usize,
    wx: f64,
    wy: f64,
) -> (Vec<f64>, Vec<usize>) {
    let n = width * height;
    let mut col_d = vec![f64::INFINITY; n];
    let mut col_arg = vec![usize::MAX; n];

    let mut f = vec![0.0; height.max(width)];
    let mut d = vec![0.0; height.max(width)];
    let mut arg = vec![usize::MAX; height.max(width)];
    let mut scratch = Envelope::with_capacity(height.max(width));

    for x in 0..width {
        for y in 0..height {
            f[y] = if features[y * width + x] {
                0.0
            } else {
                f64::INFINITY
            };
        }
        scratch.run(&f[..height], wy, &mut d[..height], &mut arg[..height]);
        for y in 0..height {
            col_d[y * width + x] = d[y];
            col_arg[y * width + x] = arg[y];
        }
    }

    let mut out_d = vec![f64::INFINITY; n];
    let mut out_arg = vec![usize::MAX; n];
    for y in 0..height {
        let row = y * width;
        f[..width].copy_from_slice(&col_d[row..row + width]);
        scratch.run(&f[..width], wx, &mut d[..width], &mut arg[..width]);
        for x in 0..width {
            out_d[row + x] = d[x];
            let src_col = arg[x];
            out_arg[row + x] = if src_col == usize::MAX {
                usize::MAX
            } else {
                let src_row = col_arg[row + src_col];
                src_row * width + src_col
            };
        }
    }
    (out_d, out_arg)
}

struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            v: Vec::with_capacity(n),
            z: Vec::with_capacity(n + 1),
        }
    }

    /// 1D squared distance transform `d[p] = min_q f[q] + w (p - q)^2`,
    /// writing the minimizing `q` into `arg` (`usize::MAX` if all `f` are
    /// infinite). Ties resolve to the smaller `q`.
    fn run(&mut self, f: &[f64], w: f64, d: &mut [f64], arg: &mut [usize]) {
        self.v.clear();
        self.z.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let qf = q as f64;
            loop {
                let Some(&vk) = self.v.last() else {
                    self.v.push(q);
                    self.z.push(f64::NEG_INFINITY);
                    break;
                };
                let vf = vk as f64;
                let s = ((fq + w * qf * qf) - (f[vk] + w * vf * vf)) / (2.0 * w * (qf - vf));
                if s <= *self.z.last().unwrap() {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(s);
                    break;
                }
            }
        }
        if self.v.is_empty() {
            d.fill(f64::INFINITY);
            arg.fill(usize::MAX);
            return;
        }
        let mut k = 0;
        for p in 0..f.len() {
            let pf = p as f64;
            while k + 1 < self.v.len() && self.z[k + 1] < pf {
                k += 1;
            }
            let q = self.v[k];
            let dq = pf - q as f64;
            d[p] = w * dq * dq + f[q];
            arg[p] = q;
        }
    }
}

/// Per-pixel squared distances used to evaluate disk erosions and dilations
/// of a fixed mask for any radius in O(pixels).
///
/// For foreground pixels the key is `-d²` to the nearest background pixel
/// (out-of-grid counts as background); for background pixels it is `d²` to
/// the nearest foreground pixel.
#[derive(Debug, Clone)]
pub struct OffsetField {
    width: usize,
    height: usize,
    spacing: Spacing,
    key: Vec<i64>,
}

impl OffsetField {
    pub fn new(mask: &Mask) -> Self {
        let (w, h) = mask.dims();
        let (to_fg, _) = feature_transform(mask.pixels(), w, h, 1.0, 1.0);

        // Pad by one background pixel on every side so the grid edge counts
        // as background for erosion.
        let (pw, ph) = (w + 2, h + 2);
        let mut bg = vec![true; pw * ph];
        for y in 0..h {
            for x in 0..w {
                bg[(y + 1) * pw + x + 1] = !mask.get(x, y);
            }
        }
        let (to_bg, _) = feature_transform(&bg, pw, ph, 1.0, 1.0);

        let mut key = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let k = if mask.get(x, y) {
                    -(to_bg[(y + 1) * pw + x + 1] as i64)
                } else {
                    let d = to_fg[y * w + x];
                    if d.is_finite() {
                        d as i64
                    } else {
                        i64::MAX
                    }
                };
                key.push(k);
            }
        }
        OffsetField {
            width: w,
            height: h,
            spacing: mask.spacing(),
            key,
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub(crate) fn keys(&self) -> &[i64] {
        &self.key
    }

    #[inline]
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Is pixel `idx` foreground after a signed offset (positive dilates,
    /// negative erodes)?
    #[inline]
    pub fn inside(&self, idx: usize, offset: i32) -> bool {
        let r2 = i64::from(offset) * i64::from(offset);
        if offset >= 0 {
            self.key[idx] <= r2
        } else {
            self.key[idx] < -r2
        }
    }

    pub fn threshold(&self, offset: i32) -> Mask {
        let pixels = (0..self.key.len())
            .map(|i| self.inside(i, offset))
            .collect();
        Mask::from_pixels(self.width, self.height, pixels, self.spacing)
            .expect("field dimensions are valid")
    }
}

/// Physical distance (mm) from every pixel center to the nearest border
/// point center.
pub fn boundary_distance_field(boundary: &BoundarySet) -> Result<Vec<f64>> {
    if boundary.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    let (w, h) = boundary.dims();
    let mut features = vec![false; w * h];
    for &(x, y) in boundary.points() {
        features[y * w + x] = true;
    }
    Ok(physical_field(&features, w, h, boundary.spacing()))
}

/// Physical distance field to the nearest `true` cell of an indicator grid.
pub(crate) fn physical_field(features: &[bool], w: usize, h: usize, spacing: Spacing) -> Vec<f64> {
    let (wx, wy) = if spacing.x == spacing.y {
        (1.0, 1.0)
    } else {
        (spacing.x * spacing.x, spacing.y * spacing.y)
    };
    let (_, nearest) = feature_transform(features, w, h, wx, wy);
    nearest
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if j == usize::MAX {
                return f64::INFINITY;
            }
            let dx = (i % w) as i64 - (j % w) as i64;
            let dy = (i / w) as i64 - (j / w) as i64;
            spacing.distance(dx, dy)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_sq(features: &[bool], w: usize, h: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; w * h];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, _) in features.iter().enumerate().filter(|(_, &f)| f) {
                let dx = (i % w) as f64 - (j % w) as f64;
                let dy = (i / w) as f64 - (j / w) as f64;
                *o = o.min(dx * dx + dy * dy);
            }
        }
        out
    }

    #[test]
    fn three_four_five() {
        let sp = Spacing::isotropic(0.6).unwrap();
        let m = Mask::from_fn(8, 8, sp, |x, y| x == 0 && y == 0).unwrap();
        let field = boundary_distance_field(&m.boundary()).unwrap();
        assert_eq!(field[0], 0.0);
        assert!((field[4 * 8 + 3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_boundary_is_an_error() {
        let sp = Spacing::isotropic(1.0).unwrap();
        let m = Mask::empty(4, 4, sp).unwrap();
        assert!(matches!(
            boundary_distance_field(&m.boundary()),
            Err(Error::EmptyBoundary)
        ));
    }

    proptest! {
        #[test]
        fn unit_transform_matches_brute_force(
            w in 1usize..12, h in 1usize..12, bits in proptest::collection::vec(any::<bool>(), 144)
        ) {
            let features = &bits[..w * h];
            let (d, arg) = feature_transform(features, w, h, 1.0, 1.0);
            let oracle = brute_sq(features, w, h);
            prop_assert_eq!(&d, &oracle);
            for (i, &j) in arg.iter().enumerate() {
                if j != usize::MAX {
                    prop_assert!(features[j]);
                    let dx = (i % w) as f64 - (j % w) as f64;
                    let dy = (i / w) as f64 - (j / w) as f64;
                    prop_assert_eq!(dx * dx + dy * dy, d[i]);
                }
            }
        }
    }
}

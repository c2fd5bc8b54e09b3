//! Synthetic phantom cohorts and simulated segmentation styles.
//!
//! Every scan is a stack of 2D slices holding a smooth superellipse "organ"
//! that tapers towards both ends of the stack. The image channel is a blurred,
//! noisy rendering of the untouched organ, so a threshold segmenter recovers
//! the base shape. Styles are then applied to the masks only, slice by slice,
//! with a magnitude drawn from a per-style Gaussian.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distance::OffsetField;
use crate::error::{Error, Result};
use crate::mask::{GrayImage, Mask, Scan, Slice, Spacing, VoxelSpacing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleOp {
    Erosion,
    Dilation,
    ShiftUp,
    ShiftDown,
    TopOver,
    TopUnder,
    BottomOver,
    BottomUnder,
}

impl StyleOp {
    pub const ALL: [StyleOp; 8] = [
        StyleOp::Erosion,
        StyleOp::Dilation,
        StyleOp::ShiftUp,
        StyleOp::ShiftDown,
        StyleOp::TopOver,
        StyleOp::TopUnder,
        StyleOp::BottomOver,
        StyleOp::BottomUnder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StyleOp::Erosion => "erosion",
            StyleOp::Dilation => "dilation",
            StyleOp::ShiftUp => "shift-up",
            StyleOp::ShiftDown => "shift-down",
            StyleOp::TopOver => "top-over",
            StyleOp::TopUnder => "top-under",
            StyleOp::BottomOver => "bottom-over",
            StyleOp::BottomUnder => "bottom-under",
        }
    }
}

impl fmt::Display for StyleOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StyleOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StyleOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown style operation `{s}`")))
    }
}

/// A style: one operation with a per-slice magnitude `~ N(mean, std)` pixels.
/// Serialized in the `op:mean:std` form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StyleSpec {
    pub operation: StyleOp,
    pub magnitude_mean: f64,
    pub magnitude_std: f64,
}

impl StyleSpec {
    pub fn new(operation: StyleOp, magnitude_mean: f64, magnitude_std: f64) -> Result<Self> {
        if !(magnitude_mean.is_finite() && magnitude_mean >= 0.0) {
            return Err(Error::Config(format!(
                "magnitude mean must be >= 0, got {magnitude_mean}"
            )));
        }
        if !(magnitude_std.is_finite() && magnitude_std >= 0.0) {
            return Err(Error::Config(format!(
                "magnitude std must be >= 0, got {magnitude_std}"
            )));
        }
        Ok(StyleSpec {
            operation,
            magnitude_mean,
            magnitude_std,
        })
    }

    /// Draws one slice magnitude: clamped at zero and rounded to whole pixels.
    pub fn sample_magnitude<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let normal = Normal::new(self.magnitude_mean, self.magnitude_std)
            .expect("std validated at construction");
        normal.sample(rng).max(0.0).round() as u32
    }

    /// Human-readable magnitude, e.g. `N(10,4)`.
    pub fn magnitude_label(&self) -> String {
        format!("N({},{})", self.magnitude_mean, self.magnitude_std)
    }

    /// Parses the command-line form used by the CLI, e.g. `erosion:10:4`.
    pub fn parse_list(s: &str) -> Result<Vec<StyleSpec>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for StyleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [op, mean, std] = parts[..] else {
            return Err(Error::Config(format!(
                "style must look like `op:mean:std`, got `{s}`"
            )));
        };
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad magnitude `{v}` in `{s}`")))
        };
        StyleSpec::new(op.parse()?, num(mean)?, num(std)?)
    }
}

impl TryFrom<String> for StyleSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StyleSpec> for String {
    fn from(spec: StyleSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for StyleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.operation, self.magnitude_mean, self.magnitude_std
        )
    }
}

/// Geometry and appearance of generated phantoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    pub slices_per_scan: usize,
    pub spacing: VoxelSpacing,
    /// Gaussian blur of the rendered organ, in pixels.
    pub blur_sigma: f64,
    /// Additive Gaussian noise on the `[0, 1]` intensity scale.
    pub noise_std: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            width: 128,
            height: 128,
            slices_per_scan: 20,
            spacing: VoxelSpacing {
                x: 0.08,
                y: 0.08,
                z: 2.0,
            },
            blur_sigma: 1.5,
            noise_std: 0.04,
        }
    }
}

const BACKGROUND_LEVEL: f64 = 0.2;
const ORGAN_CONTRAST: f64 = 0.6;

/// Generates `n_scans` untouched phantom scans, deterministically per seed.
pub fn generate_phantom(seed: u64, n_scans: usize, cfg: &PhantomConfig) -> Result<Vec<Scan>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(&mut rng, n_scans, cfg)
}

fn generate_with(rng: &mut ChaCha8Rng, n_scans: usize, cfg: &PhantomConfig) -> Result<Vec<Scan>> {
    if n_scans < 2 {
        return Err(Error::Config(format!(
            "need at least 2 scans, got {n_scans}"
        )));
    }
    if cfg.slices_per_scan < 3 {
        return Err(Error::Config(format!(
            "need at least 3 slices per scan, got {}",
            cfg.slices_per_scan
        )));
    }
    if cfg.width < 64 || cfg.height < 64 {
        return Err(Error::Geometry(format!(
            "phantom grid must be at least 64x64, got {}x{}",
            cfg.width, cfg.height
        )));
    }
    let spacing = cfg.spacing.in_plane()?;
    let noise =
        Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(format!("noise std: {e}")))?;
    let kernel = gaussian_kernel(cfg.blur_sigma);
    // Organ size scales with the grid; 128 px grids give semi-axes of 20-30 px.
    let scale = cfg.width.min(cfg.height) as f64 / 128.0;

    let mut scans = Vec::with_capacity(n_scans);
    for s in 0..n_scans {
        let cx = cfg.width as f64 / 2.0 + rng.gen_range(-4.0..4.0) * scale;
        let cy = cfg.height as f64 / 2.0 + rng.gen_range(-4.0..4.0) * scale;
        let a = rng.gen_range(20.0..30.0) * scale;
        let b = rng.gen_range(16.0..26.0) * scale;
        let exponent = rng.gen_range(2.0..3.0);
        let tilt = rng.gen_range(-0.3..0.3);
        let n = cfg.slices_per_scan;

        let mut slices = Vec::with_capacity(n);
        for z in 0..n {
            // Taper towards both ends of the stack.
            let u = (z as f64 + 0.5) / n as f64 * 2.0 - 1.0;
            let taper = 0.6 + 0.4 * (1.0 - u * u).sqrt();
            let sa = a * taper * rng.gen_range(0.95..1.05);
            let sb = b * taper * rng.gen_range(0.95..1.05);
            let (scx, scy) = (cx + rng.gen_range(-1.0..1.0), cy + rng.gen_range(-1.0..1.0));
            let (sin, cos) = f64::sin_cos(tilt);
            let mask = Mask::from_fn(cfg.width, cfg.height, spacing, |x, y| {
                let (dx, dy) = (x as f64 - scx, y as f64 - scy);
                let (rx, ry) = (cos * dx + sin * dy, -sin * dx + cos * dy);
                (rx / sa).abs().powf(exponent) + (ry / sb).abs().powf(exponent) <= 1.0
            })?;
            let image = render_image(&mask, &kernel, &noise, rng)?;
            slices.push(Slice { image, mask });
        }
        scans.push(Scan::new(format!("scan_{s:03}"), slices, cfg.spacing)?);
    }
    Ok(scans)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn render_image(
    mask: &Mask,
    kernel: &[f64],
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<GrayImage> {
    let (w, h) = mask.dims();
    let r = (kernel.len() / 2) as i64;
    let src: Vec<f64> = mask
        .pixels()
        .iter()
        .map(|&p| f64::from(u8::from(p)))
        .collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            let v = BACKGROUND_LEVEL + ORGAN_CONTRAST * acc + noise.sample(rng);
            data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    GrayImage::new(w, h, data)
}

/// Rows `<= split` form the top part of a slice, rows `> split` the bottom.
fn in_top(y: usize, split: usize) -> bool {
    y <= split
}

/// Applies one style operation of magnitude `t` to a mask. The top/bottom
/// split row is the mask's own centroid row.
pub fn transform_mask(mask: &Mask, op: StyleOp, t: u32) -> Mask {
    if t == 0 || mask.is_empty() {
        return mask.clone();
    }
    let ti = t as i64;
    match op {
        StyleOp::Erosion => mask.erode(t),
        StyleOp::Dilation => mask.dilate(t),
        StyleOp::ShiftUp => mask.shift(0, -ti),
        StyleOp::ShiftDown => mask.shift(0, ti),
        StyleOp::TopOver | StyleOp::TopUnder | StyleOp::BottomOver | StyleOp::BottomUnder => {
            let split = mask.centroid_row().expect("mask is nonempty");
            let over = matches!(op, StyleOp::TopOver | StyleOp::BottomOver);
            let top = matches!(op, StyleOp::TopOver | StyleOp::TopUnder);
            let changed = if over { mask.dilate(t) } else { mask.erode(t) };
            let w = mask.width();
            let pixels = mask
                .pixels()
                .iter()
                .zip(changed.pixels())
                .enumerate()
                .map(|(i, (&orig, &moved))| {
                    if in_top(i / w, split) == top {
                        moved
                    } else {
                        orig
                    }
                })
                .collect();
            Mask::from_pixels(mask.width(), mask.height(), pixels, mask.spacing())
                .expect("same geometry")
        }
    }
}

/// Applies `op` with magnitude at most `t`, backing off to the largest
/// magnitude that keeps at least one foreground pixel.
fn transform_nonempty(mask: &Mask, op: StyleOp, t: u32) -> Mask {
    let out = transform_mask(mask, op, t);
    if !out.is_empty() || mask.is_empty() {
        return out;
    }
    if op == StyleOp::Erosion {
        let field = OffsetField::new(mask);
        for r in (0..t).rev() {
            let m = field.threshold(-(r as i32));
            if !m.is_empty() {
                return m;
            }
        }
    }
    for r in (0..t).rev() {
        let m = transform_mask(mask, op, r);
        if !m.is_empty() {
            return m;
        }
    }
    mask.clone()
}

/// Applies a style to every slice of a scan, drawing one magnitude per slice.
pub fn apply_style<R: Rng + ?Sized>(scan: &Scan, spec: &StyleSpec, rng: &mut R) -> Result<Scan> {
    let masks = scan
        .masks()
        .map(|m| {
            let t = spec.sample_magnitude(rng);
            transform_nonempty(m, spec.operation, t)
        })
        .collect();
    scan.with_masks(masks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// 16 + 16 scans; 12 set aside for pretraining, 20 optimized.
    TwoStyle,
    /// 32 scans over three styles; 11 pretraining, 7 + 7 + 7 optimized.
    ThreeStyle,
    Custom {
        styles: usize,
        total: usize,
        pretrain: usize,
    },
}

impl Layout {
    fn shape(self) -> (usize, usize, usize) {
        match self {
            Layout::TwoStyle => (2, 32, 12),
            Layout::ThreeStyle => (3, 32, 11),
            Layout::Custom {
                styles,
                total,
                pretrain,
            } => (styles, total, pretrain),
        }
    }

    pub fn styles(self) -> usize {
        self.shape().0
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-style" => Ok(Layout::TwoStyle),
            "three-style" => Ok(Layout::ThreeStyle),
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyledCohort {
    pub seed: u64,
    pub specs: Vec<StyleSpec>,
    pub layout: Layout,
    pub phantom: PhantomConfig,
    #[serde(skip)]
    pub scans: Vec<Scan>,
    pub style_labels: BTreeMap<String, usize>,
    pub pretrain_ids: Vec<String>,
    pub optimize_ids: Vec<String>,
}

impl StyledCohort {
    pub fn scan(&self, id: &str) -> Option<&Scan> {
        self.scans.iter().find(|s| s.id() == id)
    }

    fn select(&self, ids: &[String]) -> Vec<Scan> {
        ids.iter()
            .map(|id| {
                self.scan(id)
                    .expect("cohort ids refer to its scans")
                    .clone()
            })
            .collect()
    }

    pub fn pretrain_scans(&self) -> Vec<Scan> {
        self.select(&self.pretrain_ids)
    }

    pub fn optimize_scans(&self) -> Vec<Scan> {
        self.select(&self.optimize_ids)
    }

    /// Style labels of the optimize set, in optimize order.
    pub fn optimize_labels(&self) -> Vec<usize> {
        self.optimize_ids
            .iter()
            .map(|id| self.style_labels[id])
            .collect()
    }
}

/// Generates phantoms, assigns styles round-robin, applies them and splits
/// the cohort into style-balanced pretrain and optimize sets.
pub fn build_experiment_cohort(
    seed: u64,
    specs: &[StyleSpec],
    layout: Layout,
    phantom: &PhantomConfig,
) -> Result<StyledCohort> {
    let (k, total, pretrain) = layout.shape();
    if specs.len() != k || k == 0 {
        return Err(Error::Config(format!(
            "layout {layout:?} needs {k} styles, got {}",
            specs.len()
        )));
    }
    if pretrain >= total || total < k {
        return Err(Error::Config(format!(
            "layout {layout:?} leaves no scans to optimize"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = generate_with(&mut rng, total, phantom)?;

    let mut scans = Vec::with_capacity(total);
    let mut style_labels = BTreeMap::new();
    for (i, scan) in base.iter().enumerate() {
        let style = i % k;
        scans.push(apply_style(scan, &specs[style], &mut rng)?);
        style_labels.insert(scan.id().to_string(), style);
    }

    // Pretrain quota per style: as even as possible, earlier styles first.
    let quota: Vec<usize> = (0..k)
        .map(|s| pretrain / k + usize::from(s < pretrain % k))
        .collect();
    let mut taken = vec![0; k];
    let mut pretrain_ids = Vec::new();
    let mut optimize_ids = Vec::new();
    for scan in &scans {
        let style = style_labels[scan.id()];
        if taken[style] < quota[style] {
            taken[style] += 1;
            pretrain_ids.push(scan.id().to_string());
        } else {
            optimize_ids.push(scan.id().to_string());
        }
    }

    Ok(StyledCohort {
        seed,
        specs: specs.to_vec(),
        layout,
        phantom: *phantom,
        scans,
        style_labels,
        pretrain_ids,
        optimize_ids,
    })
}

/// Spacing helper for tests and callers building masks by hand.
pub fn phantom_spacing(cfg: &PhantomConfig) -> Result<Spacing> {
    cfg.spacing.in_plane()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dsc;

    fn small_cfg() -> PhantomConfig {
        PhantomConfig {
            slices_per_scan: 4,
            ..PhantomConfig::default()
        }
    }

    #[test]
    fn parse_style_list() {
        let specs = StyleSpec::parse_list("erosion:10:4,dilation:5:1").unwrap();
        assert_eq!(specs[0].operation, StyleOp::Erosion);
        assert_eq!(specs[1].magnitude_mean, 5.0);
        assert_eq!(specs[1].to_string(), "dilation:5:1");
        assert!("erosion:10".parse::<StyleSpec>().is_err());
        assert!("melt:1:1".parse::<StyleSpec>().is_err());
        assert!("erosion:-1:1".parse::<StyleSpec>().is_err());
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate_phantom(7, 3, &small_cfg()).unwrap();
        let b = generate_phantom(7, 3, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(8, 3, &small_cfg()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generator_rejects_degenerate_requests() {
        assert!(generate_phantom(1, 1, &small_cfg()).is_err());
        let thin = PhantomConfig {
            slices_per_scan: 2,
            ..small_cfg()
        };
        assert!(generate_phantom(1, 2, &thin).is_err());
        let tiny = PhantomConfig {
            width: 8,
            ..small_cfg()
        };
        assert!(generate_phantom(1, 2, &tiny).is_err());
    }

    #[test]
    fn zero_magnitude_is_identity() {
        let scan = &generate_phantom(3, 2, &small_cfg()).unwrap()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for op in StyleOp::ALL {
            let spec = StyleSpec::new(op, 0.0, 0.0).unwrap();
            assert_eq!(&apply_style(scan, &spec, &mut rng).unwrap(), scan);
        }
    }

    #[test]
    fn top_over_keeps_bottom_rows() {
        let scan = &generate_phantom(4, 2, &small_cfg()).unwrap()[0];
        for m in scan.masks() {
            let split = m.centroid_row().unwrap();
            let out = transform_mask(m, StyleOp::TopOver, 6);
            for y in split + 1..m.height() {
                for x in 0..m.width() {
                    assert_eq!(out.get(x, y), m.get(x, y));
                }
            }
            assert!(m.is_subset_of(&out));
            assert!(out.count() > m.count());
        }
    }

    #[test]
    fn bottom_under_keeps_top_rows() {
        let scan = &generate_phantom(5, 2, &small_cfg()).unwrap()[1];
        for m in scan.masks() {
            let split = m.centroid_row().unwrap();
            let out = transform_mask(m, StyleOp::BottomUnder, 6);
            for y in 0..=split {
                for x in 0..m.width() {
                    assert_eq!(out.get(x, y), m.get(x, y));
                }
            }
            assert!(out.is_subset_of(m));
        }
    }

    #[test]
    fn erosion_backs_off_instead_of_emptying() {
        let sp = Spacing::isotropic(0.3).unwrap();
        let m = Mask::from_fn(32, 32, sp, |x, y| {
            (10..15).contains(&x) && (10..15).contains(&y)
        })
        .unwrap();
        let out = transform_nonempty(&m, StyleOp::Erosion, 20);
        assert_eq!(out.count(), 1);
        let up = transform_nonempty(&m, StyleOp::ShiftUp, 31);
        assert!(!up.is_empty());
    }

    #[test]
    fn shifts_move_by_magnitude() {
        let scan = &generate_phantom(6, 2, &small_cfg()).unwrap()[0];
        let m = &scan.slices()[1].mask;
        let up = transform_mask(m, StyleOp::ShiftUp, 5);
        let (_, cy) = m.centroid().unwrap();
        let (_, uy) = up.centroid().unwrap();
        assert!((cy - uy - 5.0).abs() < 1e-9);
        assert_eq!(up.count(), m.count());
    }

    #[test]
    fn erosion_and_dilation_are_ordered() {
        let scans = generate_phantom(9, 2, &small_cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ero = StyleSpec::new(StyleOp::Erosion, 8.0, 3.0).unwrap();
        let dil = StyleSpec::new(StyleOp::Dilation, 8.0, 3.0).unwrap();
        for s in &scans {
            let e = apply_style(s, &ero, &mut rng).unwrap();
            let d = apply_style(s, &dil, &mut rng).unwrap();
            for ((o, e), d) in s.masks().zip(e.masks()).zip(d.masks()) {
                assert!(e.is_subset_of(o));
                assert!(o.is_subset_of(d));
            }
        }
    }

    #[test]
    fn image_threshold_recovers_base_mask() {
        let scans = generate_phantom(11, 3, &small_cfg()).unwrap();
        let sp = phantom_spacing(&small_cfg()).unwrap();
        for s in &scans {
            for slice in s.slices() {
                let seg = slice.image.threshold(0.5, sp);
                assert!(dsc(&slice.mask, &seg).unwrap() >= 0.95);
            }
        }
    }

    #[test]
    fn cohort_layouts() {
        let specs = StyleSpec::parse_list("erosion:10:4,dilation:10:4").unwrap();
        let c = build_experiment_cohort(1, &specs, Layout::TwoStyle, &small_cfg()).unwrap();
        assert_eq!(c.scans.len(), 32);
        assert_eq!(c.pretrain_ids.len(), 12);
        assert_eq!(c.optimize_ids.len(), 20);
        let labels = c.optimize_labels();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 10);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10);

        let three =
            StyleSpec::parse_list("top-over:10:4,top-under:10:4,bottom-under:10:4").unwrap();
        let c3 = build_experiment_cohort(2, &three, Layout::ThreeStyle, &small_cfg()).unwrap();
        assert_eq!(c3.pretrain_ids.len(), 11);
        assert_eq!(c3.optimize_ids.len(), 21);
        for style in 0..3 {
            assert_eq!(
                c3.optimize_labels().iter().filter(|&&l| l == style).count(),
                7
            );
        }

        assert!(build_experiment_cohort(1, &three, Layout::TwoStyle, &small_cfg()).is_err());
    }

    #[test]
    fn cohort_split_is_a_bijection() {
        let specs = StyleSpec::parse_list("shift-up:5:1,shift-down:5:1").unwrap();
        let c = build_experiment_cohort(3, &specs, Layout::TwoStyle, &small_cfg()).unwrap();
        let mut ids: Vec<_> = c
            .pretrain_ids
            .iter()
            .chain(&c.optimize_ids)
            .cloned()
            .collect();
        ids.sort();
        let mut all: Vec<_> = c.scans.iter().map(|s| s.id().to_string()).collect();
        all.sort();
        assert_eq!(ids, all);
        ids.dedup();
        assert_eq!(ids.len(), 32);
    }
}

//! Binary masks, grayscale slices and scans with physical geometry.
//!
//! Masks are dense row-major grids. Pixel `(x, y)` is column `x`, row `y`,
//! with row 0 at the top of the image. Every pixel has a physical center at
//! `((x + 0.5) * spacing.x, (y + 0.5) * spacing.y)` millimetres.

use serde::{Deserialize, Serialize};

use crate::distance::OffsetField;
use crate::error::{Error, Result};

/// In-plane pixel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub x: f64,
    pub y: f64,
}

impl Spacing {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && x > 0.0 && y > 0.0) {
            return Err(Error::Geometry(format!(
                "spacing must be strictly positive, got ({x}, {y})"
            )));
        }
        Ok(Spacing { x, y })
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Spacing::new(s, s)
    }

    /// Euclidean distance in millimetres between two pixel centers that are
    /// `dx` columns and `dy` rows apart.
    ///
    /// Every distance computation in the crate goes through this function so
    /// that equal pixel offsets always yield bit-identical distances.
    #[inline]
    pub fn distance(&self, dx: i64, dy: i64) -> f64 {
        if self.x == self.y {
            self.x * ((dx * dx + dy * dy) as f64).sqrt()
        } else {
            let px = dx as f64 * self.x;
            let py = dy as f64 * self.y;
            (px * px + py * py).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
    spacing: Spacing,
}

impl Mask {
    /// An all-background mask.
    pub fn empty(width: usize, height: usize, spacing: Spacing) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Mask {
            width,
            height,
            pixels: vec![false; width * height],
            spacing,
        })
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<bool>,
        spacing: Spacing,
    ) -> Result<Self> {
        check_dims(width, height)?;
        if pixels.len() != width * height {
            return Err(Error::Geometry(format!(
                "expected {} pixels for a {width}x{height} mask, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            pixels,
            spacing,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: Spacing,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Ok(Mask {
            width,
            height,
            pixels,
            spacing,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    #[inline]
    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    /// Like [`Mask::get`], but out-of-grid coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.pixels[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&p| p)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Mean row and column of the foreground, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.foreground() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Row index splitting the mask into a top part (`row <= split`) and a
    /// bottom part (`row > split`): the floor of the foreground centroid row.
    pub fn centroid_row(&self) -> Option<usize> {
        self.centroid().map(|(_, cy)| cy.floor() as usize)
    }

    pub fn same_geometry(&self, other: &Mask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims()
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(&a, &b)| !a || b)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    /// Pixelwise combination of two masks of equal geometry.
    pub fn zip_with(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        debug_assert_eq!(self.dims(), other.dims());
        Mask {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            spacing: self.spacing,
        }
    }

    /// Erosion by a Euclidean disk of the given pixel radius. Pixels outside
    /// the grid count as background.
    pub fn erode(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        OffsetField::new(self).threshold(-(radius as i32))
    }

    /// Dilation by a Euclidean disk of the given pixel radius, clipped to the
    /// grid.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        OffsetField::new(self).threshold(radius as i32)
    }

    /// Translates the foreground by `(dx, dy)` pixels, dropping whatever
    /// leaves the grid.
    pub fn shift(&self, dx: i64, dy: i64) -> Mask {
        let mut out = vec![false; self.pixels.len()];
        let (w, h) = (self.width as i64, self.height as i64);
        for (x, y) in self.foreground() {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                out[(ny * w + nx) as usize] = true;
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            pixels: out,
            spacing: self.spacing,
        }
    }

    /// Inner 4-connected border of the foreground.
    pub fn boundary(&self) -> BoundarySet {
        let mut points = Vec::new();
        for (x, y) in self.foreground() {
            if self.is_border_pixel(x, y) {
                points.push((x, y));
            }
        }
        BoundarySet {
            width: self.width,
            height: self.height,
            spacing: self.spacing,
            points,
        }
    }

    #[inline]
    pub(crate) fn is_border_pixel(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as i64, y as i64);
        !(self.get_signed(x - 1, y)
            && self.get_signed(x + 1, y)
            && self.get_signed(x, y - 1)
            && self.get_signed(x, y + 1))
    }

    /// Row-major border indicator grid (same points as [`Mask::boundary`]).
    pub(crate) fn border_grid(&self) -> (Vec<bool>, usize) {
        let mut grid = vec![false; self.pixels.len()];
        let mut n = 0;
        for (x, y) in self.foreground() {
            if self.is_border_pixel(x, y) {
                grid[y * self.width + x] = true;
                n += 1;
            }
        }
        (grid, n)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Geometry(format!(
            "grid must be non-degenerate, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Border pixels of a mask plus the geometry needed to place them in
/// physical space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    width: usize,
    height: usize,
    spacing: Spacing,
    points: Vec<(usize, usize)>,
}

impl BoundarySet {
    /// Border pixel coordinates `(x, y)` in row-major order.
    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.points
            .binary_search_by(|&(px, py)| (py, px).cmp(&(y, x)))
            .is_ok()
    }

    /// Physical coordinate (mm) of a pixel center.
    pub fn to_physical(&self, (x, y): (usize, usize)) -> (f64, f64) {
        (
            (x as f64 + 0.5) * self.spacing.x,
            (y as f64 + 0.5) * self.spacing.y,
        )
    }
}

/// 8-bit grayscale slice image. Intensities map to `[0, 1]` as `v / 255`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::Geometry(format!(
                "expected {} samples for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Foreground wherever the normalized intensity is at least `level`.
    pub fn threshold(&self, level: f64, spacing: Spacing) -> Mask {
        let pixels = self
            .data
            .iter()
            .map(|&v| f64::from(v) / 255.0 >= level)
            .collect();
        Mask {
            width: self.width,
            height: self.height,
            pixels,
            spacing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelSpacing {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl VoxelSpacing {
    pub fn in_plane(&self) -> Result<Spacing> {
        Spacing::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub image: GrayImage,
    pub mask: Mask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    id: String,
    slices: Vec<Slice>,
    spacing: VoxelSpacing,
}

impl Scan {
    pub fn new(id: impl Into<String>, slices: Vec<Slice>, spacing: VoxelSpacing) -> Result<Self> {
        let id = id.into();
        let in_plane = spacing.in_plane()?;
        if !(spacing.z.is_finite() && spacing.z > 0.0) {
            return Err(Error::Geometry(format!(
                "slice spacing must be positive, got {}",
                spacing.z
            )));
        }
        let Some(first) = slices.first() else {
            return Err(Error::Geometry(format!("scan `{id}` has no slices")));
        };
        let dims = first.mask.dims();
        for s in &slices {
            if s.mask.dims() != dims || (s.image.width(), s.image.height()) != dims {
                return Err(Error::Geometry(format!("scan `{id}` mixes slice sizes")));
            }
            if s.mask.spacing() != in_plane {
                return Err(Error::Geometry(format!(
                    "scan `{id}` slice spacing disagrees with scan spacing"
                )));
            }
        }
        if slices.iter().all(|s| s.mask.is_empty()) {
            return Err(Error::Geometry(format!("scan `{id}` has no foreground")));
        }
        Ok(Scan {
            id,
            slices,
            spacing,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn spacing(&self) -> VoxelSpacing {
        self.spacing
    }

    pub fn dims(&self) -> (usize, usize) {
        self.slices[0].mask.dims()
    }

    pub fn masks(&self) -> impl Iterator<Item = &Mask> {
        self.slices.iter().map(|s| &s.mask)
    }

    /// Same scan with every mask replaced; images and geometry are kept.
    pub fn with_masks(&self, masks: Vec<Mask>) -> Result<Scan> {
        if masks.len() != self.slices.len() {
            return Err(Error::Geometry(format!(
                "scan `{}` has {} slices, got {} masks",
                self.id,
                self.slices.len(),
                masks.len()
            )));
        }
        let slices = self
            .slices
            .iter()
            .zip(masks)
            .map(|(s, mask)| Slice {
                image: s.image.clone(),
                mask,
            })
            .collect();
        Scan::new(self.id.clone(), slices, self.spacing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> Spacing {
        Spacing::isotropic(0.6).unwrap()
    }

    fn single(w: usize, h: usize, px: usize, py: usize) -> Mask {
        Mask::from_fn(w, h, sp(), |x, y| x == px && y == py).unwrap()
    }

    #[test]
    fn erode_full_3x3_keeps_center() {
        let m = Mask::from_fn(3, 3, sp(), |_, _| true).unwrap();
        let e = m.erode(1);
        assert_eq!(e.foreground().collect::<Vec<_>>(), vec![(1, 1)]);
    }

    #[test]
    fn zero_radius_is_identity() {
        let m = Mask::from_fn(7, 5, sp(), |x, y| (x + y) % 3 == 0).unwrap();
        assert_eq!(m.erode(0), m);
        assert_eq!(m.dilate(0), m);
    }

    #[test]
    fn erode_empty_stays_empty() {
        let m = Mask::empty(9, 9, sp()).unwrap();
        assert!(m.erode(5).is_empty());
        assert!(m.dilate(5).is_empty());
    }

    #[test]
    fn dilate_single_pixel_radius_one_is_plus() {
        let d = single(5, 5, 2, 2).dilate(1);
        let mut fg: Vec<_> = d.foreground().collect();
        fg.sort();
        assert_eq!(fg, vec![(1, 2), (2, 1), (2, 2), (2, 3), (3, 2)]);
    }

    #[test]
    fn dilate_radius_two_includes_diagonals() {
        // (1,1) has squared distance 2 <= 4, (2,1) has 5 > 4.
        let d = single(7, 7, 3, 3).dilate(2);
        assert_eq!(d.count(), 13);
        assert!(d.get(4, 4));
        assert!(!d.get(5, 4));
    }

    #[test]
    fn shift_examples() {
        let m = single(5, 5, 2, 2);
        assert_eq!(m.shift(0, 0), m);
        let s = m.shift(1, -2);
        assert_eq!(s.foreground().collect::<Vec<_>>(), vec![(3, 0)]);
        assert!(single(5, 5, 0, 0).shift(-1, 0).is_empty());
    }

    #[test]
    fn boundary_examples() {
        let full = Mask::from_fn(3, 3, sp(), |_, _| true).unwrap();
        let b = full.boundary();
        assert_eq!(b.len(), 8);
        assert!(!b.contains(1, 1));
        assert!(b.contains(0, 2));

        let one = single(4, 4, 1, 2).boundary();
        assert_eq!(one.points(), &[(1, 2)]);

        assert!(Mask::empty(4, 4, sp()).unwrap().boundary().is_empty());
    }

    #[test]
    fn physical_mapping_uses_pixel_centers() {
        let b = single(4, 4, 1, 2).boundary();
        let (px, py) = b.to_physical((1, 2));
        assert!((px - 0.9).abs() < 1e-12);
        assert!((py - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Spacing::new(0.0, 1.0).is_err());
        assert!(Spacing::new(1.0, -1.0).is_err());
        assert!(Mask::empty(0, 3, sp()).is_err());
        assert!(Mask::from_pixels(2, 2, vec![true; 3], sp()).is_err());
    }

    #[test]
    fn scan_requires_foreground() {
        let s = Slice {
            image: GrayImage::new(2, 2, vec![0; 4]).unwrap(),
            mask: Mask::empty(2, 2, sp()).unwrap(),
        };
        let vs = VoxelSpacing {
            x: 0.6,
            y: 0.6,
            z: 2.0,
        };
        assert!(Scan::new("a", vec![s], vs).is_err());
    }

    #[test]
    fn centroid_row_floors() {
        let m = Mask::from_fn(5, 5, sp(), |x, y| x == 2 && (y == 1 || y == 2)).unwrap();
        assert_eq!(m.centroid_row(), Some(1));
    }
}

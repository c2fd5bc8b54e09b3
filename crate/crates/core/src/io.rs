//! On-disk cohort format: one directory per scan holding `image_###.pgm`,
//! `mask_###.pgm` and `meta.json`, plus a top-level `cohort.json`.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{GrayImage, Mask, Scan, Slice, VoxelSpacing};
use crate::sim::StyledCohort;

pub const COHORT_FILE: &str = "cohort.json";
const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScanMeta {
    id: String,
    spacing: VoxelSpacing,
    slices: usize,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn write_pgm(path: &Path, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut buf = Vec::new();
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(data, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| format_error(path, e.to_string()))?;
    fs::write(path, buf)?;
    Ok(())
}

fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    let img = ImageReader::with_format(Cursor::new(bytes), image::ImageFormat::Pnm)
        .decode()
        .map_err(|e| format_error(path, e.to_string()))?
        .into_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(w as usize, h as usize, img.into_raw())
}

fn slice_path(dir: &Path, kind: &str, index: usize) -> PathBuf {
    dir.join(format!("{kind}_{index:03}.pgm"))
}

/// Writes one scan into `dir`, creating it if needed.
pub fn write_scan(dir: &Path, scan: &Scan) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (w, h) = scan.dims();
    for (i, s) in scan.slices().iter().enumerate() {
        write_pgm(&slice_path(dir, "image", i), w, h, s.image.data())?;
        let mask: Vec<u8> = s
            .mask
            .pixels()
            .iter()
            .map(|&p| if p { 255 } else { 0 })
            .collect();
        write_pgm(&slice_path(dir, "mask", i), w, h, &mask)?;
    }
    let meta = ScanMeta {
        id: scan.id().to_string(),
        spacing: scan.spacing(),
        slices: scan.slices().len(),
    };
    fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads a scan written by [`write_scan`]. Mask pixels are foreground when
/// nonzero.
pub fn read_scan(dir: &Path) -> Result<Scan> {
    let meta_path = dir.join(META_FILE);
    let meta: ScanMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| format_error(&meta_path, e.to_string()))?;
    let spacing = meta.spacing.in_plane()?;
    let mut slices = Vec::with_capacity(meta.slices);
    for i in 0..meta.slices {
        let image = read_pgm(&slice_path(dir, "image", i))?;
        let raw = read_pgm(&slice_path(dir, "mask", i))?;
        let pixels = raw.data().iter().map(|&v| v != 0).collect();
        let mask = Mask::from_pixels(raw.width(), raw.height(), pixels, spacing)?;
        slices.push(Slice { image, mask });
    }
    Scan::new(meta.id, slices, meta.spacing)
}

/// Writes every scan under `dir/<scan id>/` and the cohort description to
/// `dir/cohort.json`.
pub fn write_cohort(dir: &Path, cohort: &StyledCohort) -> Result<()> {
    fs::create_dir_all(dir)?;
    for scan in &cohort.scans {
        write_scan(&dir.join(scan.id()), scan)?;
    }
    fs::write(dir.join(COHORT_FILE), serde_json::to_string_pretty(cohort)?)?;
    Ok(())
}

pub fn read_cohort(dir: &Path) -> Result<StyledCohort> {
    let path = dir.join(COHORT_FILE);
    let mut cohort: StyledCohort = serde_json::from_str(&fs::read_to_string(&path)?)
        .map_err(|e| format_error(&path, e.to_string()))?;
    let mut ids: Vec<&String> = cohort
        .pretrain_ids
        .iter()
        .chain(&cohort.optimize_ids)
        .collect();
    ids.sort();
    let mut scans = Vec::with_capacity(ids.len());
    for id in ids {
        let scan = read_scan(&dir.join(id))?;
        if scan.id() != id {
            return Err(format_error(
                &dir.join(id),
                format!("holds scan `{}`", scan.id()),
            ));
        }
        scans.push(scan);
    }
    cohort.scans = scans;
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_experiment_cohort, Layout, PhantomConfig, StyleSpec};

    fn small() -> StyledCohort {
        let phantom = PhantomConfig {
            width: 64,
            height: 72,
            slices_per_scan: 3,
            ..PhantomConfig::default()
        };
        let specs = StyleSpec::parse_list("erosion:3:1,dilation:3:1").unwrap();
        let layout = Layout::Custom {
            styles: 2,
            total: 6,
            pretrain: 2,
        };
        build_experiment_cohort(7, &specs, layout, &phantom).unwrap()
    }

    #[test]
    fn scan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small();
        let scan = &cohort.scans[1];
        write_scan(dir.path(), scan).unwrap();
        assert!(dir.path().join("image_000.pgm").exists());
        assert!(dir.path().join("mask_002.pgm").exists());
        assert_eq!(&read_scan(dir.path()).unwrap(), scan);
    }

    #[test]
    fn cohort_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small();
        write_cohort(dir.path(), &cohort).unwrap();
        let back = read_cohort(dir.path()).unwrap();
        assert_eq!(back.optimize_ids, cohort.optimize_ids);
        assert_eq!(back.style_labels, cohort.style_labels);
        assert_eq!(back.optimize_scans(), cohort.optimize_scans());
        assert_eq!(back.pretrain_scans(), cohort.pretrain_scans());
    }

    #[test]
    fn masks_are_stored_as_0_and_255() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small();
        write_scan(dir.path(), &cohort.scans[0]).unwrap();
        let raw = read_pgm(&dir.path().join("mask_000.pgm")).unwrap();
        assert!(raw.data().iter().all(|&v| v == 0 || v == 255));
        assert!(raw.data().contains(&255));
    }

    #[test]
    fn missing_meta_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_scan(dir.path()).is_err());
    }
}

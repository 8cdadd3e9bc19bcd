//! Small synthetic datasets that exercise the full pipeline.
//!
//! `color_blobs`: unlabeled RGB images, each dominated by one palette color
//! with per-pixel noise and a rectangular patch of a second palette color.
//! Histogram distances are small within a dominant color and large across.
//!
//! `two_class_gauss`: labeled tabular rows from two Gaussian classes whose
//! means point in orthogonal directions, so the classes stay apart after
//! amplitude normalization.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{format_csv_rows, DataFormat, Manifest};
use super::ppm::{self, RgbImage};
use crate::error::{Error, Result};

pub const PALETTE: [[u8; 3]; 4] = [[210, 40, 40], [40, 170, 60], [50, 70, 215], [225, 205, 45]];

const PIXEL_NOISE: i32 = 28;

pub fn color_blobs(n: usize, width: usize, height: usize, seed: u64) -> Result<Vec<RgbImage>> {
    if n == 0 {
        return Err(Error::Validation("requested zero images".into()));
    }
    if width < 2 || height < 2 {
        return Err(Error::Validation(format!("image size {width}x{height} too small")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let dominant = rng.gen_range(0..PALETTE.len());
            let secondary = (dominant + rng.gen_range(1..PALETTE.len())) % PALETTE.len();
            let bw = rng.gen_range(1..=width / 2);
            let bh = rng.gen_range(1..=height / 2);
            let x0 = rng.gen_range(0..=width - bw);
            let y0 = rng.gen_range(0..=height - bh);
            let mut data = Vec::with_capacity(width * height * 3);
            for y in 0..height {
                for x in 0..width {
                    let in_blob = (x0..x0 + bw).contains(&x) && (y0..y0 + bh).contains(&y);
                    let base = PALETTE[if in_blob { secondary } else { dominant }];
                    for &c in &base {
                        let v = c as i32 + rng.gen_range(-PIXEL_NOISE..=PIXEL_NOISE);
                        data.push(v.clamp(0, 255) as u8);
                    }
                }
            }
            RgbImage::new(width, height, data)
        })
        .collect()
}

/// Rows of `dim` features; labels alternate 0, 1, 0, ...
pub fn two_class_gauss(n: usize, dim: usize, seed: u64) -> Result<Vec<(Vec<f64>, u32)>> {
    if n == 0 {
        return Err(Error::Validation("requested zero samples".into()));
    }
    if dim < 2 {
        return Err(Error::Validation(format!("need at least 2 features, got {dim}")));
    }
    let half = dim / 2;
    let noise = Normal::new(0.0, 0.35).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let label = (i % 2) as u32;
            let features = (0..dim)
                .map(|j| {
                    let on = (j < half) == (label == 0);
                    let mean = if on { 2.0 } else { 0.0 };
                    mean + noise.sample(&mut rng)
                })
                .collect();
            (features, label)
        })
        .collect())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write `n` PPM images plus `manifest.json`; returns the manifest path.
pub fn write_color_blobs(
    out_dir: &Path,
    n: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<std::path::PathBuf> {
    let images = color_blobs(n, width, height, seed)?;
    create_dir(out_dir)?;
    let mut files = Vec::with_capacity(n);
    for (i, img) in images.iter().enumerate() {
        let name = format!("img_{i:05}.ppm");
        ppm::write(&out_dir.join(&name), img)?;
        files.push(name);
    }
    let manifest = Manifest {
        format: DataFormat::Ppm,
        labeled: false,
        feature_count: width * height * 3,
        width: Some(width),
        height: Some(height),
        files,
    };
    let path = out_dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

/// Write a labeled `data.csv` plus `manifest.json`; returns the manifest path.
pub fn write_two_class_gauss(out_dir: &Path, n: usize, dim: usize, seed: u64) -> Result<std::path::PathBuf> {
    let rows = two_class_gauss(n, dim, seed)?;
    create_dir(out_dir)?;
    let csv_path = out_dir.join("data.csv");
    let csv = format_csv_rows(rows.iter().map(|(f, l)| (f.as_slice(), Some(*l))));
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let manifest = Manifest {
        format: DataFormat::Csv,
        labeled: true,
        feature_count: dim,
        width: None,
        height: None,
        files: vec!["data.csv".into()],
    };
    let path = out_dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::load_dataset;

    #[test]
    fn blobs_are_deterministic_and_loadable() {
        let a = color_blobs(5, 8, 8, 3).unwrap();
        assert_eq!(a, color_blobs(5, 8, 8, 3).unwrap());
        assert_ne!(a, color_blobs(5, 8, 8, 4).unwrap());
        assert!(color_blobs(0, 8, 8, 3).is_err());

        let dir = tempfile::tempdir().unwrap();
        let m = write_color_blobs(dir.path(), 6, 8, 8, 1).unwrap();
        let ds = load_dataset(&m).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.feature_len(), 192);
    }

    #[test]
    fn gauss_rows() {
        let rows = two_class_gauss(10, 8, 2).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.iter().filter(|r| r.1 == 1).count(), 5);
        let dir = tempfile::tempdir().unwrap();
        let m = write_two_class_gauss(dir.path(), 10, 8, 2).unwrap();
        let ds = load_dataset(&m).unwrap();
        assert!(ds.is_labeled());
        assert_eq!(ds.get(3).unwrap().features, rows[3].0);
        assert!(two_class_gauss(0, 8, 2).is_err());
    }
}

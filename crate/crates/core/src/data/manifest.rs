//! Dataset manifests.
//!
//! A manifest is a JSON file listing data files relative to its own
//! directory:
//!
//! ```json
//! {"format": "ppm", "labeled": false, "feature_count": 192,
//!  "width": 8, "height": 8, "files": ["img_0000.ppm", "..."]}
//! ```
//!
//! PPM manifests hold one image per file, sample ids follow file order.
//! CSV manifests point at headerless tables with one sample per row; when
//! `labeled` is set the final column is an integer class label. Ids count
//! rows across all listed files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ppm, Dataset, FeatureKind, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Ppm,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: DataFormat,
    pub labeled: bool,
    pub feature_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Load every sample a manifest lists.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |f: &str| -> PathBuf { base.join(f) };
    if manifest.files.is_empty() {
        return Err(Error::format(manifest_path, "manifest lists no files"));
    }
    match manifest.format {
        DataFormat::Ppm => {
            if manifest.labeled {
                return Err(Error::format(manifest_path, "PPM manifests cannot be labeled"));
            }
            let mut samples = Vec::with_capacity(manifest.files.len());
            let mut dims = None;
            for (id, file) in manifest.files.iter().enumerate() {
                let path = resolve(file);
                let img = ppm::read(&path)?;
                match dims {
                    None => dims = Some((img.width, img.height)),
                    Some(d) if d != (img.width, img.height) => {
                        return Err(Error::format(
                            &path,
                            format!("image is {}x{}, expected {}x{}", img.width, img.height, d.0, d.1),
                        ))
                    }
                    Some(_) => {}
                }
                samples.push(Sample { id, features: img.features(), label: None });
            }
            let (width, height) = dims.expect("at least one file");
            check_declared(&manifest, manifest_path, width * height * 3)?;
            if manifest.width.is_some_and(|w| w != width) || manifest.height.is_some_and(|h| h != height) {
                return Err(Error::format(manifest_path, "declared image size does not match files"));
            }
            Dataset::new(samples, FeatureKind::Image { width, height })
        }
        DataFormat::Csv => {
            let mut samples = Vec::new();
            for file in &manifest.files {
                let path = resolve(file);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                for (line_no, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let sample = parse_row(line, samples.len(), manifest.labeled)
                        .map_err(|m| Error::format(&path, format!("line {}: {m}", line_no + 1)))?;
                    if sample.features.len() != manifest.feature_count {
                        return Err(Error::format(
                            &path,
                            format!(
                                "line {}: {} features, manifest declares {}",
                                line_no + 1,
                                sample.features.len(),
                                manifest.feature_count
                            ),
                        ));
                    }
                    samples.push(sample);
                }
            }
            Dataset::new(samples, FeatureKind::Tabular)
        }
    }
}

fn check_declared(manifest: &Manifest, path: &Path, actual: usize) -> Result<()> {
    if manifest.feature_count != actual {
        return Err(Error::format(
            path,
            format!("manifest declares {} features, files have {actual}", manifest.feature_count),
        ));
    }
    Ok(())
}

fn parse_row(line: &str, id: usize, labeled: bool) -> std::result::Result<Sample, String> {
    let mut fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let label = if labeled {
        let raw = fields.pop().ok_or("empty row")?;
        Some(raw.parse::<u32>().map_err(|_| format!("label {raw:?} is not a nonnegative integer"))?)
    } else {
        None
    };
    let features = fields
        .iter()
        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("{f:?} is not a finite number")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if features.is_empty() {
        return Err("row has no features".into());
    }
    Ok(Sample { id, features, label })
}

/// Render labeled or unlabeled rows in full precision.
pub fn format_csv_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64], Option<u32>)>) -> String {
    let mut out = String::new();
    for (features, label) in rows {
        let mut fields: Vec<String> = features.iter().map(|v| v.to_string()).collect();
        if let Some(l) = label {
            fields.push(l.to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(Vec<f64>, Option<u32>)> =
            vec![(vec![0.1, -2.5, 1e-17], Some(0)), (vec![3.0, 0.3333333333333333, 7.0], Some(1))];
        let csv = format_csv_rows(rows.iter().map(|(f, l)| (f.as_slice(), *l)));
        fs::write(dir.path().join("data.csv"), csv).unwrap();
        let manifest = Manifest {
            format: DataFormat::Csv,
            labeled: true,
            feature_count: 3,
            width: None,
            height: None,
            files: vec!["data.csv".into()],
        };
        let mpath = dir.path().join("manifest.json");
        manifest.write(&mpath).unwrap();
        assert_eq!(Manifest::read(&mpath).unwrap(), manifest);
        let ds = load_dataset(&mpath).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(1).unwrap().features, rows[1].0);
        assert_eq!(ds.get(1).unwrap().label, Some(1));
    }

    #[test]
    fn csv_errors() {
        assert!(parse_row("1,2,x", 0, true).is_err());
        assert!(parse_row("1,2,nan", 0, false).is_err());
        assert!(parse_row("5", 0, true).is_err());
        assert_eq!(parse_row("1, 2", 3, false).unwrap().features, vec![1.0, 2.0]);
    }

    #[test]
    fn missing_manifest_names_path() {
        let err = load_dataset(Path::new("/nonexistent/manifest.json")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/manifest.json"));
    }

    #[test]
    fn ppm_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let img = ppm::RgbImage::new(1, 2, vec![0, 50, 100, 150, 200, 250]).unwrap();
        ppm::write(&dir.path().join("a.ppm"), &img).unwrap();
        ppm::write(&dir.path().join("b.ppm"), &img).unwrap();
        let mut manifest = Manifest {
            format: DataFormat::Ppm,
            labeled: false,
            feature_count: 6,
            width: Some(1),
            height: Some(2),
            files: vec!["a.ppm".into(), "b.ppm".into()],
        };
        let mpath = dir.path().join("m.json");
        manifest.write(&mpath).unwrap();
        let ds = load_dataset(&mpath).unwrap();
        assert_eq!(ds.kind(), FeatureKind::Image { width: 1, height: 2 });
        assert_eq!(ds.get(1).unwrap().features[5], 250.0);

        manifest.feature_count = 5;
        manifest.write(&mpath).unwrap();
        assert!(load_dataset(&mpath).is_err());
    }
}

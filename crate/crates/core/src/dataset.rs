//! Dataset manifests: which images exist, where their ground truths live,
//! and which split they belong to.
//!
//! The on-disk form is a CSV with columns `id,image,gt,split`
//! (`split` is `camo` or `non_camo`). A convenience loader discovers the
//! conventional camouflage-dataset layout (`Images/<subset>/` plus `GT/`),
//! classifying entries by the `camourflage_` filename prefix the dataset
//! uses.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Camo,
    NonCamo,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitTag::Camo => write!(f, "camo"),
            SplitTag::NonCamo => write!(f, "non_camo"),
        }
    }
}

impl std::str::FromStr for SplitTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "camo" => Ok(SplitTag::Camo),
            "non_camo" => Ok(SplitTag::NonCamo),
            other => Err(Error::InvalidInput(format!("unknown split tag: {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub gt_path: PathBuf,
    pub split: SplitTag,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Loads and validates a manifest CSV: unique ids, existing files.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })?;
            if row.len() != 4 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    message: format!("expected 4 columns, got {}", row.len()),
                });
            }
            let id = row[0].to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidInput(format!("duplicate manifest id: {id}")));
            }
            let entry = ManifestEntry {
                id,
                image_path: PathBuf::from(&row[1]),
                gt_path: PathBuf::from(&row[2]),
                split: row[3].parse()?,
            };
            for p in [&entry.image_path, &entry.gt_path] {
                if !p.exists() {
                    return Err(Error::InvalidInput(format!(
                        "manifest references missing file: {}",
                        p.display()
                    )));
                }
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let err = |e: csv::Error| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        };
        w.write_record(["id", "image", "gt", "split"])
            .map_err(err)?;
        for e in &self.entries {
            w.write_record([
                e.id.clone(),
                e.image_path.display().to_string(),
                e.gt_path.display().to_string(),
                e.split.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Pairs images and masks from two flat directories by file stem.
    /// Stems starting with `camourflage` (the camouflage dataset's spelling)
    /// are tagged camo, everything else non-camo.
    pub fn from_dirs(images: &Path, masks: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (stem, image_path) in list_images(images)? {
            if !seen.insert(stem.clone()) {
                continue; // same stem under another extension
            }
            let gt_path = masks.join(format!("{stem}.png"));
            if !gt_path.exists() {
                return Err(Error::MissingGroundTruth(stem));
            }
            entries.push(ManifestEntry {
                split: split_from_stem(&stem),
                id: stem,
                image_path,
                gt_path,
            });
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { entries })
    }

    /// Discovers the conventional layout under `root`: image files anywhere
    /// below `root/Images`, ground truths below `root/GT`, paired by stem.
    pub fn discover_camo(root: &Path) -> Result<Self> {
        let images_root = root.join("Images");
        let gt_root = root.join("GT");
        if !images_root.is_dir() || !gt_root.is_dir() {
            return Err(Error::InvalidInput(format!(
                "{} does not contain Images/ and GT/ directories",
                root.display()
            )));
        }
        let mut gts = std::collections::BTreeMap::new();
        collect_files(&gt_root, &mut |stem, path| {
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                gts.entry(stem.to_string())
                    .or_insert_with(|| path.to_path_buf());
            }
        })?;
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        collect_files(&images_root, &mut |stem, path| {
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            if !matches!(ext, "png" | "jpg" | "jpeg") {
                return;
            }
            if let Some(gt_path) = gts.get(stem) {
                if seen.insert(stem.to_string()) {
                    entries.push(ManifestEntry {
                        id: stem.to_string(),
                        image_path: path.to_path_buf(),
                        gt_path: gt_path.clone(),
                        split: split_from_stem(stem),
                    });
                }
            }
        })?;
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Self { entries })
    }

    pub fn split_entries(&self, split: SplitTag) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

fn split_from_stem(stem: &str) -> SplitTag {
    if stem.starts_with("camourflage") || stem.starts_with("camouflage") {
        SplitTag::Camo
    } else {
        SplitTag::NonCamo
    }
}

fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })? {
        let entry = entry.map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if matches!(ext, "png" | "jpg" | "jpeg") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn collect_files(dir: &Path, f: &mut impl FnMut(&str, &Path)) -> Result<()> {
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut children: Vec<PathBuf> = std::fs::read_dir(&d)
            .map_err(|e| Error::Io {
                path: d.display().to_string(),
                source: e,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        children.sort();
        for child in children {
            if child.is_dir() {
                stack.push(child);
            } else if let Some(stem) = child.file_stem().and_then(|s| s.to_str()) {
                f(stem, &child);
            }
        }
    }
    Ok(())
}

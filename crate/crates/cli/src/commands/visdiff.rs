//! `visdiff`: per-image foreground/background visual differences in one
//! feature space, written as CSV with a trailing mean row.

use std::path::{Path, PathBuf};

use camomap::dataset::DatasetManifest;
use camomap::visdiff::{entry_distances, SpaceSpec};
use camomap::{Error, Result};

use crate::config::RunConfig;

pub fn parse_space(s: &str, cfg: &RunConfig) -> Result<SpaceSpec> {
    match s {
        "rgb" => Ok(SpaceSpec::Rgb),
        "lab" => Ok(SpaceSpec::Lab),
        "texton" => Ok(SpaceSpec::Texton(cfg.texton_params())),
        other => {
            if let Some(path) = other.strip_prefix("features:") {
                Ok(SpaceSpec::Features(PathBuf::from(path)))
            } else {
                Err(Error::InvalidInput(format!(
                    "space must be rgb, lab, texton, or features:PATH, got '{other}'"
                )))
            }
        }
    }
}

pub fn parse_flip(s: &str) -> Result<bool> {
    match s {
        "none" => Ok(false),
        "horizontal" => Ok(true),
        other => Err(Error::InvalidInput(format!(
            "flip must be 'none' or 'horizontal', got '{other}'"
        ))),
    }
}

pub fn run(
    images: &Path,
    masks: &Path,
    space: &str,
    flip: &str,
    out: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    let space = parse_space(space, cfg)?;
    let flip = parse_flip(flip)?;
    let manifest = DatasetManifest::from_dirs(images, masks)?;
    let entries: Vec<_> = manifest.entries.iter().collect();
    let distances = entry_distances(&entries, &space, flip)?;

    let mut w = csv::Writer::from_path(out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    let werr = |e: csv::Error| Error::Io {
        path: out.display().to_string(),
        source: std::io::Error::other(e),
    };
    w.write_record(["image_id", "distance"]).map_err(werr)?;
    let mut used = Vec::new();
    let mut skipped = 0usize;
    for (id, d) in &distances {
        match d {
            Some(d) => {
                w.write_record([id.clone(), format!("{d:.6}")])
                    .map_err(werr)?;
                used.push(*d);
            }
            None => skipped += 1,
        }
    }
    let mean = if used.is_empty() {
        0.0
    } else {
        used.iter().sum::<f64>() / used.len() as f64
    };
    w.write_record(["mean".to_string(), format!("{mean:.6}")])
        .map_err(werr)?;
    w.flush().map_err(|e| Error::Io {
        path: out.display().to_string(),
        source: e,
    })?;
    println!(
        "{} images, mean distance {mean:.4} ({skipped} skipped for constant ground truth)",
        used.len()
    );
    Ok(())
}

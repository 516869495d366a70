//! `eval`: score a directory of predicted maps against ground truths.

use std::path::Path;

use camomap::metrics::{evaluate_dataset_with, DatasetSplit, ThresholdRule};
use camomap::{Error, Result};

use crate::config::RunConfig;

pub fn parse_threshold(s: &str) -> Result<ThresholdRule> {
    if s == "adaptive" {
        return Ok(ThresholdRule::adaptive());
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        let value: f64 = v
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad fixed threshold: {v}")))?;
        return ThresholdRule::fixed(value);
    }
    if s == "fixed" {
        return ThresholdRule::fixed(0.5);
    }
    Err(Error::InvalidInput(format!(
        "threshold must be 'adaptive' or 'fixed:<value>', got '{s}'"
    )))
}

pub fn parse_split(s: &str) -> Result<DatasetSplit> {
    match s {
        "camo" => Ok(DatasetSplit::CamoOnly),
        "full" => Ok(DatasetSplit::Full),
        other => Err(Error::InvalidInput(format!(
            "split must be 'camo' or 'full', got '{other}'"
        ))),
    }
}

pub fn run(
    pred_dir: &Path,
    gt_dir: &Path,
    threshold: &str,
    split: &str,
    out: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    let rule = parse_threshold(threshold)?;
    let split = parse_split(split)?;
    let report = evaluate_dataset_with(pred_dir, gt_dir, &rule, split, cfg.metrics.beta_sq)?;
    report.write_csv(out)?;
    match &report.aggregate {
        Some(a) => println!(
            "{} images ({split}): MAE {:.4}  F\u{03b2} {:.4}  IOU {:.4}  E {:.4}  S {:.4}  wF {:.4}",
            report.rows.len(),
            a.mae,
            a.f_beta,
            a.iou,
            a.e_phi,
            a.s_alpha,
            a.weighted_f
        ),
        None => println!("no predictions found in {}", pred_dir.display()),
    }
    Ok(())
}

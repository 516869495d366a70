//! Foreground/background visual-difference analysis.
//!
//! For a feature space, the mean feature vector of the object region and of
//! the background region (both taken from the ground-truth mask) are each
//! l2-normalized; the visual difference is their Euclidean distance, in
//! `[0, 2]`.
//!
//! Pointwise color spaces (RGB identity and Ruderman-style lαβ) and the
//! texton space are computed natively; deep-feature spaces are served by
//! ingesting precomputed per-pixel confidence maps (see
//! [`crate::io::load_feature_bin`]).
//!
//! Region sums are accumulated in sorted value order, so the distance for a
//! horizontally flipped image/mask pair is bit-identical to the original:
//! the mechanism behind identical camo and camo-flipped columns for color
//! spaces.

mod texton;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use texton::{texton_features, TextonParams};

use crate::dataset::{DatasetManifest, ManifestEntry, SplitTag};
use crate::error::{Error, Result};
use crate::io;
use crate::map::{BinaryMask, FeatureMap, RgbImage};

/// Feature space a descriptor pair was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Rgb,
    LabRuderman,
    Texton,
    IngestedFeatures,
}

/// l2-normalized mean descriptors of the object and background regions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDescriptorPair {
    pub s_fg: Vec<f64>,
    pub s_bg: Vec<f64>,
    pub space: Space,
}

/// Sum in a value-sorted order: permutation-invariant, so flipped inputs
/// produce bit-identical sums.
fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Per-channel region means over foreground and background, each
/// l2-normalized.
pub fn region_means(
    features: &FeatureMap,
    gt: &BinaryMask,
    space: Space,
) -> Result<RegionDescriptorPair> {
    if features.width() != gt.width() || features.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "features {}x{} vs mask {}x{}",
            features.width(),
            features.height(),
            gt.width(),
            gt.height()
        )));
    }
    let n_fg = gt.count_ones();
    let n_bg = gt.values().len() - n_fg;
    if n_fg == 0 || n_bg == 0 {
        return Err(Error::DegenerateRegion(format!(
            "mask has {n_fg} foreground and {n_bg} background pixels"
        )));
    }

    let mut s_fg = Vec::with_capacity(features.channels());
    let mut s_bg = Vec::with_capacity(features.channels());
    for c in 0..features.channels() {
        let mut fg = Vec::with_capacity(n_fg);
        let mut bg = Vec::with_capacity(n_bg);
        for y in 0..features.height() {
            for x in 0..features.width() {
                let v = features.get(c, x, y);
                if gt.get(x, y) == 1 {
                    fg.push(v);
                } else {
                    bg.push(v);
                }
            }
        }
        s_fg.push(sorted_sum(fg) / n_fg as f64);
        s_bg.push(sorted_sum(bg) / n_bg as f64);
    }
    normalize(&mut s_fg)?;
    normalize(&mut s_bg)?;
    Ok(RegionDescriptorPair { s_fg, s_bg, space })
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroDescriptor);
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    Ok(())
}

/// Euclidean distance between the normalized descriptors; in `[0, 2]`.
pub fn visual_difference(p: &RegionDescriptorPair) -> f64 {
    p.s_fg
        .iter()
        .zip(&p.s_bg)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Identity 3-channel feature map.
pub fn rgb_features(img: &RgbImage) -> FeatureMap {
    FeatureMap::from_fn(3, img.width(), img.height(), |c, x, y| img.pixel(x, y)[c])
        .expect("image values are finite")
}

/// Floor applied before the logarithm in the lαβ conversion.
pub const LAB_LOG_FLOOR: f64 = 1e-6;

// RGB -> LMS rows, each normalized to unit sum so achromatic inputs map to
// identical cone responses (and therefore to exactly zero chroma).
const RGB2LMS_RAW: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

fn rgb_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let mut lms = [0.0; 3];
    for (i, row) in RGB2LMS_RAW.iter().enumerate() {
        let sum = row[0] + row[1] + row[2];
        lms[i] = (row[0] * r + row[1] * g + row[2] * b) / sum;
    }
    let lg = |v: f64| v.max(LAB_LOG_FLOOR).log10();
    let (l, m, s) = (lg(lms[0]), lg(lms[1]), lg(lms[2]));
    [
        (l + m + s) / 3.0f64.sqrt(),
        (l + m - 2.0 * s) / 6.0f64.sqrt(),
        (l - m) / 2.0f64.sqrt(),
    ]
}

/// Decorrelated logarithmic color space: RGB -> LMS -> log10 -> lαβ.
pub fn lab_features(img: &RgbImage) -> FeatureMap {
    FeatureMap::from_fn(3, img.width(), img.height(), |c, x, y| {
        let [r, g, b] = img.pixel(x, y);
        rgb_to_lab(r, g, b)[c]
    })
    .expect("lab values are finite")
}

/// Which feature extractor a report row uses.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceSpec {
    Rgb,
    Lab,
    Texton(TextonParams),
    /// Directory of per-image `<id>.bin` raw feature files.
    Features(PathBuf),
}

impl SpaceSpec {
    pub fn method_name(&self) -> String {
        match self {
            SpaceSpec::Rgb => "rgb".into(),
            SpaceSpec::Lab => "lab".into(),
            SpaceSpec::Texton(_) => "texton".into(),
            SpaceSpec::Features(p) => format!("features:{}", p.display()),
        }
    }
}

/// Dataset split a distance row summarizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableSplit {
    NonCamo,
    Camo,
    CamoFlipped,
}

impl std::fmt::Display for TableSplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TableSplit::NonCamo => write!(f, "non_camo"),
            TableSplit::Camo => write!(f, "camo"),
            TableSplit::CamoFlipped => write!(f, "camo_flipped"),
        }
    }
}

/// One aggregated method/split cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub method: String,
    pub split: TableSplit,
    pub mean_distance: f64,
    pub image_count: usize,
}

/// Distance for one already-loaded pair in the requested space.
pub fn image_distance(
    img: &RgbImage,
    gt: &BinaryMask,
    space: &SpaceSpec,
    features: Option<&FeatureMap>,
) -> Result<f64> {
    let (features, space_tag) = match space {
        SpaceSpec::Rgb => (rgb_features(img), Space::Rgb),
        SpaceSpec::Lab => (lab_features(img), Space::LabRuderman),
        SpaceSpec::Texton(params) => (texton_features(img, params)?, Space::Texton),
        SpaceSpec::Features(_) => {
            let f = features.ok_or_else(|| {
                Error::InvalidInput("ingested space requires a loaded feature map".into())
            })?;
            (f.clone(), Space::IngestedFeatures)
        }
    };
    let pair = region_means(&features, gt, space_tag)?;
    Ok(visual_difference(&pair))
}

/// Per-image distances for manifest entries. Entries whose ground truth has
/// no foreground or no background are skipped (returned as `None`).
pub fn entry_distances(
    entries: &[&ManifestEntry],
    space: &SpaceSpec,
    flip: bool,
) -> Result<Vec<(String, Option<f64>)>> {
    entries
        .par_iter()
        .map(|e| {
            let mut img = io::load_rgb_image(&e.image_path)?;
            let mut gt = io::load_binary_mask_png(&e.gt_path)?;
            if flip {
                img = img.flip_horizontal();
                gt = gt.flip_horizontal();
            }
            if gt.is_all_zero() || gt.is_all_one() {
                return Ok((e.id.clone(), None));
            }
            let features = match space {
                SpaceSpec::Features(dir) => {
                    let mut f = io::load_feature_bin(&dir.join(format!("{}.bin", e.id)))?;
                    if flip {
                        f = f.flip_horizontal();
                    }
                    Some(f)
                }
                _ => None,
            };
            let d = image_distance(&img, &gt, space, features.as_ref())?;
            Ok((e.id.clone(), Some(d)))
        })
        .collect()
}

/// Mean visual difference per space per split.
///
/// The flipped split flips image, mask, and any ingested features before
/// descriptor extraction.
pub fn table1_report(
    manifest: &DatasetManifest,
    spaces: &[SpaceSpec],
    splits: &[TableSplit],
) -> Result<Vec<DistanceRow>> {
    let mut rows = Vec::new();
    for space in spaces {
        for &split in splits {
            let tag = match split {
                TableSplit::NonCamo => SplitTag::NonCamo,
                _ => SplitTag::Camo,
            };
            let flip = split == TableSplit::CamoFlipped;
            let mut entries: Vec<&ManifestEntry> =
                manifest.entries.iter().filter(|e| e.split == tag).collect();
            if entries.is_empty() {
                continue;
            }
            entries.sort_by(|a, b| a.id.cmp(&b.id));
            let distances = entry_distances(&entries, space, flip)?;
            let used: Vec<f64> = distances.iter().filter_map(|(_, d)| *d).collect();
            let mean = if used.is_empty() {
                0.0
            } else {
                used.iter().sum::<f64>() / used.len() as f64
            };
            rows.push(DistanceRow {
                method: space.method_name(),
                split,
                mean_distance: mean,
                image_count: used.len(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker_mask(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| (x / 2 + y / 2) % 2 == 0)
    }

    #[test]
    fn constant_features_give_zero_difference() {
        let f = FeatureMap::new(3, 4, 4, vec![0.5; 48]).unwrap();
        let gt = checker_mask(4, 4);
        let p = region_means(&f, &gt, Space::Rgb).unwrap();
        assert_eq!(visual_difference(&p), 0.0);
        assert_eq!(p.s_fg, p.s_bg);
    }

    #[test]
    fn orthogonal_regions_give_sqrt_two() {
        // Foreground is exactly channel 0; background exactly channel 1.
        let gt = BinaryMask::from_fn(4, 2, |x, _| x < 2);
        let f = FeatureMap::from_fn(2, 4, 2, |c, x, _| {
            let fg = x < 2;
            match (c, fg) {
                (0, true) | (1, false) => 1.0,
                _ => 0.0,
            }
        })
        .unwrap();
        let p = region_means(&f, &gt, Space::IngestedFeatures).unwrap();
        assert_eq!(p.s_fg, vec![1.0, 0.0]);
        assert_eq!(p.s_bg, vec![0.0, 1.0]);
        assert!((visual_difference(&p) - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn antipodal_pair_hits_maximum() {
        let p = RegionDescriptorPair {
            s_fg: vec![1.0, 0.0],
            s_bg: vec![-1.0, 0.0],
            space: Space::IngestedFeatures,
        };
        assert_eq!(visual_difference(&p), 2.0);
    }

    #[test]
    fn degenerate_region_is_error() {
        let f = FeatureMap::new(1, 2, 2, vec![1.0; 4]).unwrap();
        let empty = BinaryMask::zeros(2, 2);
        assert!(matches!(
            region_means(&f, &empty, Space::Rgb),
            Err(Error::DegenerateRegion(_))
        ));
    }

    #[test]
    fn zero_descriptor_is_flagged() {
        let f = FeatureMap::zeros(2, 2, 2);
        let gt = BinaryMask::from_fn(2, 2, |x, _| x == 0);
        assert!(matches!(
            region_means(&f, &gt, Space::Rgb),
            Err(Error::ZeroDescriptor)
        ));
    }

    #[test]
    fn rgb_features_are_identity() {
        let img = RgbImage::from_fn(3, 2, |x, y| {
            [x as f64 / 3.0, y as f64 / 2.0, (x + y) as f64 / 5.0]
        })
        .unwrap();
        let f = rgb_features(&img);
        for y in 0..2 {
            for x in 0..3 {
                for (c, want) in img.pixel(x, y).into_iter().enumerate() {
                    assert_eq!(f.get(c, x, y), want);
                }
            }
        }
        // Flip commutes with the identity extractor.
        let a = rgb_features(&img.flip_horizontal());
        let b = rgb_features(&img).flip_horizontal();
        assert_eq!(a, b);
    }

    #[test]
    fn gray_pixels_have_zero_chroma() {
        for &v in &[0.5, 0.125, 0.9] {
            let [_, alpha, beta] = rgb_to_lab(v, v, v);
            assert!(alpha.abs() < 1e-9, "alpha = {alpha}");
            assert!(beta.abs() < 1e-9, "beta = {beta}");
        }
    }

    #[test]
    fn black_pixel_is_floored_and_finite() {
        let lab = rgb_to_lab(0.0, 0.0, 0.0);
        assert!(lab.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn equal_pixels_map_to_equal_lab() {
        let a = rgb_to_lab(0.3, 0.6, 0.1);
        let b = rgb_to_lab(0.3, 0.6, 0.1);
        assert_eq!(a, b);
    }

    #[test]
    fn color_distance_is_flip_invariant_bit_exact() {
        // Deterministic "random" content.
        let img = RgbImage::from_fn(17, 11, |x, y| {
            let h = |k: usize| ((x * 31 + y * 57 + k * 97) % 251) as f64 / 250.0;
            [h(0), h(1), h(2)]
        })
        .unwrap();
        let gt = BinaryMask::from_fn(17, 11, |x, y| (x * 7 + y * 5) % 13 < 4);
        for space in [SpaceSpec::Rgb, SpaceSpec::Lab] {
            let d = image_distance(&img, &gt, &space, None).unwrap();
            let df = image_distance(&img.flip_horizontal(), &gt.flip_horizontal(), &space, None)
                .unwrap();
            assert_eq!(d, df, "space {space:?}");
        }
    }

    #[test]
    fn region_means_invariant_to_pixel_permutation() {
        // Same multiset of fg/bg values arranged differently.
        let f1 = FeatureMap::new(1, 4, 1, vec![0.1, 0.9, 0.2, 0.8]).unwrap();
        let gt1 = BinaryMask::new(4, 1, vec![1, 1, 0, 0]).unwrap();
        let f2 = FeatureMap::new(1, 4, 1, vec![0.9, 0.1, 0.8, 0.2]).unwrap();
        let gt2 = BinaryMask::new(4, 1, vec![1, 1, 0, 0]).unwrap();
        let p1 = region_means(&f1, &gt1, Space::Rgb).unwrap();
        let p2 = region_means(&f2, &gt2, Space::Rgb).unwrap();
        assert_eq!(p1.s_fg, p2.s_fg);
        assert_eq!(p1.s_bg, p2.s_bg);
    }
}

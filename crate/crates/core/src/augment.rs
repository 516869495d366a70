//! Copy-paste instance augmentation.
//!
//! Training pairs are admitted when their ground truth has at most a small
//! number of connected components (8-connectivity). The (largest) component
//! is cut out with a tight box, the mean color of a background ring around
//! the box is recorded, and clones of the instance, optionally flipped, are
//! pasted onto background regions whose mean color is close enough to the
//! original surround. A paste never touches existing foreground; candidates
//! are rejected even for 8-adjacency, so each successful paste adds exactly
//! one component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::map::{BinaryMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Images with more connected components than this are excluded.
    pub max_components: usize,
    /// Maximum mean per-channel RGB distance between the source surround and
    /// a paste target.
    pub color_tolerance: f64,
    /// Width in pixels of the background ring sampled around the instance.
    pub surround_margin: usize,
    /// Cap on placements returned per instance.
    pub placements_per_instance: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_components: 2,
            color_tolerance: 0.05,
            surround_margin: 8,
            placements_per_instance: 4,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.color_tolerance < 0.0 {
            return Err(Error::OutOfRange("color_tolerance must be >= 0".into()));
        }
        if self.surround_margin < 1 {
            return Err(Error::OutOfRange("surround_margin must be >= 1".into()));
        }
        Ok(())
    }
}

/// How a cut instance is written back into the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PasteMode {
    /// Paste the horizontally mirrored instance.
    Flip,
    /// Paste as-is without the surround color test.
    Translate,
    /// Paste as-is onto a color-matched background region.
    Clone,
}

/// An instance cut out of a training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCut {
    pub patch: RgbImage,
    pub alpha: BinaryMask,
    pub source_box: BoundingBox,
    pub surround_mean_color: [f64; 3],
}

/// Labels 8-connected foreground components; returns per-pixel labels
/// (0 = background) and the component count.
pub fn label_components(gt: &BinaryMask) -> (Vec<u32>, usize) {
    let (w, h) = (gt.width(), gt.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            if gt.get(start_x, start_y) == 0 || labels[start_y * w + start_x] != 0 {
                continue;
            }
            next += 1;
            labels[start_y * w + start_x] = next;
            stack.push((start_x, start_y));
            while let Some((x, y)) = stack.pop() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if gt.get(nx, ny) == 1 && labels[ny * w + nx] == 0 {
                            labels[ny * w + nx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Number of 8-connected foreground components.
pub fn count_components(gt: &BinaryMask) -> usize {
    label_components(gt).1
}

/// True iff the pair qualifies for augmentation: at least one and at most
/// `max_components` components.
pub fn admit_for_augmentation(gt: &BinaryMask, cfg: &AugmentConfig) -> bool {
    let n = count_components(gt);
    n >= 1 && n <= cfg.max_components
}

/// Cuts the largest component: tight box, cropped patch and alpha, and the
/// mean image color over the background ring around the box.
pub fn extract_instance(
    img: &RgbImage,
    gt: &BinaryMask,
    cfg: &AugmentConfig,
) -> Result<InstanceCut> {
    if img.width() != gt.width() || img.height() != gt.height() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (labels, count) = label_components(gt);
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let (w, h) = (gt.width(), gt.height());
    // Largest component, ties to the first encountered in scan order.
    let mut sizes = vec![0usize; count + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let target = (1..=count)
        .max_by_key(|&l| (sizes[l], std::cmp::Reverse(l)))
        .unwrap() as u32;

    let (mut min_x, mut min_y, mut max_x, mut max_y) = (w, h, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] == target {
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
    }
    let (pw, ph) = (max_x - min_x + 1, max_y - min_y + 1);
    let patch = RgbImage::from_fn(pw, ph, |x, y| img.pixel(min_x + x, min_y + y))?;
    let alpha = BinaryMask::from_fn(pw, ph, |x, y| {
        labels[(min_y + y) * w + (min_x + x)] == target
    });

    // Ring of width `surround_margin` around the box, excluding any
    // foreground pixel.
    let m = cfg.surround_margin;
    let rx0 = min_x.saturating_sub(m);
    let ry0 = min_y.saturating_sub(m);
    let rx1 = (max_x + 1 + m).min(w);
    let ry1 = (max_y + 1 + m).min(h);
    let mut sum = [0.0; 3];
    let mut n = 0usize;
    for y in ry0..ry1 {
        for x in rx0..rx1 {
            let inside_box = (min_x..=max_x).contains(&x) && (min_y..=max_y).contains(&y);
            if inside_box || gt.get(x, y) == 1 {
                continue;
            }
            let p = img.pixel(x, y);
            for c in 0..3 {
                sum[c] += p[c];
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoSurround);
    }
    let surround_mean_color = [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64];

    Ok(InstanceCut {
        patch,
        alpha,
        source_box: BoundingBox::new(
            min_x as f64,
            min_y as f64,
            (max_x + 1) as f64,
            (max_y + 1) as f64,
        )?,
        surround_mean_color,
    })
}

/// Mean per-channel absolute RGB difference.
pub fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) / 3.0
}

fn target_anchor(
    img: &RgbImage,
    cut: &InstanceCut,
    target: &BoundingBox,
) -> Result<(usize, usize)> {
    let (pw, ph) = (cut.patch.width(), cut.patch.height());
    let tx = target.x1.round();
    let ty = target.y1.round();
    if (target.width().round() as usize) != pw || (target.height().round() as usize) != ph {
        return Err(Error::InvalidInput(format!(
            "target box {}x{} does not match patch {pw}x{ph}",
            target.width(),
            target.height()
        )));
    }
    if tx < 0.0 || ty < 0.0 || tx as usize + pw > img.width() || ty as usize + ph > img.height() {
        return Err(Error::InvalidInput("target box outside image".into()));
    }
    Ok((tx as usize, ty as usize))
}

/// True when the target box, dilated by one pixel, is clear of existing
/// foreground. Adjacency counts as occlusion so a paste cannot merge with an
/// existing component.
fn region_is_clear(gt: &BinaryMask, tx: usize, ty: usize, pw: usize, ph: usize) -> bool {
    let x0 = tx.saturating_sub(1);
    let y0 = ty.saturating_sub(1);
    let x1 = (tx + pw + 1).min(gt.width());
    let y1 = (ty + ph + 1).min(gt.height());
    for y in y0..y1 {
        for x in x0..x1 {
            if gt.get(x, y) == 1 {
                return false;
            }
        }
    }
    true
}

fn region_mean_color(img: &RgbImage, tx: usize, ty: usize, pw: usize, ph: usize) -> [f64; 3] {
    let mut sum = [0.0; 3];
    for y in ty..ty + ph {
        for x in tx..tx + pw {
            let p = img.pixel(x, y);
            for c in 0..3 {
                sum[c] += p[c];
            }
        }
    }
    let n = (pw * ph) as f64;
    [sum[0] / n, sum[1] / n, sum[2] / n]
}

/// Writes a clone of the instance into the pair at `target`.
///
/// Only pixels under the (possibly flipped) alpha change; the ground truth
/// gains the pasted alpha. Fails when the target is occupied or, in clone
/// mode, when the background color does not match the instance surround.
pub fn place_clone(
    img: &RgbImage,
    gt: &BinaryMask,
    cut: &InstanceCut,
    target: &BoundingBox,
    mode: PasteMode,
    cfg: &AugmentConfig,
) -> Result<(RgbImage, BinaryMask)> {
    let (tx, ty) = target_anchor(img, cut, target)?;
    let (pw, ph) = (cut.patch.width(), cut.patch.height());
    if !region_is_clear(gt, tx, ty, pw, ph) {
        return Err(Error::OccludesInstance);
    }
    if mode == PasteMode::Clone {
        let distance = color_distance(
            region_mean_color(img, tx, ty, pw, ph),
            cut.surround_mean_color,
        );
        if distance > cfg.color_tolerance {
            return Err(Error::NoColorMatch {
                distance,
                tolerance: cfg.color_tolerance,
            });
        }
    }

    let (patch, alpha) = if mode == PasteMode::Flip {
        (cut.patch.flip_horizontal(), cut.alpha.flip_horizontal())
    } else {
        (cut.patch.clone(), cut.alpha.clone())
    };

    let mut out_img = img.clone();
    let mut gt_values = gt.values().to_vec();
    for y in 0..ph {
        for x in 0..pw {
            if alpha.get(x, y) == 1 {
                out_img.set_pixel(tx + x, ty + y, patch.pixel(x, y));
                gt_values[(ty + y) * gt.width() + (tx + x)] = 1;
            }
        }
    }
    Ok((
        out_img,
        BinaryMask::new(gt.width(), gt.height(), gt_values)?,
    ))
}

/// Scans a coarse grid (stride: half the patch size) for paste targets that
/// are clear of foreground and within color tolerance of the surround.
/// Results are sorted by ascending color distance, scan order breaking ties,
/// and capped at `placements_per_instance`.
pub fn find_placements(
    img: &RgbImage,
    gt: &BinaryMask,
    cut: &InstanceCut,
    cfg: &AugmentConfig,
) -> Vec<BoundingBox> {
    let (pw, ph) = (cut.patch.width(), cut.patch.height());
    if pw > img.width() || ph > img.height() {
        return Vec::new();
    }
    let step_x = (pw / 2).max(1);
    let step_y = (ph / 2).max(1);
    let mut candidates: Vec<(f64, usize, BoundingBox)> = Vec::new();
    let mut index = 0usize;
    let mut ty = 0usize;
    while ty + ph <= img.height() {
        let mut tx = 0usize;
        while tx + pw <= img.width() {
            if region_is_clear(gt, tx, ty, pw, ph) {
                let distance = color_distance(
                    region_mean_color(img, tx, ty, pw, ph),
                    cut.surround_mean_color,
                );
                if distance <= cfg.color_tolerance {
                    let b =
                        BoundingBox::new(tx as f64, ty as f64, (tx + pw) as f64, (ty + ph) as f64)
                            .expect("grid box is valid");
                    candidates.push((distance, index, b));
                }
            }
            index += 1;
            tx += step_x;
        }
        ty += step_y;
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    candidates.truncate(cfg.placements_per_instance);
    candidates.into_iter().map(|(_, _, b)| b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AugmentConfig {
        AugmentConfig::default()
    }

    #[test]
    fn component_counting_examples() {
        assert_eq!(count_components(&BinaryMask::zeros(4, 4)), 0);
        let rect = BinaryMask::from_fn(6, 6, |x, y| (1..4).contains(&x) && (2..5).contains(&y));
        assert_eq!(count_components(&rect), 1);
        // Diagonal touch joins under 8-connectivity.
        let diag = BinaryMask::from_fn(4, 4, |x, y| (x, y) == (1, 1) || (x, y) == (2, 2));
        assert_eq!(count_components(&diag), 1);
        let three = BinaryMask::from_fn(9, 3, |x, y| y == 1 && (x == 0 || x == 4 || x == 8));
        assert_eq!(count_components(&three), 3);
    }

    #[test]
    fn admission_rule() {
        let three = BinaryMask::from_fn(9, 3, |x, y| y == 1 && (x == 0 || x == 4 || x == 8));
        assert!(!admit_for_augmentation(&three, &cfg()));
        let one = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        assert!(admit_for_augmentation(&one, &cfg()));
        assert!(!admit_for_augmentation(&BinaryMask::zeros(5, 5), &cfg()));
    }

    #[test]
    fn extract_single_pixel_instance() {
        let img = RgbImage::filled(8, 8, [0.5, 0.5, 0.5]).unwrap();
        let gt = BinaryMask::from_fn(8, 8, |x, y| x == 3 && y == 3);
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        assert_eq!((cut.patch.width(), cut.patch.height()), (1, 1));
        let b = cut.source_box;
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (3.0, 3.0, 4.0, 4.0));
        for c in cut.surround_mean_color {
            assert!((c - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_full_frame_has_no_surround() {
        let img = RgbImage::filled(4, 4, [0.2, 0.2, 0.2]).unwrap();
        let gt = BinaryMask::from_fn(4, 4, |_, _| true);
        assert!(matches!(
            extract_instance(&img, &gt, &cfg()),
            Err(Error::NoSurround)
        ));
    }

    #[test]
    fn extract_picks_largest_component() {
        let img = RgbImage::filled(10, 6, [0.5; 3]).unwrap();
        let gt = BinaryMask::from_fn(10, 6, |x, y| {
            (x == 0 && y == 0) || ((6..9).contains(&x) && (2..5).contains(&y))
        });
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        assert_eq!((cut.patch.width(), cut.patch.height()), (3, 3));
        assert_eq!(cut.source_box.x1, 6.0);
    }

    #[test]
    fn paste_onto_matching_background_adds_component() {
        let img = RgbImage::filled(16, 16, [0.4, 0.4, 0.4]).unwrap();
        let gt = BinaryMask::from_fn(16, 16, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let target = BoundingBox::new(10.0, 10.0, 13.0, 13.0).unwrap();
        let (out_img, out_gt) =
            place_clone(&img, &gt, &cut, &target, PasteMode::Clone, &cfg()).unwrap();
        assert_eq!(count_components(&out_gt), 2);
        // Pixels outside the pasted alpha are untouched.
        for y in 0..16 {
            for x in 0..16 {
                let pasted = (10..13).contains(&x) && (10..13).contains(&y);
                if !pasted {
                    assert_eq!(out_img.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn paste_rejects_color_mismatch() {
        let img = RgbImage::from_fn(16, 8, |x, _| {
            if x < 8 {
                [0.1, 0.1, 0.1]
            } else {
                [0.9, 0.9, 0.9]
            }
        })
        .unwrap();
        let gt = BinaryMask::from_fn(16, 8, |x, y| (1..3).contains(&x) && (3..5).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let target = BoundingBox::new(11.0, 3.0, 13.0, 5.0).unwrap();
        assert!(matches!(
            place_clone(&img, &gt, &cut, &target, PasteMode::Clone, &cfg()),
            Err(Error::NoColorMatch { .. })
        ));
        // Translate mode skips the color test.
        assert!(place_clone(&img, &gt, &cut, &target, PasteMode::Translate, &cfg()).is_ok());
    }

    #[test]
    fn paste_rejects_overlap_with_foreground() {
        let img = RgbImage::filled(12, 12, [0.4; 3]).unwrap();
        let gt = BinaryMask::from_fn(12, 12, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let overlapping = BoundingBox::new(4.0, 4.0, 7.0, 7.0).unwrap();
        assert!(matches!(
            place_clone(&img, &gt, &cut, &overlapping, PasteMode::Clone, &cfg()),
            Err(Error::OccludesInstance)
        ));
        // Adjacent (touching) targets are occlusions too.
        let touching = BoundingBox::new(5.0, 2.0, 8.0, 5.0).unwrap();
        assert!(matches!(
            place_clone(&img, &gt, &cut, &touching, PasteMode::Clone, &cfg()),
            Err(Error::OccludesInstance)
        ));
    }

    #[test]
    fn flip_mode_mirrors_patch() {
        let img = RgbImage::from_fn(12, 6, |x, y| {
            if (1..4).contains(&x) && (1..3).contains(&y) {
                [x as f64 / 10.0, 0.0, 0.0]
            } else {
                [0.5, 0.5, 0.5]
            }
        })
        .unwrap();
        let gt = BinaryMask::from_fn(12, 6, |x, y| (1..4).contains(&x) && (1..3).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let target = BoundingBox::new(7.0, 1.0, 10.0, 3.0).unwrap();
        let (out, _) = place_clone(&img, &gt, &cut, &target, PasteMode::Flip, &cfg()).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(out.pixel(7 + x, 1 + y), cut.patch.pixel(2 - x, y));
            }
        }
    }

    #[test]
    fn placements_on_uniform_background_are_sorted_and_capped() {
        let img = RgbImage::filled(32, 32, [0.3; 3]).unwrap();
        let gt = BinaryMask::from_fn(32, 32, |x, y| (2..6).contains(&x) && (2..6).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let placements = find_placements(&img, &gt, &cut, &cfg());
        assert_eq!(placements.len(), cfg().placements_per_instance);
        // All-equal distances: scan order must be preserved.
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for b in &placements {
            let key = (b.y1, b.x1);
            assert!(key > prev, "unsorted tie-break: {key:?} after {prev:?}");
            prev = key;
        }
        // None of them overlaps the source instance.
        for b in &placements {
            assert_eq!(b.intersection_area(&cut.source_box), 0.0);
        }
    }

    #[test]
    fn placements_empty_when_patch_exceeds_image() {
        let img = RgbImage::filled(6, 10, [0.4; 3]).unwrap();
        let gt = BinaryMask::from_fn(6, 10, |x, y| (1..5).contains(&x) && (2..8).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        // No room for a second 4x6 instance anywhere clear of the first.
        assert!(find_placements(&img, &gt, &cut, &cfg()).is_empty());
    }

    #[test]
    fn placements_empty_when_no_color_match() {
        let img = RgbImage::from_fn(24, 12, |x, _| {
            if (1..5).contains(&x) {
                [0.1, 0.1, 0.1]
            } else {
                [0.95, 0.95, 0.95]
            }
        })
        .unwrap();
        // Instance sits on the dark strip; the rest of the image is far off.
        let gt = BinaryMask::from_fn(24, 12, |x, y| (2..4).contains(&x) && (4..8).contains(&y));
        let cut = extract_instance(&img, &gt, &cfg()).unwrap();
        let placements = find_placements(&img, &gt, &cut, &cfg());
        assert!(placements.is_empty());
    }
}

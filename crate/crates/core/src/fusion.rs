//! Dual-stream mask fusion.
//!
//! The procedure, in order:
//!
//! 1. un-flip the mirror stream so its boxes and masks live in the main
//!    stream's coordinates;
//! 2. drop detections scoring below the threshold;
//! 3. sort the merged pool by descending score and prune greedily: a
//!    detection is excluded if it overlaps an already-kept detection at or
//!    above the overlap threshold ("winner take all");
//! 4. discard surviving detections classified as non-camouflage;
//! 5. rasterize the remaining masks to full-image maps and accumulate;
//! 6. normalize by the maximum pixel value when it exceeds 1.
//!
//! Score ties break deterministically: main stream first, then input order.

use serde::Serialize;

use crate::detection::{rasterize_mask, Detection, Label, Stream, StreamOutput};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::map::GrayscaleMap;

/// Which overlap measure "50% mutual overlap" maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapRule {
    /// `min(|a∩b|/|a|, |a∩b|/|b|)`: both boxes must each be covered by the
    /// intersection. The default reading of "mutual".
    MutualFraction,
    /// Intersection over union.
    Iou,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub score_threshold: f64,
    pub overlap_threshold: f64,
    pub overlap_rule: OverlapRule,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            overlap_threshold: 0.5,
            overlap_rule: OverlapRule::MutualFraction,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("overlap_threshold", self.overlap_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Why a detection was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    LowScore,
    OverlapLoser,
    NonCamouflage,
}

/// A detection with its provenance in the merged pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SourcedDetection {
    pub detection: Detection,
    pub stream: Stream,
    /// Index within the originating stream's detection list.
    pub index: usize,
}

/// Audit record of one fusion run: every input detection ends up exactly
/// once in `kept` or `pruned`.
#[derive(Debug, Clone, Default)]
pub struct FusionTrace {
    pub kept: Vec<SourcedDetection>,
    pub pruned: Vec<(SourcedDetection, PruneReason)>,
}

impl FusionTrace {
    pub fn total(&self) -> usize {
        self.kept.len() + self.pruned.len()
    }
}

/// Returns the mirror stream re-expressed in main-stream coordinates: boxes
/// flipped, mask columns reversed, stream tag set to main.
pub fn unflip_stream(s: &StreamOutput) -> Result<StreamOutput> {
    if s.stream != Stream::Mirror {
        return Err(Error::StreamMismatch(
            "unflip_stream expects a mirror stream".into(),
        ));
    }
    Ok(s.flip_horizontal())
}

/// Overlap between two boxes under the configured rule. Degenerate zero
/// areas yield 0.
pub fn overlap(a: &BoundingBox, b: &BoundingBox, rule: OverlapRule) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    match rule {
        OverlapRule::MutualFraction => (inter / a.area()).min(inter / b.area()),
        OverlapRule::Iou => inter / a.union_area(b),
    }
}

fn pool_order(a: &SourcedDetection, b: &SourcedDetection) -> std::cmp::Ordering {
    b.detection
        .score
        .partial_cmp(&a.detection.score)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| {
            let rank = |s: Stream| match s {
                Stream::Main => 0,
                Stream::Mirror => 1,
            };
            rank(a.stream).cmp(&rank(b.stream))
        })
        .then_with(|| a.index.cmp(&b.index))
}

/// Greedy winner-take-all pruning over an already score-filtered pool.
///
/// Scans in descending score order (ties: main stream first, then input
/// index); a detection is pruned iff it overlaps an already-kept detection
/// at or above `overlap_threshold`.
pub fn winner_take_all(pool: &[SourcedDetection], cfg: &FusionConfig) -> FusionTrace {
    let mut order: Vec<&SourcedDetection> = pool.iter().collect();
    order.sort_by(|a, b| pool_order(a, b));

    let mut trace = FusionTrace::default();
    for cand in order {
        let beaten = trace.kept.iter().any(|kept| {
            overlap(&kept.detection.bbox, &cand.detection.bbox, cfg.overlap_rule)
                >= cfg.overlap_threshold
        });
        if beaten {
            trace.pruned.push((cand.clone(), PruneReason::OverlapLoser));
        } else {
            trace.kept.push(cand.clone());
        }
    }
    trace
}

/// Full fusion of a main/mirror stream pair into one camouflage map.
pub fn fuse(
    main: &StreamOutput,
    mirror: &StreamOutput,
    cfg: &FusionConfig,
) -> Result<GrayscaleMap> {
    fuse_with_trace(main, mirror, cfg).map(|(map, _)| map)
}

/// [`fuse`] plus the audit trace of kept and pruned detections.
pub fn fuse_with_trace(
    main: &StreamOutput,
    mirror: &StreamOutput,
    cfg: &FusionConfig,
) -> Result<(GrayscaleMap, FusionTrace)> {
    cfg.validate()?;
    if main.stream != Stream::Main {
        return Err(Error::StreamMismatch(
            "first argument must be the main stream".into(),
        ));
    }
    if main.image_width != mirror.image_width || main.image_height != mirror.image_height {
        return Err(Error::DimensionMismatch(format!(
            "stream image sizes differ: {}x{} vs {}x{}",
            main.image_width, main.image_height, mirror.image_width, mirror.image_height
        )));
    }
    let unflipped = unflip_stream(mirror)?;

    let mut pool = Vec::with_capacity(main.detections.len() + unflipped.detections.len());
    let mut trace = FusionTrace::default();
    for (stream, dets) in [
        (Stream::Main, &main.detections),
        (Stream::Mirror, &unflipped.detections),
    ] {
        for (index, det) in dets.iter().enumerate() {
            let sourced = SourcedDetection {
                detection: det.clone(),
                stream,
                index,
            };
            if det.score < cfg.score_threshold {
                trace.pruned.push((sourced, PruneReason::LowScore));
            } else {
                pool.push(sourced);
            }
        }
    }

    let wta = winner_take_all(&pool, cfg);
    trace.pruned.extend(wta.pruned);

    let mut survivors = Vec::new();
    for kept in wta.kept {
        if kept.detection.label == Label::NonCamouflage {
            trace.pruned.push((kept, PruneReason::NonCamouflage));
        } else {
            survivors.push(kept);
        }
    }

    let (w, h) = (main.image_width, main.image_height);
    let mut acc = vec![0.0; w * h];
    for s in &survivors {
        let raster = rasterize_mask(&s.detection, w, h)?;
        for (a, v) in acc.iter_mut().zip(raster.values()) {
            *a += v;
        }
    }
    trace.kept = survivors;

    let max = acc.iter().cloned().fold(0.0, f64::max);
    if max > 1.0 {
        for a in acc.iter_mut() {
            *a /= max;
        }
    }
    // Guard against rounding drift from the division.
    for a in acc.iter_mut() {
        *a = a.clamp(0.0, 1.0);
    }
    Ok((GrayscaleMap::new(w, h, acc)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Label;

    fn det(b: (f64, f64, f64, f64), score: f64, label: Label) -> Detection {
        Detection::new(
            BoundingBox::new(b.0, b.1, b.2, b.3).unwrap(),
            label,
            score,
            GrayscaleMap::new(2, 2, vec![1.0; 4]).unwrap(),
        )
        .unwrap()
    }

    fn stream(s: Stream, dets: Vec<Detection>) -> StreamOutput {
        StreamOutput {
            stream: s,
            image_width: 8,
            image_height: 8,
            detections: dets,
        }
    }

    fn sourced(dets: Vec<Detection>) -> Vec<SourcedDetection> {
        dets.into_iter()
            .enumerate()
            .map(|(index, detection)| SourcedDetection {
                detection,
                stream: Stream::Main,
                index,
            })
            .collect()
    }

    #[test]
    fn overlap_examples() {
        let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(overlap(&a, &a, OverlapRule::MutualFraction), 1.0);
        assert_eq!(overlap(&a, &a, OverlapRule::Iou), 1.0);
        let far = BoundingBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(overlap(&a, &far, OverlapRule::MutualFraction), 0.0);
        assert_eq!(overlap(&a, &far, OverlapRule::Iou), 0.0);
        let shifted = BoundingBox::new(0.5, 0.0, 1.5, 1.0).unwrap();
        assert!((overlap(&a, &shifted, OverlapRule::MutualFraction) - 0.5).abs() < 1e-12);
        assert!((overlap(&a, &shifted, OverlapRule::Iou) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn wta_single_detection_is_kept() {
        let pool = sourced(vec![det((1.0, 1.0, 3.0, 3.0), 0.9, Label::Camouflage)]);
        let t = winner_take_all(&pool, &FusionConfig::default());
        assert_eq!(t.kept.len(), 1);
        assert!(t.pruned.is_empty());
    }

    #[test]
    fn wta_prunes_lower_scored_duplicate() {
        let pool = sourced(vec![
            det((1.0, 1.0, 3.0, 3.0), 0.8, Label::Camouflage),
            det((1.0, 1.0, 3.0, 3.0), 0.9, Label::Camouflage),
        ]);
        let t = winner_take_all(&pool, &FusionConfig::default());
        assert_eq!(t.kept.len(), 1);
        assert_eq!(t.kept[0].detection.score, 0.9);
        assert_eq!(t.pruned.len(), 1);
        assert_eq!(t.pruned[0].1, PruneReason::OverlapLoser);
        assert_eq!(t.pruned[0].0.detection.score, 0.8);
    }

    #[test]
    fn wta_iou_rule_is_stricter_than_mutual_fraction() {
        // Intersection 0.5 of each unit box: mutual fraction 0.5 prunes at
        // the default threshold, IoU 1/3 does not.
        let pool = sourced(vec![
            det((0.0, 0.0, 1.0, 1.0), 0.9, Label::Camouflage),
            det((0.5, 0.0, 1.5, 1.0), 0.8, Label::Camouflage),
        ]);
        let mutual = winner_take_all(&pool, &FusionConfig::default());
        assert_eq!(mutual.kept.len(), 1);
        let iou_cfg = FusionConfig {
            overlap_rule: OverlapRule::Iou,
            ..FusionConfig::default()
        };
        let by_iou = winner_take_all(&pool, &iou_cfg);
        assert_eq!(by_iou.kept.len(), 2);
    }

    #[test]
    fn wta_keeps_disjoint_boxes() {
        let pool = sourced(vec![
            det((0.0, 0.0, 2.0, 2.0), 0.9, Label::Camouflage),
            det((5.0, 5.0, 7.0, 7.0), 0.8, Label::Camouflage),
        ]);
        let t = winner_take_all(&pool, &FusionConfig::default());
        assert_eq!(t.kept.len(), 2);
    }

    #[test]
    fn unflip_rejects_main_stream() {
        let s = stream(Stream::Main, vec![]);
        assert!(unflip_stream(&s).is_err());
    }

    #[test]
    fn unflip_is_inverse_of_flip() {
        let s = stream(
            Stream::Main,
            vec![det((1.0, 2.0, 4.0, 5.0), 0.7, Label::Camouflage)],
        );
        let mirrored = s.flip_horizontal();
        assert_eq!(unflip_stream(&mirrored).unwrap(), s);
    }

    #[test]
    fn fuse_nothing_above_threshold_gives_zero_map() {
        let main = stream(
            Stream::Main,
            vec![det((1.0, 1.0, 3.0, 3.0), 0.2, Label::Camouflage)],
        );
        let mirror = stream(Stream::Mirror, vec![]);
        let (map, trace) = fuse_with_trace(&main, &mirror, &FusionConfig::default()).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
        assert_eq!(trace.kept.len(), 0);
        assert_eq!(trace.pruned.len(), 1);
        assert_eq!(trace.pruned[0].1, PruneReason::LowScore);
    }

    #[test]
    fn fuse_single_detection_paints_its_box() {
        let main = stream(
            Stream::Main,
            vec![det((2.0, 2.0, 6.0, 6.0), 0.9, Label::Camouflage)],
        );
        let mirror = stream(Stream::Mirror, vec![]);
        let map = fuse(&main, &mirror, &FusionConfig::default()).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let inside = (2..6).contains(&x) && (2..6).contains(&y);
                assert_eq!(map.get(x, y), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn fuse_mirror_twin_is_pruned() {
        let d = det((2.0, 2.0, 6.0, 6.0), 0.9, Label::Camouflage);
        let main = stream(Stream::Main, vec![d.clone()]);
        // Mirror detection that un-flips exactly onto the main box.
        let mirror = stream(Stream::Mirror, vec![d.flip_horizontal(8.0)]);
        let mirror = StreamOutput {
            detections: mirror
                .detections
                .into_iter()
                .map(|mut m| {
                    m.score = 0.8;
                    m
                })
                .collect(),
            ..mirror
        };
        let main_only = fuse(
            &main,
            &stream(Stream::Mirror, vec![]),
            &FusionConfig::default(),
        )
        .unwrap();
        let (fused, trace) = fuse_with_trace(&main, &mirror, &FusionConfig::default()).unwrap();
        assert_eq!(fused, main_only);
        assert_eq!(trace.kept.len(), 1);
        assert_eq!(trace.kept[0].stream, Stream::Main);
        assert_eq!(trace.pruned.len(), 1);
        assert_eq!(trace.pruned[0].1, PruneReason::OverlapLoser);
    }

    #[test]
    fn fuse_drops_non_camouflage_after_pruning() {
        let main = stream(
            Stream::Main,
            vec![
                det((1.0, 1.0, 4.0, 4.0), 0.95, Label::NonCamouflage),
                det((1.0, 1.0, 4.0, 4.0), 0.9, Label::Camouflage),
            ],
        );
        let mirror = stream(Stream::Mirror, vec![]);
        let (map, trace) = fuse_with_trace(&main, &mirror, &FusionConfig::default()).unwrap();
        // The non-camouflage detection wins the overlap and is then
        // discarded, so nothing survives.
        assert!(map.values().iter().all(|&v| v == 0.0));
        assert_eq!(trace.kept.len(), 0);
        let reasons: Vec<PruneReason> = trace.pruned.iter().map(|(_, r)| *r).collect();
        assert!(reasons.contains(&PruneReason::OverlapLoser));
        assert!(reasons.contains(&PruneReason::NonCamouflage));
    }

    #[test]
    fn fuse_dimension_mismatch_is_error() {
        let main = stream(Stream::Main, vec![]);
        let mirror = StreamOutput {
            stream: Stream::Mirror,
            image_width: 9,
            image_height: 8,
            detections: vec![],
        };
        assert!(fuse(&main, &mirror, &FusionConfig::default()).is_err());
    }

    #[test]
    fn raising_threshold_never_adds_detections() {
        let dets = vec![
            det((0.0, 0.0, 3.0, 3.0), 0.55, Label::Camouflage),
            det((4.0, 4.0, 7.0, 7.0), 0.75, Label::Camouflage),
            det((0.5, 0.5, 3.5, 3.5), 0.65, Label::Camouflage),
        ];
        let main = stream(Stream::Main, dets);
        let mirror = stream(Stream::Mirror, vec![]);
        let mut prev: Option<Vec<(Stream, usize)>> = None;
        for thr in [0.5, 0.6, 0.7, 0.8] {
            let cfg = FusionConfig {
                score_threshold: thr,
                ..FusionConfig::default()
            };
            let (_, trace) = fuse_with_trace(&main, &mirror, &cfg).unwrap();
            let kept: Vec<(Stream, usize)> =
                trace.kept.iter().map(|k| (k.stream, k.index)).collect();
            if let Some(prev) = &prev {
                for k in &kept {
                    assert!(prev.contains(k), "threshold {thr} added {k:?}");
                }
            }
            prev = Some(kept);
        }
    }
}

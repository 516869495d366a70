//! Property tests for the toolkit's structural invariants: flip involutions,
//! rasterization bounds, fusion order-independence, and metric ranges.

use camomap::detection::{rasterize_mask, Detection, Label, Stream, StreamOutput};
use camomap::fusion::{fuse, fuse_with_trace, FusionConfig};
use camomap::geometry::BoundingBox;
use camomap::map::{BinaryMask, GrayscaleMap, RgbImage};
use camomap::metrics::{e_measure, f_beta, iou, mae, DEFAULT_BETA_SQ};
use proptest::collection::vec;
use proptest::prelude::*;

fn grayscale(w: usize, h: usize) -> impl Strategy<Value = GrayscaleMap> {
    vec(0.0f64..=1.0, w * h).prop_map(move |v| GrayscaleMap::new(w, h, v).unwrap())
}

fn binary(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    vec(0u8..=1, w * h).prop_map(move |v| BinaryMask::new(w, h, v).unwrap())
}

/// Boxes on an eighth-pixel lattice inside a 16x16 image: exact binary
/// fractions, so horizontal flips reconstruct bit-identically. Edges avoid
/// the x.5 fractions where a pixel center sits exactly on a half-open box
/// boundary and inclusion could not be mirror-symmetric.
fn lattice_box() -> impl Strategy<Value = BoundingBox> {
    (0u32..90, 0u32..90, 9u32..40, 9u32..40).prop_map(|(k1, l1, w, h)| {
        let adj = |k: u32| if k % 8 == 4 { k + 1 } else { k };
        let kx1 = adj(k1);
        let ky1 = adj(l1);
        let kx2 = adj((kx1 + w).min(126));
        let ky2 = adj((ky1 + h).min(126));
        BoundingBox::new(
            kx1 as f64 / 8.0,
            ky1 as f64 / 8.0,
            kx2 as f64 / 8.0,
            ky2 as f64 / 8.0,
        )
        .unwrap()
    })
}

fn detection() -> impl Strategy<Value = Detection> {
    (
        lattice_box(),
        vec(0.0f64..=1.0, 16),
        0.0f64..=1.0,
        any::<bool>(),
    )
        .prop_map(|(bbox, mask, score, camo)| {
            Detection::new(
                bbox,
                if camo {
                    Label::Camouflage
                } else {
                    Label::NonCamouflage
                },
                score,
                GrayscaleMap::new(4, 4, mask).unwrap(),
            )
            .unwrap()
        })
}

fn main_stream(max_dets: usize) -> impl Strategy<Value = StreamOutput> {
    vec(detection(), 0..=max_dets).prop_map(|mut detections| {
        // Distinct scores keep the winner-take-all order independent of the
        // input permutation.
        for (i, d) in detections.iter_mut().enumerate() {
            d.score = (d.score * 0.9 + i as f64 * 1e-4).min(1.0);
        }
        StreamOutput {
            stream: Stream::Main,
            image_width: 16,
            image_height: 16,
            detections,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn image_flip_is_involution(values in vec(0.0f64..=1.0, 5 * 4 * 3)) {
        let img = RgbImage::new(5, 4, values).unwrap();
        prop_assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn box_flip_is_involution(b in lattice_box()) {
        prop_assert_eq!(b.flip_horizontal(16.0).flip_horizontal(16.0), b);
    }

    #[test]
    fn rasterize_stays_in_unit_range(d in detection()) {
        let map = rasterize_mask(&d, 16, 16).unwrap();
        prop_assert!(map.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rasterize_commutes_with_flip(d in detection()) {
        let flipped_first = rasterize_mask(&d.flip_horizontal(16.0), 16, 16).unwrap();
        let flipped_after = rasterize_mask(&d, 16, 16).unwrap().flip_horizontal();
        for (a, b) in flipped_first.values().iter().zip(flipped_after.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_ignores_detection_order(s in main_stream(5), seed in any::<u64>()) {
        let empty_mirror = StreamOutput {
            stream: Stream::Mirror,
            image_width: 16,
            image_height: 16,
            detections: vec![],
        };
        let cfg = FusionConfig::default();
        let baseline = fuse(&s, &empty_mirror, &cfg).unwrap();

        let mut permuted = s.detections.clone();
        let n = permuted.len().max(1);
        let k = (seed as usize) % n;
        permuted.rotate_left(k);
        let shuffled = StreamOutput { detections: permuted, ..s.clone() };
        let out = fuse(&shuffled, &empty_mirror, &cfg).unwrap();
        prop_assert_eq!(out, baseline);
    }

    #[test]
    fn self_fusion_equals_main_only(s in main_stream(4)) {
        let cfg = FusionConfig::default();
        let empty_mirror = StreamOutput {
            stream: Stream::Mirror,
            image_width: 16,
            image_height: 16,
            detections: vec![],
        };
        let main_only = fuse(&s, &empty_mirror, &cfg).unwrap();
        let mirror = s.flip_horizontal();
        let (fused, trace) = fuse_with_trace(&s, &mirror, &cfg).unwrap();
        prop_assert_eq!(&fused, &main_only);
        prop_assert!(fused.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // Every kept detection comes from the main stream.
        prop_assert!(trace.kept.iter().all(|k| k.stream == Stream::Main));
        prop_assert_eq!(trace.total(), s.detections.len() * 2);
    }

    #[test]
    fn mae_is_symmetric_and_triangular(
        a in grayscale(4, 4),
        b in grayscale(4, 4),
        c in grayscale(4, 4),
    ) {
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        let (ab, bc, ac) = (
            mae(&a, &b).unwrap(),
            mae(&b, &c).unwrap(),
            mae(&a, &c).unwrap(),
        );
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn binary_metrics_are_flip_invariant(p in binary(5, 4), g in binary(5, 4)) {
        let (pf, gf) = (p.flip_horizontal(), g.flip_horizontal());
        prop_assert_eq!(
            f_beta(&p, &g, DEFAULT_BETA_SQ).unwrap(),
            f_beta(&pf, &gf, DEFAULT_BETA_SQ).unwrap()
        );
        prop_assert_eq!(iou(&p, &g).unwrap(), iou(&pf, &gf).unwrap());
        let (e, ef) = (e_measure(&p, &g).unwrap(), e_measure(&pf, &gf).unwrap());
        prop_assert!((e - ef).abs() < 1e-12);
    }

    #[test]
    fn all_metric_values_stay_in_unit_interval(p in grayscale(6, 5), g in binary(6, 5)) {
        let rule = camomap::metrics::ThresholdRule::adaptive();
        let (threshold, v) = camomap::metrics::evaluate_pair(&p, &g, &rule).unwrap();
        for value in [v.mae, v.f_beta, v.iou, v.e_phi, v.s_alpha, v.weighted_f, threshold] {
            prop_assert!((0.0..=1.0).contains(&value), "{} out of range", value);
        }
    }
}

/// An all-ones mask over a surviving detection paints exact ones, and the
/// fused maximum is exactly 1.
#[test]
fn surviving_all_ones_mask_reaches_exactly_one() {
    let det = |x1: f64, score: f64| {
        Detection::new(
            BoundingBox::new(x1, 2.0, x1 + 6.0, 10.0).unwrap(),
            Label::Camouflage,
            score,
            GrayscaleMap::new(4, 4, vec![1.0; 16]).unwrap(),
        )
        .unwrap()
    };
    let main = StreamOutput {
        stream: Stream::Main,
        image_width: 16,
        image_height: 16,
        detections: vec![det(1.0, 0.9), det(6.0, 0.8)],
    };
    let mirror = StreamOutput {
        stream: Stream::Mirror,
        image_width: 16,
        image_height: 16,
        detections: vec![],
    };
    let fused = fuse(&main, &mirror, &FusionConfig::default()).unwrap();
    let max = fused.values().iter().cloned().fold(0.0, f64::max);
    assert_eq!(max, 1.0);
}

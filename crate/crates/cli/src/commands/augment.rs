//! `augment`: copy-paste augmentation over an image/mask directory pair,
//! emitting augmented PNG pairs plus a JSON manifest of applied operations.

use std::path::Path;

use camomap::augment::{
    admit_for_augmentation, count_components, extract_instance, find_placements, place_clone,
    PasteMode,
};
use camomap::dataset::DatasetManifest;
use camomap::geometry::BoundingBox;
use camomap::io;
use camomap::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct PasteRecord {
    output_image: String,
    output_mask: String,
    mode: PasteMode,
    target: [f64; 4],
    color_distance: f64,
}

#[derive(Serialize)]
struct ImageRecord {
    id: String,
    components: usize,
    admitted: bool,
    pastes: Vec<PasteRecord>,
}

#[derive(Serialize)]
struct AugmentManifest {
    seed: u64,
    images: Vec<ImageRecord>,
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn run(images: &Path, masks: &Path, out_dir: &Path, seed: u64, cfg: &RunConfig) -> Result<()> {
    let manifest = DatasetManifest::from_dirs(images, masks)?;
    let aug_cfg = cfg.augment_config();
    aug_cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let mut records: Vec<ImageRecord> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let img = io::load_rgb_image(&entry.image_path)?;
            let gt = io::load_binary_mask_png(&entry.gt_path)?;
            let components = count_components(&gt);
            let admitted = admit_for_augmentation(&gt, &aug_cfg);
            let mut pastes = Vec::new();
            if admitted {
                let cut = extract_instance(&img, &gt, &aug_cfg)?;
                // Per-image RNG: deterministic and independent of batch
                // composition or worker count.
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&entry.id));
                for (k, target) in find_placements(&img, &gt, &cut, &aug_cfg)
                    .iter()
                    .enumerate()
                {
                    let mode = if rng.random::<bool>() {
                        PasteMode::Flip
                    } else {
                        PasteMode::Clone
                    };
                    let (out_img, out_gt) = place_clone(&img, &gt, &cut, target, mode, &aug_cfg)?;
                    let image_name = format!("{}_aug{}.png", entry.id, k);
                    let mask_name = format!("{}_aug{}_gt.png", entry.id, k);
                    io::save_rgb_png(&out_img, &out_dir.join(&image_name))?;
                    io::save_binary_mask_png(&out_gt, &out_dir.join(&mask_name))?;
                    pastes.push(PasteRecord {
                        output_image: image_name,
                        output_mask: mask_name,
                        mode,
                        target: [target.x1, target.y1, target.x2, target.y2],
                        color_distance: region_color_distance(&img, &cut, target),
                    });
                }
            }
            Ok(ImageRecord {
                id: entry.id.clone(),
                components,
                admitted,
                pastes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let total: usize = records.iter().map(|r| r.pastes.len()).sum();
    let json = serde_json::to_string_pretty(&AugmentManifest {
        seed,
        images: records,
    })
    .expect("manifest serializes");
    let manifest_path = out_dir.join("augment_manifest.json");
    std::fs::write(&manifest_path, json).map_err(|e| Error::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    println!(
        "augmented {} images with {total} pastes into {}",
        manifest.entries.len(),
        out_dir.display()
    );
    Ok(())
}

fn region_color_distance(
    img: &camomap::RgbImage,
    cut: &camomap::augment::InstanceCut,
    target: &BoundingBox,
) -> f64 {
    let (tx, ty) = (target.x1 as usize, target.y1 as usize);
    let (pw, ph) = (cut.patch.width(), cut.patch.height());
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
    camomap::augment::color_distance(
        [sum[0] / n, sum[1] / n, sum[2] / n],
        cut.surround_mean_color,
    )
}

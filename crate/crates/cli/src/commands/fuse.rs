//! `fuse`: turn per-stream detection files into camouflage maps plus audit
//! traces, one PNG and one JSON per manifest image.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use camomap::dataset::DatasetManifest;
use camomap::fusion::{fuse_with_trace, FusionTrace, PruneReason, SourcedDetection};
use camomap::io::{self, DetectionRecord};
use camomap::{Error, Result, Stream};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Serialize)]
struct TraceEntryView {
    stream: Stream,
    index: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    label: camomap::Label,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<PruneReason>,
}

#[derive(Serialize)]
struct TraceView {
    image_id: String,
    kept: Vec<TraceEntryView>,
    pruned: Vec<TraceEntryView>,
}

fn entry_view(s: &SourcedDetection, reason: Option<PruneReason>) -> TraceEntryView {
    TraceEntryView {
        stream: s.stream,
        index: s.index,
        bbox: [
            s.detection.bbox.x1,
            s.detection.bbox.y1,
            s.detection.bbox.x2,
            s.detection.bbox.y2,
        ],
        label: s.detection.label,
        score: s.detection.score,
        reason,
    }
}

fn trace_view(image_id: &str, trace: &FusionTrace) -> TraceView {
    TraceView {
        image_id: image_id.to_string(),
        kept: trace.kept.iter().map(|s| entry_view(s, None)).collect(),
        pruned: trace
            .pruned
            .iter()
            .map(|(s, r)| entry_view(s, Some(*r)))
            .collect(),
    }
}

fn group_records(
    records: Vec<DetectionRecord>,
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<BTreeMap<String, Vec<DetectionRecord>>> {
    let known: std::collections::BTreeSet<&str> =
        manifest.entries.iter().map(|e| e.id.as_str()).collect();
    let mut groups: BTreeMap<String, Vec<DetectionRecord>> = BTreeMap::new();
    for r in records {
        if !known.contains(r.image_id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "{}: detection references unknown image id {}",
                path.display(),
                r.image_id
            )));
        }
        groups.entry(r.image_id.clone()).or_default().push(r);
    }
    Ok(groups)
}

pub fn run(
    main_file: &Path,
    mirror_file: &Path,
    manifest_path: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    let manifest = DatasetManifest::load_csv(manifest_path)?;
    let main_groups = group_records(io::read_detection_file(main_file)?, &manifest, main_file)?;
    let mirror_groups = group_records(
        io::read_detection_file(mirror_file)?,
        &manifest,
        mirror_file,
    )?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let main_base = main_file.parent().unwrap_or(Path::new("."));
    let mirror_base = mirror_file.parent().unwrap_or(Path::new("."));
    let fusion_cfg = cfg.fusion_config();
    let empty: Vec<DetectionRecord> = Vec::new();

    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let (w, h) = io::image_dimensions(&entry.image_path)?;
            let main = io::build_stream_output(
                main_groups.get(&entry.id).unwrap_or(&empty),
                Stream::Main,
                w,
                h,
                main_base,
            )?;
            let mirror = io::build_stream_output(
                mirror_groups.get(&entry.id).unwrap_or(&empty),
                Stream::Mirror,
                w,
                h,
                mirror_base,
            )?;
            let (map, trace) = fuse_with_trace(&main, &mirror, &fusion_cfg)?;
            io::save_grayscale_png(&map, &out_dir.join(format!("{}.png", entry.id)))?;
            let trace_path: PathBuf = out_dir.join(format!("{}_trace.json", entry.id));
            let json = serde_json::to_string_pretty(&trace_view(&entry.id, &trace))
                .expect("trace serializes");
            std::fs::write(&trace_path, json).map_err(|e| Error::Io {
                path: trace_path.display().to_string(),
                source: e,
            })?;
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;

    println!(
        "fused {} images into {}",
        manifest.entries.len(),
        out_dir.display()
    );
    Ok(())
}

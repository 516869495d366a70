//! File formats: 8-bit PNG rasters, JSON-lines detection files, run-length
//! masks, and raw feature-map ingestion.
//!
//! PNG grayscale uses the `value = byte / 255` mapping, so multiples of
//! 1/255 round-trip bit-exactly. Detection files hold one JSON record per
//! line; masks travel either as run-length counts (row-major, alternating
//! zero/one runs, starting with zeros) or as a path to a grayscale PNG
//! resolved relative to the detection file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, Label, Stream, StreamOutput};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::map::{BinaryMask, FeatureMap, GrayscaleMap, RgbImage};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn load_grayscale_png(path: &Path) -> Result<GrayscaleMap> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    GrayscaleMap::new(w, h, values)
}

pub fn save_grayscale_png(map: &GrayscaleMap, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = map
        .values()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, bytes)
        .expect("buffer size matches dimensions");
    img.save(path).map_err(|e| image_err(path, e))
}

/// Loads a PNG as a binary mask: bytes at or above 128 are foreground.
pub fn load_binary_mask_png(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .map_err(|e| image_err(path, e))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.into_raw().iter().map(|&b| (b >= 128) as u8).collect();
    BinaryMask::new(w, h, values)
}

pub fn save_binary_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = mask.values().iter().map(|&v| v * 255).collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer size matches dimensions");
    img.save(path).map_err(|e| image_err(path, e))
}

pub fn load_rgb_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
    RgbImage::new(w, h, values)
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .values()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let out = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer size matches dimensions");
    out.save(path).map_err(|e| image_err(path, e))
}

/// Reads only the header of an image file.
pub fn image_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(path, e))?;
    Ok((w as usize, h as usize))
}

/// One detection file line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub stream: Stream,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: Label,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_png_path: Option<String>,
    pub mask_w: usize,
    pub mask_h: usize,
}

impl DetectionRecord {
    /// Materializes the record, loading or decoding its mask. PNG paths
    /// resolve relative to `base_dir`.
    pub fn to_detection(&self, base_dir: &Path) -> Result<Detection> {
        let bbox = BoundingBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])?;
        let mask = match (&self.mask_rle, &self.mask_png_path) {
            (Some(counts), None) => decode_rle(counts, self.mask_w, self.mask_h)?.to_grayscale(),
            (None, Some(rel)) => {
                let path = base_dir.join(rel);
                let m = load_grayscale_png(&path)?;
                if m.width() != self.mask_w || m.height() != self.mask_h {
                    return Err(Error::DimensionMismatch(format!(
                        "mask {} is {}x{}, record says {}x{}",
                        path.display(),
                        m.width(),
                        m.height(),
                        self.mask_w,
                        self.mask_h
                    )));
                }
                m
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "record carries both mask_rle and mask_png_path".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidInput(
                    "record carries neither mask_rle nor mask_png_path".into(),
                ))
            }
        };
        Detection::new(bbox, self.label, self.score, mask)
    }
}

/// Parses a JSON-lines detection file. Blank lines are ignored; malformed
/// lines are reported with their line number.
pub fn read_detection_file(path: &Path) -> Result<Vec<DetectionRecord>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DetectionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_detection_file(path: &Path, records: &[DetectionRecord]) -> Result<()> {
    let mut out = fs::File::create(path).map_err(|e| io_err(path, e))?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Assembles one stream's output for one image from its records.
pub fn build_stream_output(
    records: &[DetectionRecord],
    stream: Stream,
    image_width: usize,
    image_height: usize,
    base_dir: &Path,
) -> Result<StreamOutput> {
    let mut detections = Vec::new();
    for r in records {
        if r.stream != stream {
            return Err(Error::StreamMismatch(format!(
                "record for image {} tagged {:?}, expected {:?}",
                r.image_id, r.stream, stream
            )));
        }
        detections.push(r.to_detection(base_dir)?);
    }
    Ok(StreamOutput {
        stream,
        image_width,
        image_height,
        detections,
    })
}

/// Expands run-length counts (alternating zero/one runs, zeros first,
/// row-major) into a mask.
pub fn decode_rle(counts: &[u32], width: usize, height: usize) -> Result<BinaryMask> {
    let expected = width * height;
    let total: usize = counts.iter().map(|&c| c as usize).sum();
    if total != expected {
        return Err(Error::InvalidInput(format!(
            "RLE counts sum to {total}, mask is {width}x{height} = {expected}"
        )));
    }
    let mut values = Vec::with_capacity(expected);
    let mut bit = 0u8;
    for &c in counts {
        values.extend(std::iter::repeat_n(bit, c as usize));
        bit ^= 1;
    }
    BinaryMask::new(width, height, values)
}

pub fn encode_rle(mask: &BinaryMask) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut expected = 0u8;
    let mut run = 0u32;
    for &v in mask.values() {
        if v == expected {
            run += 1;
        } else {
            counts.push(run);
            expected = v;
            run = 1;
        }
    }
    counts.push(run);
    counts
}

const FEATURE_MAGIC: u32 = 0x3146_4456; // "VDF1" little-endian

/// Reads a raw feature map: 16-byte header (magic, C, H, W as little-endian
/// u32) followed by C*H*W little-endian f32 values, channel-major.
pub fn load_feature_bin(path: &Path) -> Result<FeatureMap> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::InvalidInput(format!(
            "{}: feature file shorter than its 16-byte header",
            path.display()
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
    if word(0) != FEATURE_MAGIC {
        return Err(Error::InvalidInput(format!(
            "{}: bad magic {:#010x}",
            path.display(),
            word(0)
        )));
    }
    let (c, h, w) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let expected = 16 + c * h * w * 4;
    if bytes.len() != expected {
        return Err(Error::InvalidInput(format!(
            "{}: expected {expected} bytes for {c}x{h}x{w}, got {}",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    FeatureMap::new(c, w, h, values)
}

pub fn save_feature_bin(f: &FeatureMap, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + f.values().len() * 4);
    for v in [
        FEATURE_MAGIC,
        f.channels() as u32,
        f.height() as u32,
        f.width() as u32,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in f.values() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Lists `*.png` stems in a directory, sorted by stem.
pub fn png_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip() {
        let mask = BinaryMask::from_fn(5, 3, |x, y| (x + y) % 3 == 0);
        let counts = encode_rle(&mask);
        let back = decode_rle(&counts, 5, 3).unwrap();
        assert_eq!(back, mask);
    }

    #[test]
    fn rle_starting_with_ones_has_leading_zero_run() {
        let mask = BinaryMask::new(3, 1, vec![1, 1, 0]).unwrap();
        assert_eq!(encode_rle(&mask), vec![0, 2, 1]);
    }

    #[test]
    fn rle_rejects_wrong_total() {
        assert!(decode_rle(&[3, 2], 2, 2).is_err());
    }

    #[test]
    fn png_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let map =
            GrayscaleMap::from_fn(4, 3, |x, y| ((x * 3 + y * 5) % 256) as f64 / 255.0).unwrap();
        save_grayscale_png(&map, &path).unwrap();
        let back = load_grayscale_png(&path).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn feature_bin_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = FeatureMap::from_fn(2, 3, 4, |c, x, y| (c * 100 + y * 10 + x) as f64).unwrap();
        save_feature_bin(&f, &path).unwrap();
        let back = load_feature_bin(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn stream_output_rejects_mismatched_records() {
        let record = DetectionRecord {
            image_id: "img".into(),
            stream: Stream::Mirror,
            bbox: [0.0, 0.0, 2.0, 2.0],
            label: Label::Camouflage,
            score: 0.5,
            mask_rle: Some(vec![0, 4]),
            mask_png_path: None,
            mask_w: 2,
            mask_h: 2,
        };
        let err = build_stream_output(&[record], Stream::Main, 8, 8, Path::new("."));
        assert!(matches!(err, Err(Error::StreamMismatch(_))));
    }

    #[test]
    fn detection_file_round_trip_and_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.jsonl");
        let records = vec![DetectionRecord {
            image_id: "img1".into(),
            stream: Stream::Main,
            bbox: [1.0, 2.0, 5.0, 6.0],
            label: Label::Camouflage,
            score: 0.9,
            mask_rle: Some(vec![0, 4]),
            mask_png_path: None,
            mask_w: 2,
            mask_h: 2,
        }];
        write_detection_file(&path, &records).unwrap();
        let back = read_detection_file(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].image_id, "img1");
        let det = back[0].to_detection(dir.path()).unwrap();
        assert_eq!(det.mask.values(), &[1.0; 4]);

        std::fs::write(&path, "{\"image_id\": broken\n").unwrap();
        match read_detection_file(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

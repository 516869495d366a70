//! Per-object detections and per-stream detection sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::map::GrayscaleMap;

/// Default side length of the box-aligned instance mask head.
pub const DEFAULT_MASK_RESOLUTION: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Camouflage,
    NonCamouflage,
}

/// Which processing path produced a detection set: the original image or its
/// horizontally flipped counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Main,
    Mirror,
}

/// One proposed object: a continuous box, a class label, a confidence score,
/// and a soft mask aligned to the box.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub label: Label,
    pub score: f64,
    pub mask: GrayscaleMap,
}

impl Detection {
    pub fn new(bbox: BoundingBox, label: Label, score: f64, mask: GrayscaleMap) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            label,
            score,
            mask,
        })
    }

    /// Mirrors the detection about an image's vertical center line: the box
    /// is flipped and the mask columns are reversed.
    pub fn flip_horizontal(&self, image_width: f64) -> Self {
        Self {
            bbox: self.bbox.flip_horizontal(image_width),
            label: self.label,
            score: self.score,
            mask: self.mask.flip_horizontal(),
        }
    }
}

/// All detections for one image from one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    pub stream: Stream,
    pub image_width: usize,
    pub image_height: usize,
    pub detections: Vec<Detection>,
}

impl StreamOutput {
    /// Flips every detection and toggles the stream tag. An involution.
    pub fn flip_horizontal(&self) -> Self {
        let w = self.image_width as f64;
        Self {
            stream: match self.stream {
                Stream::Main => Stream::Mirror,
                Stream::Mirror => Stream::Main,
            },
            image_width: self.image_width,
            image_height: self.image_height,
            detections: self
                .detections
                .iter()
                .map(|d| d.flip_horizontal(w))
                .collect(),
        }
    }
}

/// Projects a detection's box-aligned mask into a full-image map.
///
/// Output pixels whose centers fall inside the box (clamped to the image)
/// take a bilinear resample of the detection mask; everything else is zero.
/// The mask is sampled with edge clamping, so an all-ones mask fills its box
/// with exact ones.
pub fn rasterize_mask(
    det: &Detection,
    image_width: usize,
    image_height: usize,
) -> Result<GrayscaleMap> {
    let b = &det.bbox;
    let cx1 = b.x1.max(0.0);
    let cy1 = b.y1.max(0.0);
    let cx2 = b.x2.min(image_width as f64);
    let cy2 = b.y2.min(image_height as f64);
    if cx1 >= cx2 || cy1 >= cy2 {
        return Err(Error::EmptyProjection);
    }

    // Integer pixels with centers in [cx1, cx2) x [cy1, cy2).
    let x_start = (cx1 - 0.5).ceil().max(0.0) as usize;
    let y_start = (cy1 - 0.5).ceil().max(0.0) as usize;
    let x_end = ((cx2 - 0.5).ceil().max(0.0) as usize).min(image_width);
    let y_end = ((cy2 - 0.5).ceil().max(0.0) as usize).min(image_height);

    let mw = det.mask.width();
    let mh = det.mask.height();
    let mut values = vec![0.0; image_width * image_height];
    for y in y_start..y_end {
        let py = y as f64 + 0.5;
        if py < cy1 || py >= cy2 {
            continue;
        }
        let my = (py - b.y1) / b.height() * mh as f64;
        for x in x_start..x_end {
            let px = x as f64 + 0.5;
            if px < cx1 || px >= cx2 {
                continue;
            }
            let mx = (px - b.x1) / b.width() * mw as f64;
            values[y * image_width + x] = sample_mask_clamped(&det.mask, mx, my);
        }
    }
    GrayscaleMap::new(image_width, image_height, values)
}

/// Bilinear lookup with coordinates clamped to the outermost pixel centers.
fn sample_mask_clamped(mask: &GrayscaleMap, x: f64, y: f64) -> f64 {
    let w = mask.width();
    let h = mask.height();
    let u = (x - 0.5).clamp(0.0, (w - 1) as f64);
    let v = (y - 0.5).clamp(0.0, (h - 1) as f64);
    let x0 = (u.floor() as usize).min(w - 1);
    let y0 = (v.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let du = u - x0 as f64;
    let dv = v - y0 as f64;
    (1.0 - du) * (1.0 - dv) * mask.get(x0, y0)
        + du * (1.0 - dv) * mask.get(x1, y0)
        + (1.0 - du) * dv * mask.get(x0, y1)
        + du * dv * mask.get(x1, y1)
}

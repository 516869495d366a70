//! Continuous bounding boxes.
//!
//! A box is a half-open region `[x1, x2) x [y1, y2)` in continuous image
//! coordinates, anchored at the top-left corner of the image. Coordinates may
//! extend beyond image bounds; consumers that need containment clamp
//! explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "box coordinates must be finite: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::InvalidInput(format!(
                "box must satisfy x1 < x2 and y1 < y2: ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Mirrors the box about the vertical center line of an image of the
    /// given width: `(x1, y1, x2, y2) -> (W - x2, y1, W - x1, y2)`.
    pub fn flip_horizontal(&self, image_width: f64) -> Self {
        Self {
            x1: image_width - self.x2,
            y1: self.y1,
            x2: image_width - self.x1,
            y2: self.y2,
        }
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    pub fn union_area(&self, other: &Self) -> f64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// True when the open interiors intersect.
    pub fn intersects(&self, other: &Self) -> bool {
        self.intersection_area(other) > 0.0
    }
}

/// Free-function form of [`BoundingBox::flip_horizontal`].
pub fn flip_horizontal_box(b: &BoundingBox, image_width: f64) -> BoundingBox {
    b.flip_horizontal(image_width)
}

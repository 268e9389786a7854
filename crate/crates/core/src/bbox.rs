use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle. `(x, y)` is the 0-based top-left corner and
/// the box spans `[x, x + w) × [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::Input(format!(
                "box ({x},{y},{w},{h}) has zero extent"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    /// Builds a box from exclusive corner coordinates `[x1, x2) × [y1, y2)`.
    pub fn from_corners(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::Input(format!(
                "corners ({x1},{y1})-({x2},{y2}) do not span a box"
            )));
        }
        Ok(BBox {
            x: x1,
            y: y1,
            w: x2 - x1,
            h: y2 - y1,
        })
    }

    pub fn x2(&self) -> u32 {
        self.x + self.w
    }

    pub fn y2(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w as f64 * self.h as f64
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x.max(other.x);
        let y1 = self.y.max(other.y);
        let x2 = self.x2().min(other.x2());
        let y2 = self.y2().min(other.y2());
        BBox::from_corners(x1, y1, x2, y2).ok()
    }

    /// Clips the box to a `width × height` image. Returns `None` when nothing
    /// of the box lies inside.
    pub fn clip(&self, width: u32, height: u32) -> Option<BBox> {
        let x2 = self.x2().min(width);
        let y2 = self.y2().min(height);
        BBox::from_corners(self.x, self.y, x2, y2).ok()
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x2() <= width && self.y2() <= height
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64 && px < self.x2() as f64 && py >= self.y as f64 && py < self.y2() as f64
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

use std::f64::consts::PI;

use super::Image;
use crate::error::{Error, Result};

/// Per-pixel image derivatives. `orientation` is unsigned, folded into
/// `[0, π)`.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

impl GradientField {
    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Central differences with replicate borders.
pub fn gradients(img: &Image) -> Result<GradientField> {
    if img.channels() != 1 {
        return Err(Error::Input("gradients expect a single-channel image".into()));
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::Dimension(format!(
            "gradients need at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let px = img.data();
    let n = w * h;
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    let mut orientation = Vec::with_capacity(n);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let gx = 0.5 * (px[y * w + right] - px[y * w + left]);
            let gy = 0.5 * (px[down * w + x] - px[up * w + x]);
            dx.push(gx);
            dy.push(gy);
            magnitude.push(gx.hypot(gy));
            orientation.push(fold_orientation(gy.atan2(gx)));
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        dx,
        dy,
        magnitude,
        orientation,
    })
}

#[inline]
pub(crate) fn fold_orientation(theta: f64) -> f64 {
    let mut t = theta;
    if t < 0.0 {
        t += PI;
    }
    if t >= PI {
        t -= PI;
    }
    t
}

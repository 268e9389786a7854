use std::f64::consts::PI;

use super::{normalize_clip, FeatureKind, FeatureVector};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imgproc::{gradients, Image};

const WINDOW: usize = 64;
const CELL: usize = 8;
const CELLS: usize = WINDOW / CELL;
const BINS: usize = 9;
const BLOCKS: usize = CELLS - 1;
const CLIP: f64 = 0.2;

/// 7 × 7 blocks × 4 cells × 9 bins.
pub const HOG_LEN: usize = BLOCKS * BLOCKS * 4 * BINS;

/// HOG of the region under `bbox`, resampled to 64×64.
///
/// 8×8-pixel cells, 9 unsigned orientation bins centred at `(i + 0.5)·π/9`
/// with linear vote splitting between neighbouring bins, 2×2-cell blocks at
/// stride one cell, each block L2-normalized, clipped at 0.2 and renormalized.
pub fn hog_descriptor(img: &Image, bbox: &BBox) -> Result<FeatureVector> {
    if !bbox.fits_in(img.width(), img.height()) {
        return Err(Error::Dimension(format!(
            "box {bbox} exceeds the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let gray = if img.channels() == 1 {
        img.crop(bbox)?
    } else {
        img.crop(bbox)?.to_grayscale()
    };
    let patch = gray.resize_bilinear(WINDOW as u32, WINDOW as u32)?;
    let grad = gradients(&patch)?;

    let mut cells = [[0.0f64; BINS]; CELLS * CELLS];
    let bin_width = PI / BINS as f64;
    for y in 0..WINDOW {
        for x in 0..WINDOW {
            let i = grad.index(x, y);
            let m = grad.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let pos = grad.orientation[i] / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as i64).rem_euclid(BINS as i64) as usize;
            let b1 = (b0 + 1) % BINS;
            let cell = &mut cells[(y / CELL) * CELLS + x / CELL];
            cell[b0] += m * (1.0 - frac);
            cell[b1] += m * frac;
        }
    }

    let mut values = Vec::with_capacity(HOG_LEN);
    let mut block = [0.0f64; 4 * BINS];
    for by in 0..BLOCKS {
        for bx in 0..BLOCKS {
            for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                block[k * BINS..(k + 1) * BINS]
                    .copy_from_slice(&cells[(by + dy) * CELLS + bx + dx]);
            }
            normalize_clip(&mut block, CLIP);
            values.extend_from_slice(&block);
        }
    }
    let empty = values.iter().all(|&v| v == 0.0);
    Ok(FeatureVector {
        kind: FeatureKind::Hog,
        values,
        empty,
    })
}

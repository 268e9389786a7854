use std::f64::consts::PI;
use std::io::Write;

use super::normalize_clip;
use crate::error::{Error, Result};
use crate::imgproc::{gradients, Image};

pub const DENSE_STRIDE: u32 = 4;
pub const DENSE_SUPPORT: u32 = 16;
const SPATIAL: usize = 4;
const ORIENTATIONS: usize = 8;
pub const DENSE_DIM: usize = SPATIAL * SPATIAL * ORIENTATIONS;
const CLIP: f64 = 0.2;

/// SIFT-like descriptors on a regular lattice. `positions` holds the top-left
/// corner of each 16×16 support; `descriptors` is row-major `len × 128`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorField {
    pub width: u32,
    pub height: u32,
    pub stride: u32,
    pub positions: Vec<(u32, u32)>,
    pub descriptors: Vec<f64>,
}

impl DescriptorField {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        DENSE_DIM
    }

    pub fn descriptor(&self, i: usize) -> &[f64] {
        &self.descriptors[i * DENSE_DIM..(i + 1) * DENSE_DIM]
    }

    /// Centre of the support of lattice point `i`.
    pub fn center(&self, i: usize) -> (f64, f64) {
        let (x, y) = self.positions[i];
        let half = DENSE_SUPPORT as f64 / 2.0;
        (x as f64 + half, y as f64 + half)
    }

    /// Raw dump: little-endian f32, row-major, one 128-value row per point.
    pub fn write_le_f32(&self, out: &mut impl Write) -> std::io::Result<()> {
        for v in &self.descriptors {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Dense descriptors every 4 pixels over 16×16 supports that fit inside the
/// image: 4×4 spatial bins × 8 signed orientation bins, L2-normalized,
/// clipped at 0.2 and renormalized.
pub fn extract_dense_descriptors(img: &Image) -> Result<DescriptorField> {
    extract_dense_descriptors_with_stride(img, DENSE_STRIDE)
}

/// As [`extract_dense_descriptors`] with a custom lattice stride.
pub fn extract_dense_descriptors_with_stride(img: &Image, stride: u32) -> Result<DescriptorField> {
    if stride == 0 {
        return Err(Error::Input("dense lattice stride must be positive".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w < DENSE_SUPPORT || h < DENSE_SUPPORT {
        return Err(Error::Dimension(format!(
            "dense descriptors need at least {DENSE_SUPPORT}x{DENSE_SUPPORT} pixels, got {w}x{h}"
        )));
    }
    let grad = gradients(&img.to_grayscale())?;
    let n = grad.width * grad.height;

    // signed orientation bin and split weight per pixel
    let bin_width = 2.0 * PI / ORIENTATIONS as f64;
    let mut bin = vec![0usize; n];
    let mut frac = vec![0.0f64; n];
    for i in 0..n {
        if grad.magnitude[i] == 0.0 {
            continue;
        }
        let mut theta = grad.dy[i].atan2(grad.dx[i]);
        if theta < 0.0 {
            theta += 2.0 * PI;
        }
        let pos = theta / bin_width;
        let lo = pos.floor();
        bin[i] = (lo as usize) % ORIENTATIONS;
        frac[i] = pos - lo;
    }

    let cell = (DENSE_SUPPORT as usize) / SPATIAL;
    let mut positions = Vec::new();
    let mut descriptors = Vec::new();
    let mut desc = [0.0f64; DENSE_DIM];
    for py in (0..=h - DENSE_SUPPORT).step_by(stride as usize) {
        for px in (0..=w - DENSE_SUPPORT).step_by(stride as usize) {
            desc.iter_mut().for_each(|v| *v = 0.0);
            for dy in 0..DENSE_SUPPORT as usize {
                let y = py as usize + dy;
                for dx in 0..DENSE_SUPPORT as usize {
                    let x = px as usize + dx;
                    let i = y * grad.width + x;
                    let m = grad.magnitude[i];
                    if m == 0.0 {
                        continue;
                    }
                    let base = ((dy / cell) * SPATIAL + dx / cell) * ORIENTATIONS;
                    desc[base + bin[i]] += m * (1.0 - frac[i]);
                    desc[base + (bin[i] + 1) % ORIENTATIONS] += m * frac[i];
                }
            }
            normalize_clip(&mut desc, CLIP);
            positions.push((px, py));
            descriptors.extend_from_slice(&desc);
        }
    }
    Ok(DescriptorField {
        width: w,
        height: h,
        stride,
        positions,
        descriptors,
    })
}

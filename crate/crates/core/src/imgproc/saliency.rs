//! Spectral-residual saliency, plus loading of externally computed maps.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::image::{resample_bilinear, IntegralImage};
use super::Image;
use crate::bbox::BBox;
use crate::error::{Error, Result};

/// Longest side of the working resolution.
pub const WORK_SIDE: usize = 64;
const SMOOTH_SIGMA: f64 = 2.5;
const AMPLITUDE_FLOOR: f64 = 1e-2;

/// Per-pixel saliency in `[0, 1]` at the source image's resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
    /// Set when the input carried no signal and the map is all zeros.
    pub uninformative: bool,
}

impl SaliencyMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "{width}x{height} saliency map needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("saliency value {v} outside [0, 1]")));
        }
        let uninformative = values.iter().all(|&v| v == 0.0);
        Ok(SaliencyMap {
            width,
            height,
            values,
            uninformative,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn integral(&self) -> IntegralImage {
        IntegralImage::new(&self.values, self.width as usize, self.height as usize)
    }

    /// Reads an 8-bit single-channel PNG or PGM; values are divided by 255.
    pub fn load(path: &Path, width: u32, height: u32) -> Result<Self> {
        let dynamic = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let image::DynamicImage::ImageLuma8(gray) = dynamic else {
            return Err(Error::Input(format!(
                "{}: saliency map must be 8-bit single-channel, got {:?}",
                path.display(),
                dynamic.color()
            )));
        };
        if gray.dimensions() != (width, height) {
            return Err(Error::Dimension(format!(
                "{}: saliency map is {}x{}, image is {width}x{height}",
                path.display(),
                gray.width(),
                gray.height()
            )));
        }
        let values = gray.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
        SaliencyMap::new(width, height, values)
    }
}

/// Spectral-residual saliency of `img`, computed on its luma.
///
/// The image is resampled so its longer side is 64 pixels. The log-amplitude
/// spectrum minus its 3×3 local mean is recombined with the original phase and
/// inverted; the squared magnitude is Gaussian-smoothed (σ = 2.5 px),
/// upsampled back to the source size and min-max normalized.
pub fn compute_saliency(img: &Image) -> SaliencyMap {
    let gray = img.to_grayscale();
    let (w, h) = (img.width(), img.height());
    let zeros = || SaliencyMap {
        width: w,
        height: h,
        values: vec![0.0; w as usize * h as usize],
        uninformative: true,
    };
    if gray.is_constant() {
        return zeros();
    }

    let scale = WORK_SIDE as f64 / w.max(h) as f64;
    let ww = ((w as f64 * scale).round() as usize).max(1);
    let wh = ((h as f64 * scale).round() as usize).max(1);
    let small = resample_bilinear(gray.data(), w as usize, h as usize, ww, wh);

    let mut spectrum: Vec<Complex<f64>> = small.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft2(&mut spectrum, ww, wh, false);

    // exact spectral zeros (common on synthetic shapes) would dominate the
    // log residual; floor the amplitude relative to its mean
    let mean_amp = spectrum.iter().map(|c| c.norm()).sum::<f64>() / spectrum.len() as f64;
    let floor = AMPLITUDE_FLOOR * mean_amp;
    let log_amp: Vec<f64> = spectrum.iter().map(|c| (c.norm() + floor).ln()).collect();
    let local_mean = box_filter3(&log_amp, ww, wh);
    for (i, c) in spectrum.iter_mut().enumerate() {
        let residual = log_amp[i] - local_mean[i];
        *c = Complex::from_polar(residual.exp(), c.arg());
    }
    fft2(&mut spectrum, ww, wh, true);

    let energy: Vec<f64> = spectrum.iter().map(|c| c.norm_sqr()).collect();
    let smooth = gaussian_blur(&energy, ww, wh, SMOOTH_SIGMA);
    let full = resample_bilinear(&smooth, ww, wh, w as usize, h as usize);

    let (lo, hi) = full
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi - lo).is_finite() || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return zeros();
    }
    let values = full.iter().map(|&v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    SaliencyMap {
        width: w,
        height: h,
        values,
        uninformative: false,
    }
}

/// Mean saliency over `bbox` clipped to the map.
pub fn box_saliency(map: &SaliencyMap, bbox: &BBox) -> Result<f64> {
    let clipped = bbox.clip(map.width, map.height).ok_or_else(|| {
        Error::Input(format!(
            "box {bbox} lies outside the {}x{} saliency map",
            map.width, map.height
        ))
    })?;
    let mut sum = 0.0;
    for y in clipped.y..clipped.y2() {
        let row = y as usize * map.width as usize;
        sum += map.values[row + clipped.x as usize..row + clipped.x2() as usize]
            .iter()
            .sum::<f64>();
    }
    Ok((sum / clipped.area()).clamp(0.0, 1.0))
}

fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        col_fft.process(&mut column);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
}

fn box_filter3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in [-1i64, 0, 1] {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                for dx in [-1i64, 0, 1] {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    acc += src[yy * w + xx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

fn gaussian_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

use std::path::Path;

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// Row-major image with 1 (gray) or 3 (RGB) interleaved channels, values in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{channels} image needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self> {
        Image::new(width, height, 1, vec![value; width as usize * height as usize])
    }

    /// Builds a gray image from a closure over pixel coordinates. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Image::new(width, height, 1, data)
    }

    /// Decodes a PNG or JPEG file. Gray inputs stay single-channel, anything
    /// else is converted to RGB.
    pub fn open(path: &Path) -> Result<Self> {
        let dynamic = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Image::from_dynamic(&dynamic))
    }

    pub fn from_dynamic(dynamic: &image::DynamicImage) -> Self {
        let (width, height) = (dynamic.width(), dynamic.height());
        let (channels, data) = if dynamic.color().channel_count() <= 2 {
            let luma = dynamic.to_luma8();
            (1, luma.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        } else {
            let rgb = dynamic.to_rgb8();
            (3, rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
        };
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Value of a single-channel pixel (first channel for RGB).
    #[inline]
    pub fn at(&self, x: u32, y: u32) -> f64 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels as usize]
    }

    /// Replicate-border access.
    #[inline]
    pub fn at_clamped(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.at(x, y)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.data[0];
        self.data.iter().all(|&v| v == first)
    }

    /// ITU-R 601 luma. Single-channel input is returned unchanged.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            // 0.299 R + 0.587 G + 0.114 B, arranged so white maps exactly to 1
            .map(|p| (p[2] + 0.299 * (p[0] - p[2]) + 0.587 * (p[1] - p[2])).clamp(0.0, 1.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Bilinear resize of a single-channel image, pixel-center aligned.
    pub fn resize_bilinear(&self, new_width: u32, new_height: u32) -> Result<Image> {
        if self.channels != 1 {
            return Err(Error::Input("resize expects a single-channel image".into()));
        }
        if new_width == 0 || new_height == 0 {
            return Err(Error::Dimension(format!(
                "cannot resize to {new_width}x{new_height}"
            )));
        }
        if new_width == self.width && new_height == self.height {
            return Ok(self.clone());
        }
        let data = resample_bilinear(
            &self.data,
            self.width as usize,
            self.height as usize,
            new_width as usize,
            new_height as usize,
        );
        Ok(Image {
            width: new_width,
            height: new_height,
            channels: 1,
            data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn crop(&self, bbox: &BBox) -> Result<Image> {
        if !bbox.fits_in(self.width, self.height) {
            return Err(Error::Dimension(format!(
                "box {bbox} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(bbox.w as usize * bbox.h as usize * c);
        for y in bbox.y..bbox.y2() {
            let row = (y as usize * self.width as usize + bbox.x as usize) * c;
            data.extend_from_slice(&self.data[row..row + bbox.w as usize * c]);
        }
        Ok(Image {
            width: bbox.w,
            height: bbox.h,
            channels: self.channels,
            data,
        })
    }

    /// Rotates a single-channel image by 90° clockwise.
    pub fn rotate90(&self) -> Image {
        let (w, h) = (self.width as usize, self.height as usize);
        let c = self.channels as usize;
        let mut data = vec![0.0; self.data.len()];
        // source (x, y) lands at (h - 1 - y, x) in the h×w output
        for y in 0..h {
            for x in 0..w {
                let nx = h - 1 - y;
                let ny = x;
                for k in 0..c {
                    data[(ny * h + nx) * c + k] = self.data[(y * w + x) * c + k];
                }
            }
        }
        Image {
            width: self.height,
            height: self.width,
            channels: self.channels,
            data,
        }
    }

    /// Mirrors the image left to right.
    pub fn flip_horizontal(&self) -> Image {
        let (w, h) = (self.width as usize, self.height as usize);
        let c = self.channels as usize;
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    data[(y * w + (w - 1 - x)) * c + k] = self.data[(y * w + x) * c + k];
                }
            }
        }
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data,
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let mut out = image::RgbImage::new(self.width, self.height);
        for (i, px) in out.pixels_mut().enumerate() {
            *px = if self.channels == 1 {
                let v = to_u8(self.data[i]);
                image::Rgb([v, v, v])
            } else {
                image::Rgb([
                    to_u8(self.data[3 * i]),
                    to_u8(self.data[3 * i + 1]),
                    to_u8(self.data[3 * i + 2]),
                ])
            };
        }
        out
    }
}

/// Bilinear resampling of a row-major plane, pixel-center aligned with
/// replicate borders.
pub(crate) fn resample_bilinear(
    src: &[f64],
    sw: usize,
    sh: usize,
    dw: usize,
    dh: usize,
) -> Vec<f64> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let taps = |d: usize, scale: f64, n: usize| {
        let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let xt: Vec<_> = (0..dw).map(|x| taps(x, sx, sw)).collect();
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let (y0, y1, fy) = taps(y, sy, sh);
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &xt {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Summed-area table for O(1) box sums.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(values: &[f64], width: usize, height: usize) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values[y * width + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        IntegralImage {
            width,
            height,
            sums,
        }
    }

    /// Sum over `[x1, x2) × [y1, y2)`; coordinates are clamped to the plane.
    pub fn sum(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> f64 {
        let (x1, x2) = (x1.min(self.width), x2.min(self.width));
        let (y1, y2) = (y1.min(self.height), y2.min(self.height));
        if x2 <= x1 || y2 <= y1 {
            return 0.0;
        }
        let s = self.width + 1;
        self.sums[y2 * s + x2] - self.sums[y1 * s + x2] - self.sums[y2 * s + x1]
            + self.sums[y1 * s + x1]
    }
}

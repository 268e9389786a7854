//! Seeded synthetic corpus: uniform backgrounds with one textured rectangle.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imgproc::Image;
use crate::pipeline::write_atomic;

pub const SYNTH_SIDE: u32 = 200;
pub const MIN_OBJECT_SIDE: u32 = 40;
const MAX_OBJECT_SIDE: u32 = 100;
/// Minimum difference between the object's mean intensity and the background.
pub const MIN_CONTRAST: f64 = 0.4;
const TEXTURE_AMPLITUDE: f64 = 0.1;
pub const CORPUS_SEED: u64 = 2024;
pub const OBJECT_CLASS: &str = "object";

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub id: String,
    pub image: Image,
    pub object: BBox,
    pub background: f64,
    /// |object mean - background|.
    pub contrast: f64,
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Stripes { period: u32, vertical: bool },
    Checker { period: u32 },
    Noise,
}

/// One image: background level, object polarity, size, position and texture
/// all drawn from `rng`.
pub fn synth_image(id: &str, rng: &mut ChaCha8Rng) -> SyntheticImage {
    let bright_object = rng.gen_bool(0.5);
    let background = rng.gen_range(0.1..0.3);
    let offset = rng.gen_range(0.45..0.55);
    let (background, object_mean) = if bright_object {
        (background, background + offset)
    } else {
        (1.0 - background, 1.0 - background - offset)
    };
    let w = rng.gen_range(MIN_OBJECT_SIDE..=MAX_OBJECT_SIDE);
    let h = rng.gen_range(MIN_OBJECT_SIDE..=MAX_OBJECT_SIDE);
    let x = rng.gen_range(0..=SYNTH_SIDE - w);
    let y = rng.gen_range(0..=SYNTH_SIDE - h);
    let object = BBox::new(x, y, w, h).expect("positive extent");
    let texture = match rng.gen_range(0..3) {
        0 => Texture::Stripes {
            period: rng.gen_range(4..=10),
            vertical: rng.gen_bool(0.5),
        },
        1 => Texture::Checker {
            period: rng.gen_range(4..=10),
        },
        _ => Texture::Noise,
    };
    let noise: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // zero-mean pattern in [-1, 1]
    let pattern = |dx: u32, dy: u32| -> f64 {
        match texture {
            Texture::Stripes { period, vertical } => {
                let t = if vertical { dx } else { dy };
                if (t / period) % 2 == 0 { 1.0 } else { -1.0 }
            }
            Texture::Checker { period } => {
                if (dx / period + dy / period) % 2 == 0 { 1.0 } else { -1.0 }
            }
            Texture::Noise => noise[(dy * w + dx) as usize],
        }
    };
    let image = Image::from_fn(SYNTH_SIDE, SYNTH_SIDE, |px, py| {
        if object.contains_point(px as f64 + 0.5, py as f64 + 0.5) {
            object_mean + TEXTURE_AMPLITUDE * pattern(px - x, py - y)
        } else {
            background
        }
    })
    .expect("valid dimensions");
    let inside = (y..y + h).flat_map(|py| (x..x + w).map(move |px| (px, py)));
    let mean = inside.map(|(px, py)| image.at(px, py)).sum::<f64>() / (w * h) as f64;
    SyntheticImage {
        id: id.to_string(),
        image,
        object,
        background,
        contrast: (mean - background).abs(),
    }
}

/// `count` images named `synth_000`, `synth_001`, ... from a fixed seed.
pub fn synth_corpus(count: usize, seed: u64) -> Vec<SyntheticImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| synth_image(&format!("synth_{i:03}"), &mut rng)).collect()
}

/// Ground-truth file contents (`image_id class x y w h`).
pub fn ground_truth_text(corpus: &[SyntheticImage]) -> String {
    let mut out = String::from("# image_id class x y w h\n");
    for s in corpus {
        let b = s.object;
        let _ = writeln!(out, "{} {OBJECT_CLASS} {} {} {} {}", s.id, b.x, b.y, b.w, b.h);
    }
    out
}

/// Writes `<id>.png` for every image plus `ground_truth.txt` into `dir`.
pub fn write_corpus(dir: &Path, corpus: &[SyntheticImage]) -> Result<()> {
    for s in corpus {
        let path = dir.join(format!("{}.png", s.id));
        let gray = image::DynamicImage::ImageRgb8(s.image.to_rgb8()).into_luma8();
        let mut bytes = Vec::new();
        gray.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.clone(),
                source: e,
            })?;
        write_atomic(&path, &bytes)?;
    }
    write_atomic(&dir.join("ground_truth.txt"), ground_truth_text(corpus).as_bytes())
}

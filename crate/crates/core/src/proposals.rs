//! Candidate boxes with objectness, saliency and overall scores.
//!
//! Proposals come either from a precomputed file (`x y w h score` per line)
//! or from a built-in sliding-window generator that scores windows by how
//! much more gradient energy they hold than their immediate surroundings.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imgproc::{gradients, Image, IntegralImage, SaliencyMap};

pub const DEFAULT_PROPOSALS: usize = 1000;

/// Box plus its scores. `score == s_obj * s_sal` always holds; before
/// saliency is combined in, `s_sal` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub bbox: BBox,
    pub s_obj: f64,
    pub s_sal: f64,
    pub score: f64,
}

impl ScoredProposal {
    pub fn new(bbox: BBox, s_obj: f64) -> Self {
        ScoredProposal {
            bbox,
            s_obj,
            s_sal: 1.0,
            score: s_obj,
        }
    }

    pub fn with_saliency(self, s_sal: f64) -> Self {
        ScoredProposal {
            s_sal,
            score: self.s_obj * s_sal,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Generated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub proposals: Vec<ScoredProposal>,
    pub provenance: Provenance,
    /// All raw objectness scores were equal, so `s_obj` carries no ranking
    /// information.
    pub uninformative_objectness: bool,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn boxes(&self) -> impl Iterator<Item = BBox> + '_ {
        self.proposals.iter().map(|p| p.bbox)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.proposals.iter().map(|p| p.score).collect()
    }

    /// Keeps the proposals at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ProposalSet {
        ProposalSet {
            proposals: indices.iter().map(|&i| self.proposals[i]).collect(),
            ..self.clone_empty()
        }
    }

    fn clone_empty(&self) -> ProposalSet {
        ProposalSet {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            proposals: Vec::new(),
            provenance: self.provenance,
            uninformative_objectness: self.uninformative_objectness,
        }
    }
}

/// Min-max normalization; an all-equal input maps to 1.0 everywhere. The
/// returned flag reports that degenerate case.
fn normalize_scores(raw: &[f64]) -> (Vec<f64>, bool) {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return (vec![1.0; raw.len()], true);
    }
    let span = hi - lo;
    (raw.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect(), false)
}

/// Orders candidates by raw score (descending, stable), drops exact duplicate
/// boxes and keeps the first `n`.
fn rank_and_truncate(candidates: Vec<(BBox, f64, f64)>, n: usize) -> Vec<ScoredProposal> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1));
    let mut seen = HashSet::new();
    order
        .into_iter()
        .filter(|&i| seen.insert(candidates[i].0))
        .take(n)
        .map(|i| ScoredProposal::new(candidates[i].0, candidates[i].2))
        .collect()
}

/// Reads a proposal file for an image of the given dimensions.
pub fn ingest_proposals(
    path: &Path,
    image_id: &str,
    dims: (u32, u32),
    n: usize,
) -> Result<ProposalSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_proposals(&text, path, image_id, dims, n)
}

pub fn parse_proposals(
    text: &str,
    path: &Path,
    image_id: &str,
    (width, height): (u32, u32),
    n: usize,
) -> Result<ProposalSet> {
    if n == 0 {
        return Err(Error::Input("proposal count N must be at least 1".into()));
    }
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 5 {
            return Err(Error::format(
                path,
                lineno,
                format!("expected 5 fields `x y w h score`, found {}", fields.len()),
            ));
        }
        let mut v = [0.0f64; 5];
        for (slot, field) in v.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::format(path, lineno, format!("invalid number `{field}`")))?;
        }
        let [x, y, w, h, score] = v;
        let x1 = x.round().clamp(0.0, width as f64);
        let y1 = y.round().clamp(0.0, height as f64);
        let x2 = (x + w).round().clamp(0.0, width as f64);
        let y2 = (y + h).round().clamp(0.0, height as f64);
        if x2 - x1 < 1.0 || y2 - y1 < 1.0 {
            return Err(Error::format(
                path,
                lineno,
                format!("box ({x}, {y}, {w}, {h}) is empty after clamping to {width}x{height}"),
            ));
        }
        let bbox = BBox::from_corners(x1 as u32, y1 as u32, x2 as u32, y2 as u32)
            .map_err(|e| Error::format(path, lineno, e.to_string()))?;
        records.push((bbox, score));
    }
    if records.is_empty() {
        return Err(Error::format(path, 0, "no proposal records"));
    }

    let raw: Vec<f64> = records.iter().map(|r| r.1).collect();
    let (normalized, degenerate) = normalize_scores(&raw);
    let candidates = records
        .into_iter()
        .zip(normalized)
        .map(|((bbox, raw), s_obj)| (bbox, raw, s_obj))
        .collect();
    Ok(ProposalSet {
        image_id: image_id.to_string(),
        width,
        height,
        proposals: rank_and_truncate(candidates, n),
        provenance: Provenance::Ingested,
        uninformative_objectness: degenerate,
    })
}

/// Window aspect ratios (width / height) of the generator lattice.
pub const ASPECTS: [f64; 5] = [0.5, 2.0 / 3.0, 1.0, 1.5, 2.0];
pub const SCALE_STEPS: usize = 8;
pub const MIN_GENERATOR_SIDE: u32 = 32;

/// Sliding windows over the scale/aspect lattice, in lattice order.
pub fn window_lattice(width: u32, height: u32) -> Vec<BBox> {
    let min_dim = width.min(height) as f64;
    let mut windows = Vec::new();
    for k in 0..SCALE_STEPS {
        let frac = 0.1 * 9f64.powf(k as f64 / (SCALE_STEPS - 1) as f64);
        let side = frac * min_dim;
        for &aspect in &ASPECTS {
            let w = (side * aspect.sqrt()).round() as u32;
            let h = (side / aspect.sqrt()).round() as u32;
            if w == 0 || h == 0 || w > width || h > height {
                continue;
            }
            let sx = ((w as f64 / 8.0).round() as u32).max(1);
            let sy = ((h as f64 / 8.0).round() as u32).max(1);
            let mut y = 0;
            while y + h <= height {
                let mut x = 0;
                while x + w <= width {
                    windows.push(BBox { x, y, w, h });
                    x += sx;
                }
                y += sy;
            }
        }
    }
    windows
}

/// Mean gradient magnitude inside the window minus the mean over a ring of
/// width `max(1, round(min(w, h) / 8))` around it (clipped to the image),
/// weighted by `sqrt(w * h)`. The weight makes the score grow with the amount
/// of enclosed edge energy per unit of perimeter rather than per unit of
/// area, so a box around a whole object beats a box around one of its corners.
fn window_objectness(energy: &IntegralImage, bbox: &BBox, width: u32, height: u32) -> f64 {
    let inner = energy.sum(bbox.x as usize, bbox.y as usize, bbox.x2() as usize, bbox.y2() as usize)
        / bbox.area();
    let margin = ((bbox.w.min(bbox.h) as f64 / 8.0).round() as u32).max(1);
    let ox1 = bbox.x.saturating_sub(margin);
    let oy1 = bbox.y.saturating_sub(margin);
    let ox2 = (bbox.x2() + margin).min(width);
    let oy2 = (bbox.y2() + margin).min(height);
    let outer_area = (ox2 - ox1) as f64 * (oy2 - oy1) as f64;
    let ring_area = outer_area - bbox.area();
    let ring = if ring_area > 0.0 {
        let outer = energy.sum(ox1 as usize, oy1 as usize, ox2 as usize, oy2 as usize);
        (outer - inner * bbox.area()) / ring_area
    } else {
        0.0
    };
    (inner - ring) * bbox.area().sqrt()
}

/// Built-in proposal generator. A pure function of the image and `n`.
pub fn generate_proposals(img: &Image, image_id: &str, n: usize) -> Result<ProposalSet> {
    let (width, height) = (img.width(), img.height());
    if width < MIN_GENERATOR_SIDE || height < MIN_GENERATOR_SIDE {
        return Err(Error::Dimension(format!(
            "proposal generation needs at least {MIN_GENERATOR_SIDE}x{MIN_GENERATOR_SIDE} pixels, got {width}x{height}"
        )));
    }
    if n == 0 {
        return Err(Error::Input("proposal count N must be at least 1".into()));
    }
    let grad = gradients(&img.to_grayscale())?;
    let energy = IntegralImage::new(&grad.magnitude, grad.width, grad.height);

    let mut windows = window_lattice(width, height);
    // smaller area first, then raster order; the stable score sort below
    // keeps this as the tie-break
    windows.sort_by_key(|b| (b.w as u64 * b.h as u64, b.y, b.x));
    let candidates = windows
        .into_iter()
        .map(|b| {
            let raw = window_objectness(&energy, &b, width, height);
            (b, raw, raw)
        })
        .collect();
    // normalized over the returned windows so the set spans [0, 1]
    let mut proposals = rank_and_truncate(candidates, n);
    let raw: Vec<f64> = proposals.iter().map(|p| p.s_obj).collect();
    let (normalized, degenerate) = normalize_scores(&raw);
    for (p, s) in proposals.iter_mut().zip(normalized) {
        *p = ScoredProposal::new(p.bbox, s);
    }
    Ok(ProposalSet {
        image_id: image_id.to_string(),
        width,
        height,
        proposals,
        provenance: Provenance::Generated,
        uninformative_objectness: degenerate,
    })
}

/// Attaches mean box saliency to every proposal; `score = s_obj * s_sal`.
pub fn combine_scores(set: &ProposalSet, map: &SaliencyMap) -> Result<ProposalSet> {
    if (map.width(), map.height()) != (set.width, set.height) {
        return Err(Error::Dimension(format!(
            "saliency map is {}x{}, proposals are for a {}x{} image",
            map.width(),
            map.height(),
            set.width,
            set.height
        )));
    }
    let integral = map.integral();
    let proposals = set
        .proposals
        .iter()
        .map(|p| {
            let b = p.bbox.clip(set.width, set.height).ok_or_else(|| {
                Error::Input(format!("proposal {} lies outside the image", p.bbox))
            })?;
            let mean = integral.sum(b.x as usize, b.y as usize, b.x2() as usize, b.y2() as usize)
                / b.area();
            Ok(p.with_saliency(mean.clamp(0.0, 1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProposalSet {
        proposals,
        ..set.clone_empty()
    })
}

/// Writes proposals in the ingestion format, using `s_obj` as the score.
pub fn write_proposals(set: &ProposalSet, out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "# x y w h score")?;
    for p in &set.proposals {
        writeln!(out, "{} {} {} {} {}", p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h, p.s_obj)?;
    }
    Ok(())
}

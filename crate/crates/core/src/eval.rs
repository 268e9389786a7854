//! CorLoc evaluation: IoU, per-image verdicts and per-class aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// An image is correctly localized when its best IoU exceeds this value.
pub const CORLOC_THRESHOLD: f64 = 0.5;

/// Intersection over union, with areas taken as `w * h`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let Some(inter) = a.intersection(b) else {
        return 0.0;
    };
    let i = inter.area();
    i / (a.area() + b.area() - i)
}

/// Best IoU of `pred` against any ground-truth box, and whether it clears
/// the (strict) CorLoc threshold.
pub fn image_correct(pred: &BBox, gts: &[BBox]) -> Result<(bool, f64)> {
    if gts.is_empty() {
        return Err(Error::Input("no ground-truth boxes to compare against".into()));
    }
    let best = gts.iter().map(|g| iou(pred, g)).fold(0.0, f64::max);
    Ok((best > CORLOC_THRESHOLD, best))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: String,
    pub bbox: BBox,
}

/// Ground-truth instances keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthIndex {
    images: BTreeMap<String, Vec<GroundTruth>>,
}

impl GroundTruthIndex {
    pub fn insert(&mut self, image_id: &str, class: &str, bbox: BBox) {
        self.images.entry(image_id.to_string()).or_default().push(GroundTruth {
            class: class.to_string(),
            bbox,
        });
    }

    pub fn get(&self, image_id: &str) -> Option<&[GroundTruth]> {
        self.images.get(image_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// One `image_id class x y w h` record per line; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut index = GroundTruthIndex::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|f| !f.is_empty())
                .collect();
            if fields.len() != 6 {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("expected `image_id class x y w h`, found {} fields", fields.len()),
                ));
            }
            let mut coords = [0u32; 4];
            for (slot, field) in coords.iter_mut().zip(&fields[2..]) {
                let v = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| {
                        Error::format(path, lineno, format!("invalid coordinate `{field}`"))
                    })?;
                *slot = v.round() as u32;
            }
            let bbox = BBox::new(coords[0], coords[1], coords[2], coords[3])
                .map_err(|e| Error::format(path, lineno, e.to_string()))?;
            index.insert(fields[0], fields[1], bbox);
        }
        if index.is_empty() {
            return Err(Error::format(path, 0, "no ground-truth records"));
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub image_id: String,
    pub correct: bool,
    pub best_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorLoc {
    pub class: String,
    pub images: usize,
    pub correct: usize,
    pub corloc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorLocReport {
    pub classes: Vec<ClassCorLoc>,
    /// Unweighted mean of the per-class percentages.
    pub mean_class_corloc: f64,
    /// Percentage of all evaluated images that are correct.
    pub image_corloc: f64,
    pub images: Vec<ImageVerdict>,
    /// Ground-truth ids with no result.
    pub skipped: Vec<String>,
}

pub fn percentage(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

pub fn mean_of(percentages: &[f64]) -> f64 {
    if percentages.is_empty() {
        0.0
    } else {
        percentages.iter().sum::<f64>() / percentages.len() as f64
    }
}

/// Aggregates CorLoc over `results` (image id, predicted box). A missing
/// prediction counts as a miss. An image contributes to every class it holds
/// an instance of, judged against that class's instances only; the
/// image-level verdict uses all instances.
pub fn corloc_dataset(
    results: &[(String, Option<BBox>)],
    gt: &GroundTruthIndex,
) -> Result<CorLocReport> {
    let missing: Vec<&str> = results
        .iter()
        .filter(|(id, _)| gt.get(id).is_none())
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Input(format!(
            "no ground truth for result ids: {}",
            missing.join(", ")
        )));
    }

    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut verdicts = Vec::with_capacity(results.len());
    let mut seen = BTreeSet::new();
    for (id, pred) in results {
        if !seen.insert(id.as_str()) {
            return Err(Error::Input(format!("duplicate result for image `{id}`")));
        }
        let instances = gt.get(id).unwrap_or_default();
        let all: Vec<BBox> = instances.iter().map(|g| g.bbox).collect();
        let (correct, best_iou) = match pred {
            Some(p) => image_correct(p, &all)?,
            None => (false, 0.0),
        };
        verdicts.push(ImageVerdict {
            image_id: id.clone(),
            correct,
            best_iou,
        });

        let classes: BTreeSet<&str> = instances.iter().map(|g| g.class.as_str()).collect();
        for class in classes {
            let boxes: Vec<BBox> = instances
                .iter()
                .filter(|g| g.class == class)
                .map(|g| g.bbox)
                .collect();
            let hit = match pred {
                Some(p) => image_correct(p, &boxes)?.0,
                None => false,
            };
            let entry = per_class.entry(class).or_default();
            entry.0 += 1;
            entry.1 += hit as usize;
        }
    }

    let classes: Vec<ClassCorLoc> = per_class
        .into_iter()
        .map(|(class, (images, correct))| ClassCorLoc {
            class: class.to_string(),
            images,
            correct,
            corloc: percentage(correct, images),
        })
        .collect();
    let mean_class_corloc = mean_of(&classes.iter().map(|c| c.corloc).collect::<Vec<_>>());
    let image_corloc = percentage(verdicts.iter().filter(|v| v.correct).count(), verdicts.len());
    let skipped = gt.image_ids().filter(|id| !seen.contains(id)).map(str::to_string).collect();

    Ok(CorLocReport {
        classes,
        mean_class_corloc,
        image_corloc,
        images: verdicts,
        skipped,
    })
}

impl CorLocReport {
    /// Plain-text table: one row of class names, one row of CorLoc values.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut header = String::from("Class");
        let mut row = String::from("CorLoc");
        for c in &self.classes {
            let _ = write!(header, " | {}", c.class);
            let _ = write!(row, " | {:.2}", c.corloc);
        }
        let _ = writeln!(out, "{header} | Average (%)");
        let _ = writeln!(out, "{row} | {:.2}", self.mean_class_corloc);
        let correct = self.images.iter().filter(|v| v.correct).count();
        let _ = writeln!(
            out,
            "images: {correct}/{} correct ({:.2}%)",
            self.images.len(),
            self.image_corloc
        );
        if !self.skipped.is_empty() {
            let _ = writeln!(out, "skipped (no result): {}", self.skipped.join(", "));
        }
        out
    }
}

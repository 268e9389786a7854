//! End-to-end localization: proposals, spectral filtering, grouping and
//! fusion, plus the result record, evaluation over a results directory and
//! overlay rendering.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::eval::{corloc_dataset, CorLocReport, GroundTruthIndex};
use crate::features::{
    build_codebook, extract_dense_descriptors_with_stride, hog_descriptor, quantize, spm_pool, DescriptorField,
    FeatureVector, DEFAULT_WORDS, DENSE_STRIDE,
};
use crate::grouping::{localize_survivors, Group, LocalizationResult, SpectralSummary, DEFAULT_K, DEFAULT_TOP_C};
use crate::imgproc::{compute_saliency, Image, SaliencyMap};
use crate::proposals::{combine_scores, generate_proposals, ProposalSet, Provenance};
use crate::spectral::{iterate_filter, FilterParams, DEFAULT_SIGMA_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_proposals: usize,
    pub stop_t: usize,
    pub knn_k: usize,
    pub top_c: usize,
    pub sigma_scale: f64,
    pub seed: u64,
    pub codebook_words: usize,
    pub dense_stride: u32,
    pub max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_proposals: 1000,
            stop_t: 100,
            knn_k: DEFAULT_K,
            top_c: DEFAULT_TOP_C,
            sigma_scale: DEFAULT_SIGMA_SCALE,
            seed: 42,
            codebook_words: DEFAULT_WORDS,
            dense_stride: DENSE_STRIDE,
            max_iters: 50,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Input(m));
        if self.stop_t < 2 {
            return fail(format!("stop size T must be at least 2, got {}", self.stop_t));
        }
        if self.n_proposals <= self.stop_t {
            return fail(format!(
                "proposal count N ({}) must exceed the stop size T ({})",
                self.n_proposals, self.stop_t
            ));
        }
        if self.knn_k < 2 {
            return fail(format!("k must be at least 2, got {}", self.knn_k));
        }
        if self.top_c < 1 {
            return fail("C must be at least 1".into());
        }
        if !(self.sigma_scale > 0.0 && self.sigma_scale.is_finite()) {
            return fail(format!("sigma scale must be positive, got {}", self.sigma_scale));
        }
        if self.codebook_words < 1 || self.dense_stride < 1 || self.max_iters < 1 {
            return fail("codebook size, dense stride and iteration cap must be positive".into());
        }
        Ok(())
    }

    fn filter_params(&self) -> FilterParams {
        FilterParams {
            stop_t: self.stop_t,
            max_iters: self.max_iters,
            sigma_scale: self.sigma_scale,
        }
    }
}

/// Optional precomputed inputs for one image.
#[derive(Debug, Clone, Default)]
pub struct ExternalInputs {
    pub proposals: Option<ProposalSet>,
    pub saliency: Option<SaliencyMap>,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct Localization {
    pub result: LocalizationResult,
    pub config: PipelineConfig,
    pub scored: ProposalSet,
    pub saliency_uninformative: bool,
    pub codebook_size: usize,
    pub descriptors: Option<DescriptorField>,
}

/// Runs the full pipeline on a decoded image.
pub fn localize(img: &Image, image_id: &str, config: &PipelineConfig, inputs: ExternalInputs) -> Result<Localization> {
    localize_impl(img, image_id, config, inputs, false)
}

/// As [`localize`], also returning the dense descriptor field.
pub fn localize_keeping_descriptors(
    img: &Image,
    image_id: &str,
    config: &PipelineConfig,
    inputs: ExternalInputs,
) -> Result<Localization> {
    localize_impl(img, image_id, config, inputs, true)
}

fn localize_impl(
    img: &Image,
    image_id: &str,
    config: &PipelineConfig,
    inputs: ExternalInputs,
    keep_descriptors: bool,
) -> Result<Localization> {
    config.validate()?;
    let proposals = match inputs.proposals {
        Some(p) => {
            if (p.width, p.height) != (img.width(), img.height()) {
                return Err(Error::Dimension(format!(
                    "proposals are for a {}x{} image, `{image_id}` is {}x{}",
                    p.width,
                    p.height,
                    img.width(),
                    img.height()
                )));
            }
            ProposalSet {
                image_id: image_id.to_string(),
                ..p
            }
        }
        None => generate_proposals(img, image_id, config.n_proposals)?,
    };
    if proposals.is_empty() {
        return Err(Error::Input(format!("no proposals for `{image_id}`")));
    }
    let saliency = match inputs.saliency {
        Some(map) => map,
        None => compute_saliency(img),
    };
    let scored = combine_scores(&proposals, &saliency)?;

    let hog = scored
        .proposals
        .iter()
        .map(|p| hog_descriptor(img, &p.bbox))
        .collect::<Result<Vec<_>>>()?;
    let filtered = iterate_filter(&scored, &hog, config.filter_params())?;
    let survivors = filtered.survivors;

    let field = extract_dense_descriptors_with_stride(img, config.dense_stride)?;
    let (b_final, top_groups, codebook_size) = if survivors.len() < 2 {
        (survivors.proposals[0].bbox, Vec::new(), 0)
    } else {
        let codebook = build_codebook(&field, config.codebook_words, config.seed)?;
        let words = quantize(&field, &codebook)?;
        let spm = survivors
            .proposals
            .iter()
            .map(|p| spm_pool(&words, &p.bbox, codebook.len()))
            .collect::<Result<Vec<FeatureVector>>>()?;
        let (b, g) = localize_survivors(&survivors, &spm, config.knn_k, config.top_c)?;
        (b, g, codebook.len())
    };

    Ok(Localization {
        result: LocalizationResult {
            image_id: image_id.to_string(),
            b_final,
            survivors,
            top_groups,
            trace: SpectralSummary {
                stop: filtered.stop,
                steps: filtered.trace,
            },
        },
        config: *config,
        scored,
        saliency_uninformative: saliency.uninformative,
        codebook_size,
        descriptors: keep_descriptors.then_some(field),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl ScoreStats {
    fn of(values: &[f64]) -> Self {
        let count = values.len();
        ScoreStats {
            count,
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / count.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordProposal {
    pub bbox: BBox,
    pub s_obj: f64,
    pub s_sal: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordGroup {
    pub seed: usize,
    pub score: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordStep {
    pub size_before: usize,
    pub size_kept: usize,
    pub score_kept: f64,
    pub score_discarded: f64,
    pub sigma: f64,
    pub fiedler_value: f64,
    pub median_fallback: bool,
}

/// Per-image output document. Serialized as pretty JSON; the field order is
/// fixed so identical runs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub config: PipelineConfig,
    pub provenance: Provenance,
    pub uninformative_objectness: bool,
    pub uninformative_saliency: bool,
    pub s_obj: ScoreStats,
    pub s_sal: ScoreStats,
    pub s: ScoreStats,
    pub stop: String,
    pub trace: Vec<RecordStep>,
    pub codebook_size: usize,
    pub survivors: Vec<RecordProposal>,
    pub top_groups: Vec<RecordGroup>,
    pub b_final: Option<BBox>,
    /// Set when the image could not be localized.
    pub failure: Option<String>,
}

impl ResultRecord {
    pub fn from_localization(loc: &Localization) -> Self {
        let r = &loc.result;
        let s = &loc.scored;
        let collect = |f: fn(&crate::proposals::ScoredProposal) -> f64| s.proposals.iter().map(f).collect::<Vec<_>>();
        ResultRecord {
            image_id: r.image_id.clone(),
            width: s.width,
            height: s.height,
            config: loc.config,
            provenance: s.provenance,
            uninformative_objectness: s.uninformative_objectness,
            uninformative_saliency: loc.saliency_uninformative,
            s_obj: ScoreStats::of(&collect(|p| p.s_obj)),
            s_sal: ScoreStats::of(&collect(|p| p.s_sal)),
            s: ScoreStats::of(&collect(|p| p.score)),
            stop: serde_json::to_value(r.trace.stop)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            trace: r
                .trace
                .steps
                .iter()
                .map(|t| RecordStep {
                    size_before: t.size_before,
                    size_kept: t.size_kept,
                    score_kept: t.score_kept,
                    score_discarded: t.score_discarded,
                    sigma: t.sigma,
                    fiedler_value: t.fiedler_value,
                    median_fallback: t.median_fallback,
                })
                .collect(),
            codebook_size: loc.codebook_size,
            survivors: r
                .survivors
                .proposals
                .iter()
                .map(|p| RecordProposal {
                    bbox: p.bbox,
                    s_obj: p.s_obj,
                    s_sal: p.s_sal,
                    s: p.score,
                })
                .collect(),
            top_groups: r.top_groups.iter().map(record_group).collect(),
            b_final: Some(r.b_final),
            failure: None,
        }
    }

    /// Record for an image the pipeline could not localize.
    pub fn failure(image_id: &str, config: &PipelineConfig, reason: &str) -> Self {
        let empty = ScoreStats {
            count: 0,
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        };
        ResultRecord {
            image_id: image_id.to_string(),
            width: 0,
            height: 0,
            config: *config,
            provenance: Provenance::Generated,
            uninformative_objectness: false,
            uninformative_saliency: false,
            s_obj: empty.clone(),
            s_sal: empty.clone(),
            s: empty,
            stop: String::new(),
            trace: Vec::new(),
            codebook_size: 0,
            survivors: Vec::new(),
            top_groups: Vec::new(),
            b_final: None,
            failure: Some(reason.to_string()),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result records always serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))
    }
}

fn record_group(g: &Group) -> RecordGroup {
    RecordGroup {
        seed: g.seed,
        score: g.score,
        members: g.members.clone(),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads every `*.json` record in `dir` (sorted by file name) and scores the
/// predictions against `gt`.
pub fn evaluate(results_dir: &Path, gt: &GroundTruthIndex) -> Result<CorLocReport> {
    let mut paths: Vec<PathBuf> = fs::read_dir(results_dir)
        .map_err(|e| Error::io(results_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no result records in {}", results_dir.display())));
    }
    let results = paths
        .iter()
        .map(|p| ResultRecord::load(p).map(|r| (r.image_id, r.b_final)))
        .collect::<Result<Vec<_>>>()?;
    corloc_dataset(&results, gt)
}

const STROKE: u32 = 3;
pub const PRED_COLOR: [u8; 3] = [0, 255, 0];
pub const GT_COLOR: [u8; 3] = [255, 0, 0];

fn draw_rect(canvas: &mut image::RgbImage, b: &BBox, color: [u8; 3]) {
    let (w, h) = canvas.dimensions();
    let Some(b) = b.clip(w, h) else { return };
    for y in b.y..b.y2() {
        for x in b.x..b.x2() {
            let on_edge = x < b.x + STROKE || x + STROKE >= b.x2() || y < b.y + STROKE || y + STROKE >= b.y2();
            if on_edge {
                canvas.put_pixel(x, y, image::Rgb(color));
            }
        }
    }
}

/// Draws ground truths in red and the prediction in green on top, each as a
/// 3-pixel rectangle inside the box, clipped to the image.
pub fn render_overlay(img: &Image, pred: Option<&BBox>, gts: &[BBox]) -> image::RgbImage {
    let mut canvas = img.to_rgb8();
    for g in gts {
        draw_rect(&mut canvas, g, GT_COLOR);
    }
    if let Some(p) = pred {
        draw_rect(&mut canvas, p, PRED_COLOR);
    }
    canvas
}

/// Encodes an overlay as PNG and writes it atomically.
pub fn write_overlay(path: &Path, canvas: &image::RgbImage) -> Result<()> {
    let mut bytes = Vec::new();
    canvas
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = [
            PipelineConfig {
                n_proposals: 100,
                ..Default::default()
            },
            PipelineConfig {
                stop_t: 1,
                ..Default::default()
            },
            PipelineConfig {
                knn_k: 1,
                ..Default::default()
            },
            PipelineConfig {
                top_c: 0,
                ..Default::default()
            },
            PipelineConfig {
                sigma_scale: 0.0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Input(_))), "{c:?}");
        }
    }

    #[test]
    fn overlay_colours_and_size() {
        let img = Image::filled(40, 30, 0.5).unwrap();
        let b = BBox::new(5, 5, 20, 15).unwrap();
        let out = render_overlay(&img, Some(&b), &[b, BBox::new(30, 20, 20, 20).unwrap()]);
        assert_eq!(out.dimensions(), (40, 30));
        assert_eq!(out.get_pixel(5, 5).0, PRED_COLOR);
        assert_eq!(out.get_pixel(24, 19).0, PRED_COLOR);
        assert_eq!(out.get_pixel(7, 7).0, PRED_COLOR);
        assert_eq!(out.get_pixel(8, 8).0, [128, 128, 128]);
        // the second ground truth is clipped at the image border
        assert_eq!(out.get_pixel(39, 29).0, GT_COLOR);
        assert_eq!(out.get_pixel(30, 20).0, GT_COLOR);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/r.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn record_roundtrip() {
        let r = ResultRecord::failure("x", &PipelineConfig::default(), "no proposals");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, r.to_json().as_bytes()).unwrap();
        assert_eq!(ResultRecord::load(&p).unwrap(), r);
    }

    #[test]
    fn evaluate_empty_dir_is_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(evaluate(dir.path(), &GroundTruthIndex::default()).is_err());
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use speclocal::eval::GroundTruthIndex;
use speclocal::imgproc::{Image, SaliencyMap};
use speclocal::pipeline::{
    evaluate, localize_keeping_descriptors, render_overlay, write_atomic, write_overlay, ExternalInputs,
    PipelineConfig, ResultRecord,
};
use speclocal::proposals::{combine_scores, generate_proposals, ingest_proposals, write_proposals};
use speclocal::synth::{synth_corpus, write_corpus, CORPUS_SEED};
use speclocal::{Error, Result};

/// Unsupervised single-object localization by iterative spectral filtering of
/// object proposals.
#[derive(Parser)]
#[command(name = "speclocal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localize the main object in one or more images and write result records.
    Localize(LocalizeArgs),
    /// Score a directory of result records against a ground-truth file.
    Evaluate(EvaluateArgs),
    /// Write built-in proposals for an image in the proposal file format.
    Proposals(ProposalsArgs),
    /// Write the seeded synthetic corpus and its ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Number of proposals N.
    #[arg(long, default_value_t = 1000)]
    n_proposals: usize,
    /// Stop filtering once at most T proposals remain.
    #[arg(long, default_value_t = 100)]
    stop_t: usize,
    /// Group size k.
    #[arg(long, default_value_t = 10)]
    knn_k: usize,
    /// Number of groups C fused into the final window.
    #[arg(long, default_value_t = 5)]
    top_c: usize,
    /// Gaussian width as a fraction of the largest feature distance.
    #[arg(long, default_value_t = 0.05)]
    sigma_scale: f64,
    /// Seed for codebook training.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    codebook_words: usize,
    #[arg(long, default_value_t = 4)]
    dense_stride: u32,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
}

impl ConfigArgs {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            n_proposals: self.n_proposals,
            stop_t: self.stop_t,
            knn_k: self.knn_k,
            top_c: self.top_c,
            sigma_scale: self.sigma_scale,
            seed: self.seed,
            codebook_words: self.codebook_words,
            dense_stride: self.dense_stride,
            max_iters: self.max_iters,
        }
    }
}

#[derive(Args)]
struct LocalizeArgs {
    /// Images (PNG, JPEG or PNM) or directories of images.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Proposal file, or a directory holding `<image id>.txt` files.
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// Saliency map, or a directory holding `<image id>.png`/`.pgm` maps.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// Directory for `<image id>.json` result records.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Directory for `<image id>.png` overlays.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Ground-truth file; its boxes are drawn in red on overlays.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Directory for raw dense descriptors (`<image id>.f32`, little-endian).
    #[arg(long)]
    dump_descriptors: Option<PathBuf>,
    /// Print the filtering trace of every image to stderr.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of result records.
    results: PathBuf,
    /// Ground-truth file (`image_id class x y w h` per line).
    #[arg(long)]
    gt: PathBuf,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ProposalsArgs {
    image: PathBuf,
    /// Output proposal file.
    #[arg(long)]
    out: PathBuf,
    #[arg(short = 'n', long, default_value_t = 1000)]
    n_proposals: usize,
    /// Rank by objectness times the mean saliency of this map instead of
    /// objectness alone.
    #[arg(long)]
    saliency: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = CORPUS_SEED)]
    seed: u64,
}

const IMAGE_EXTENSIONS: [&str; 7] = ["png", "jpg", "jpeg", "pgm", "ppm", "pnm", "pbm"];

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn expand_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_image(f))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Input("no images to process".into()));
    }
    Ok(out)
}

fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `path` itself when it is a file, otherwise the first `<id>.<ext>` inside it.
fn resolve(path: &Path, id: &str, exts: &[&str]) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    exts.iter()
        .map(|e| path.join(format!("{id}.{e}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::Input(format!("no {} file for `{id}` in {}", exts.join("/"), path.display())))
}

fn localize_one(path: &Path, args: &LocalizeArgs, config: &PipelineConfig, gt: Option<&GroundTruthIndex>) -> Result<()> {
    let id = image_id(path);
    let img = Image::open(path)?;
    let dims = (img.width(), img.height());
    let proposals = match &args.proposals {
        Some(p) => Some(ingest_proposals(&resolve(p, &id, &["txt"])?, &id, dims, config.n_proposals)?),
        None => None,
    };
    let saliency = match &args.saliency {
        Some(p) => Some(SaliencyMap::load(&resolve(p, &id, &["png", "pgm"])?, dims.0, dims.1)?),
        None => None,
    };
    let loc = localize_keeping_descriptors(&img, &id, config, ExternalInputs { proposals, saliency })?;
    let record = ResultRecord::from_localization(&loc);
    write_atomic(&args.out.join(format!("{id}.json")), record.to_json().as_bytes())?;

    if args.trace {
        let mut lines = format!("{id}: stop={}\n", record.stop);
        for (i, t) in record.trace.iter().enumerate() {
            lines.push_str(&format!(
                "{id}: iter {i}: {} -> {} kept {:.6} discarded {:.6} sigma {:.6}\n",
                t.size_before, t.size_kept, t.score_kept, t.score_discarded, t.sigma
            ));
        }
        eprint!("{lines}");
    }
    if let Some(dir) = &args.overlay {
        let gts: Vec<_> = gt
            .and_then(|g| g.get(&id))
            .map(|v| v.iter().map(|g| g.bbox).collect())
            .unwrap_or_default();
        let canvas = render_overlay(&img, Some(&loc.result.b_final), &gts);
        write_overlay(&dir.join(format!("{id}.png")), &canvas)?;
    }
    if let (Some(dir), Some(field)) = (&args.dump_descriptors, &loc.descriptors) {
        let mut bytes = Vec::with_capacity(field.descriptors.len() * 4);
        field.write_le_f32(&mut bytes).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(format!("{id}.f32")), &bytes)?;
    }
    Ok(())
}

fn run_localize(args: &LocalizeArgs) -> Result<()> {
    let config = args.config.config();
    config.validate()?;
    let images = expand_images(&args.images)?;
    let gt = args.gt.as_deref().map(GroundTruthIndex::load).transpose()?;

    let threads = std::env::var("SPECLOCAL_THREADS")
        .ok()
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Input(format!("SPECLOCAL_THREADS must be a positive integer, got `{v}`")))
        })
        .transpose()?
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Input(format!("cannot start worker pool: {e}")))?;

    let outcomes: Vec<(PathBuf, Result<()>)> = pool.install(|| {
        images
            .par_iter()
            .map(|p| (p.clone(), localize_one(p, args, &config, gt.as_ref())))
            .collect()
    });

    let mut worst: Option<Error> = None;
    let mut failed = 0;
    for (path, outcome) in outcomes {
        if let Err(e) = outcome {
            failed += 1;
            if images.len() > 1 {
                eprintln!("error: {}: {e}", path.display());
            }
            let id = image_id(&path);
            let record = ResultRecord::failure(&id, &config, &e.to_string());
            write_atomic(&args.out.join(format!("{id}.json")), record.to_json().as_bytes())?;
            if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                worst = Some(e);
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(e) if images.len() == 1 => Err(e),
        Some(e) => Err(match e {
            Error::Numeric(_) => Error::Numeric(format!("{failed} of {} images failed", images.len())),
            _ => Error::Input(format!("{failed} of {} images failed", images.len())),
        }),
    }
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let gt = GroundTruthIndex::load(&args.gt)?;
    let report = evaluate(&args.results, &gt)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

fn run_proposals(args: &ProposalsArgs) -> Result<()> {
    let img = Image::open(&args.image)?;
    let mut set = generate_proposals(&img, &image_id(&args.image), args.n_proposals)?;
    if let Some(p) = &args.saliency {
        let map = SaliencyMap::load(p, img.width(), img.height())?;
        set = combine_scores(&set, &map)?;
        // the file format carries one score; fold saliency into it
        for p in &mut set.proposals {
            p.s_obj = p.score;
        }
    }
    let mut bytes = Vec::new();
    write_proposals(&set, &mut bytes).map_err(|e| Error::io(&args.out, e))?;
    write_atomic(&args.out, &bytes)
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    write_corpus(&args.out, &synth_corpus(args.count, args.seed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Localize(a) => run_localize(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Proposals(a) => run_proposals(a),
        Command::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use canthi::eval::{
    benchmark, load_annotations, synth_eye_batch, synth_face_batch, write_annotations, BenchItem, Source,
};
use canthi::eval::{SynthEyeParams, SynthFaceParams, SynthSample};
use canthi::image::draw_annotations;
use canthi::io::{read_image, write_gray, write_rgb};
use canthi::pipeline::{StageImages, StageTimings};
use canthi::{AnyImage, EyeSide, FrameResult, Pipeline, PipelineConfig, Point, Rect};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

/// Locate nasal and temporal eye corners in face images.
#[derive(Parser, Debug)]
#[command(name = "canthi", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Detect eye corners in images or frame directories.
    Detect(DetectArgs),
    /// Score the pipeline against an annotation CSV.
    Eval(EvalArgs),
    /// Write synthetic images with a ground-truth CSV.
    Synth(SynthArgs),
}

macro_rules! module_flags {
    ($($field:ident: $help:literal),* $(,)?) => {
        #[derive(Args, Debug, Default)]
        #[command(next_help_heading = "Pipeline options")]
        struct ModuleFlags {
            /// Skip CLAHE enhancement.
            #[arg(long)]
            no_clahe: bool,
            $(
                #[arg(long, value_name = "VALUE", help = $help)]
                $field: Option<String>,
            )*
        }

        impl ModuleFlags {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                if self.no_clahe {
                    out.push(("no_clahe", "true"));
                }
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

module_flags! {
    clahe: "Enable CLAHE (true/false)",
    clahe_tiles: "CLAHE tile grid, e.g. 8x8",
    clahe_clip: "CLAHE clip limit",
    face_model: "Face cascade XML",
    eye_model: "Eye cascade XML",
    scale_factor: "Face scan scale step",
    min_neighbors: "Face hits needed per detection",
    min_size: "Smallest face window, px",
    max_size: "Largest face window, px or none",
    eye_scale_factor: "Eye scan scale step",
    eye_min_neighbors: "Eye hits needed per detection",
    eye_min_size: "Smallest eye window, px",
    roi_top: "Eye band top, fraction of face height",
    roi_bottom: "Eye band bottom, fraction of face height",
    roi_split: "Left/right split, fraction of face width",
    min_eye_frac: "Smallest eye window, fraction of face width",
    sclera_mode: "auto, color or gray",
    sclera_thresh: "auto or 0-255",
    se_axes: "Opening ellipse half axes at 100 px width, e.g. 3,2",
    harris_k: "Harris sensitivity k",
    harris_radius: "Harris window radius",
    nms_radius: "Non-maximum suppression radius",
    max_candidates: "Candidates kept per eye",
    rel_thresh: "Candidate floor relative to the strongest response",
    error_norm: "diagonal or raw",
}

#[derive(Args, Debug)]
struct Common {
    /// Flat key=value file; command-line flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write intermediate rasters per input into DIR.
    #[arg(long, value_name = "DIR")]
    dump_stages: Option<PathBuf>,
    /// Write an overlay image per input into DIR.
    #[arg(long, value_name = "DIR")]
    annotate: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[command(flatten)]
    module: ModuleFlags,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CropSide {
    Left,
    Right,
    /// Side of the single annotated eye (eval only).
    Auto,
}

#[derive(Args, Debug)]
struct DetectArgs {
    /// Image files or directories of frames.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Treat every input as one eye crop of this side.
    #[arg(long, value_enum)]
    crop_side: Option<CropSide>,
    /// Include per-stage timings (makes output run-dependent).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory holding `<image_id>.<ext>` files.
    images: PathBuf,
    /// Ground-truth CSV.
    annotations: PathBuf,
    /// Echo the annotations back instead of running the pipeline.
    #[arg(long)]
    oracle: bool,
    /// Treat images as eye crops.
    #[arg(long, value_enum)]
    crop_side: Option<CropSide>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    /// Single 100x60 eye crops.
    Eye,
    /// 640x480 frames with a face and two eyes.
    Face,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Kind::Eye)]
    kind: Kind,
    /// Gaussian noise sigma.
    #[arg(long)]
    noise: Option<f64>,
}

const IMAGE_EXTS: [&str; 5] = ["png", "pgm", "ppm", "jpg", "jpeg"];

fn resolve_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_file_text(&text)
            .with_context(|| format!("in {}", path.display()))?;
    }
    for (k, v) in c.module.pairs() {
        cfg.apply(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
    }
    cfg.validate()?;
    if c.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    Ok(cfg)
}

fn print_config(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let kv = cfg.to_kv();
    let map: BTreeMap<&str, &str> = kv.lines().filter_map(|l| l.split_once('=')).collect();
    emit(&map)
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Files as given, directories expanded to their sorted image files.
fn expand_inputs(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut frames: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_image(f))
                .collect();
            frames.sort();
            out.extend(frames);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map_or("image".into(), |s| s.to_string_lossy().into_owned())
}

fn fixed_side(c: Option<CropSide>) -> anyhow::Result<Option<EyeSide>> {
    match c {
        None => Ok(None),
        Some(CropSide::Left) => Ok(Some(EyeSide::Left)),
        Some(CropSide::Right) => Ok(Some(EyeSide::Right)),
        Some(CropSide::Auto) => bail!("--crop-side auto needs annotations; use left or right"),
    }
}

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

fn process(
    p: &Pipeline,
    img: &AnyImage,
    side: Option<EyeSide>,
    staged: bool,
) -> canthi::Result<(FrameResult, Option<StageImages>)> {
    match (side, staged) {
        (Some(s), true) => p.process_eye_crop_staged(img, s).map(|(r, st)| (r, Some(st))),
        (Some(s), false) => p.process_eye_crop(img, s).map(|r| (r, None)),
        (None, true) => p.process_frame_staged(img).map(|(r, st)| (r, Some(st))),
        (None, false) => p.process_frame(img).map(|r| (r, None)),
    }
}

fn overlay(img: &AnyImage, r: &FrameResult) -> canthi::Result<canthi::RgbImage> {
    let mut rects: Vec<Rect> = r.face.into_iter().collect();
    let mut points: Vec<Point> = Vec::new();
    for e in &r.eyes {
        rects.push(e.rect);
        if let Some(c) = &e.corners {
            points.extend([c.nasal, c.temporal]);
        }
    }
    draw_annotations(&img.to_rgb(), &rects, &points)
}

fn write_artifacts(
    c: &Common,
    name: &str,
    img: &AnyImage,
    r: &FrameResult,
    st: Option<&StageImages>,
) -> anyhow::Result<()> {
    if let Some(dir) = &c.annotate {
        write_rgb(dir.join(format!("{name}.png")), &overlay(img, r)?)?;
    }
    if let (Some(dir), Some(st)) = (&c.dump_stages, st) {
        if let Some(e) = &st.enhanced {
            write_gray(dir.join(format!("{name}_enhanced.png")), e)?;
        }
        for e in &st.eyes {
            let base = format!("{name}_{}", e.side.as_str());
            write_gray(dir.join(format!("{base}_plane.png")), &e.plane)?;
            write_gray(dir.join(format!("{base}_mask.png")), &e.mask.to_gray())?;
            write_gray(dir.join(format!("{base}_opened.png")), &e.opened.to_gray())?;
            write_gray(dir.join(format!("{base}_component.png")), &e.component.to_gray())?;
            write_gray(dir.join(format!("{base}_contour.png")), &e.contour)?;
        }
    }
    Ok(())
}

fn prepare_dirs(c: &Common) -> anyhow::Result<()> {
    for d in [&c.annotate, &c.dump_stages].into_iter().flatten() {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DetectOutput {
    input: String,
    width: usize,
    height: usize,
    #[serde(flatten)]
    result: FrameResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<StageTimings>,
}

#[derive(Serialize)]
struct DetectReport {
    results: Vec<DetectOutput>,
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn emit(v: &impl Serialize) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let res = serde_json::to_writer_pretty(&mut out, v)
        .map_err(std::io::Error::from)
        .and_then(|_| writeln!(out))
        .and_then(|_| out.flush());
    match res {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_detect(a: &DetectArgs) -> anyhow::Result<ExitCode> {
    let cfg = resolve_config(&a.common)?;
    if a.common.print_config {
        print_config(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    let side = fixed_side(a.crop_side)?;
    let pipeline = Pipeline::new(cfg)?;
    if side.is_none() && !pipeline.has_models() {
        bail!("full frames need --face-model and --eye-model (or use --crop-side)");
    }
    let paths = expand_inputs(&a.inputs)?;
    let images = paths.iter().map(read_image).collect::<canthi::Result<Vec<_>>>()?;
    prepare_dirs(&a.common)?;
    let staged = a.common.dump_stages.is_some();
    let run = |(path, img): (&PathBuf, &AnyImage)| -> anyhow::Result<DetectOutput> {
        let (result, st) = process(&pipeline, img, side, staged)?;
        write_artifacts(&a.common, &stem(path), img, &result, st.as_ref())?;
        let (width, height) = img.dimensions();
        Ok(DetectOutput {
            input: path.display().to_string(),
            width,
            height,
            timings: a.timings.then_some(result.timings),
            result,
        })
    };
    let outputs: Vec<DetectOutput> = if a.common.jobs > 1 {
        pool(a.common.jobs)?.install(|| paths.par_iter().zip(&images).map(run).collect::<anyhow::Result<_>>())?
    } else {
        paths.iter().zip(&images).map(run).collect::<anyhow::Result<_>>()?
    };
    for o in outputs.iter().filter(|o| !o.result.succeeded()) {
        eprintln!("{}: {}", o.input, o.result.failures.join("; "));
    }
    let all_ok = outputs.iter().all(|o| o.result.succeeded());
    emit(&DetectReport { results: outputs })?;
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn find_image(dir: &Path, id: &str) -> Option<PathBuf> {
    let direct = dir.join(id);
    if direct.is_file() {
        return Some(direct);
    }
    IMAGE_EXTS
        .iter()
        .map(|e| dir.join(format!("{id}.{e}")))
        .find(|p| p.is_file())
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<ExitCode> {
    let cfg = resolve_config(&a.common)?;
    if a.common.print_config {
        print_config(&cfg)?;
        return Ok(ExitCode::SUCCESS);
    }
    let anns = load_annotations(&a.annotations).with_context(|| format!("loading {}", a.annotations.display()))?;
    let pipeline = Pipeline::new(cfg)?;
    if !a.oracle && a.crop_side.is_none() && !pipeline.has_models() {
        bail!("full frames need --face-model and --eye-model (or use --crop-side)");
    }
    let items: Vec<BenchItem> = anns
        .into_iter()
        .map(|ann| {
            let image = match find_image(&a.images, &ann.image_id) {
                None => Err(format!("no image for {} in {}", ann.image_id, a.images.display())),
                Some(p) => read_image(&p).map_err(|e| e.to_string()).and_then(|img| {
                    let (w, h) = img.dimensions();
                    ann.validate(w, h).map(|_| img).map_err(|e| e.to_string())
                }),
            };
            let crop_side = match a.crop_side {
                None => None,
                Some(CropSide::Left) => Some(EyeSide::Left),
                Some(CropSide::Right) => Some(EyeSide::Right),
                Some(CropSide::Auto) => ann.eyes.first().map(|e| e.side),
            };
            BenchItem {
                image_id: ann.image_id.clone(),
                image,
                truth: Some(ann),
                crop_side,
            }
        })
        .collect();
    for it in &items {
        if let Err(e) = &it.image {
            eprintln!("{}: {e}", it.image_id);
        }
    }
    let source = if a.oracle {
        Source::Oracle
    } else {
        Source::Pipeline(&pipeline)
    };
    let report = benchmark(&items, source, pipeline.config.error_norm, a.common.jobs)?;

    if !a.oracle && (a.common.annotate.is_some() || a.common.dump_stages.is_some()) {
        prepare_dirs(&a.common)?;
        for it in &items {
            if let Ok(img) = &it.image {
                if let Ok((r, st)) = process(&pipeline, img, it.crop_side, a.common.dump_stages.is_some()) {
                    write_artifacts(&a.common, &it.image_id, img, &r, st.as_ref())?;
                }
            }
        }
    }
    emit(&report)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SynthSummary {
    images: usize,
    rows: usize,
    annotations: String,
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<ExitCode> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let samples: Vec<SynthSample> = match a.kind {
        Kind::Eye => {
            let mut p = SynthEyeParams::default();
            if let Some(n) = a.noise {
                p.noise_sigma = n;
            }
            synth_eye_batch(&p, a.seed, a.count)?
        }
        Kind::Face => {
            let mut p = SynthFaceParams::default();
            if let Some(n) = a.noise {
                p.noise_sigma = n;
            }
            synth_face_batch(&p, a.seed, a.count)?
        }
    };
    for s in &samples {
        write_rgb(a.out.join(format!("{}.png", s.image_id)), &s.image)?;
    }
    let csv = a.out.join("annotations.csv");
    let file = fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    let anns: Vec<_> = samples.into_iter().map(|s| s.annotation).collect();
    write_annotations(std::io::BufWriter::new(file), &anns)?;
    let rows: usize = anns.iter().map(|a| a.eyes.len()).sum();
    emit(&SynthSummary {
        images: anns.len(),
        rows,
        annotations: csv.display().to_string(),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match &cli.cmd {
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Synth(a) => cmd_synth(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

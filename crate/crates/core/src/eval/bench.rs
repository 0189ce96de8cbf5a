use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::annotations::Annotation;
use super::metric::{aggregate, corner_scores, CornerPair, ErrorNorm};
use crate::error::Result;
use crate::io::AnyImage;
use crate::pipeline::{FrameResult, Pipeline};
use crate::prune::{EyeCorners, EyeSide};

/// One decoded input of a benchmark run.
#[derive(Clone, Debug)]
pub struct BenchItem {
    pub image_id: String,
    /// Decoded image, or the reason decoding failed.
    pub image: std::result::Result<AnyImage, String>,
    pub truth: Option<Annotation>,
    /// Treat the image as a single eye crop of this side instead of a face.
    pub crop_side: Option<EyeSide>,
}

/// Where corner estimates come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Pipeline(&'a Pipeline),
    /// Echo the ground truth back, for checking the harness itself.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EyeReport {
    pub eye: EyeSide,
    pub detected: Option<CornerPair>,
    /// Squared pixel error `[nasal, temporal]`; absent on a miss.
    pub sq_errors: Option<[f64; 2]>,
    /// Scores entering the aggregate under the chosen normalization.
    pub scores: [Option<f64>; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageReport {
    pub image_id: String,
    pub eyes: Vec<EyeReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageReport>,
    /// `None` when nothing was scored.
    pub percent_error: Option<f64>,
    pub fps: f64,
    pub failures: usize,
    pub frames: usize,
    pub wall_time_s: f64,
    /// Mean Euclidean distance over detected corners, pixels.
    pub mean_pixel_error: Option<f64>,
    pub error_norm: ErrorNorm,
}

fn pair(c: &EyeCorners) -> CornerPair {
    CornerPair {
        nasal: [c.nasal.x as f64, c.nasal.y as f64],
        temporal: [c.temporal.x as f64, c.temporal.y as f64],
    }
}

fn run_one(item: &BenchItem, source: Source) -> std::result::Result<FrameResult, String> {
    let img = item.image.as_ref().map_err(|e| e.clone())?;
    match source {
        Source::Oracle => Ok(FrameResult::default()),
        Source::Pipeline(p) => match item.crop_side {
            Some(side) => p.process_eye_crop(img, side),
            None => p.process_frame(img),
        }
        .map_err(|e| e.to_string()),
    }
}

fn score(
    item: &BenchItem,
    out: &std::result::Result<FrameResult, String>,
    source: Source,
    norm: ErrorNorm,
) -> Result<ImageReport> {
    let mut rep = ImageReport {
        image_id: item.image_id.clone(),
        eyes: Vec::new(),
        failure: None,
    };
    let frame = match out {
        Ok(f) => f,
        Err(e) => {
            rep.failure = Some(e.clone());
            return Ok(rep);
        }
    };
    let Some(truth) = &item.truth else {
        return Ok(rep);
    };
    let mut missed = Vec::new();
    for t in &truth.eyes {
        let detected = match source {
            Source::Oracle => Some(t.corners),
            Source::Pipeline(_) => frame.corners(t.side).map(pair),
        };
        if detected.is_none() {
            missed.push(t.side.as_str());
        }
        rep.eyes.push(EyeReport {
            eye: t.side,
            detected,
            sq_errors: detected.map(|d| super::metric::corner_sq_errors(&d, &t.corners)),
            scores: corner_scores(detected.as_ref(), &t.corners, norm)?,
        });
    }
    if !missed.is_empty() {
        let mut why = format!("missed {} eye", missed.join("+"));
        if !frame.failures.is_empty() {
            why.push_str(&format!(" ({})", frame.failures.join("; ")));
        }
        rep.failure = Some(why);
    }
    Ok(rep)
}

/// Runs `source` over every item and scores it against its annotation.
///
/// Items should already be decoded; only processing is timed. `jobs > 1`
/// processes items on a thread pool, results keep input order.
pub fn benchmark(items: &[BenchItem], source: Source, norm: ErrorNorm, jobs: usize) -> Result<EvalReport> {
    let start = Instant::now();
    let outs: Vec<_> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| crate::error::invalid("jobs", e.to_string()))?;
        pool.install(|| items.par_iter().map(|it| run_one(it, source)).collect())
    } else {
        items.iter().map(|it| run_one(it, source)).collect()
    };
    let wall = start.elapsed().as_secs_f64();

    let per_image = items
        .iter()
        .zip(&outs)
        .map(|(it, out)| score(it, out, source, norm))
        .collect::<Result<Vec<_>>>()?;
    let frames = outs.iter().filter(|o| o.is_ok()).count();
    let scores: Vec<f64> = per_image
        .iter()
        .flat_map(|r| r.eyes.iter().flat_map(|e| e.scores.into_iter().flatten()))
        .collect();
    let dists: Vec<f64> = per_image
        .iter()
        .flat_map(|r| r.eyes.iter().filter_map(|e| e.sq_errors))
        .flat_map(|e| e.map(f64::sqrt))
        .collect();
    Ok(EvalReport {
        failures: per_image.iter().filter(|r| r.failure.is_some()).count(),
        percent_error: aggregate(&scores, norm),
        fps: if wall > 0.0 { frames as f64 / wall } else { 0.0 },
        frames,
        wall_time_s: wall,
        mean_pixel_error: (!dists.is_empty()).then(|| dists.iter().sum::<f64>() / dists.len() as f64),
        error_norm: norm,
        per_image,
    })
}

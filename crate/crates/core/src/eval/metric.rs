use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-corner squared errors are scaled before averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    /// Divide by the squared diagonal of the true eye box; misses count as 1.
    #[default]
    Diagonal,
    /// Squared pixel error; misses are left out.
    Raw,
}

impl fmt::Display for ErrorNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorNorm::Diagonal => "diagonal",
            ErrorNorm::Raw => "raw",
        })
    }
}

impl FromStr for ErrorNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diagonal" | "diag" => Ok(ErrorNorm::Diagonal),
            "raw" => Ok(ErrorNorm::Raw),
            _ => Err(Error::Parse(format!("error norm must be diagonal or raw, got {s:?}"))),
        }
    }
}

/// Nasal and temporal corner of one eye.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerPair {
    pub nasal: [f64; 2],
    pub temporal: [f64; 2],
}

impl CornerPair {
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            nasal: [self.nasal[0] + dx, self.nasal[1] + dy],
            temporal: [self.temporal[0] + dx, self.temporal[1] + dy],
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            nasal: [self.nasal[0] * s, self.nasal[1] * s],
            temporal: [self.temporal[0] * s, self.temporal[1] * s],
        }
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Fraction of the box size added on each side of the corner bounding box.
pub const EYE_BOX_MARGIN: f64 = 0.1;

/// Squared diagonal of the corners' bounding box grown by
/// [`EYE_BOX_MARGIN`] on every side.
pub fn eye_box_diag2(truth: &CornerPair) -> f64 {
    let g = 1.0 + 2.0 * EYE_BOX_MARGIN;
    g * g * sq_dist(truth.nasal, truth.temporal)
}

/// Squared errors `[nasal, temporal]`.
pub fn corner_sq_errors(det: &CornerPair, truth: &CornerPair) -> [f64; 2] {
    [sq_dist(det.nasal, truth.nasal), sq_dist(det.temporal, truth.temporal)]
}

/// Per-corner scores for one eye; `None` marks corners excluded from the
/// average (misses under [`ErrorNorm::Raw`]).
pub fn corner_scores(det: Option<&CornerPair>, truth: &CornerPair, norm: ErrorNorm) -> Result<[Option<f64>; 2]> {
    match norm {
        ErrorNorm::Diagonal => {
            let d2 = eye_box_diag2(truth);
            if !(d2 > 0.0) {
                return Err(Error::Geometry("ground-truth corners coincide".into()));
            }
            Ok(match det {
                Some(d) => corner_sq_errors(d, truth).map(|e| Some(e / d2)),
                None => [Some(1.0); 2],
            })
        }
        ErrorNorm::Raw => Ok(match det {
            Some(d) => corner_sq_errors(d, truth).map(Some),
            None => [None; 2],
        }),
    }
}

/// Mean corner score over matched eyes, ×100 for the diagonal norm.
///
/// `detections[i]` is the estimate for `truths[i]`; `None` is a miss.
pub fn percent_error(detections: &[Option<CornerPair>], truths: &[CornerPair], norm: ErrorNorm) -> Result<f64> {
    if truths.is_empty() || detections.len() != truths.len() {
        return Err(Error::NoPairs);
    }
    let mut scores = Vec::with_capacity(2 * truths.len());
    for (d, t) in detections.iter().zip(truths) {
        scores.extend(corner_scores(d.as_ref(), t, norm)?.into_iter().flatten());
    }
    aggregate(&scores, norm).ok_or(Error::NoPairs)
}

/// Averages corner scores into the reported figure.
pub fn aggregate(scores: &[f64], norm: ErrorNorm) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Some(match norm {
        ErrorNorm::Diagonal => 100.0 * mean,
        ErrorNorm::Raw => mean,
    })
}

//! Reduction of the candidate set to one nasal/temporal pair per eye.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harris::CornerCandidate;
use crate::image::{Point, Rect};

/// The subject's side; the subject's right eye appears on the image left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub fn flipped(self) -> Self {
        match self {
            EyeSide::Left => EyeSide::Right,
            EyeSide::Right => EyeSide::Left,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }
    }
}

impl std::str::FromStr for EyeSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(EyeSide::Left),
            "right" | "r" => Ok(EyeSide::Right),
            _ => Err(Error::Parse(format!("eye side must be left or right, got {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeCorners {
    pub nasal: Point,
    pub temporal: Point,
    pub side: EyeSide,
    pub source_rect: Rect,
    /// Set when both corners collapsed onto one point.
    pub degenerate: bool,
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    (a.0 - o.0) as i128 * (b.1 - o.1) as i128 - (a.1 - o.1) as i128 * (b.0 - o.0) as i128
}

/// Strict convex hull vertices (collinear points dropped) of sorted, unique
/// points.
fn hull(pts: &[(i64, i64)]) -> Vec<(i64, i64)> {
    if pts.len() < 3 {
        return pts.to_vec();
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn d2(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)
}

/// Mean rounded half-up.
fn mean_half_up(sum: i64, n: i64) -> i64 {
    (2 * sum + n).div_euclid(2 * n)
}

/// `(temporal, nasal)` for two distinct points.
fn assign(a: (i64, i64), b: (i64, i64), side: EyeSide) -> ((i64, i64), (i64, i64)) {
    if a.0 == b.0 {
        return if a.1 <= b.1 { (a, b) } else { (b, a) };
    }
    let (lo, hi) = if a.0 < b.0 { (a, b) } else { (b, a) };
    match side {
        EyeSide::Right => (lo, hi),
        EyeSide::Left => (hi, lo),
    }
}

/// Picks the farthest-apart pair of candidates as the eye corners.
///
/// Distances are compared as exact integer squares. When several pairs share
/// the maximum, every point in a tied pair is split by `x` against the tie-set
/// centroid and each corner is its group's coordinate mean, rounded half-up;
/// points level with the centroid join the temporal group when above it. The
/// smaller-`x` corner is temporal on a right eye and nasal on a left eye; on
/// equal `x` the smaller `y` is temporal.
/// Coordinates stay local to `source_rect`.
pub fn prune(candidates: &[CornerCandidate], side: EyeSide, source_rect: Rect) -> Result<EyeCorners> {
    let mut pts: Vec<(i64, i64)> = candidates.iter().map(|c| (c.x as i64, c.y as i64)).collect();
    pts.sort_unstable();
    pts.dedup();
    let pt = |p: (i64, i64)| Point::new(p.0 as i32, p.1 as i32);
    match pts.len() {
        0 => return Err(Error::EmptyCandidates),
        1 => {
            return Ok(EyeCorners {
                nasal: pt(pts[0]),
                temporal: pt(pts[0]),
                side,
                source_rect,
                degenerate: true,
            })
        }
        _ => {}
    }

    let h = hull(&pts);
    let mut best = -1;
    let mut tied: Vec<(i64, i64)> = Vec::new();
    for i in 0..h.len() {
        for j in i + 1..h.len() {
            let d = d2(h[i], h[j]);
            if d > best {
                best = d;
                tied.clear();
            }
            if d == best {
                tied.push(h[i]);
                tied.push(h[j]);
            }
        }
    }
    tied.sort_unstable();
    tied.dedup();

    let (temporal, nasal) = if tied.len() == 2 {
        assign(tied[0], tied[1], side)
    } else {
        let n = tied.len() as i64;
        let (sx, sy) = tied.iter().fold((0, 0), |s, p| (s.0 + p.0, s.1 + p.1));
        let temporal_left = side == EyeSide::Right;
        let (temporal, nasal): (Vec<_>, Vec<_>) = tied.iter().copied().partition(|p| match (n * p.0).cmp(&sx) {
            std::cmp::Ordering::Less => temporal_left,
            std::cmp::Ordering::Greater => !temporal_left,
            std::cmp::Ordering::Equal => n * p.1 < sy,
        });
        let mean = |g: &[(i64, i64)]| {
            let k = g.len() as i64;
            let (gx, gy) = g.iter().fold((0, 0), |s, p| (s.0 + p.0, s.1 + p.1));
            (mean_half_up(gx, k), mean_half_up(gy, k))
        };
        (mean(&temporal), mean(&nasal))
    };
    Ok(EyeCorners {
        nasal: pt(nasal),
        temporal: pt(temporal),
        side,
        source_rect,
        degenerate: nasal == temporal,
    })
}

/// Shifts crop-local corners by the crop origin.
pub fn to_full_frame(c: &EyeCorners) -> EyeCorners {
    let (dx, dy) = (c.source_rect.x as i32, c.source_rect.y as i32);
    EyeCorners {
        nasal: Point::new(c.nasal.x + dx, c.nasal.y + dy),
        temporal: Point::new(c.temporal.x + dx, c.temporal.y + dy),
        ..*c
    }
}

/// Inverse of [`to_full_frame`].
pub fn to_local(c: &EyeCorners) -> EyeCorners {
    let (dx, dy) = (c.source_rect.x as i32, c.source_rect.y as i32);
    EyeCorners {
        nasal: Point::new(c.nasal.x - dx, c.nasal.y - dy),
        temporal: Point::new(c.temporal.x - dx, c.temporal.y - dy),
        ..*c
    }
}

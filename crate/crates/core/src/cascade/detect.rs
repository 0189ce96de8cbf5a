use serde::Serialize;

use super::{CascadeModel, ScaledCascade, WindowScanner};
use crate::error::{invalid, Error, Result};
use crate::image::{GrayImage, IntegralImage, Rect};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub min_neighbors: usize,
    /// Smallest window side considered, in pixels.
    pub min_size: usize,
    /// Largest window side considered; `None` means unbounded.
    pub max_size: Option<usize>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            scale_factor: 1.1,
            min_neighbors: 3,
            min_size: 0,
            max_size: None,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_factor > 1.0) || !self.scale_factor.is_finite() {
            return Err(invalid("scale factor", format!("{} must be > 1", self.scale_factor)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Detection {
    pub rect: Rect,
    /// Number of raw window hits merged into this detection.
    pub neighbors: usize,
}

/// Multi-scale sliding-window scan followed by neighbor grouping.
///
/// Returns detections sorted by descending neighbor count, then by position.
pub fn detect(img: &GrayImage, model: &CascadeModel, p: &DetectParams) -> Result<Vec<Detection>> {
    p.validate()?;
    let (w, h) = img.dimensions();
    if w < model.window_w || h < model.window_h {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: model.window_w,
            min_height: model.window_h,
        });
    }
    let sum = IntegralImage::new(img);
    let sq = IntegralImage::squared(img);
    // 255 * w * h fits in u32 for any image below ~16.8 Mpx
    let narrow: Option<Vec<u32>> =
        (255 * (w as u64) * (h as u64) <= u32::MAX as u64).then(|| sum.as_raw().iter().map(|&v| v as u32).collect());
    let mut hits = Vec::new();
    let mut scale = 1.0f64;
    loop {
        let sc = ScaledCascade::new(model, scale);
        scale *= p.scale_factor;
        if sc.window_w > w || sc.window_h > h {
            break;
        }
        if p.max_size.is_some_and(|m| sc.window_w > m || sc.window_h > m) {
            break;
        }
        if sc.window_w < p.min_size || sc.window_h < p.min_size {
            continue;
        }
        let step = if sc.scale <= 2.0 {
            (2.0 * sc.scale).round()
        } else {
            sc.scale.round()
        } as usize;
        let step = step.max(1);
        let mut scan_with = |passes: &dyn Fn(usize, usize) -> bool| {
            for y in (0..=h - sc.window_h).step_by(step) {
                for x in (0..=w - sc.window_w).step_by(step) {
                    if passes(x, y) {
                        hits.push(Rect::new(x, y, sc.window_w, sc.window_h));
                    }
                }
            }
        };
        match &narrow {
            Some(t) => {
                let scan = WindowScanner::with_tables(&sc, t, sq.as_raw(), sum.stride());
                scan_with(&|x, y| scan.passes(x, y));
            }
            None => {
                let scan = WindowScanner::new(&sc, &sum, &sq);
                scan_with(&|x, y| scan.passes(x, y));
            }
        }
    }
    Ok(group_rects(hits, p.min_neighbors, 0.2))
}

fn similar(a: &Rect, b: &Rect, eps: f64) -> bool {
    let delta = eps * (a.w.min(b.w) + a.h.min(b.h)) as f64 * 0.5;
    let close = |u: usize, v: usize| (u as f64 - v as f64).abs() <= delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.right(), b.right()) && close(a.bottom(), b.bottom())
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Clusters raw hits under the size-relative similarity test with tolerance
/// `eps`, keeps clusters of at least `min_neighbors` members and represents
/// each by the mean of its members' edges. `min_neighbors == 0` returns the raw
/// hits ungrouped.
pub fn group_rects(mut hits: Vec<Rect>, min_neighbors: usize, eps: f64) -> Vec<Detection> {
    hits.sort();
    if min_neighbors == 0 {
        return hits.into_iter().map(|rect| Detection { rect, neighbors: 1 }).collect();
    }
    let n = hits.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&hits[i], &hits[j], eps) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<Rect>> = Default::default();
    for (i, &hit) in hits.iter().enumerate() {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(hit);
    }
    let mut out: Vec<Detection> = clusters
        .into_values()
        .filter(|c| c.len() >= min_neighbors)
        .map(|c| {
            let k = c.len();
            let mean = |f: fn(&Rect) -> usize| {
                let s: usize = c.iter().map(f).sum();
                (2 * s + k) / (2 * k)
            };
            let (x, y) = (mean(|r| r.x), mean(|r| r.y));
            Detection {
                rect: Rect::new(x, y, mean(Rect::right) - x, mean(Rect::bottom) - y),
                neighbors: k,
            }
        })
        .collect();
    out.sort_by(|a, b| b.neighbors.cmp(&a.neighbors).then(a.rect.cmp(&b.rect)));
    out
}

/// Where to look for each eye, as fractions of the face box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EyeRoiFractions {
    pub top: f64,
    pub bottom: f64,
    /// Horizontal split between the two eye regions.
    pub split: f64,
    /// Smallest eye window as a fraction of the face width.
    pub min_eye: f64,
}

impl Default for EyeRoiFractions {
    fn default() -> Self {
        Self {
            top: 0.20,
            bottom: 0.55,
            split: 0.5,
            min_eye: 0.12,
        }
    }
}

/// Search regions for the subject's left eye (image right) and right eye
/// (image left), clamped inside the face and at least one pixel each.
pub fn eye_rois(face: Rect, f: &EyeRoiFractions) -> (Rect, Rect) {
    let frac = |len: usize, t: f64| ((len as f64 * t).round() as usize).min(len);
    let span = |len: usize, a: f64, b: f64| {
        let lo = frac(len, a).min(len - 1);
        let hi = frac(len, b).clamp(lo + 1, len);
        (lo, hi - lo)
    };
    let (y0, h) = span(face.h, f.top, f.bottom);
    let (rx, rw) = span(face.w, 0.0, f.split);
    let (lx, lw) = span(face.w, f.split, 1.0);
    let left = Rect::new(face.x + lx, face.y + y0, lw, h);
    let right = Rect::new(face.x + rx, face.y + y0, rw, h);
    (left, right)
}

/// Runs the eye cascade separately inside each eye region of `face`.
///
/// Returns `(left, right)` in full-image coordinates, picking the strongest
/// cluster per side. A region smaller than the model window yields `None`.
pub fn detect_eyes(
    img: &GrayImage,
    face: Rect,
    eye_model: &CascadeModel,
    p: &DetectParams,
    fractions: &EyeRoiFractions,
) -> Result<(Option<Rect>, Option<Rect>)> {
    if !face.fits_in(img.width(), img.height()) {
        return Err(Error::OutOfBounds {
            what: format!("face {face:?}"),
            width: img.width(),
            height: img.height(),
        });
    }
    let (left_roi, right_roi) = eye_rois(face, fractions);
    let p = DetectParams {
        min_size: p.min_size.max((fractions.min_eye * face.w as f64).round() as usize),
        ..*p
    };
    let run = |roi: Rect| -> Result<Option<Rect>> {
        let crop = img.crop(roi)?;
        match detect(&crop, eye_model, &p) {
            Ok(found) => Ok(found.first().map(|d| d.rect.translate(roi.x, roi.y))),
            Err(Error::ImageTooSmall { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok((run(left_roi)?, run(right_roi)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_fractions() {
        let f = EyeRoiFractions::default();
        let (l, r) = eye_rois(Rect::new(0, 0, 100, 100), &f);
        assert_eq!(r, Rect::new(0, 20, 50, 35));
        assert_eq!(l, Rect::new(50, 20, 50, 35));
        let (l, _) = eye_rois(Rect::new(10, 10, 200, 100), &f);
        assert_eq!(l, Rect::new(110, 30, 100, 35));
    }

    #[test]
    fn roi_degenerate_face() {
        let face = Rect::new(3, 4, 2, 2);
        let (l, r) = eye_rois(face, &EyeRoiFractions::default());
        for roi in [l, r] {
            assert!(roi.w >= 1 && roi.h >= 1);
            assert!(face.contains_rect(&roi), "{roi:?}");
        }
        let (l, r) = eye_rois(Rect::new(0, 0, 1, 1), &EyeRoiFractions::default());
        assert_eq!(l, Rect::new(0, 0, 1, 1));
        assert_eq!(r, Rect::new(0, 0, 1, 1));
    }

    #[test]
    fn grouping_keeps_supported_clusters() {
        let hits = vec![
            Rect::new(10, 10, 20, 20),
            Rect::new(11, 10, 20, 20),
            Rect::new(10, 11, 21, 21),
            Rect::new(100, 100, 20, 20),
        ];
        let g = group_rects(hits.clone(), 3, 0.2);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].neighbors, 3);
        assert_eq!(g[0].rect, Rect::new(10, 10, 21, 21));
        let g = group_rects(hits.clone(), 1, 0.2);
        assert_eq!(g.len(), 2);
        assert!(g[0].neighbors >= g[1].neighbors);
        assert_eq!(group_rects(hits, 0, 0.2).len(), 4);
    }

    #[test]
    fn rejects_bad_scale_factor() {
        let p = DetectParams {
            scale_factor: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}

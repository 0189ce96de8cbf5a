//! Boosted Haar-feature cascades: model representation, window evaluation and
//! multi-scale detection.

mod detect;
mod xml;

pub use detect::{detect, detect_eyes, eye_rois, group_rects, DetectParams, Detection, EyeRoiFractions};
pub use xml::{load_cascade, load_cascade_file};

use crate::image::IntegralImage;

/// One weighted rectangle of a Haar feature, in model-window coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HaarRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<HaarRect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

/// Split node of a weak classifier: go left when the normalized feature value
/// is below `threshold`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: Child,
    pub right: Child,
}

/// A stump (one node, two leaves) or a small decision tree.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakClassifier {
    pub nodes: Vec<TreeNode>,
    pub leaves: Vec<f64>,
}

impl WeakClassifier {
    /// Walks the tree from the root; `below(node)` answers whether the
    /// node's feature value falls under its threshold.
    pub fn eval(&self, mut below: impl FnMut(&TreeNode) -> bool) -> f64 {
        let mut node = &self.nodes[0];
        loop {
            let next = if below(node) { node.left } else { node.right };
            match next {
                Child::Node(i) => node = &self.nodes[i],
                Child::Leaf(i) => return self.leaves[i],
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeStage {
    pub weak: Vec<WeakClassifier>,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub window_w: usize,
    pub window_h: usize,
    pub stages: Vec<CascadeStage>,
    pub features: Vec<HaarFeature>,
}

impl CascadeModel {
    pub fn weak_count(&self) -> usize {
        self.stages.iter().map(|s| s.weak.len()).sum()
    }
}

/// A feature rectangle resized for one detection scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub weight: f64,
}

/// The cascade's features resized for a window of `window_w × window_h`.
///
/// Rectangles are rounded to integer pixels and each weight is multiplied by
/// the ratio of its ideal scaled area to its rounded area, so a zero-sum feature
/// stays zero-sum.
#[derive(Clone, Debug)]
pub struct ScaledCascade<'a> {
    pub model: &'a CascadeModel,
    pub scale: f64,
    pub window_w: usize,
    pub window_h: usize,
    pub features: Vec<Vec<ScaledRect>>,
    /// Window interior used for the variance estimate: the window shrunk by
    /// one scaled pixel on each side.
    pub norm_inset: usize,
}

impl<'a> ScaledCascade<'a> {
    pub fn new(model: &'a CascadeModel, scale: f64) -> Self {
        let window_w = ((model.window_w as f64 * scale).round() as usize).max(1);
        let window_h = ((model.window_h as f64 * scale).round() as usize).max(1);
        let features = model
            .features
            .iter()
            .map(|f| {
                f.rects
                    .iter()
                    .map(|r| {
                        let x = ((r.x as f64 * scale).round() as usize).min(window_w - 1);
                        let y = ((r.y as f64 * scale).round() as usize).min(window_h - 1);
                        let w = ((r.w as f64 * scale).round() as usize).clamp(1, window_w - x);
                        let h = ((r.h as f64 * scale).round() as usize).clamp(1, window_h - y);
                        let ideal = r.w as f64 * r.h as f64 * scale * scale;
                        ScaledRect {
                            x,
                            y,
                            w,
                            h,
                            weight: r.weight * ideal / (w * h) as f64,
                        }
                    })
                    .collect()
            })
            .collect();
        let inset = (scale.round() as usize).max(1);
        let norm_inset = if window_w > 2 * inset && window_h > 2 * inset {
            inset
        } else {
            0
        };
        Self {
            model,
            scale,
            window_w,
            window_h,
            features,
            norm_inset,
        }
    }

    /// Area of the variance-estimation rectangle.
    pub fn norm_area(&self) -> u64 {
        ((self.window_w - 2 * self.norm_inset) * (self.window_h - 2 * self.norm_inset)) as u64
    }

    /// Normalization factor `sqrt(A * Σv² - (Σv)²)` (= area × standard
    /// deviation), or `None` for a window without contrast.
    pub fn norm_factor(area: u64, sum: u64, sq_sum: u64) -> Option<f64> {
        let var = area as i128 * sq_sum as i128 - sum as i128 * sum as i128;
        (var > 0).then(|| (var as f64).sqrt())
    }

    /// Weighted feature response given a rectangle-sum oracle (window-relative rects).
    #[inline]
    pub fn feature_value(&self, feature: usize, mut rect_sum: impl FnMut(&ScaledRect) -> u64) -> f64 {
        self.features[feature]
            .iter()
            .map(|r| r.weight * rect_sum(r) as f64)
            .sum()
    }

    /// Full staged decision for the window with top-left corner `(x, y)`.
    /// The caller guarantees the window fits inside the integral images.
    pub fn passes(&self, sum: &IntegralImage, sq: &IntegralImage, x: usize, y: usize) -> bool {
        WindowScanner::new(self, sum, sq).passes(x, y)
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct OffsetRect {
    /// Table offsets of the top-left, top-right, bottom-left and bottom-right
    /// corners relative to the window origin.
    corners: [usize; 4],
    weight: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct OffsetFeature {
    rects: [OffsetRect; 3],
    len: usize,
}

/// Single-split weak classifier with its feature inlined.
#[derive(Clone, Copy, Debug)]
struct Stump {
    feature: OffsetFeature,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Flattened stumps and per-stage `(end, threshold)`.
type StumpPlan = (Vec<Stump>, Vec<(usize, f64)>);

/// A [`ScaledCascade`] bound to one pair of integral images, with every
/// rectangle turned into flat table offsets.
pub struct WindowScanner<'a, T = u64> {
    sc: &'a ScaledCascade<'a>,
    sum: &'a [T],
    sq: &'a [u64],
    stride: usize,
    features: Vec<OffsetFeature>,
    norm: OffsetRect,
    /// Present when every weak classifier is a stump: stumps of all stages
    /// back to back, and per stage `(end, threshold)`.
    stumps: Option<StumpPlan>,
    /// Largest corner offset of any rectangle.
    reach: usize,
}

impl<'a> WindowScanner<'a, u64> {
    pub fn new(sc: &'a ScaledCascade<'a>, sum: &'a IntegralImage, sq: &'a IntegralImage) -> Self {
        Self::with_tables(sc, sum.as_raw(), sq.as_raw(), sum.stride())
    }
}

impl<'a, T: Copy + Into<u64>> WindowScanner<'a, T> {
    /// Uses a caller-provided copy of the intensity table, e.g. narrowed to
    /// `u32` to halve its cache footprint.
    pub fn with_tables(sc: &'a ScaledCascade<'a>, sum: &'a [T], sq: &'a [u64], stride: usize) -> Self {
        let offsets = |x: usize, y: usize, w: usize, h: usize, weight: f64| OffsetRect {
            corners: [
                y * stride + x,
                y * stride + x + w,
                (y + h) * stride + x,
                (y + h) * stride + x + w,
            ],
            weight,
        };
        let features: Vec<OffsetFeature> = sc
            .features
            .iter()
            .map(|rs| {
                let mut f = OffsetFeature {
                    len: rs.len(),
                    ..Default::default()
                };
                for (slot, r) in f.rects.iter_mut().zip(rs) {
                    *slot = offsets(r.x, r.y, r.w, r.h, r.weight);
                }
                f
            })
            .collect();
        let all_stumps = sc.model.stages.iter().flat_map(|s| &s.weak).all(|w| {
            w.nodes.len() == 1 && matches!((w.nodes[0].left, w.nodes[0].right), (Child::Leaf(_), Child::Leaf(_)))
        });
        let stumps = all_stumps.then(|| {
            let mut flat = Vec::new();
            let mut ends = Vec::new();
            for st in &sc.model.stages {
                for w in &st.weak {
                    let n = &w.nodes[0];
                    let leaf = |c: Child| match c {
                        Child::Leaf(i) => w.leaves[i],
                        Child::Node(_) => unreachable!(),
                    };
                    flat.push(Stump {
                        feature: features[n.feature],
                        threshold: n.threshold,
                        left: leaf(n.left),
                        right: leaf(n.right),
                    });
                }
                ends.push((flat.len(), st.threshold));
            }
            (flat, ends)
        });
        let i = sc.norm_inset;
        let norm = offsets(i, i, sc.window_w - 2 * i, sc.window_h - 2 * i, 1.0);
        let reach = features
            .iter()
            .flat_map(|f| f.rects[..f.len].iter())
            .chain(std::iter::once(&norm))
            .flat_map(|r| r.corners)
            .max()
            .unwrap_or(0);
        Self {
            sc,
            sum,
            sq,
            stride,
            features,
            norm,
            stumps,
            reach,
        }
    }

    #[inline(always)]
    fn box_sum<U: Copy + Into<u64>>(table: &[U], base: usize, r: &OffsetRect) -> u64 {
        let [tl, tr, bl, br] = r.corners;
        // SAFETY: `passes` checks `base + reach` against both tables.
        let at = |i: usize| -> u64 { unsafe { (*table.get_unchecked(base + i)).into() } };
        // exact: the box sum is non-negative and fits
        at(br).wrapping_add(at(tl)).wrapping_sub(at(tr).wrapping_add(at(bl)))
    }

    /// Same decision as [`ScaledCascade::passes`].
    pub fn passes(&self, x: usize, y: usize) -> bool {
        let base = y * self.stride + x;
        assert!(
            base + self.reach < self.sum.len() && base + self.reach < self.sq.len(),
            "window at ({x}, {y}) leaves the integral image"
        );
        let area = self.sc.norm_area();
        let Some(norm) = ScaledCascade::norm_factor(
            area,
            Self::box_sum(self.sum, base, &self.norm),
            Self::box_sum(self.sq, base, &self.norm),
        ) else {
            return false;
        };
        if let Some((stumps, ends)) = &self.stumps {
            let mut start = 0;
            for &(end, threshold) in ends {
                let mut acc = 0.0;
                for st in &stumps[start..end] {
                    let f = &st.feature;
                    let mut v = 0.0;
                    for r in &f.rects[..f.len] {
                        v += r.weight * Self::box_sum(self.sum, base, r) as f64;
                    }
                    acc += if v < st.threshold * norm { st.left } else { st.right };
                }
                if acc < threshold {
                    return false;
                }
                start = end;
            }
            return true;
        }
        for stage in &self.sc.model.stages {
            let mut acc = 0.0;
            for weak in &stage.weak {
                acc += weak.eval(|node| {
                    let f = &self.features[node.feature];
                    let mut v = 0.0;
                    for r in &f.rects[..f.len] {
                        v += r.weight * Self::box_sum(self.sum, base, r) as f64;
                    }
                    v < node.threshold * norm
                });
            }
            if acc < stage.threshold {
                return false;
            }
        }
        true
    }
}

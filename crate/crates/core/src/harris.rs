//! Harris–Stephens corner candidates on the eyelid contour image.
//!
//! For a patch shift `(x, y)` the weighted sum of squared differences
//!
//! ```text
//! S(x, y) = Σ_u Σ_v w(u, v) (I(u + x, v + y) - I(u, v))²
//! ```
//!
//! is approximated to second order by `[x y] H [x y]ᵀ` with the structure
//! tensor `H = Σ w [[Ix², IxIy], [IxIy, Iy²]]`. [`ssd_score`] evaluates the
//! exact sum and [`harris_field`] builds `H`; the response used to rank pixels
//! is `det(H) - k·trace(H)²`.

use crate::error::{invalid, Error, Result};
use crate::image::{GradientField, GrayImage};
use crate::sclera::ContourImage;

/// Isotropic window over a discrete disk with Gaussian weights (σ = radius / 2)
/// that sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct CircularWindow {
    pub radius: usize,
    pub taps: Vec<(isize, isize, f64)>,
}

impl CircularWindow {
    pub fn gaussian(radius: usize) -> Self {
        let r = radius as isize;
        let sigma = radius as f64 / 2.0;
        let mut taps = Vec::new();
        for v in -r..=r {
            for u in -r..=r {
                if u * u + v * v <= r * r {
                    let d2 = (u * u + v * v) as f64;
                    let wgt = if radius == 0 {
                        1.0
                    } else {
                        (-d2 / (2.0 * sigma * sigma)).exp()
                    };
                    taps.push((u, v, wgt));
                }
            }
        }
        let total: f64 = taps.iter().map(|t| t.2).sum();
        for t in &mut taps {
            t.2 /= total;
        }
        Self { radius, taps }
    }
}

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn trace(&self) -> f64 {
        self.a + self.c
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let half = 0.5 * (self.a - self.c);
        0.5 * (self.a + self.c) - (half * half + self.b * self.b).sqrt()
    }

    /// `[x y] M [x y]ᵀ`.
    pub fn quadratic_form(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + 2.0 * self.b * x * y + self.c * y * y
    }

    pub fn scaled(&self, s: f64) -> Sym2 {
        Sym2 {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
        }
    }
}

/// Per-pixel structure tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct HarrisField {
    width: usize,
    height: usize,
    pub data: Vec<Sym2>,
}

impl HarrisField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> Sym2 {
        self.data[y * self.width + x]
    }
}

/// Windowed sums of `Ix²`, `IxIy`, `Iy²`; gradients outside the field are
/// replicated from the nearest edge.
pub fn harris_field(g: &GradientField, w: &CircularWindow) -> HarrisField {
    let (width, height) = (g.width(), g.height());
    let products: Vec<Sym2> =
        g.ix.iter()
            .zip(&g.iy)
            .map(|(&x, &y)| {
                let (x, y) = (x as f64, y as f64);
                Sym2 {
                    a: x * x,
                    b: x * y,
                    c: y * y,
                }
            })
            .collect();
    let mut data = vec![Sym2::default(); width * height];
    let (wi, hi) = (width as isize, height as isize);
    for y in 0..hi {
        for x in 0..wi {
            let mut acc = Sym2::default();
            for &(u, v, wt) in &w.taps {
                let xx = (x + u).clamp(0, wi - 1) as usize;
                let yy = (y + v).clamp(0, hi - 1) as usize;
                let p = products[yy * width + xx];
                acc.a += wt * p.a;
                acc.b += wt * p.b;
                acc.c += wt * p.c;
            }
            data[y as usize * width + x as usize] = acc;
        }
    }
    HarrisField { width, height, data }
}

/// Exact weighted SSD between the patch centered at `(px, py)` and the same
/// patch shifted by `(sx, sy)`.
pub fn ssd_score(img: &GrayImage, px: usize, py: usize, sx: isize, sy: isize, w: &CircularWindow) -> Result<f64> {
    let (width, height) = (img.width() as isize, img.height() as isize);
    let r = w.radius as isize;
    let (px, py) = (px as isize, py as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < width && y < height;
    let corners = [
        (px - r, py - r),
        (px + r, py + r),
        (px - r + sx, py - r + sy),
        (px + r + sx, py + r + sy),
    ];
    if !corners.iter().all(|&(x, y)| inside(x, y)) {
        return Err(Error::OutOfBounds {
            what: format!("window at ({px},{py}) shifted by ({sx},{sy})"),
            width: img.width(),
            height: img.height(),
        });
    }
    let mut s = 0.0;
    for &(u, v, wt) in &w.taps {
        let a = img.get((px + u) as usize, (py + v) as usize) as f64;
        let b = img.get((px + u + sx) as usize, (py + v + sy) as usize) as f64;
        s += wt * (b - a) * (b - a);
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    pub data: Vec<f64>,
}

impl ResponseMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// `R = det(H) - k·trace(H)²` at every pixel.
pub fn corner_response(h: &HarrisField, k: f64) -> Result<ResponseMap> {
    if !(0.01..=0.25).contains(&k) {
        return Err(invalid("harris k", format!("{k} outside [0.01, 0.25]")));
    }
    let data = h.data.iter().map(|m| m.det() - k * m.trace() * m.trace()).collect();
    Ok(ResponseMap {
        width: h.width,
        height: h.height,
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CornerCandidate {
    pub x: usize,
    pub y: usize,
    pub response: f64,
}

/// Tunables of candidate generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisParams {
    pub k: f64,
    pub radius: usize,
    pub nms_radius: usize,
    pub rel_thresh: f64,
    pub max_candidates: usize,
}

impl Default for HarrisParams {
    fn default() -> Self {
        Self {
            k: 0.04,
            radius: 3,
            nms_radius: 3,
            rel_thresh: 0.01,
            max_candidates: 10,
        }
    }
}

/// Local maxima of the response restricted to contour pixels.
///
/// A contour pixel survives non-maximum suppression when no other contour pixel
/// within `nms_radius` has a larger response, or an equal one earlier in
/// `(y, x)` order. Survivors must reach `rel_thresh` of the best contour
/// response (and be positive); the top `max_n` are returned by descending
/// response, ties by `(y, x)`.
pub fn select_candidates(
    resp: &ResponseMap,
    contour: &ContourImage,
    nms_radius: usize,
    rel_thresh: f64,
    max_n: usize,
) -> Result<Vec<CornerCandidate>> {
    let (w, h) = (resp.width, resp.height);
    if (contour.width(), contour.height()) != (w, h) {
        return Err(Error::DimMismatch {
            left: (w, h),
            right: (contour.width(), contour.height()),
        });
    }
    let on = |x: usize, y: usize| contour.support.get(x, y);
    let max_r = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| on(x, y))
        .map(|(x, y)| resp.at(x, y))
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max_r > 0.0) {
        return Err(Error::NoCandidates);
    }
    let cut = rel_thresh * max_r;
    let r = nms_radius as isize;
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !on(x, y) {
                continue;
            }
            let v = resp.at(x, y);
            if v <= 0.0 || v < cut {
                continue;
            }
            let mut is_max = true;
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    if (dx == 0 && dy == 0) || dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h || !on(nx as usize, ny as usize) {
                        continue;
                    }
                    let nv = resp.at(nx as usize, ny as usize);
                    // (dy, dx) < (0, 0) lexicographically means the neighbor comes first
                    if nv > v || (nv == v && (dy, dx) < (0, 0)) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
            if is_max {
                out.push(CornerCandidate { x, y, response: v });
            }
        }
    }
    out.sort_by(|a, b| b.response.total_cmp(&a.response).then((a.y, a.x).cmp(&(b.y, b.x))));
    out.truncate(max_n);
    Ok(out)
}

/// Contour image → Sobel → structure tensor → response → candidates.
pub fn contour_candidates(contour: &ContourImage, p: &HarrisParams) -> Result<Vec<CornerCandidate>> {
    let g = crate::image::sobel(&contour.intensity)?;
    let field = harris_field(&g, &CircularWindow::gaussian(p.radius));
    let resp = corner_response(&field, p.k)?;
    select_candidates(&resp, contour, p.nms_radius, p.rel_thresh, p.max_candidates)
}

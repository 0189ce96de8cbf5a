//! Sclera segmentation and eyelid contour approximation.
//!
//! The sclera is the least saturated region of an eye crop. Thresholding the
//! saturation plane (or, for grayscale input, the intensity plane) gives a rough
//! mask; an opening with an elliptical element strips the speckle left by blood
//! vessels and the largest 8-connected blob is kept. Its boundary, carrying the
//! enhanced eye intensities, is the contour the corner detector works on.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::{saturation_plane, GrayImage, RgbImage};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-image positions read as background.
    #[inline]
    pub fn get_or_bg(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn as_bits(&self) -> &[bool] {
        &self.bits
    }

    /// 0/255 rendering for debugging dumps.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| if self.get(x, y) { 255 } else { 0 })
    }
}

/// Axis-aligned elliptical structuring element.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuringElement {
    pub half_axes: (usize, usize),
    pub offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    /// All integer offsets `(u, v)` with `(u/a)² + (v/b)² <= 1`.
    pub fn ellipse(a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(invalid("structuring element", "half axes must be >= 1"));
        }
        let (ai, bi) = (a as i64, b as i64);
        let mut offsets = Vec::new();
        for v in -bi..=bi {
            for u in -ai..=ai {
                if u * u * bi * bi + v * v * ai * ai <= ai * ai * bi * bi {
                    offsets.push((u as isize, v as isize));
                }
            }
        }
        Ok(Self {
            half_axes: (a, b),
            offsets,
        })
    }

    /// Ellipse with half axes `base` at a 100-pixel-wide crop, scaled
    /// proportionally to `crop_width` and floored at one pixel.
    pub fn scaled_for_width(base: (f64, f64), crop_width: usize) -> Result<Self> {
        let s = crop_width as f64 / 100.0;
        let a = ((base.0 * s).round() as usize).max(1);
        let b = ((base.1 * s).round() as usize).max(1);
        Self::ellipse(a, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Threshold {
    Auto,
    Fixed(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScleraMode {
    /// Low saturation on the HSV saturation plane.
    Color,
    /// High intensity, for grayscale sources.
    Gray,
}

/// Eye crop as handed to the segmenter.
#[derive(Clone, Copy, Debug)]
pub enum EyeImage<'a> {
    Rgb(&'a RgbImage),
    Gray(&'a GrayImage),
}

/// Otsu's threshold: the largest value of the lower class that maximizes
/// between-class variance. A single-valued histogram returns that value.
pub fn otsu_threshold(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let mut w0 = 0u64;
    let mut sum0 = 0f64;
    let mut best = (f64::NEG_INFINITY, 0u8);
    for (t, &count) in hist.iter().enumerate() {
        w0 += count;
        sum0 += t as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0 {
            continue;
        }
        if w1 == 0 {
            if best.0 == f64::NEG_INFINITY {
                best = (0.0, t as u8);
            }
            break;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    best.1
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in img.as_raw() {
        h[v as usize] += 1;
    }
    h
}

/// The raster [`segment_sclera`] thresholds: saturation or intensity.
pub fn segmentation_plane(eye: EyeImage<'_>, mode: ScleraMode) -> GrayImage {
    match (mode, eye) {
        (ScleraMode::Color, EyeImage::Rgb(i)) => saturation_plane(i),
        // a grayscale source has zero saturation everywhere
        (ScleraMode::Color, EyeImage::Gray(i)) => GrayImage::new(i.width(), i.height()),
        (ScleraMode::Gray, EyeImage::Rgb(i)) => crate::image::to_grayscale(i),
        (ScleraMode::Gray, EyeImage::Gray(i)) => i.clone(),
    }
}

/// Thresholds the plane relevant to `mode`. Color mode keeps pixels with
/// saturation `<= t`; gray mode keeps pixels with intensity `>= t`. With
/// [`Threshold::Auto`] the value comes from Otsu's method on that plane (gray
/// mode then keeps the upper class, `> otsu`).
pub fn segment_sclera(eye: EyeImage<'_>, mode: ScleraMode, thresh: Threshold) -> Result<BinaryMask> {
    let (w, h) = match eye {
        EyeImage::Rgb(i) => i.dimensions(),
        EyeImage::Gray(i) => i.dimensions(),
    };
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let plane = segmentation_plane(eye, mode);
    let keep: Box<dyn Fn(u8) -> bool> = match (mode, thresh) {
        (ScleraMode::Color, Threshold::Fixed(t)) => Box::new(move |v| v <= t),
        (ScleraMode::Color, Threshold::Auto) => {
            let t = otsu_threshold(&histogram(&plane));
            Box::new(move |v| v <= t)
        }
        (ScleraMode::Gray, Threshold::Fixed(t)) => Box::new(move |v| v >= t),
        (ScleraMode::Gray, Threshold::Auto) => {
            let t = otsu_threshold(&histogram(&plane));
            Box::new(move |v| v > t)
        }
    };
    Ok(BinaryMask::from_fn(w, h, |x, y| keep(plane.get(x, y))))
}

/// Erosion; neighbors outside the mask count as background.
pub fn erode(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = m.dimensions();
    BinaryMask::from_fn(w, h, |x, y| {
        m.get(x, y)
            && se
                .offsets
                .iter()
                .all(|&(u, v)| m.get_or_bg(x as isize + u, y as isize + v))
    })
}

/// Dilation by the reflected element, clipped to the mask extent.
pub fn dilate(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = m.dimensions();
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            for &(u, v) in &se.offsets {
                let (xx, yy) = (x as isize + u, y as isize + v);
                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                    out.set(xx as usize, yy as usize, true);
                }
            }
        }
    }
    out
}

/// Morphological opening: erosion followed by dilation.
pub fn morph_open(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(m, se), se)
}

const NEIGHBORS8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Keeps only the largest 8-connected foreground component. On equal sizes the
/// component whose first pixel comes earliest in row-major order wins.
pub fn largest_component(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dimensions();
    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !m.bits[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (x + dx, y + dy);
                if m.get_or_bg(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if label[j] == 0 {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let mut out = BinaryMask::new(w, h);
    if let Some((keep, _)) = best {
        for (o, &l) in out.bits.iter_mut().zip(&label) {
            *o = l == keep;
        }
    }
    out
}

/// Eyelid contour approximation: the boundary pixels of a mask together with
/// the eye intensities found there.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourImage {
    /// Eye intensity on boundary pixels, zero elsewhere.
    pub intensity: GrayImage,
    /// Boundary pixel set.
    pub support: BinaryMask,
}

impl ContourImage {
    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    pub fn height(&self) -> usize {
        self.intensity.height()
    }
}

/// Foreground pixels with a background 4-neighbor or lying on the image border.
pub fn mask_boundary(m: &BinaryMask) -> BinaryMask {
    let (w, h) = m.dimensions();
    BinaryMask::from_fn(w, h, |x, y| {
        if !m.get(x, y) {
            return false;
        }
        let (xi, yi) = (x as isize, y as isize);
        [(0, -1), (-1, 0), (1, 0), (0, 1)]
            .iter()
            .any(|&(dx, dy)| !m.get_or_bg(xi + dx, yi + dy))
    })
}

/// Overlays the boundary of `m` on the enhanced eye image.
pub fn eyelid_contour(eye_enhanced: &GrayImage, m: &BinaryMask) -> Result<ContourImage> {
    if eye_enhanced.dimensions() != m.dimensions() {
        return Err(Error::DimMismatch {
            left: eye_enhanced.dimensions(),
            right: m.dimensions(),
        });
    }
    let support = mask_boundary(m);
    let (w, h) = m.dimensions();
    let intensity = GrayImage::from_fn(w, h, |x, y| if support.get(x, y) { eye_enhanced.get(x, y) } else { 0 });
    Ok(ContourImage { intensity, support })
}

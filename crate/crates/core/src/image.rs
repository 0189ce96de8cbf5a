//! Raster containers and the small set of kernels the pipeline runs on them.
//!
//! Coordinates are `x = column`, `y = row`, origin at the top-left pixel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Axis-aligned rectangle in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// True when the rect is non-degenerate and fits inside a `width`×`height` raster.
    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Intersection-over-union.
    pub fn iou(&self, other: &Rect) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = ((x1 - x0) * (y1 - y0)) as f64;
        inter / (self.area() as f64 + other.area() as f64 - inter)
    }

    pub fn translate(&self, dx: usize, dy: usize) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}

/// Integer pixel position. Signed so translations and reflections stay closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Squared Euclidean distance, exact.
    pub fn dist2(&self, other: &Point) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }
}

/// 8-bit single-channel raster.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    /// Zero-filled image. Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(invalid(
                "data",
                format!("expected {} bytes, got {}", width * height, data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
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
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped into the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn crop(&self, r: Rect) -> Result<GrayImage> {
        let data = crop_channels(&self.data, self.width, self.height, 1, r)?;
        GrayImage::from_raw(r.w, r.h, data)
    }

    /// Replicates the plane into three channels.
    pub fn to_rgb(&self) -> RgbImage {
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// 8-bit interleaved RGB raster.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: usize, height: usize, px: [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be >= 1");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&px);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != 3 * width * height {
            return Err(invalid(
                "data",
                format!("expected {} bytes, got {}", 3 * width * height, data.len()),
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
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
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn crop(&self, r: Rect) -> Result<RgbImage> {
        let data = crop_channels(&self.data, self.width, self.height, 3, r)?;
        RgbImage::from_raw(r.w, r.h, data)
    }
}

fn crop_channels(data: &[u8], width: usize, height: usize, ch: usize, r: Rect) -> Result<Vec<u8>> {
    if !r.fits_in(width, height) {
        return Err(Error::OutOfBounds {
            what: format!("{r:?}"),
            width,
            height,
        });
    }
    let mut out = Vec::with_capacity(r.w * r.h * ch);
    for y in r.y..r.bottom() {
        let start = (y * width + r.x) * ch;
        out.extend_from_slice(&data[start..start + r.w * ch]);
    }
    Ok(out)
}

/// BT.601 luma, rounded half-up in exact integer arithmetic.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .as_raw()
        .chunks_exact(3)
        .map(|p| {
            let acc = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
            ((acc + 500) / 1000).min(255) as u8
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// HSV saturation `(max - min) / max`, quantized to `round(255 * S)`.
pub fn saturation_plane(img: &RgbImage) -> GrayImage {
    let data = img
        .as_raw()
        .chunks_exact(3)
        .map(|p| saturation(p[0], p[1], p[2]))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

#[inline]
pub(crate) fn saturation(r: u8, g: u8, b: u8) -> u8 {
    let max = r.max(g).max(b) as u32;
    if max == 0 {
        return 0;
    }
    let min = r.min(g).min(b) as u32;
    // round half-up of 255 * (max - min) / max
    ((2 * 255 * (max - min) + max) / (2 * max)) as u8
}

/// Summed-area table with a zero guard row and column.
#[derive(Clone, Debug)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    data: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        Self::build(img, |v| v as u64)
    }

    /// Table over squared intensities, for window variance.
    pub fn squared(img: &GrayImage) -> Self {
        Self::build(img, |v| (v as u64) * (v as u64))
    }

    fn build(img: &GrayImage, f: impl Fn(u8) -> u64) -> Self {
        let (w, h) = img.dimensions();
        let stride = w + 1;
        let mut data = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            let src = &img.as_raw()[y * w..(y + 1) * w];
            for x in 0..w {
                row += f(src[x]);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    /// Dimensions of the source image; the table itself is one larger in each axis.
    pub fn source_dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Row stride of the table, `width + 1`.
    pub fn stride(&self) -> usize {
        self.width + 1
    }

    pub fn as_raw(&self) -> &[u64] {
        &self.data
    }

    /// Table entry at `(x, y)` with `x <= width`, `y <= height`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.data[y * (self.width + 1) + x]
    }

    /// Sum over the half-open box `[x0, x1) × [y0, y1)`.
    #[inline]
    pub fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> u64 {
        let s = self.width + 1;
        self.data[y1 * s + x1] + self.data[y0 * s + x0] - self.data[y1 * s + x0] - self.data[y0 * s + x1]
    }

    pub fn rect_sum(&self, r: Rect) -> u64 {
        debug_assert!(r.right() <= self.width && r.bottom() <= self.height);
        self.sum(r.x, r.y, r.right(), r.bottom())
    }
}

/// Gain of the 3×3 Sobel kernel relative to a unit-spacing derivative.
pub const SOBEL_GAIN: f64 = 8.0;

/// Per-pixel horizontal and vertical derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub ix: Vec<i32>,
    pub iy: Vec<i32>,
}

impl GradientField {
    pub fn from_parts(width: usize, height: usize, ix: Vec<i32>, iy: Vec<i32>) -> Result<Self> {
        if ix.len() != width * height || iy.len() != width * height {
            return Err(invalid("gradients", "length does not match dimensions"));
        }
        Ok(Self { width, height, ix, iy })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (i32, i32) {
        let i = y * self.width + x;
        (self.ix[i], self.iy[i])
    }
}

/// 3×3 Sobel responses with replicated-edge padding.
pub fn sobel(img: &GrayImage) -> Result<GradientField> {
    let (w, h) = img.dimensions();
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: 3,
            min_height: 3,
        });
    }
    let mut ix = vec![0i32; w * h];
    let mut iy = vec![0i32; w * h];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let p = |xx: usize, yy: usize| img.get(xx, yy) as i32;
            let gx = (p(xp, ym) + 2 * p(xp, y) + p(xp, yp)) - (p(xm, ym) + 2 * p(xm, y) + p(xm, yp));
            let gy = (p(xm, yp) + 2 * p(x, yp) + p(xp, yp)) - (p(xm, ym) + 2 * p(x, ym) + p(xp, ym));
            ix[y * w + x] = gx;
            iy[y * w + x] = gy;
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        ix,
        iy,
    })
}

pub const RECT_COLOR: [u8; 3] = [0, 255, 0];
pub const POINT_COLOR: [u8; 3] = [255, 0, 0];
const CROSS_ARM: i64 = 3;

/// Copy of `img` with rectangle outlines and cross markers drawn on it.
pub fn draw_annotations(img: &RgbImage, rects: &[Rect], points: &[Point]) -> Result<RgbImage> {
    let (w, h) = img.dimensions();
    for r in rects {
        if !r.fits_in(w, h) {
            return Err(Error::OutOfBounds {
                what: format!("{r:?}"),
                width: w,
                height: h,
            });
        }
    }
    for p in points {
        if p.x < 0 || p.y < 0 || p.x as usize >= w || p.y as usize >= h {
            return Err(Error::OutOfBounds {
                what: format!("{p:?}"),
                width: w,
                height: h,
            });
        }
    }
    let mut out = img.clone();
    for r in rects {
        for x in r.x..r.right() {
            out.set(x, r.y, RECT_COLOR);
            out.set(x, r.bottom() - 1, RECT_COLOR);
        }
        for y in r.y..r.bottom() {
            out.set(r.x, y, RECT_COLOR);
            out.set(r.right() - 1, y, RECT_COLOR);
        }
    }
    for p in points {
        for d in -CROSS_ARM..=CROSS_ARM {
            let (px, py) = (p.x as i64, p.y as i64);
            for (x, y) in [(px + d, py), (px, py + d)] {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    out.set(x as usize, y as usize, POINT_COLOR);
                }
            }
        }
    }
    Ok(out)
}

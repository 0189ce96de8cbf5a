//! Contrast limited adaptive histogram equalization.
//!
//! The image is split into a `tiles_x × tiles_y` grid. Each tile gets its own
//! equalization lookup table built from a clipped histogram, and every output
//! pixel is the bilinear blend of the tables of the (up to) four nearest tile
//! centers. All arithmetic is integer so results are exactly reproducible.
//!
//! Histograms are kept in units of 1/256 pixel, which makes the uniform bin
//! height of a tile with `N` pixels exactly `N`. A clip limit of `c` caps each
//! bin at `floor(c * N)` units; clipped mass is handed back to the bins that are
//! still below the cap until none is left. At `c = 1` that forces a perfectly
//! flat histogram, whose table is the identity.

use crate::error::{invalid, Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Multiple of the uniform bin height at which bins are clipped.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 4.0,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(invalid("clahe tiles", "tile counts must be >= 1"));
        }
        if !(self.clip_limit >= 1.0) || !self.clip_limit.is_finite() {
            return Err(invalid(
                "clahe clip",
                format!("{} is not a finite value >= 1", self.clip_limit),
            ));
        }
        Ok(())
    }
}

/// Intensity lookup table for one tile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileMapping(pub [u8; 256]);

impl TileMapping {
    #[inline]
    pub fn map(&self, v: u8) -> u8 {
        self.0[v as usize]
    }

    pub fn is_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Half-open pixel span of tile `i` out of `n` along an axis of length `len`.
pub fn tile_span(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, (i + 1) * len / n)
}

fn check_dims(img: &GrayImage, p: &ClaheParams) -> Result<()> {
    p.validate()?;
    let (w, h) = img.dimensions();
    if w < p.tiles_x || h < p.tiles_y {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min_width: p.tiles_x,
            min_height: p.tiles_y,
        });
    }
    Ok(())
}

/// Clips `hist` (in 1/256-pixel units) at `limit` and redistributes the excess
/// over bins below the limit, evenly and then one unit at a time left to right.
fn clip_and_redistribute(hist: &mut [u64; 256], limit: u64) {
    let mut excess = 0u64;
    for b in hist.iter_mut() {
        if *b > limit {
            excess += *b - limit;
            *b = limit;
        }
    }
    while excess > 0 {
        let open = hist.iter().filter(|&&b| b < limit).count() as u64;
        if open == 0 {
            break;
        }
        let share = excess / open;
        if share == 0 {
            for b in hist.iter_mut() {
                if excess == 0 {
                    break;
                }
                if *b < limit {
                    *b += 1;
                    excess -= 1;
                }
            }
        } else {
            for b in hist.iter_mut() {
                if *b < limit {
                    let add = share.min(limit - *b);
                    *b += add;
                    excess -= add;
                }
            }
        }
    }
}

/// Equalization table using the mid-bin cumulative distribution:
/// `v -> round(255 * (cdf(v - 1) + hist[v] / 2) / total)`.
fn mapping_from_hist(hist: &[u64; 256]) -> TileMapping {
    let total: u64 = hist.iter().sum();
    let mut lut = [0u8; 256];
    let den = 2 * total;
    let mut below = 0u64;
    for v in 0..256 {
        let num = 255 * (2 * below + hist[v]);
        lut[v] = ((2 * num + den) / (2 * den)) as u8;
        below += hist[v];
    }
    TileMapping(lut)
}

/// Per-tile lookup tables, row-major over the tile grid.
pub fn tile_mappings(img: &GrayImage, p: &ClaheParams) -> Result<Vec<TileMapping>> {
    check_dims(img, p)?;
    let (w, h) = img.dimensions();
    let mut out = Vec::with_capacity(p.tiles_x * p.tiles_y);
    for ty in 0..p.tiles_y {
        let (y0, y1) = tile_span(ty, p.tiles_y, h);
        for tx in 0..p.tiles_x {
            let (x0, x1) = tile_span(tx, p.tiles_x, w);
            let mut hist = [0u64; 256];
            for y in y0..y1 {
                for &v in &img.as_raw()[y * w + x0..y * w + x1] {
                    hist[v as usize] += 256;
                }
            }
            let area = ((x1 - x0) * (y1 - y0)) as u64;
            let limit = ((p.clip_limit * area as f64).floor() as u64).max(area);
            clip_and_redistribute(&mut hist, limit);
            out.push(mapping_from_hist(&hist));
        }
    }
    Ok(out)
}

/// Interpolation coordinates of one pixel along one axis: the two tiles it
/// blends and the weight `num / den` of the second one.
#[derive(Clone, Copy, Debug)]
struct AxisBlend {
    lo: usize,
    hi: usize,
    num: i64,
    den: i64,
}

fn axis_blends(len: usize, tiles: usize) -> Vec<AxisBlend> {
    // doubled tile-center coordinates keep everything integral
    let centers: Vec<i64> = (0..tiles)
        .map(|i| {
            let (a, b) = tile_span(i, tiles, len);
            (a + b) as i64 - 1
        })
        .collect();
    let last = tiles - 1;
    (0..len)
        .map(|x| {
            let x2 = 2 * x as i64;
            if x2 <= centers[0] {
                return AxisBlend {
                    lo: 0,
                    hi: 0,
                    num: 0,
                    den: 1,
                };
            }
            if x2 >= centers[last] {
                return AxisBlend {
                    lo: last,
                    hi: last,
                    num: 0,
                    den: 1,
                };
            }
            let lo = centers.partition_point(|&c| c <= x2) - 1;
            AxisBlend {
                lo,
                hi: lo + 1,
                num: x2 - centers[lo],
                den: centers[lo + 1] - centers[lo],
            }
        })
        .collect()
}

pub fn clahe(img: &GrayImage, p: &ClaheParams) -> Result<GrayImage> {
    let maps = tile_mappings(img, p)?;
    let (w, h) = img.dimensions();
    let bx = axis_blends(w, p.tiles_x);
    let by = axis_blends(h, p.tiles_y);
    let mut out = GrayImage::new(w, h);
    for (y, ay) in by.iter().enumerate() {
        let row_lo = &maps[ay.lo * p.tiles_x..(ay.lo + 1) * p.tiles_x];
        let row_hi = &maps[ay.hi * p.tiles_x..(ay.hi + 1) * p.tiles_x];
        for (x, ax) in bx.iter().enumerate() {
            let v = img.get(x, y);
            let tl = row_lo[ax.lo].map(v) as i64;
            let tr = row_lo[ax.hi].map(v) as i64;
            let bl = row_hi[ax.lo].map(v) as i64;
            let br = row_hi[ax.hi].map(v) as i64;
            let top = (ax.den - ax.num) * tl + ax.num * tr;
            let bot = (ax.den - ax.num) * bl + ax.num * br;
            let acc = (ay.den - ay.num) * top + ay.num * bot;
            let den = ax.den * ay.den;
            out.set(x, y, ((2 * acc + den) / (2 * den)) as u8);
        }
    }
    Ok(out)
}

//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use canthi::cascade::{
    CascadeModel, CascadeStage, Child, HaarFeature, HaarRect, ScaledCascade, TreeNode, WeakClassifier,
};
use canthi::clahe::tile_span;
use canthi::harris::{contour_candidates, CornerCandidate, HarrisParams, Sym2};
use canthi::image::GradientField;
use canthi::sclera::{eyelid_contour, BinaryMask, StructuringElement};
use canthi::{EyeSide, GrayImage, Point};
use rand::Rng;

pub fn models_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn noise_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random())
}

/// Noise on top of a random linear ramp, so windows differ in mean and contrast.
pub fn textured_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    let (gx, gy): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
    let amp: f64 = rng.random_range(5.0..80.0);
    let base: f64 = rng.random_range(60.0..190.0);
    GrayImage::from_fn(w, h, |x, y| {
        let v =
            base + gx * (x as f64 - w as f64 / 2.0) + gy * (y as f64 - h as f64 / 2.0) + rng.random_range(-amp..amp);
        v.round().clamp(0.0, 255.0) as u8
    })
}

pub fn naive_box(img: &GrayImage, x: usize, y: usize, w: usize, h: usize) -> u64 {
    let mut s = 0u64;
    for yy in y..y + h {
        for xx in x..x + w {
            s += img.get(xx, yy) as u64;
        }
    }
    s
}

/// Stage-by-stage cascade decision summing every rectangle pixel by pixel.
pub fn naive_passes(sc: &ScaledCascade, img: &GrayImage, x: usize, y: usize) -> bool {
    let i = sc.norm_inset;
    let (nw, nh) = (sc.window_w - 2 * i, sc.window_h - 2 * i);
    let (mut s, mut s2) = (0i128, 0i128);
    for yy in y + i..y + i + nh {
        for xx in x + i..x + i + nw {
            let v = img.get(xx, yy) as i128;
            s += v;
            s2 += v * v;
        }
    }
    let var = (nw * nh) as i128 * s2 - s * s;
    if var <= 0 {
        return false;
    }
    let norm = (var as f64).sqrt();
    for stage in &sc.model.stages {
        let mut acc = 0.0;
        for weak in &stage.weak {
            acc += weak.eval(|node| {
                let mut v = 0.0;
                for r in &sc.features[node.feature] {
                    v += r.weight * naive_box(img, x + r.x, y + r.y, r.w, r.h) as f64;
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

fn random_feature(rng: &mut impl Rng, ww: u32, wh: u32) -> HaarFeature {
    let x = rng.random_range(0..ww - 2);
    let y = rng.random_range(0..wh - 2);
    let w = rng.random_range(2..=ww - x);
    let h = rng.random_range(2..=wh - y);
    let sx = x + rng.random_range(0..w - 1);
    let sy = y + rng.random_range(0..h - 1);
    let sw = rng.random_range(1..=x + w - sx);
    let sh = rng.random_range(1..=y + h - sy);
    let outer = (w * h) as f64;
    let inner = (sw * sh) as f64;
    let mut rects = vec![
        HaarRect {
            x,
            y,
            w,
            h,
            weight: -1.0,
        },
        HaarRect {
            x: sx,
            y: sy,
            w: sw,
            h: sh,
            weight: outer / inner,
        },
    ];
    if rng.random_bool(0.3) {
        let tx = rng.random_range(0..ww - 1);
        let ty = rng.random_range(0..wh - 1);
        rects.push(HaarRect {
            x: tx,
            y: ty,
            w: rng.random_range(1..=ww - tx),
            h: rng.random_range(1..=wh - ty),
            weight: rng.random_range(-2.0..2.0),
        });
    }
    HaarFeature { rects }
}

fn random_node(rng: &mut impl Rng, n_features: usize) -> TreeNode {
    TreeNode {
        feature: rng.random_range(0..n_features),
        threshold: rng.random_range(-NODE_THRESHOLD..NODE_THRESHOLD),
        left: Child::Leaf(0),
        right: Child::Leaf(1),
    }
}

/// Node thresholds are drawn from `±NODE_THRESHOLD`, in units of window area
/// times standard deviation.
pub const NODE_THRESHOLD: f64 = 0.05;

/// Random cascade whose node thresholds split typical windows; trees of depth
/// two are mixed in unless `stumps_only`.
pub fn random_cascade(rng: &mut impl Rng, window: (usize, usize), stumps_only: bool) -> CascadeModel {
    let (ww, wh) = (window.0 as u32, window.1 as u32);
    let features: Vec<HaarFeature> = (0..12).map(|_| random_feature(rng, ww, wh)).collect();
    let mut stages = Vec::new();
    for _ in 0..rng.random_range(1..5) {
        let n = rng.random_range(1..6);
        let weak = (0..n)
            .map(|_| {
                if stumps_only || rng.random_bool(0.5) {
                    WeakClassifier {
                        nodes: vec![random_node(rng, features.len())],
                        leaves: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    }
                } else {
                    let mut root = random_node(rng, features.len());
                    let child = TreeNode {
                        left: Child::Leaf(1),
                        right: Child::Leaf(2),
                        ..random_node(rng, features.len())
                    };
                    root.right = Child::Node(1);
                    WeakClassifier {
                        nodes: vec![root, child],
                        leaves: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    }
                }
            })
            .collect();
        stages.push(CascadeStage {
            weak,
            threshold: rng.random_range(-0.6..0.3),
        });
    }
    CascadeModel {
        window_w: window.0,
        window_h: window.1,
        stages,
        features,
    }
}

/// Plain adaptive histogram equalization: per-tile mid-bin CDF tables blended
/// bilinearly between tile centers, evaluated pixel by pixel in exact
/// rational arithmetic.
pub fn ahe_reference(img: &GrayImage, tiles_x: usize, tiles_y: usize) -> GrayImage {
    let (w, h) = img.dimensions();
    let mut tables = vec![vec![[0i128; 256]; tiles_x]; tiles_y];
    for (ty, row) in tables.iter_mut().enumerate() {
        let (y0, y1) = tile_span(ty, tiles_y, h);
        for (tx, table) in row.iter_mut().enumerate() {
            let (x0, x1) = tile_span(tx, tiles_x, w);
            let mut count = [0i128; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    count[img.get(x, y) as usize] += 1;
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as i128;
            let mut below = 0;
            for v in 0..256 {
                // round(255 * (below + count / 2) / n), halves up
                table[v] = (255 * (2 * below + count[v]) + n).div_euclid(2 * n);
                below += count[v];
            }
        }
    }
    // doubled centers: tile [a, b) has center (a + b - 1) / 2
    let centers = |n: usize, len: usize| -> Vec<i128> {
        (0..n)
            .map(|i| {
                let (a, b) = tile_span(i, n, len);
                (a + b) as i128 - 1
            })
            .collect()
    };
    let (cx, cy) = (centers(tiles_x, w), centers(tiles_y, h));
    // neighbors and weight of the second one as num / den
    let locate = |c: &[i128], p2: i128| -> (usize, usize, i128, i128) {
        if p2 <= c[0] {
            return (0, 0, 0, 1);
        }
        for i in 0..c.len() - 1 {
            if c[i] <= p2 && p2 < c[i + 1] {
                return (i, i + 1, p2 - c[i], c[i + 1] - c[i]);
            }
        }
        (c.len() - 1, c.len() - 1, 0, 1)
    };
    GrayImage::from_fn(w, h, |x, y| {
        let v = img.get(x, y) as usize;
        let (x0, x1, nx, dx) = locate(&cx, 2 * x as i128);
        let (y0, y1, ny, dy) = locate(&cy, 2 * y as i128);
        let acc = (dx - nx) * (dy - ny) * tables[y0][x0][v]
            + nx * (dy - ny) * tables[y0][x1][v]
            + (dx - nx) * ny * tables[y1][x0][v]
            + nx * ny * tables[y1][x1][v];
        let den = dx * dy;
        (2 * acc + den).div_euclid(2 * den) as u8
    })
}

/// Erosion as the intersection of the mask translated by every element offset.
pub fn erode_sets(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = m.dimensions();
    let mut out = BinaryMask::from_fn(w, h, |_, _| true);
    for &(u, v) in &se.offsets {
        let shifted = BinaryMask::from_fn(w, h, |x, y| m.get_or_bg(x as isize + u, y as isize + v));
        out = BinaryMask::from_fn(w, h, |x, y| out.get(x, y) && shifted.get(x, y));
    }
    out
}

/// Dilation as the union of the mask translated by every element offset.
pub fn dilate_sets(m: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = m.dimensions();
    let mut out = BinaryMask::new(w, h);
    for &(u, v) in &se.offsets {
        let shifted = BinaryMask::from_fn(w, h, |x, y| m.get_or_bg(x as isize - u, y as isize - v));
        out = BinaryMask::from_fn(w, h, |x, y| out.get(x, y) || shifted.get(x, y));
    }
    out
}

/// 8-connected components by depth-first flood fill, in order of their first
/// pixel in row-major order.
pub fn flood_components(m: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = m.dimensions();
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(x, y)];
            seen[y * w + x] = true;
            while let Some((px, py)) = stack.pop() {
                comp.push((px, py));
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (nx, ny) = (px as isize + dx, py as isize + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if m.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

/// Largest component, earliest on equal size.
pub fn largest_by_flood(m: &BinaryMask) -> BinaryMask {
    let comps = flood_components(m);
    let mut out = BinaryMask::new(m.width(), m.height());
    let mut best: Option<&Vec<(usize, usize)>> = None;
    for c in &comps {
        if best.is_none_or(|b| c.len() > b.len()) {
            best = Some(c);
        }
    }
    for &(x, y) in best.into_iter().flatten() {
        out.set(x, y, true);
    }
    out
}

/// Exhaustive farthest pair: every unordered pair's exact squared distance,
/// tie set averaged per side. Returns `(temporal, nasal)`.
pub fn farthest_pair_oracle(cands: &[CornerCandidate], side: EyeSide) -> (Point, Point) {
    let mut pts: Vec<(i64, i64)> = cands.iter().map(|c| (c.x as i64, c.y as i64)).collect();
    pts.sort();
    pts.dedup();
    if pts.len() == 1 {
        let p = Point::new(pts[0].0 as i32, pts[0].1 as i32);
        return (p, p);
    }
    let mut best = -1i64;
    let mut pairs = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i].0 - pts[j].0).pow(2) + (pts[i].1 - pts[j].1).pow(2);
            if d > best {
                best = d;
                pairs.clear();
            }
            if d == best {
                pairs.push((pts[i], pts[j]));
            }
        }
    }
    let temporal_is_left = side == EyeSide::Right;
    let to_point = |p: (i64, i64)| Point::new(p.0 as i32, p.1 as i32);
    if pairs.len() == 1 {
        let (a, b) = pairs[0];
        let (t, n) = if a.0 == b.0 {
            if a.1 <= b.1 {
                (a, b)
            } else {
                (b, a)
            }
        } else {
            let (l, r) = if a.0 < b.0 { (a, b) } else { (b, a) };
            if temporal_is_left {
                (l, r)
            } else {
                (r, l)
            }
        };
        return (to_point(t), to_point(n));
    }
    let mut tied: Vec<(i64, i64)> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    tied.sort();
    tied.dedup();
    let n = tied.len() as f64;
    let cx = tied.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = tied.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut temporal, mut nasal) = (Vec::new(), Vec::new());
    for &p in &tied {
        let x = p.0 as f64;
        let to_temporal = if x < cx {
            temporal_is_left
        } else if x > cx {
            !temporal_is_left
        } else {
            (p.1 as f64) < cy
        };
        if to_temporal {
            temporal.push(p);
        } else {
            nasal.push(p);
        }
    }
    let mean = |g: &[(i64, i64)]| {
        let k = g.len() as f64;
        let mx = g.iter().map(|p| p.0 as f64).sum::<f64>() / k;
        let my = g.iter().map(|p| p.1 as f64).sum::<f64>() / k;
        Point::new((mx + 0.5).floor() as i32, (my + 0.5).floor() as i32)
    };
    (mean(&temporal), mean(&nasal))
}

/// Structure tensor by a direct double loop over the disk of `radius`.
pub fn naive_harris(g: &GradientField, radius: usize) -> Vec<Sym2> {
    let (w, h) = (g.width() as isize, g.height() as isize);
    let r = radius as isize;
    let sigma = radius as f64 / 2.0;
    let mut weights = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                let d2 = (dx * dx + dy * dy) as f64;
                let wt = if radius == 0 {
                    1.0
                } else {
                    (-d2 / (2.0 * sigma * sigma)).exp()
                };
                weights.push((dx, dy, wt));
            }
        }
    }
    let total: f64 = weights.iter().map(|t| t.2).sum();
    for t in &mut weights {
        t.2 /= total;
    }
    let mut field = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let mut m = Sym2::default();
            for &(dx, dy, wt) in &weights {
                let xx = (x + dx).clamp(0, w - 1);
                let yy = (y + dy).clamp(0, h - 1);
                let i = (yy * w + xx) as usize;
                let (gx, gy) = (g.ix[i] as f64, g.iy[i] as f64);
                m.a += wt * (gx * gx);
                m.b += wt * (gx * gy);
                m.c += wt * (gy * gy);
            }
            field.push(m);
        }
    }
    field
}

pub fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
}

/// Quadratic-intensity patch: a plane plus gentle curvature.
pub fn quadratic_patch(r: &mut impl Rng, size: usize) -> GrayImage {
    let (gx, gy) = (r.random_range(4.0..8.0) * sign(r), r.random_range(4.0..8.0) * sign(r));
    let (qa, qb, qc) = (
        r.random_range(-0.05..0.05),
        r.random_range(-0.05..0.05),
        r.random_range(-0.05..0.05),
    );
    let c = size as f64 / 2.0;
    GrayImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 - c, y as f64 - c);
        (128.0 + gx * u + gy * v + qa * u * u + qb * u * v + qc * v * v)
            .round()
            .clamp(0.0, 255.0) as u8
    })
}

fn sign(r: &mut impl Rng) -> f64 {
    if r.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Top-4 candidates on the outline of a filled rectangle, matched to its
/// corner pixels.
pub fn rectangle_corners_recovered(x0: usize, y0: usize, rw: usize, rh: usize, w: usize, h: usize) -> bool {
    let mask = rect_mask(w, h, x0, y0, x0 + rw, y0 + rh);
    let contour = eyelid_contour(&GrayImage::filled(w, h, 200), &mask).unwrap();
    let cands = contour_candidates(&contour, &HarrisParams::default()).unwrap();
    if cands.len() < 4 {
        return false;
    }
    let corners = [
        (x0, y0),
        (x0 + rw - 1, y0),
        (x0, y0 + rh - 1),
        (x0 + rw - 1, y0 + rh - 1),
    ];
    corners.iter().all(|&(cx, cy)| {
        cands[..4]
            .iter()
            .any(|c| (c.x as f64 - cx as f64).hypot(c.y as f64 - cy as f64) <= 1.0)
    })
}

/// Integer points at squared distance `d2` from the origin.
pub fn lattice_circle(d2: i64) -> Vec<(i64, i64)> {
    let r = (d2 as f64).sqrt().ceil() as i64;
    (-r..=r)
        .flat_map(|x| (-r..=r).map(move |y| (x, y)))
        .filter(|&(x, y)| x * x + y * y == d2)
        .collect()
}

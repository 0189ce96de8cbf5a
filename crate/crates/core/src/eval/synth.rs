//! Synthetic eye crops and face frames with exact corner ground truth.
//!
//! Eyelids are parabolas through the two canthi at `(±a, 0)` in the eye's
//! own frame: the upper lid peaks `aperture·b` above the axis and the lower
//! lid `aperture·b·lower_lid_ratio` below it. Pixel centers sit at integer
//! coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::annotations::{Annotation, EyeTruth};
use super::metric::CornerPair;
use crate::error::{invalid, Error, Result};
use crate::image::{Rect, RgbImage};
use crate::prune::EyeSide;

const SUPERSAMPLE: usize = 4;
/// Eye socket shading: x and y spread in eye half axes, upward shift in half
/// heights, depth.
const SOCKET: [f64; 4] = [1.3, 2.2, 0.5, 0.3];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthEyeParams {
    pub width: usize,
    pub height: usize,
    pub center: [f64; 2],
    /// Half width `a` (center to canthus) and half height `b` of the eye.
    pub axes: [f64; 2],
    /// Lid opening as a fraction of `b`, in `(0, 1]`.
    pub aperture: f64,
    pub lower_lid_ratio: f64,
    /// Rotation of the eye axis, degrees.
    pub tilt_deg: f64,
    pub iris_offset: [f64; 2],
    pub iris_radius: f64,
    pub pupil_radius: f64,
    pub skin: [u8; 3],
    pub sclera: [u8; 3],
    pub iris: [u8; 3],
    pub pupil: [u8; 3],
    /// Dark band just above the upper lid; `None` disables it.
    pub lid_line: Option<[u8; 3]>,
    pub lid_line_width: f64,
    pub noise_sigma: f64,
    /// Relative brightness change from the left to the right image edge.
    pub gradient: f64,
    pub side: EyeSide,
}

impl Default for SynthEyeParams {
    fn default() -> Self {
        Self {
            width: 100,
            height: 60,
            center: [50.0, 30.0],
            axes: [36.0, 18.0],
            aperture: 1.0,
            lower_lid_ratio: 0.8,
            tilt_deg: 0.0,
            iris_offset: [0.0, 0.0],
            iris_radius: 9.0,
            pupil_radius: 3.5,
            skin: [200, 160, 135],
            sclera: [235, 232, 228],
            iris: [110, 70, 40],
            pupil: [20, 15, 15],
            lid_line: None,
            lid_line_width: 2.0,
            noise_sigma: 4.0,
            gradient: 0.15,
            side: EyeSide::Right,
        }
    }
}

/// Eye geometry in image coordinates.
#[derive(Clone, Copy, Debug)]
struct EyeShape {
    center: [f64; 2],
    a: f64,
    up: f64,
    down: f64,
    cos: f64,
    sin: f64,
    iris_center: [f64; 2],
    iris_r: f64,
    pupil_r: f64,
    lid_w: f64,
}

impl EyeShape {
    fn to_local(self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (self.cos * dx + self.sin * dy, -self.sin * dx + self.cos * dy)
    }

    fn to_image(self, u: f64, v: f64) -> [f64; 2] {
        [
            self.center[0] + self.cos * u - self.sin * v,
            self.center[1] + self.sin * u + self.cos * v,
        ]
    }

    /// Colour index at `(x, y)`: 0 sclera, 1 iris, 2 pupil, 3 lid line.
    fn classify(&self, x: f64, y: f64) -> Option<u8> {
        let (u, v) = self.to_local(x, y);
        let t = u / self.a;
        if t.abs() > 1.0 {
            return None;
        }
        let bulge = 1.0 - t * t;
        let top = -self.up * bulge;
        if v >= top && v <= self.down * bulge {
            let (du, dv) = (u - self.iris_center[0], v - self.iris_center[1]);
            let r2 = du * du + dv * dv;
            return Some(if r2 <= self.pupil_r * self.pupil_r {
                2
            } else if r2 <= self.iris_r * self.iris_r {
                1
            } else {
                0
            });
        }
        (self.lid_w > 0.0 && v < top && v >= top - self.lid_w).then_some(3)
    }

    /// `(temporal, nasal)` in image coordinates.
    fn canthi(&self, side: EyeSide) -> ([f64; 2], [f64; 2]) {
        let (neg, pos) = (self.to_image(-self.a, 0.0), self.to_image(self.a, 0.0));
        match side {
            EyeSide::Right => (neg, pos),
            EyeSide::Left => (pos, neg),
        }
    }
}

impl SynthEyeParams {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("synth size", "width and height must be >= 1"));
        }
        if !(self.aperture > 0.0 && self.aperture <= 1.0) {
            return Err(invalid("aperture", format!("{} outside (0, 1]", self.aperture)));
        }
        if !(self.axes[0] > 0.0 && self.axes[1] > 0.0 && self.lower_lid_ratio > 0.0) {
            return Err(invalid("eye axes", "axes and lid ratio must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.iris_radius >= 0.0 && self.pupil_radius >= 0.0) {
            return Err(invalid("synth", "radii and noise must be non-negative"));
        }
        Ok(())
    }

    fn shape(&self) -> EyeShape {
        let th = self.tilt_deg.to_radians();
        let b = self.axes[1] * self.aperture;
        EyeShape {
            center: self.center,
            a: self.axes[0],
            up: b,
            down: b * self.lower_lid_ratio,
            cos: th.cos(),
            sin: th.sin(),
            iris_center: self.iris_offset,
            iris_r: self.iris_radius,
            pupil_r: self.pupil_radius,
            lid_w: if self.lid_line.is_some() {
                self.lid_line_width
            } else {
                0.0
            },
        }
    }

    /// Ground-truth corners: the lid intersections.
    pub fn corners(&self) -> CornerPair {
        let (temporal, nasal) = self.shape().canthi(self.side);
        CornerPair { nasal, temporal }
    }
}

fn add_noise(buf: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        for v in buf.iter_mut() {
            *v += n.sample(rng);
        }
    }
}

fn quantize(width: usize, height: usize, buf: &[f64]) -> RgbImage {
    let data = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RgbImage::from_raw(width, height, data).expect("buffer sized to image")
}

fn in_image(p: [f64; 2], w: usize, h: usize) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (w - 1) as f64 && p[1] <= (h - 1) as f64
}

fn rgb(c: [u8; 3]) -> [f64; 3] {
    c.map(f64::from)
}

/// Renders one eye crop and its annotation (`image_id` empty). Pure in
/// `(p, seed)`.
pub fn synth_eye(p: &SynthEyeParams, seed: u64) -> Result<(RgbImage, Annotation)> {
    p.validate()?;
    let shape = p.shape();
    let corners = p.corners();
    if !in_image(corners.nasal, p.width, p.height) || !in_image(corners.temporal, p.width, p.height) {
        return Err(Error::Geometry(format!(
            "canthi {:?} / {:?} fall outside the {}x{} image",
            corners.temporal, corners.nasal, p.width, p.height
        )));
    }
    let palette = [p.sclera, p.iris, p.pupil, p.lid_line.unwrap_or(p.skin)].map(rgb);
    let skin = rgb(p.skin);
    let (w, h) = (p.width, p.height);
    let mut buf = vec![0.0f64; 3 * w * h];
    let ss = SUPERSAMPLE as f64;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for j in 0..SUPERSAMPLE {
                for i in 0..SUPERSAMPLE {
                    let sx = x as f64 + (i as f64 + 0.5) / ss - 0.5;
                    let sy = y as f64 + (j as f64 + 0.5) / ss - 0.5;
                    let c = shape.classify(sx, sy).map_or(skin, |k| palette[k as usize]);
                    for ch in 0..3 {
                        acc[ch] += c[ch];
                    }
                }
            }
            let light = 1.0 + p.gradient * ((x as f64 - p.center[0]) / w as f64);
            let o = 3 * (y * w + x);
            for ch in 0..3 {
                buf[o + ch] = acc[ch] / (ss * ss) * light;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise(&mut buf, p.noise_sigma, &mut rng);
    let ann = Annotation {
        image_id: String::new(),
        eyes: vec![EyeTruth { side: p.side, corners }],
        face: None,
    };
    Ok((quantize(w, h, &buf), ann))
}

/// Random variation of `base`: position, size, iris placement, tilt and side.
pub fn jitter_eye(base: &SynthEyeParams, rng: &mut impl Rng) -> SynthEyeParams {
    let mut p = base.clone();
    p.center[0] += rng.random_range(-4.0..=4.0);
    p.center[1] += rng.random_range(-3.0..=3.0);
    p.axes[0] *= rng.random_range(0.92..=1.05);
    p.axes[1] *= rng.random_range(0.9..=1.1);
    p.aperture = (p.aperture * rng.random_range(0.9..=1.0)).min(1.0);
    p.tilt_deg += rng.random_range(-6.0..=6.0);
    p.iris_offset[0] += rng.random_range(-0.3..=0.3) * p.axes[0];
    p.iris_offset[1] += rng.random_range(-1.5..=1.5);
    p.gradient *= rng.random_range(-1.0..=1.0);
    p.side = if rng.random_bool(0.5) {
        EyeSide::Left
    } else {
        EyeSide::Right
    };
    p
}

/// One generated sample of a batch.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub image_id: String,
    pub image: RgbImage,
    pub annotation: Annotation,
}

/// `count` jittered eye crops named `eye_0000`, `eye_0001`, … Deterministic
/// in `seed`, and each prefix of a batch matches the shorter batch.
pub fn synth_eye_batch(base: &SynthEyeParams, seed: u64, count: usize) -> Result<Vec<SynthSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let p = jitter_eye(base, &mut rng);
            let img_seed = rng.random::<u64>();
            let (image, mut annotation) = synth_eye(&p, img_seed)?;
            let image_id = format!("eye_{i:04}");
            annotation.image_id = image_id.clone();
            Ok(SynthSample {
                image_id,
                image,
                annotation,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthFaceParams {
    pub width: usize,
    pub height: usize,
    /// Face ellipse semi-axes.
    pub face_axes: [f64; 2],
    /// Eye half width and half height.
    pub eye_axes: [f64; 2],
    pub iris_radius: f64,
    pub noise_sigma: f64,
}

impl Default for SynthFaceParams {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            face_axes: [105.0, 135.0],
            eye_axes: [24.0, 12.0],
            iris_radius: 6.5,
            noise_sigma: 4.0,
        }
    }
}

/// A frontal cartoon face with both eyes; the annotation carries the face
/// ellipse's bounding box and the four canthi.
pub fn synth_face(p: &SynthFaceParams, seed: u64) -> Result<(RgbImage, Annotation)> {
    let (w, h) = (p.width, p.height);
    let [fa, fb] = p.face_axes;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = w as f64 / 2.0 + rng.random_range(-40.0..=40.0);
    let cy = h as f64 / 2.0 + 10.0 + rng.random_range(-20.0..=20.0);
    if cx - fa < 0.0 || cy - fb < 0.0 || cx + fa > w as f64 || cy + fb > h as f64 {
        return Err(Error::Geometry(format!("face ellipse does not fit a {w}x{h} frame")));
    }
    let ey = cy - 0.22 * fb;
    let [a, b] = p.eye_axes;
    let eye_at = |ex: f64, side: EyeSide| SynthEyeParams {
        width: w,
        height: h,
        center: [ex, ey],
        axes: [a, b],
        iris_radius: p.iris_radius,
        pupil_radius: p.iris_radius * 0.45,
        lid_line: Some([70, 45, 40]),
        lid_line_width: 1.6,
        side,
        ..Default::default()
    };
    // the subject's right eye is on the image left
    let eyes = [
        eye_at(cx - 0.42 * fa, EyeSide::Right),
        eye_at(cx + 0.42 * fa, EyeSide::Left),
    ];
    let shapes = eyes.each_ref().map(|e| e.shape());
    let proto = &eyes[0];
    let palette = [
        proto.sclera,
        proto.iris,
        proto.pupil,
        proto.lid_line.unwrap_or(proto.skin),
    ]
    .map(rgb);

    let background = [90.0, 95.0, 100.0];
    let skin = [200.0, 160.0, 135.0];
    let hair = [40.0, 30.0, 25.0];
    let brow = [50.0, 35.0, 30.0];
    let nostril = [80.0, 50.0, 45.0];
    let lips = [150.0, 60.0, 60.0];
    let mut buf = vec![0.0f64; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let r2 = ((xf - cx) / fa).powi(2) + ((yf - cy) / fb).powi(2);
            let grad = xf / w as f64 * 30.0;
            let mut c = background.map(|v| v + grad);
            if r2 <= 1.0 {
                let mut shade = 1.0 - 0.25 * r2;
                for e in &eyes {
                    let (sx, sy) = (
                        (xf - e.center[0]) / (SOCKET[0] * a),
                        (yf - e.center[1] + SOCKET[2] * b) / (SOCKET[1] * b),
                    );
                    shade *= 1.0 - SOCKET[3] * (-(sx * sx + sy * sy)).exp();
                }
                c = skin.map(|v| v * shade);
                if yf < cy - 0.6 * fb {
                    c = hair;
                }
                for (e, s) in eyes.iter().zip(&shapes) {
                    let bx = (xf - e.center[0]) / (1.1 * a);
                    let brow_y = ey - 2.3 * b - 4.0 * (1.0 - bx * bx);
                    if bx.abs() <= 1.0 && (yf - brow_y).abs() < 3.5 {
                        c = brow;
                    }
                    if let Some(k) = s.classify(xf, yf) {
                        c = palette[k as usize];
                    }
                }
                if (xf - cx).abs() < 10.0 && yf > ey + 15.0 && yf < cy + 0.25 * fb {
                    c = c.map(|v| v * 0.85);
                }
                let ny = cy + 0.25 * fb;
                if (xf - cx - 8.0).powi(2) + (yf - ny).powi(2) < 16.0
                    || (xf - cx + 8.0).powi(2) + (yf - ny).powi(2) < 16.0
                {
                    c = nostril;
                }
                if ((xf - cx) / 35.0).powi(2) + ((yf - (cy + 0.55 * fb)) / 8.0).powi(2) <= 1.0 {
                    c = lips;
                }
            }
            buf[3 * (y * w + x)..3 * (y * w + x) + 3].copy_from_slice(&c);
        }
    }
    add_noise(&mut buf, p.noise_sigma, &mut rng);
    let face = Rect::new(
        (cx - fa).round() as usize,
        (cy - fb).round() as usize,
        (2.0 * fa).round() as usize,
        (2.0 * fb).round() as usize,
    );
    let ann = Annotation {
        image_id: String::new(),
        eyes: eyes
            .iter()
            .map(|e| EyeTruth {
                side: e.side,
                corners: e.corners(),
            })
            .collect(),
        face: Some(Rect {
            w: face.w.min(w - face.x),
            h: face.h.min(h - face.y),
            ..face
        }),
    };
    Ok((quantize(w, h, &buf), ann))
}

/// `count` face frames named `face_0000`, … deterministic in `seed`.
pub fn synth_face_batch(p: &SynthFaceParams, seed: u64, count: usize) -> Result<Vec<SynthSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (image, mut annotation) = synth_face(p, rng.random())?;
            let image_id = format!("face_{i:04}");
            annotation.image_id = image_id.clone();
            Ok(SynthSample {
                image_id,
                image,
                annotation,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_aperture_canthi_at_axis_extremes() {
        let p = SynthEyeParams {
            noise_sigma: 0.0,
            aperture: 1.0,
            ..Default::default()
        };
        let (_, ann) = synth_eye(&p, 1).unwrap();
        let c = ann.eyes[0].corners;
        assert_eq!(c.temporal, [p.center[0] - p.axes[0], p.center[1]]);
        assert_eq!(c.nasal, [p.center[0] + p.axes[0], p.center[1]]);
        let left = SynthEyeParams {
            side: EyeSide::Left,
            ..p
        };
        let c = left.corners();
        assert_eq!(c.temporal[0], left.center[0] + left.axes[0]);
    }

    #[test]
    fn deterministic_in_seed() {
        let p = SynthEyeParams::default();
        let (a, _) = synth_eye(&p, 9).unwrap();
        let (b, _) = synth_eye(&p, 9).unwrap();
        let (c, _) = synth_eye(&p, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn canthus_outside_is_geometry_error() {
        let p = SynthEyeParams {
            axes: [60.0, 10.0],
            ..Default::default()
        };
        assert!(matches!(synth_eye(&p, 0), Err(Error::Geometry(_))));
        let bad = SynthEyeParams {
            aperture: 0.0,
            ..Default::default()
        };
        assert!(synth_eye(&bad, 0).is_err());
    }

    #[test]
    fn regions_have_expected_colours() {
        let p = SynthEyeParams {
            noise_sigma: 0.0,
            gradient: 0.0,
            ..Default::default()
        };
        let (img, _) = synth_eye(&p, 0).unwrap();
        assert_eq!(img.get(1, 1), p.skin);
        assert_eq!(img.get(50, 30), p.pupil);
        assert_eq!(img.get(50 - 25, 30), p.sclera);
    }

    #[test]
    fn batch_prefix_stable() {
        let base = SynthEyeParams::default();
        let a = synth_eye_batch(&base, 42, 3).unwrap();
        let b = synth_eye_batch(&base, 42, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.annotation, y.annotation);
        }
        assert_eq!(b[4].image_id, "eye_0004");
    }

    #[test]
    fn face_has_two_eyes_inside() {
        let (img, ann) = synth_face(&SynthFaceParams::default(), 3).unwrap();
        assert_eq!(img.dimensions(), (640, 480));
        assert_eq!(ann.eyes.len(), 2);
        ann.validate(640, 480).unwrap();
        let r = ann.eye(EyeSide::Right).unwrap().corners;
        let l = ann.eye(EyeSide::Left).unwrap().corners;
        assert!(r.nasal[0] < l.nasal[0]);
        assert!(r.temporal[0] < r.nasal[0] && l.nasal[0] < l.temporal[0]);
    }
}

//! End-to-end corner localization: enhancement, face and eye detection,
//! sclera segmentation, contour candidates and pruning.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::cascade::{self, CascadeModel, DetectParams, EyeRoiFractions};
use crate::clahe::{clahe, ClaheParams};
use crate::error::{invalid, Error, Result};
use crate::eval::metric::ErrorNorm;
use crate::harris::{contour_candidates, HarrisParams};
use crate::image::{GrayImage, Point, Rect};
use crate::io::AnyImage;
use crate::prune::{prune, to_full_frame, EyeCorners, EyeSide};
use crate::sclera::{
    eyelid_contour, largest_component, morph_open, segment_sclera, segmentation_plane, BinaryMask, EyeImage,
    ScleraMode, StructuringElement, Threshold,
};

/// Which saturation/intensity rule segments the sclera.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScleraModeSetting {
    /// Color rule for RGB input, gray rule otherwise.
    Auto,
    Fixed(ScleraMode),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// `None` skips enhancement.
    pub clahe: Option<ClaheParams>,
    pub face_model: Option<PathBuf>,
    pub eye_model: Option<PathBuf>,
    pub face_detect: DetectParams,
    pub eye_detect: DetectParams,
    pub roi: EyeRoiFractions,
    pub sclera_mode: ScleraModeSetting,
    pub sclera_thresh: Threshold,
    /// Opening ellipse half axes at a 100 px wide eye crop.
    pub se_axes: (f64, f64),
    pub harris: HarrisParams,
    pub error_norm: ErrorNorm,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clahe: Some(ClaheParams::default()),
            face_model: None,
            eye_model: None,
            face_detect: DetectParams {
                min_size: 80,
                ..Default::default()
            },
            eye_detect: DetectParams::default(),
            roi: EyeRoiFractions::default(),
            sclera_mode: ScleraModeSetting::Auto,
            sclera_thresh: Threshold::Auto,
            se_axes: (3.0, 2.0),
            harris: HarrisParams::default(),
            error_norm: ErrorNorm::Diagonal,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("bad boolean {v:?} for {key}"))),
    }
}

fn parse_pair<T: std::str::FromStr>(key: &str, v: &str, seps: &[char]) -> Result<(T, T)> {
    let mut it = v.split(seps);
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(Error::Parse(format!("{key} needs two values, got {v:?}"))),
    }
}

impl PipelineConfig {
    /// Sets one field from its `key=value` spelling. Dashes and underscores
    /// are interchangeable in keys.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        let path = |v: &str| (!v.is_empty() && v != "none").then(|| PathBuf::from(v));
        match key.as_str() {
            "clahe" => {
                self.clahe = parse_bool(&key, v)?.then(|| self.clahe.unwrap_or_default());
            }
            "no_clahe" => {
                if parse_bool(&key, v)? {
                    self.clahe = None;
                }
            }
            "clahe_tiles" => {
                let (tx, ty) = parse_pair(&key, v, &['x', 'X', ','])?;
                let c = self.clahe.get_or_insert_with(Default::default);
                c.tiles_x = tx;
                c.tiles_y = ty;
            }
            "clahe_clip" => self.clahe.get_or_insert_with(Default::default).clip_limit = parse(&key, v)?,
            "face_model" => self.face_model = path(v),
            "eye_model" => self.eye_model = path(v),
            "scale_factor" => self.face_detect.scale_factor = parse(&key, v)?,
            "min_neighbors" => self.face_detect.min_neighbors = parse(&key, v)?,
            "min_size" => self.face_detect.min_size = parse(&key, v)?,
            "max_size" => self.face_detect.max_size = if v == "none" { None } else { Some(parse(&key, v)?) },
            "eye_scale_factor" => self.eye_detect.scale_factor = parse(&key, v)?,
            "eye_min_neighbors" => self.eye_detect.min_neighbors = parse(&key, v)?,
            "eye_min_size" => self.eye_detect.min_size = parse(&key, v)?,
            "roi_top" => self.roi.top = parse(&key, v)?,
            "roi_bottom" => self.roi.bottom = parse(&key, v)?,
            "roi_split" => self.roi.split = parse(&key, v)?,
            "min_eye_frac" => self.roi.min_eye = parse(&key, v)?,
            "sclera_mode" => {
                self.sclera_mode = match v.to_ascii_lowercase().as_str() {
                    "auto" => ScleraModeSetting::Auto,
                    "color" | "colour" => ScleraModeSetting::Fixed(ScleraMode::Color),
                    "gray" | "grey" => ScleraModeSetting::Fixed(ScleraMode::Gray),
                    _ => {
                        return Err(Error::Parse(format!(
                            "sclera_mode must be auto, color or gray, got {v:?}"
                        )))
                    }
                }
            }
            "sclera_thresh" => {
                self.sclera_thresh = if v.eq_ignore_ascii_case("auto") {
                    Threshold::Auto
                } else {
                    Threshold::Fixed(parse(&key, v)?)
                }
            }
            "se_axes" => self.se_axes = parse_pair(&key, v, &[',', 'x'])?,
            "harris_k" => self.harris.k = parse(&key, v)?,
            "harris_radius" => self.harris.radius = parse(&key, v)?,
            "nms_radius" => self.harris.nms_radius = parse(&key, v)?,
            "max_candidates" => self.harris.max_candidates = parse(&key, v)?,
            "rel_thresh" => self.harris.rel_thresh = parse(&key, v)?,
            "error_norm" => self.error_norm = parse(&key, v)?,
            _ => return Err(Error::Parse(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Reads a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_file_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::ParseAt {
                line: i as u64 + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            self.apply(k, v).map_err(|e| Error::ParseAt {
                line: i as u64 + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Every field as `key=value` lines, readable by [`apply_file_text`](Self::apply_file_text).
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let c = self.clahe.unwrap_or_default();
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let _ = writeln!(s, "clahe={}", self.clahe.is_some());
        let _ = writeln!(s, "clahe_tiles={}x{}", c.tiles_x, c.tiles_y);
        let _ = writeln!(s, "clahe_clip={}", c.clip_limit);
        let _ = writeln!(s, "face_model={}", opt(&self.face_model));
        let _ = writeln!(s, "eye_model={}", opt(&self.eye_model));
        let _ = writeln!(s, "scale_factor={}", self.face_detect.scale_factor);
        let _ = writeln!(s, "min_neighbors={}", self.face_detect.min_neighbors);
        let _ = writeln!(s, "min_size={}", self.face_detect.min_size);
        let _ = writeln!(
            s,
            "max_size={}",
            self.face_detect.max_size.map_or("none".to_string(), |m| m.to_string())
        );
        let _ = writeln!(s, "eye_scale_factor={}", self.eye_detect.scale_factor);
        let _ = writeln!(s, "eye_min_neighbors={}", self.eye_detect.min_neighbors);
        let _ = writeln!(s, "eye_min_size={}", self.eye_detect.min_size);
        let _ = writeln!(s, "roi_top={}", self.roi.top);
        let _ = writeln!(s, "roi_bottom={}", self.roi.bottom);
        let _ = writeln!(s, "roi_split={}", self.roi.split);
        let _ = writeln!(s, "min_eye_frac={}", self.roi.min_eye);
        let mode = match self.sclera_mode {
            ScleraModeSetting::Auto => "auto",
            ScleraModeSetting::Fixed(ScleraMode::Color) => "color",
            ScleraModeSetting::Fixed(ScleraMode::Gray) => "gray",
        };
        let _ = writeln!(s, "sclera_mode={mode}");
        let thresh = match self.sclera_thresh {
            Threshold::Auto => "auto".to_string(),
            Threshold::Fixed(t) => t.to_string(),
        };
        let _ = writeln!(s, "sclera_thresh={thresh}");
        let _ = writeln!(s, "se_axes={},{}", self.se_axes.0, self.se_axes.1);
        let _ = writeln!(s, "harris_k={}", self.harris.k);
        let _ = writeln!(s, "harris_radius={}", self.harris.radius);
        let _ = writeln!(s, "nms_radius={}", self.harris.nms_radius);
        let _ = writeln!(s, "max_candidates={}", self.harris.max_candidates);
        let _ = writeln!(s, "rel_thresh={}", self.harris.rel_thresh);
        let _ = writeln!(s, "error_norm={}", self.error_norm);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.clahe {
            c.validate()?;
        }
        self.face_detect.validate()?;
        self.eye_detect.validate()?;
        let r = &self.roi;
        if !(0.0 <= r.top
            && r.top < r.bottom
            && r.bottom <= 1.0
            && 0.0 < r.split
            && r.split < 1.0
            && (0.0..1.0).contains(&r.min_eye))
        {
            return Err(invalid("eye roi", format!("{r:?}")));
        }
        if !(self.se_axes.0 > 0.0 && self.se_axes.1 > 0.0) {
            return Err(invalid("se axes", format!("{:?} must be positive", self.se_axes)));
        }
        let h = &self.harris;
        if !(0.01..=0.25).contains(&h.k) {
            return Err(invalid("harris k", format!("{} outside [0.01, 0.25]", h.k)));
        }
        if h.radius == 0 || h.max_candidates == 0 {
            return Err(invalid("harris", "radius and max candidates must be >= 1"));
        }
        if !(0.0..=1.0).contains(&h.rel_thresh) {
            return Err(invalid("rel thresh", format!("{} outside [0, 1]", h.rel_thresh)));
        }
        Ok(())
    }
}

/// Wall time spent per stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub enhance: f64,
    pub face: f64,
    pub eyes: f64,
    pub sclera: f64,
    pub harris: f64,
    pub prune: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.enhance + self.face + self.eyes + self.sclera + self.harris + self.prune
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EyeResult {
    pub side: EyeSide,
    /// Eye box in full-frame coordinates.
    pub rect: Rect,
    /// Full-frame corners, absent when a later stage failed.
    pub corners: Option<EyeCorners>,
    /// Harris candidates in full-frame coordinates.
    pub candidates: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameResult {
    pub face: Option<Rect>,
    pub eyes: Vec<EyeResult>,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl FrameResult {
    pub fn corners(&self, side: EyeSide) -> Option<&EyeCorners> {
        self.eyes
            .iter()
            .find(|e| e.side == side)
            .and_then(|e| e.corners.as_ref())
    }

    /// At least one eye produced corners.
    pub fn succeeded(&self) -> bool {
        self.eyes.iter().any(|e| e.corners.is_some())
    }
}

/// Intermediate rasters of one eye.
#[derive(Clone, Debug)]
pub struct EyeStages {
    pub side: EyeSide,
    /// Plane the sclera threshold ran on: saturation, or intensity in gray mode.
    pub plane: GrayImage,
    pub mask: BinaryMask,
    pub opened: BinaryMask,
    pub component: BinaryMask,
    pub contour: GrayImage,
}

/// Intermediate rasters of one frame.
#[derive(Clone, Debug, Default)]
pub struct StageImages {
    pub enhanced: Option<GrayImage>,
    pub eyes: Vec<EyeStages>,
}

/// A configured pipeline with its cascade models loaded.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    face_model: Option<CascadeModel>,
    eye_model: Option<CascadeModel>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    /// Validates `config` and loads whichever cascade files it names.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let face_model = config.face_model.as_ref().map(cascade::load_cascade_file).transpose()?;
        let eye_model = config.eye_model.as_ref().map(cascade::load_cascade_file).transpose()?;
        Ok(Self {
            config,
            face_model,
            eye_model,
        })
    }

    pub fn with_models(config: PipelineConfig, face: Option<CascadeModel>, eye: Option<CascadeModel>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            face_model: face,
            eye_model: eye,
        })
    }

    pub fn has_models(&self) -> bool {
        self.face_model.is_some() && self.eye_model.is_some()
    }

    fn enhance(&self, gray: &GrayImage) -> Result<GrayImage> {
        match &self.config.clahe {
            Some(p) => clahe(gray, p),
            None => Ok(gray.clone()),
        }
    }

    fn sclera_mode(&self, img: &AnyImage) -> ScleraMode {
        match self.config.sclera_mode {
            ScleraModeSetting::Fixed(m) => m,
            ScleraModeSetting::Auto if img.is_color() => ScleraMode::Color,
            ScleraModeSetting::Auto => ScleraMode::Gray,
        }
    }

    /// Corners of one eye box of `src`, using the enhanced frame for the
    /// contour intensities.
    fn eye(
        &self,
        src: &AnyImage,
        enhanced: &GrayImage,
        rect: Rect,
        side: EyeSide,
        timings: &mut StageTimings,
        stages: Option<&mut StageImages>,
    ) -> EyeResult {
        let mut out = EyeResult {
            side,
            rect,
            corners: None,
            candidates: Vec::new(),
            failure: None,
        };
        let t = Instant::now();
        let contour = (|| -> Result<_> {
            let mode = self.sclera_mode(src);
            let crop = match src {
                AnyImage::Rgb(i) => AnyImage::Rgb(i.crop(rect)?),
                AnyImage::Gray(i) => AnyImage::Gray(i.crop(rect)?),
            };
            let eye_img = match &crop {
                AnyImage::Rgb(i) => EyeImage::Rgb(i),
                AnyImage::Gray(i) => EyeImage::Gray(i),
            };
            let mask = segment_sclera(eye_img, mode, self.config.sclera_thresh)?;
            let se = StructuringElement::scaled_for_width(self.config.se_axes, rect.w)?;
            let opened = morph_open(&mask, &se);
            let component = largest_component(&opened);
            let contour = eyelid_contour(&enhanced.crop(rect)?, &component)?;
            if let Some(st) = stages {
                st.eyes.push(EyeStages {
                    side,
                    plane: segmentation_plane(eye_img, mode),
                    mask,
                    opened,
                    component: component.clone(),
                    contour: contour.intensity.clone(),
                });
            }
            if component.is_empty() {
                return Err(Error::Geometry("empty sclera mask".into()));
            }
            Ok(contour)
        })();
        timings.sclera += ms(t);
        let contour = match contour {
            Ok(c) => c,
            Err(e) => {
                out.failure = Some(format!("sclera: {e}"));
                return out;
            }
        };

        let t = Instant::now();
        let cands = contour_candidates(&contour, &self.config.harris);
        timings.harris += ms(t);
        let cands = match cands {
            Ok(c) => c,
            Err(e) => {
                out.failure = Some(format!("harris: {e}"));
                return out;
            }
        };
        out.candidates = cands
            .iter()
            .map(|c| Point::new((c.x + rect.x) as i32, (c.y + rect.y) as i32))
            .collect();

        let t = Instant::now();
        match prune(&cands, side, rect) {
            Ok(c) => out.corners = Some(to_full_frame(&c)),
            Err(e) => out.failure = Some(format!("prune: {e}")),
        }
        timings.prune += ms(t);
        out
    }

    fn frame_impl(&self, img: &AnyImage, mut stages: Option<&mut StageImages>) -> Result<FrameResult> {
        let (Some(face_model), Some(eye_model)) = (&self.face_model, &self.eye_model) else {
            return Err(invalid("models", "face and eye cascades are required for full frames"));
        };
        let mut res = FrameResult::default();
        let t = Instant::now();
        let enhanced = self.enhance(&img.to_gray())?;
        res.timings.enhance = ms(t);
        if let Some(st) = stages.as_deref_mut() {
            st.enhanced = Some(enhanced.clone());
        }

        let t = Instant::now();
        let faces = match cascade::detect(&enhanced, face_model, &self.config.face_detect) {
            Ok(f) => f,
            Err(Error::ImageTooSmall { .. }) => Vec::new(),
            Err(e) => return Err(e),
        };
        res.timings.face = ms(t);
        let Some(face) = faces.first().map(|d| d.rect) else {
            res.failures.push("no face detected".into());
            return Ok(res);
        };
        res.face = Some(face);

        let t = Instant::now();
        let (left, right) =
            cascade::detect_eyes(&enhanced, face, eye_model, &self.config.eye_detect, &self.config.roi)?;
        res.timings.eyes = ms(t);
        // image-left first
        for (side, rect) in [(EyeSide::Right, right), (EyeSide::Left, left)] {
            match rect {
                Some(r) => {
                    let e = self.eye(img, &enhanced, r, side, &mut res.timings, stages.as_deref_mut());
                    if let Some(f) = &e.failure {
                        res.failures.push(format!("{} eye: {f}", side.as_str()));
                    }
                    res.eyes.push(e);
                }
                None => res.failures.push(format!("{} eye not detected", side.as_str())),
            }
        }
        Ok(res)
    }

    /// Full pipeline on a face image. Needs both cascade models.
    pub fn process_frame(&self, img: &AnyImage) -> Result<FrameResult> {
        self.frame_impl(img, None)
    }

    pub fn process_frame_staged(&self, img: &AnyImage) -> Result<(FrameResult, StageImages)> {
        let mut st = StageImages::default();
        let r = self.frame_impl(img, Some(&mut st))?;
        Ok((r, st))
    }

    fn crop_impl(&self, img: &AnyImage, side: EyeSide, mut stages: Option<&mut StageImages>) -> Result<FrameResult> {
        let mut res = FrameResult::default();
        let t = Instant::now();
        let enhanced = self.enhance(&img.to_gray())?;
        res.timings.enhance = ms(t);
        if let Some(st) = stages.as_deref_mut() {
            st.enhanced = Some(enhanced.clone());
        }
        let (w, h) = img.dimensions();
        let e = self.eye(img, &enhanced, Rect::new(0, 0, w, h), side, &mut res.timings, stages);
        if let Some(f) = &e.failure {
            res.failures.push(format!("{} eye: {f}", side.as_str()));
        }
        res.eyes.push(e);
        Ok(res)
    }

    /// Skips detection and treats the whole image as one eye crop.
    pub fn process_eye_crop(&self, img: &AnyImage, side: EyeSide) -> Result<FrameResult> {
        self.crop_impl(img, side, None)
    }

    pub fn process_eye_crop_staged(&self, img: &AnyImage, side: EyeSide) -> Result<(FrameResult, StageImages)> {
        let mut st = StageImages::default();
        let r = self.crop_impl(img, side, Some(&mut st))?;
        Ok((r, st))
    }
}

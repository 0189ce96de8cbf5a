//! PNG and binary PGM/PPM (P5/P6) reading and writing.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{to_grayscale, GrayImage, RgbImage};

/// A decoded image, keeping track of whether it carried color.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl AnyImage {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            AnyImage::Gray(g) => g.dimensions(),
            AnyImage::Rgb(c) => c.dimensions(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        match self {
            AnyImage::Gray(g) => g.clone(),
            AnyImage::Rgb(c) => to_grayscale(c),
        }
    }

    pub fn to_rgb(&self) -> RgbImage {
        match self {
            AnyImage::Gray(g) => g.to_rgb(),
            AnyImage::Rgb(c) => c.clone(),
        }
    }

    pub fn is_color(&self) -> bool {
        matches!(self, AnyImage::Rgb(_))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a PNG, PGM (P5) or PPM (P6) file, sniffing the format from its magic bytes.
pub fn read_image(path: impl AsRef<Path>) -> Result<AnyImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        return decode_pnm(&bytes).map_err(|r| decode_err(path, r));
    }
    let img = image::load_from_memory(&bytes).map_err(|e| decode_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let any = if img.color().has_color() {
        AnyImage::Rgb(RgbImage::from_raw(w, h, img.to_rgb8().into_raw())?)
    } else {
        AnyImage::Gray(GrayImage::from_raw(w, h, img.to_luma8().into_raw())?)
    };
    Ok(any)
}

/// Parses a binary PNM buffer with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<AnyImage, String> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PGM/PPM".into()),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).map_err(|e| e.to_string())?;
        *field = tok.parse().map_err(|_| format!("bad header token {tok:?}"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("missing whitespace after header".into());
    }
    pos += 1;
    let need = w * h * channels;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| format!("truncated raster: need {need} bytes"))?
        .to_vec();
    match channels {
        1 => GrayImage::from_raw(w, h, data).map(AnyImage::Gray),
        _ => RgbImage::from_raw(w, h, data).map(AnyImage::Rgb),
    }
    .map_err(|e| e.to_string())
}

/// `P5 <w> <h> 255\n` followed by the raw row-major bytes.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5 {} {} 255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

/// `P6 <w> <h> 255\n` followed by the raw interleaved RGB bytes.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6 {} {} 255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

fn is_pnm_path(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm" | "ppm" | "pnm")
    )
}

/// Writes a grayscale image as PGM when the extension says so, PNG otherwise.
pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    if is_pnm_path(path) {
        return fs::write(path, encode_pgm(img)).map_err(|e| io_err(path, e));
    }
    image::save_buffer(
        path,
        img.as_raw(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| decode_err(path, e.to_string()))
}

/// Writes a color image as PPM when the extension says so, PNG otherwise.
pub fn write_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    if is_pnm_path(path) {
        return fs::write(path, encode_ppm(img)).map_err(|e| io_err(path, e));
    }
    image::save_buffer(
        path,
        img.as_raw(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| decode_err(path, e.to_string()))
}

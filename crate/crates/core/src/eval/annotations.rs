//! Ground-truth corner CSV: one row per eye,
//! `image_id,eye,nasal_x,nasal_y,temporal_x,temporal_y[,face_x,face_y,face_w,face_h]`.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::metric::CornerPair;
use crate::error::{Error, Result};
use crate::image::Rect;
use crate::prune::EyeSide;

pub const HEADER: [&str; 6] = ["image_id", "eye", "nasal_x", "nasal_y", "temporal_x", "temporal_y"];
pub const FACE_HEADER: [&str; 4] = ["face_x", "face_y", "face_w", "face_h"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EyeTruth {
    pub side: EyeSide,
    pub corners: CornerPair,
}

/// Ground truth of one image.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Annotation {
    pub image_id: String,
    pub eyes: Vec<EyeTruth>,
    pub face: Option<Rect>,
}

impl Annotation {
    pub fn eye(&self, side: EyeSide) -> Option<&EyeTruth> {
        self.eyes.iter().find(|e| e.side == side)
    }

    /// All corners must lie inside a `width × height` image.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let inside = |p: [f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] < width as f64 && p[1] < height as f64;
        let ok = self
            .eyes
            .iter()
            .all(|e| inside(e.corners.nasal) && inside(e.corners.temporal))
            && self.face.is_none_or(|f| f.fits_in(width, height));
        if ok {
            Ok(())
        } else {
            Err(Error::Bounds {
                image_id: self.image_id.clone(),
                width,
                height,
            })
        }
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::ParseAt {
        line,
        reason: format!("column {} ({}) has bad value {raw:?}", i + 1, column_name(i)),
    })
}

fn column_name(i: usize) -> &'static str {
    HEADER.iter().chain(FACE_HEADER.iter()).nth(i).copied().unwrap_or("?")
}

/// Parses annotation CSV text. Rows of one `image_id` are merged in order of
/// first appearance.
pub fn parse_annotations(reader: impl Read) -> Result<Vec<Annotation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out: Vec<Annotation> = Vec::new();
    let mut with_face = false;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ParseAt {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            let cols: Vec<&str> = rec.iter().collect();
            let full: Vec<&str> = HEADER.iter().chain(FACE_HEADER.iter()).copied().collect();
            if cols == HEADER {
                continue;
            }
            if cols == full {
                with_face = true;
                continue;
            }
            return Err(Error::ParseAt {
                line,
                reason: format!("expected header {}", HEADER.join(",")),
            });
        }
        let expected = if with_face { 10 } else { 6 };
        if rec.len() != expected {
            return Err(Error::ParseAt {
                line,
                reason: format!("expected {expected} fields, found {}", rec.len()),
            });
        }
        let side: EyeSide = rec[1].parse().map_err(|_| Error::ParseAt {
            line,
            reason: format!("eye must be left or right, got {:?}", &rec[1]),
        })?;
        let corners = CornerPair {
            nasal: [field(&rec, 2, line)?, field(&rec, 3, line)?],
            temporal: [field(&rec, 4, line)?, field(&rec, 5, line)?],
        };
        if corners.nasal.iter().chain(&corners.temporal).any(|v| !v.is_finite()) {
            return Err(Error::ParseAt {
                line,
                reason: "coordinates must be finite".into(),
            });
        }
        let face = if with_face {
            Some(Rect::new(
                field(&rec, 6, line)?,
                field(&rec, 7, line)?,
                field(&rec, 8, line)?,
                field(&rec, 9, line)?,
            ))
        } else {
            None
        };
        let id = &rec[0];
        let idx = match out.iter().position(|a| a.image_id == id) {
            Some(k) => k,
            None => {
                out.push(Annotation {
                    image_id: id.to_string(),
                    eyes: Vec::new(),
                    face,
                });
                out.len() - 1
            }
        };
        let ann = &mut out[idx];
        if ann.eye(side).is_some() {
            return Err(Error::ParseAt {
                line,
                reason: format!("duplicate {} eye for {id}", side.as_str()),
            });
        }
        ann.eyes.push(EyeTruth { side, corners });
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_annotations(std::io::BufReader::new(f))
}

/// Writes annotations back in the CSV layout, one row per eye.
pub fn write_annotations(w: impl Write, anns: &[Annotation]) -> Result<()> {
    let with_face = anns.iter().any(|a| a.face.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    if with_face {
        wtr.write_record(HEADER.iter().chain(FACE_HEADER.iter())).map_err(io)?;
    } else {
        wtr.write_record(HEADER).map_err(io)?;
    }
    for a in anns {
        for e in &a.eyes {
            let c = &e.corners;
            let mut row = vec![
                a.image_id.clone(),
                e.side.as_str().to_string(),
                c.nasal[0].to_string(),
                c.nasal[1].to_string(),
                c.temporal[0].to_string(),
                c.temporal[1].to_string(),
            ];
            if with_face {
                let f = a.face.unwrap_or(Rect::new(0, 0, 0, 0));
                row.extend([f.x, f.y, f.w, f.h].map(|v| v.to_string()));
            }
            wtr.write_record(&row).map_err(io)?;
        }
    }
    wtr.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

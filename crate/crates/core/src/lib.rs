//! Eye corner (canthus) localization.
//!
//! A frame is contrast-enhanced, searched for a face and then for each eye;
//! inside every eye box the sclera is segmented, its outline becomes a sparse
//! contour image, Harris responses on that contour give corner candidates and
//! the farthest-apart pair of candidates is reported as the nasal and temporal
//! corners.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod clahe;
pub mod error;
pub mod eval;
pub mod harris;
pub mod image;
pub mod io;
pub mod pipeline;
pub mod prune;
pub mod sclera;

pub use error::{Error, Result};
pub use image::{GrayImage, Point, Rect, RgbImage};
pub use io::AnyImage;
pub use pipeline::{FrameResult, Pipeline, PipelineConfig};
pub use prune::{EyeCorners, EyeSide};

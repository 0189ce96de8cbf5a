//! Ground truth, error metric, synthetic data and batch benchmarking.

pub mod annotations;
pub mod bench;
pub mod metric;
pub mod synth;

pub use annotations::{load_annotations, parse_annotations, write_annotations, Annotation, EyeTruth};
pub use bench::{benchmark, BenchItem, EvalReport, ImageReport, Source};
pub use metric::{percent_error, CornerPair, ErrorNorm};
pub use synth::{
    synth_eye, synth_eye_batch, synth_face, synth_face_batch, SynthEyeParams, SynthFaceParams, SynthSample,
};

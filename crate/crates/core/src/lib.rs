//! Voice activity detection from zero-frequency filtered speech.
//!
//! The input is passed through a bank of zero-frequency filters whose trend
//! windows are fractions of the average pitch period. The gradient-weighted
//! outputs are combined, divided by the short-time spectral entropy, and
//! thresholded block by block to give voiced segments.

pub mod audio;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod segments;
pub mod synth;
pub mod zff;

pub use audio::{frames, read_wav, write_wav, FrameSpec, SampleBuffer};
pub use error::{Error, Result};
pub use eval::{
    aggregate, hypothesis_frames, score, segments_to_frames, Counts, EvalReport, FileResult,
    FrameLabels, Score,
};
pub use pipeline::{detect, DecisionSurface, Detection, EntropySource, PipelineConfig};
pub use segments::{Segment, SegmentList};
pub use synth::{corpus, random_layouts, synthesize, CorpusItem, Layout, NoiseKind, SynthSpec};
pub use zff::{compute_bank, ZffBank, ZffConfig};

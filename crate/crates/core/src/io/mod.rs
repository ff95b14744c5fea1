//! Text formats: MOTChallenge detections, ground truth and results,
//! VisDrone annotations, and per-frame camera-motion files.
//!
//! Numeric fields are read at `f32` precision and widened to `f64`. The wire
//! protocol carries `f32`, so a sequence read from disk survives a round trip
//! through the network unchanged. Every writer emits LF line endings; every
//! parser accepts LF or CRLF and skips blank lines.

mod bundle;
mod parse;
mod write;

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::{AffineTransform, Detection};

pub use bundle::{read_labeled, GtFormat, SequenceBundle};
pub use parse::{
    parse_gmc_file, parse_mot_detections, parse_mot_labeled, parse_visdrone_annotations,
    parse_visdrone_annotations_with, VisDroneFilter,
};
pub use write::{write_detections, write_gmc, write_labeled, write_results, write_visdrone_annotations};

/// Detections keyed by frame number, in file order within a frame.
pub type DetectionFrames = BTreeMap<u64, Vec<Detection>>;

/// A line that violates its format's grammar.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {err}", path.display())]
    Read { path: PathBuf, err: std::io::Error },
    #[error("{}:{}: {}", path.display(), err.line, err.message)]
    Parse { path: PathBuf, err: ParseError },
    #[error("{0}")]
    Inconsistent(String),
}

/// Per-frame camera motion; frames without an entry use the identity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraMotion {
    transforms: BTreeMap<u64, AffineTransform>,
}

impl CameraMotion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: u64, t: AffineTransform) {
        self.transforms.insert(frame, t);
    }

    pub fn get(&self, frame: u64) -> AffineTransform {
        self.transforms.get(&frame).copied().unwrap_or(AffineTransform::IDENTITY)
    }

    /// Explicitly listed frames, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &AffineTransform)> {
        self.transforms.iter().map(|(f, t)| (*f, t))
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.transforms.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

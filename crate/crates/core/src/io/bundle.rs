use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::geometry::FrameInput;
use crate::metrics::{LabeledFrameSet, Source};

use super::parse::{parse_gmc_file, parse_mot_detections, parse_mot_labeled, parse_visdrone_annotations};
use super::{CameraMotion, DetectionFrames, IoError, ParseError};

/// Layout of a ground-truth file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GtFormat {
    #[default]
    Mot,
    VisDrone,
}

impl FromStr for GtFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mot" => Ok(Self::Mot),
            "visdrone" => Ok(Self::VisDrone),
            other => Err(format!("unknown annotation format {other:?} (expected mot or visdrone)")),
        }
    }
}

impl fmt::Display for GtFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mot => "mot",
            Self::VisDrone => "visdrone",
        })
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|err| IoError::Read {
        path: path.to_path_buf(),
        err,
    })
}

fn located<T>(path: &Path, r: Result<T, ParseError>) -> Result<T, IoError> {
    r.map_err(|err| IoError::Parse {
        path: path.to_path_buf(),
        err,
    })
}

/// Reads ground truth (in either layout) or a MOT-format result file.
pub fn read_labeled(path: &Path, format: GtFormat, source: Source) -> Result<LabeledFrameSet, IoError> {
    let text = read(path)?;
    located(
        path,
        match (format, source) {
            (GtFormat::VisDrone, Source::GroundTruth) => parse_visdrone_annotations(&text),
            (GtFormat::VisDrone, Source::Result) => parse_visdrone_annotations(&text).map(|mut set| {
                set.source = Source::Result;
                set
            }),
            (GtFormat::Mot, s) => parse_mot_labeled(&text, s),
        },
    )
}

/// One video sequence: its detections plus optional annotations and camera motion.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub name: String,
    pub detections: DetectionFrames,
    pub ground_truth: Option<LabeledFrameSet>,
    pub camera_motion: Option<CameraMotion>,
    /// Frames run from 1 to `frame_count` inclusive.
    pub frame_count: u64,
}

impl SequenceBundle {
    /// Frame count is the last frame mentioned by any part.
    pub fn new(
        name: impl Into<String>,
        detections: DetectionFrames,
        ground_truth: Option<LabeledFrameSet>,
        camera_motion: Option<CameraMotion>,
    ) -> Self {
        let last = [
            detections.keys().next_back().copied(),
            ground_truth.as_ref().and_then(|g| g.range()).map(|(_, hi)| hi),
            camera_motion.as_ref().and_then(CameraMotion::last_frame),
        ]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(0);
        Self {
            name: name.into(),
            detections,
            ground_truth,
            camera_motion,
            frame_count: last,
        }
    }

    /// Extends the sequence to `frame_count` frames; it cannot be shortened.
    pub fn with_frame_count(mut self, frame_count: u64) -> Result<Self, IoError> {
        if frame_count < self.frame_count {
            return Err(IoError::Inconsistent(format!(
                "sequence {} has data up to frame {}, beyond the declared {frame_count} frames",
                self.name, self.frame_count
            )));
        }
        self.frame_count = frame_count;
        Ok(self)
    }

    /// Loads a detection file plus optional ground truth and camera-motion files.
    /// The bundle is named after the detection file's stem.
    pub fn load(
        detections: &Path,
        ground_truth: Option<(&Path, GtFormat)>,
        camera_motion: Option<&Path>,
    ) -> Result<Self, IoError> {
        let dets = located(detections, parse_mot_detections(&read(detections)?))?;
        let gt = ground_truth
            .map(|(p, fmt)| read_labeled(p, fmt, Source::GroundTruth))
            .transpose()?;
        let cmc = camera_motion
            .map(|p| read(p).and_then(|t| located(p, parse_gmc_file(&t))))
            .transpose()?;
        Ok(Self::new(stem(detections), dets, gt, cmc))
    }

    /// One input per frame from 1 to `frame_count`; frames without detections
    /// are empty. With camera motion present every frame carries a transform.
    pub fn frame_inputs(&self, stream_id: u32) -> Vec<FrameInput> {
        (1..=self.frame_count)
            .map(|f| {
                let dets = self.detections.get(&f).cloned().unwrap_or_default();
                let input = FrameInput::new(stream_id, f, dets);
                match &self.camera_motion {
                    Some(cm) => input.with_camera_motion(cm.get(f)),
                    None => input,
                }
            })
            .collect()
    }

    pub fn detection_count(&self) -> usize {
        self.detections.values().map(Vec::len).sum()
    }
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(p).display().to_string())
}

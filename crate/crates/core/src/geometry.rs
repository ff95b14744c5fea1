//! Domain value types shared by the tracker, the evaluator and the wire
//! protocol, plus the box-overlap primitives used to build association costs.
//!
//! Boxes are `(left, top, width, height)` in continuous pixel coordinates.
//! Conversion to center form only happens inside the Kalman filter.

use crate::error::InputError;
use crate::matrix::CostMatrix;

/// Axis-aligned box in `tlwh` form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub const fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    /// Like [`BBox::new`] but enforces the finiteness and non-negative size invariants.
    pub fn checked(left: f64, top: f64, width: f64, height: f64) -> Result<Self, InputError> {
        let b = Self::new(left, top, width, height);
        if b.is_valid() {
            Ok(b)
        } else {
            Err(InputError::InvalidBox([left, top, width, height]))
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn is_valid(&self) -> bool {
        self.left.is_finite()
            && self.top.is_finite()
            && self.width.is_finite()
            && self.height.is_finite()
            && self.width >= 0.0
            && self.height >= 0.0
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// `(cx, cy, w, h)`, the measurement the filter observes.
    pub fn to_cxcywh(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width, self.height]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || !union.is_finite() {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// `1 - iou` for every (track, detection) pair.
pub fn iou_distance_matrix(track_boxes: &[BBox], det_boxes: &[BBox]) -> CostMatrix {
    CostMatrix::from_fn(track_boxes.len(), det_boxes.len(), |i, j| {
        1.0 - iou(&track_boxes[i], &det_boxes[j])
    })
}

/// Weights the similarity `1 - cost` by each detection's confidence.
///
/// A score of exactly 1 leaves the column untouched, so an all-ones score
/// vector returns the input bit-for-bit.
pub fn fuse_score(cost: &CostMatrix, det_scores: &[f64]) -> CostMatrix {
    assert_eq!(
        cost.cols(),
        det_scores.len(),
        "fuse_score: one score per cost column"
    );
    CostMatrix::from_fn(cost.rows(), cost.cols(), |i, j| {
        let c = cost[(i, j)];
        let s = det_scores[j];
        if s == 1.0 {
            c
        } else {
            1.0 - (1.0 - c) * s
        }
    })
}

/// One detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub class_id: u16,
    /// Unit-norm appearance feature, if the detector produced one.
    pub embedding: Option<Vec<f64>>,
}

/// Tolerance on `‖embedding‖₂ = 1`.
pub const EMBEDDING_NORM_TOLERANCE: f64 = 1e-6;

impl Detection {
    pub fn new(bbox: BBox, score: f64, class_id: u16) -> Self {
        Self {
            bbox,
            score,
            class_id,
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Vec<f64>) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn validate(&self) -> Result<(), InputError> {
        if !self.bbox.is_valid() {
            return Err(InputError::InvalidBox(self.bbox.as_array()));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(InputError::InvalidScore(self.score));
        }
        if let Some(e) = &self.embedding {
            let norm = l2_norm(e);
            if (norm - 1.0).abs() > EMBEDDING_NORM_TOLERANCE {
                return Err(InputError::EmbeddingNotUnit(norm));
            }
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding.as_ref().map(Vec::len)
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Planar affine camera-motion transform `p ↦ M·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        linear: [[1.0, 0.0], [0.0, 1.0]],
        translation: [0.0, 0.0],
    };

    pub fn new(linear: [[f64; 2]; 2], translation: [f64; 2]) -> Result<Self, InputError> {
        let t = Self {
            linear,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            translation: [dx, dy],
            ..Self::IDENTITY
        }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.linear;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn validate(&self) -> Result<(), InputError> {
        let det = self.determinant();
        let finite = self.linear.iter().flatten().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite());
        if !finite || det == 0.0 || !det.is_finite() {
            return Err(InputError::SingularTransform(det));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn apply_linear(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.linear;
        (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
    }

    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (px, py) = self.apply_linear(x, y);
        (px + self.translation[0], py + self.translation[1])
    }
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// All detections of one `(stream, frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub stream_id: u32,
    pub frame_no: u64,
    pub detections: Vec<Detection>,
    pub camera_motion: Option<AffineTransform>,
}

impl FrameInput {
    pub fn new(stream_id: u32, frame_no: u64, detections: Vec<Detection>) -> Self {
        Self {
            stream_id,
            frame_no,
            detections,
            camera_motion: None,
        }
    }

    pub fn with_camera_motion(mut self, transform: AffineTransform) -> Self {
        self.camera_motion = Some(transform);
        self
    }

    /// Checks every detection and returns the shared embedding dimension, if any.
    pub fn validate(&self) -> Result<Option<usize>, InputError> {
        if self.frame_no == 0 {
            return Err(InputError::InvalidFrameNumber(self.frame_no));
        }
        if let Some(t) = &self.camera_motion {
            t.validate()?;
        }
        let mut dim = None;
        for d in &self.detections {
            d.validate()?;
            match (dim, d.embedding_dim()) {
                (None, Some(n)) => dim = Some(n),
                (Some(expected), Some(got)) if expected != got => {
                    return Err(InputError::EmbeddingDimension { expected, got });
                }
                _ => {}
            }
        }
        Ok(dim)
    }
}

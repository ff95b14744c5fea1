//! Real-time multi-object tracking for aerial video streams.
//!
//! Detections come in as data (files or a framed TCP stream), per-stream
//! trackers run BYTE or BoT-SORT association over a constant-velocity Kalman
//! filter, and an evaluator scores the output with CLEAR, IDF1 and HOTA.

pub mod assign;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod stream;
pub mod synth;
pub mod tracker;

pub use assign::{solve, AssignmentResult};
pub use error::InputError;
pub use filter::{KalmanFilter, KalmanNoise, KalmanState};
pub use geometry::{fuse_score, iou, iou_distance_matrix, AffineTransform, BBox, Detection, FrameInput};
pub use matrix::CostMatrix;

//! Cost construction and appearance bookkeeping for the association stages.

use crate::geometry::{l2_norm, Detection};
use crate::matrix::CostMatrix;

use super::config::TrackerConfig;

/// Splits detections into the high-confidence and rescue sets, by index.
///
/// `score >= tau_high` is high; `tau_low <= score < tau_high` is low; anything
/// below `tau_low` is dropped.
pub fn split_detections(dets: &[Detection], cfg: &TrackerConfig) -> (Vec<usize>, Vec<usize>) {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        if d.score >= cfg.tau_high {
            high.push(i);
        } else if d.score >= cfg.tau_low {
            low.push(i);
        }
    }
    (high, low)
}

/// Half cosine distance `(1 - cos)/2`, or 1 when either side has no embedding.
pub fn embedding_half_distance(tracks: &[Option<&[f64]>], dets: &[Option<&[f64]>]) -> CostMatrix {
    CostMatrix::from_fn(tracks.len(), dets.len(), |i, j| match (tracks[i], dets[j]) {
        (Some(a), Some(b)) if a.len() == b.len() => {
            let cos: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            ((1.0 - cos) / 2.0).clamp(0.0, 1.0)
        }
        _ => 1.0,
    })
}

/// IoU/appearance fusion: an appearance cost only counts when it is close
/// enough (`<= emb_theta`) and the boxes are near each other (`d_iou <= prox_theta`).
pub fn fuse_motion_appearance(d_iou: &CostMatrix, d_emb_half: &CostMatrix, cfg: &TrackerConfig) -> CostMatrix {
    assert!(
        d_iou.same_shape(d_emb_half),
        "fuse_motion_appearance: shape mismatch {}x{} vs {}x{}",
        d_iou.rows(),
        d_iou.cols(),
        d_emb_half.rows(),
        d_emb_half.cols()
    );
    CostMatrix::from_fn(d_iou.rows(), d_iou.cols(), |i, j| {
        let di = d_iou[(i, j)];
        let de = d_emb_half[(i, j)];
        let gated = if de <= cfg.emb_theta && di <= cfg.prox_theta { de } else { 1.0 };
        di.min(gated)
    })
}

/// Exponential smoothing of a track's appearance, renormalized.
/// Falls back to the previous embedding if the mix cancels out.
pub fn update_embedding(track_emb: &[f64], det_emb: &[f64], momentum: f64) -> Vec<f64> {
    if momentum == 1.0 || track_emb == det_emb {
        return track_emb.to_vec();
    }
    let mixed: Vec<f64> = track_emb
        .iter()
        .zip(det_emb)
        .map(|(t, d)| momentum * t + (1.0 - momentum) * d)
        .collect();
    let norm = l2_norm(&mixed);
    if norm <= f64::EPSILON || !norm.is_finite() {
        return track_emb.to_vec();
    }
    mixed.into_iter().map(|v| v / norm).collect()
}

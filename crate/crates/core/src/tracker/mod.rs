//! Per-stream online tracking: BYTE two-stage association and the BoT-SORT
//! variant (camera-motion compensation, IoU/appearance fusion).

mod association;
mod config;

pub use association::{embedding_half_distance, fuse_motion_appearance, split_detections, update_embedding};
pub use config::{NoiseWeights, TrackerConfig, TrackerMode};

use thiserror::Error;

use crate::assign::solve;
use crate::error::InputError;
use crate::filter::{KalmanFilter, KalmanState};
use crate::geometry::{fuse_score, iou_distance_matrix, BBox, Detection, FrameInput};
use crate::matrix::CostMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackStatus {
    /// Born on this frame, waiting for one confirming match.
    Tentative,
    Tracked,
    Lost,
    Removed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub class_id: u16,
    pub kalman: KalmanState,
    pub status: TrackStatus,
    pub score: f64,
    pub last_update_frame: u64,
    pub start_frame: u64,
    pub embedding: Option<Vec<f64>>,
}

impl Track {
    pub fn bbox(&self) -> BBox {
        self.kalman.bbox()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub track_id: u32,
    pub bbox: BBox,
    pub score: f64,
    pub class_id: u16,
}

/// Confirmed tracks of one frame, ordered by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameOutput {
    pub frame_no: u64,
    pub tracks: Vec<TrackOutput>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("frame {got} arrived but frame {expected} was expected")]
    OutOfOrder { expected: u64, got: u64 },
    #[error(transparent)]
    Input(#[from] InputError),
}

/// The full state of one stream's tracker.
///
/// Tracks are kept in creation order, so ids are ascending. Removed tracks
/// are dropped; ids are never reused because `next_id` only grows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub(crate) tracks: Vec<Track>,
    pub(crate) next_id: u32,
    pub(crate) frame_no: u64,
    pub(crate) config: TrackerConfig,
    pub(crate) embedding_dim: Option<usize>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self, InputError> {
        config.validate_relaxed()?;
        Ok(Self {
            tracks: Vec::new(),
            next_id: 1,
            frame_no: 0,
            config,
            embedding_dim: None,
        })
    }

    /// Reassembles a tracker from checkpointed parts.
    pub(crate) fn from_parts(
        config: TrackerConfig,
        tracks: Vec<Track>,
        next_id: u32,
        frame_no: u64,
        embedding_dim: Option<usize>,
    ) -> Result<Self, InputError> {
        config.validate_relaxed()?;
        Ok(Self {
            tracks,
            next_id,
            frame_no,
            config,
            embedding_dim,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Last processed frame number (0 before the first frame).
    pub fn frame_no(&self) -> u64 {
        self.frame_no
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding_dim
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    fn filter(&self) -> KalmanFilter {
        KalmanFilter::new(self.config.noise.into())
    }

    /// Advances the tracker by one frame.
    ///
    /// Frames must arrive in order starting at 1. On error the state is left
    /// untouched.
    pub fn step(&mut self, frame: &FrameInput) -> Result<FrameOutput, TrackError> {
        let expected = self.frame_no + 1;
        if frame.frame_no != expected {
            return Err(TrackError::OutOfOrder {
                expected,
                got: frame.frame_no,
            });
        }
        let dim = frame.validate()?;
        if let (Some(expected), Some(got)) = (self.embedding_dim, dim) {
            if expected != got {
                return Err(InputError::EmbeddingDimension { expected, got }.into());
            }
        }

        let cfg = self.config;
        let kf = self.filter();
        let frame_no = frame.frame_no;
        let dets = &frame.detections;

        let mut tracks = self.tracks.clone();
        for t in &mut tracks {
            t.kalman = kf.predict(&t.kalman);
        }
        if cfg.mode == TrackerMode::BotSort {
            if let Some(motion) = &frame.camera_motion {
                for t in &mut tracks {
                    t.kalman = kf.apply_camera_motion(&t.kalman, motion)?;
                }
            }
        }

        let (high, low) = split_detections(dets, &cfg);
        let appearance = cfg.mode == TrackerMode::BotSort;
        let mut matched = vec![false; tracks.len()];

        // Stage 1: confident detections against tracked and lost tracks.
        let pool: Vec<usize> = (0..tracks.len())
            .filter(|&i| matches!(tracks[i].status, TrackStatus::Tracked | TrackStatus::Lost))
            .collect();
        let cost = association_cost(&cfg, &tracks, &pool, dets, &high, cfg.fuse_score_enabled, appearance);
        let res = solve(&cost, cfg.first_gate);
        for &(r, c) in &res.matches {
            apply_match(&kf, &cfg, &mut tracks[pool[r]], &dets[high[c]], frame_no);
            matched[pool[r]] = true;
        }
        let remaining_high: Vec<usize> = res.unmatched_cols.iter().map(|&c| high[c]).collect();

        // Stage 2: low-score detections rescue tracks that were tracked coming into this frame.
        let pool: Vec<usize> = res
            .unmatched_rows
            .iter()
            .map(|&r| pool[r])
            .filter(|&i| tracks[i].status == TrackStatus::Tracked)
            .collect();
        let cost = association_cost(&cfg, &tracks, &pool, dets, &low, false, false);
        for &(r, c) in &solve(&cost, cfg.second_gate).matches {
            apply_match(&kf, &cfg, &mut tracks[pool[r]], &dets[low[c]], frame_no);
            matched[pool[r]] = true;
        }

        // Tentative tracks get one chance to confirm against the leftover confident detections.
        let pool: Vec<usize> = (0..tracks.len())
            .filter(|&i| tracks[i].status == TrackStatus::Tentative)
            .collect();
        let cost = association_cost(
            &cfg,
            &tracks,
            &pool,
            dets,
            &remaining_high,
            cfg.fuse_score_enabled,
            appearance,
        );
        let res = solve(&cost, cfg.first_gate);
        for &(r, c) in &res.matches {
            apply_match(&kf, &cfg, &mut tracks[pool[r]], &dets[remaining_high[c]], frame_no);
            matched[pool[r]] = true;
        }
        let unmatched_high: Vec<usize> = res.unmatched_cols.iter().map(|&c| remaining_high[c]).collect();

        for (t, &was_matched) in tracks.iter_mut().zip(&matched) {
            if was_matched {
                continue;
            }
            t.status = match t.status {
                TrackStatus::Tracked => TrackStatus::Lost,
                TrackStatus::Tentative => TrackStatus::Removed,
                s => s,
            };
            if t.status == TrackStatus::Lost && frame_no - t.last_update_frame > u64::from(cfg.track_buffer) {
                t.status = TrackStatus::Removed;
            }
        }
        tracks.retain(|t| t.status != TrackStatus::Removed);

        let mut next_id = self.next_id;
        for &j in &unmatched_high {
            let d = &dets[j];
            if d.score < cfg.new_track_threshold {
                continue;
            }
            let Ok(kalman) = kf.initiate(d.bbox.to_cxcywh()) else {
                continue;
            };
            tracks.push(Track {
                track_id: next_id,
                class_id: d.class_id,
                kalman,
                status: if frame_no == 1 {
                    TrackStatus::Tracked
                } else {
                    TrackStatus::Tentative
                },
                score: d.score,
                last_update_frame: frame_no,
                start_frame: frame_no,
                embedding: d.embedding.clone(),
            });
            next_id += 1;
        }

        let output = FrameOutput {
            frame_no,
            tracks: tracks
                .iter()
                .filter(|t| t.status == TrackStatus::Tracked)
                .map(|t| TrackOutput {
                    track_id: t.track_id,
                    bbox: t.bbox(),
                    score: t.score,
                    class_id: t.class_id,
                })
                .collect(),
        };

        self.tracks = tracks;
        self.next_id = next_id;
        self.frame_no = frame_no;
        if self.embedding_dim.is_none() {
            self.embedding_dim = dim;
        }
        Ok(output)
    }
}

fn association_cost(
    cfg: &TrackerConfig,
    tracks: &[Track],
    track_idx: &[usize],
    dets: &[Detection],
    det_idx: &[usize],
    fuse_scores: bool,
    appearance: bool,
) -> CostMatrix {
    let track_boxes: Vec<BBox> = track_idx.iter().map(|&i| tracks[i].bbox()).collect();
    let det_boxes: Vec<BBox> = det_idx.iter().map(|&j| dets[j].bbox).collect();
    let mut cost = iou_distance_matrix(&track_boxes, &det_boxes);
    if fuse_scores {
        let scores: Vec<f64> = det_idx.iter().map(|&j| dets[j].score).collect();
        cost = fuse_score(&cost, &scores);
    }
    if appearance {
        let te: Vec<Option<&[f64]>> = track_idx.iter().map(|&i| tracks[i].embedding.as_deref()).collect();
        let de: Vec<Option<&[f64]>> = det_idx.iter().map(|&j| dets[j].embedding.as_deref()).collect();
        let emb = embedding_half_distance(&te, &de);
        cost = fuse_motion_appearance(&cost, &emb, cfg);
    }
    if cfg.class_aware {
        for (r, &i) in track_idx.iter().enumerate() {
            for (c, &j) in det_idx.iter().enumerate() {
                if tracks[i].class_id != dets[j].class_id {
                    cost[(r, c)] = f64::INFINITY;
                }
            }
        }
    }
    cost
}

fn apply_match(kf: &KalmanFilter, cfg: &TrackerConfig, track: &mut Track, det: &Detection, frame_no: u64) {
    track.kalman = kf.update(&track.kalman, det.bbox.to_cxcywh());
    track.status = TrackStatus::Tracked;
    track.score = det.score;
    track.last_update_frame = frame_no;
    if let Some(de) = &det.embedding {
        track.embedding = Some(match &track.embedding {
            Some(te) => update_embedding(te, de, cfg.emb_momentum),
            None => de.clone(),
        });
    }
}

/// Runs a tracker over a whole sequence of frames.
pub fn run_sequence<'a>(
    config: TrackerConfig,
    frames: impl IntoIterator<Item = &'a FrameInput>,
) -> Result<Vec<FrameOutput>, TrackError> {
    let mut tracker = Tracker::new(config)?;
    frames.into_iter().map(|f| tracker.step(f)).collect()
}

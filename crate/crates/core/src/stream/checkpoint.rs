//! Binary tracker snapshots.
//!
//! Layout: `RMCK | version u8 | stream_id u32 | payload length u32 | payload | crc32 u32`.
//! The checksum covers every preceding byte. Reals are stored as raw `f64`
//! bits, so a restored tracker continues bit-identically.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::filter::{KalmanState, StateCovariance, StateVector};
use crate::tracker::{NoiseWeights, Track, TrackStatus, Tracker, TrackerConfig, TrackerMode};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RMCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {0} is not supported")]
    Version(u8),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint is truncated or malformed: {0}")]
    Malformed(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// A tracker snapshot tagged with its stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub stream_id: u32,
    pub tracker: Tracker,
}

impl Snapshot {
    /// Last frame the snapshot has processed.
    pub fn frame_no(&self) -> u64 {
        self.tracker.frame_no()
    }
}

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bool(&mut self, v: bool) {
        self.u8(u8::from(v));
    }
}

fn status_code(s: TrackStatus) -> u8 {
    match s {
        TrackStatus::Tentative => 0,
        TrackStatus::Tracked => 1,
        TrackStatus::Lost => 2,
        TrackStatus::Removed => 3,
    }
}

fn write_config(o: &mut Out, c: &TrackerConfig) {
    for v in [c.tau_high, c.tau_low, c.new_track_threshold, c.first_gate, c.second_gate] {
        o.f64(v);
    }
    o.u32(c.track_buffer);
    o.bool(c.fuse_score_enabled);
    o.u8(match c.mode {
        TrackerMode::Byte => 0,
        TrackerMode::BotSort => 1,
    });
    for v in [c.emb_theta, c.prox_theta, c.emb_momentum] {
        o.f64(v);
    }
    o.bool(c.class_aware);
    o.f64(c.noise.std_weight_position);
    o.f64(c.noise.std_weight_velocity);
}

/// Serializes a tracker between steps.
pub fn checkpoint(stream_id: u32, tracker: &Tracker) -> Vec<u8> {
    let mut p = Out(Vec::with_capacity(256 + tracker.tracks.len() * 640));
    write_config(&mut p, &tracker.config);
    p.u32(tracker.next_id);
    p.u64(tracker.frame_no);
    match tracker.embedding_dim {
        None => p.u8(0),
        Some(d) => {
            p.u8(1);
            p.u32(d as u32);
        }
    }
    p.u32(tracker.tracks.len() as u32);
    for t in &tracker.tracks {
        p.u32(t.track_id);
        p.u16(t.class_id);
        p.u8(status_code(t.status));
        p.f64(t.score);
        p.u64(t.last_update_frame);
        p.u64(t.start_frame);
        for v in t.kalman.mean.iter() {
            p.f64(*v);
        }
        for v in t.kalman.covariance.iter() {
            p.f64(*v);
        }
        match &t.embedding {
            None => p.u8(0),
            Some(e) => {
                p.u8(1);
                p.u32(e.len() as u32);
                for v in e {
                    p.f64(*v);
                }
            }
        }
    }

    let mut o = Out(Vec::with_capacity(p.0.len() + 17));
    o.0.extend_from_slice(&CHECKPOINT_MAGIC);
    o.u8(CHECKPOINT_VERSION);
    o.u32(stream_id);
    o.u32(p.0.len() as u32);
    o.0.extend_from_slice(&p.0);
    let crc = crc32fast::hash(&o.0);
    o.u32(crc);
    o.0
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl In<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let s = self
            .buf
            .get(self.pos..self.pos + N)
            .ok_or_else(|| CheckpointError::Malformed("unexpected end of data".into()))?;
        self.pos += N;
        Ok(s.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_be_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_be_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_be_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn bool(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CheckpointError::Malformed(format!("boolean byte {v}"))),
        }
    }
}

fn read_config(r: &mut In) -> Result<TrackerConfig, CheckpointError> {
    Ok(TrackerConfig {
        tau_high: r.f64()?,
        tau_low: r.f64()?,
        new_track_threshold: r.f64()?,
        first_gate: r.f64()?,
        second_gate: r.f64()?,
        track_buffer: r.u32()?,
        fuse_score_enabled: r.bool()?,
        mode: match r.u8()? {
            0 => TrackerMode::Byte,
            1 => TrackerMode::BotSort,
            v => return Err(CheckpointError::Malformed(format!("tracker mode {v}"))),
        },
        emb_theta: r.f64()?,
        prox_theta: r.f64()?,
        emb_momentum: r.f64()?,
        class_aware: r.bool()?,
        noise: NoiseWeights {
            std_weight_position: r.f64()?,
            std_weight_velocity: r.f64()?,
        },
    })
}

/// Inverse of [`checkpoint`]. Fails on any corruption rather than
/// producing a damaged tracker.
pub fn restore(bytes: &[u8]) -> Result<Snapshot, CheckpointError> {
    if bytes.len() < 4 || bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < 17 {
        return Err(CheckpointError::Malformed("shorter than the fixed header".into()));
    }
    let (data, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(data) != u32::from_be_bytes(crc.try_into().expect("4 bytes")) {
        return Err(CheckpointError::Checksum);
    }
    if data[4] != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(data[4]));
    }
    let mut r = In { buf: data, pos: 5 };
    let stream_id = r.u32()?;
    let len = r.u32()? as usize;
    if data.len() - r.pos != len {
        return Err(CheckpointError::Malformed("payload length mismatch".into()));
    }
    let config = read_config(&mut r)?;
    let next_id = r.u32()?;
    let frame_no = r.u64()?;
    let embedding_dim = match r.u8()? {
        0 => None,
        _ => Some(r.u32()? as usize),
    };
    let n = r.u32()? as usize;
    let mut tracks = Vec::with_capacity(n.min(len / 600 + 1));
    for _ in 0..n {
        let track_id = r.u32()?;
        let class_id = r.u16()?;
        let status = match r.u8()? {
            0 => TrackStatus::Tentative,
            1 => TrackStatus::Tracked,
            2 => TrackStatus::Lost,
            3 => TrackStatus::Removed,
            v => return Err(CheckpointError::Malformed(format!("track status {v}"))),
        };
        let score = r.f64()?;
        let last_update_frame = r.u64()?;
        let start_frame = r.u64()?;
        let mut mean = StateVector::zeros();
        for v in mean.iter_mut() {
            *v = r.f64()?;
        }
        let mut covariance = StateCovariance::zeros();
        for v in covariance.iter_mut() {
            *v = r.f64()?;
        }
        let embedding = match r.u8()? {
            0 => None,
            _ => {
                let d = r.u32()? as usize;
                if d > len {
                    return Err(CheckpointError::Malformed("embedding length".into()));
                }
                Some((0..d).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?)
            }
        };
        tracks.push(Track {
            track_id,
            class_id,
            kalman: KalmanState { mean, covariance },
            status,
            score,
            last_update_frame,
            start_frame,
            embedding,
        });
    }
    if r.pos != data.len() {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    let tracker = Tracker::from_parts(config, tracks, next_id, frame_no, embedding_dim)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok(Snapshot { stream_id, tracker })
}

/// `dir/<stream_id>.bin`.
pub fn checkpoint_path(dir: &Path, stream_id: u32) -> PathBuf {
    dir.join(format!("{stream_id}.bin"))
}

/// Writes a snapshot atomically (temporary file, then rename).
pub fn save_checkpoint(dir: &Path, stream_id: u32, tracker: &Tracker) -> Result<PathBuf, CheckpointError> {
    std::fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, stream_id);
    let tmp = dir.join(format!("{stream_id}.bin.tmp"));
    std::fs::write(&tmp, checkpoint(stream_id, tracker))?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

/// The stream's snapshot, if one was saved.
pub fn load_checkpoint(dir: &Path, stream_id: u32) -> Result<Option<Snapshot>, CheckpointError> {
    match std::fs::read(checkpoint_path(dir, stream_id)) {
        Ok(bytes) => restore(&bytes).map(Some),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

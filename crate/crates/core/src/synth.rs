//! Seeded synthetic sequences with known ground truth.
//!
//! Objects move at constant velocity in world coordinates. An optional
//! camera pan shifts the image each frame, with the matching transform
//! written to the camera-motion track. Every generated number is rounded to
//! `f32`, so a written and re-read sequence is identical to the original.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::geometry::{AffineTransform, BBox, Detection, FrameInput};
use crate::io::{CameraMotion, DetectionFrames, SequenceBundle};
use crate::metrics::{LabeledBox, LabeledFrameSet, Source};

fn r32(x: f64) -> f64 {
    f64::from(x as f32)
}

fn round_box(b: BBox) -> BBox {
    BBox::new(r32(b.left), r32(b.top), r32(b.width), r32(b.height))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frames: u64,
    pub objects: usize,
    /// Scene extent for initial positions.
    pub width: f64,
    pub height: f64,
    pub min_size: f64,
    pub max_size: f64,
    /// Largest per-axis speed, px per frame.
    pub max_speed: f64,
    /// Standard deviation of detection jitter, px.
    pub position_noise: f64,
    /// Probability that a visible object is not detected.
    pub miss_rate: f64,
    /// Probability that a detection gets a score below `tau_high`.
    pub low_score_rate: f64,
    /// Expected false positives per frame.
    pub false_positives: f64,
    /// Objects live for the whole sequence when true, otherwise for a random span.
    pub persistent: bool,
    pub embedding_dim: Option<usize>,
    /// Camera translation per frame, px; objects appear to move the other way.
    pub camera_pan: Option<(f64, f64)>,
    /// Classes 1..=10 at random when true, class 1 otherwise.
    pub classes: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 100,
            objects: 10,
            width: 1920.0,
            height: 1080.0,
            min_size: 12.0,
            max_size: 80.0,
            max_speed: 4.0,
            position_noise: 1.0,
            miss_rate: 0.05,
            low_score_rate: 0.1,
            false_positives: 1.0,
            persistent: false,
            embedding_dim: None,
            camera_pan: None,
            classes: false,
        }
    }
}

struct Object {
    id: u32,
    class_id: u16,
    start: [f64; 2],
    velocity: [f64; 2],
    size: [f64; 2],
    first: u64,
    last: u64,
    embedding: Option<Vec<f64>>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| r32(x / n)).collect();
        }
    }
}

fn noisy_embedding(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    let v: Vec<f64> = base
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(rng);
            x + sigma * z
        })
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| r32(x / n)).collect()
}

/// Generates a sequence with detections, ground truth and, when panning,
/// camera motion. The same config always yields the same bundle.
pub fn generate(name: &str, cfg: &ScenarioConfig) -> SequenceBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frames = cfg.frames.max(1);
    let objects: Vec<Object> = (0..cfg.objects)
        .map(|i| {
            let (first, last) = if cfg.persistent {
                (1, frames)
            } else {
                let a = rng.gen_range(1..=frames);
                let b = rng.gen_range(1..=frames);
                (a.min(b), a.max(b))
            };
            let w = rng.gen_range(cfg.min_size..=cfg.max_size);
            let h = rng.gen_range(cfg.min_size..=cfg.max_size);
            Object {
                id: i as u32 + 1,
                class_id: if cfg.classes { rng.gen_range(1..=10) } else { 1 },
                start: [rng.gen_range(0.0..cfg.width), rng.gen_range(0.0..cfg.height)],
                velocity: [
                    rng.gen_range(-cfg.max_speed..=cfg.max_speed),
                    rng.gen_range(-cfg.max_speed..=cfg.max_speed),
                ],
                size: [w, h],
                first,
                last,
                embedding: cfg.embedding_dim.map(|d| unit_vector(&mut rng, d)),
            }
        })
        .collect();

    let jitter = Normal::new(0.0, cfg.position_noise.max(0.0)).expect("finite noise");
    let mut detections = DetectionFrames::new();
    let mut gt = LabeledFrameSet::new(Source::GroundTruth);
    let mut motion = cfg.camera_pan.map(|_| CameraMotion::new());
    for f in 1..=frames {
        let t = (f - 1) as f64;
        let (pan_x, pan_y) = cfg.camera_pan.map_or((0.0, 0.0), |(dx, dy)| (dx * t, dy * t));
        if let (Some(m), Some((dx, dy))) = (motion.as_mut(), cfg.camera_pan) {
            if f > 1 {
                m.insert(f, AffineTransform::translation(r32(-dx), r32(-dy)));
            }
        }
        let mut dets = Vec::new();
        for o in objects.iter().filter(|o| (o.first..=o.last).contains(&f)) {
            let truth = round_box(BBox::new(
                o.start[0] + o.velocity[0] * t - pan_x,
                o.start[1] + o.velocity[1] * t - pan_y,
                o.size[0],
                o.size[1],
            ));
            gt.push(
                f,
                LabeledBox {
                    id: o.id,
                    bbox: truth,
                    class_id: Some(o.class_id),
                },
            );
            if rng.gen_bool(cfg.miss_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let bbox = round_box(BBox::new(
                truth.left + jitter.sample(&mut rng),
                truth.top + jitter.sample(&mut rng),
                (truth.width + jitter.sample(&mut rng)).max(2.0),
                (truth.height + jitter.sample(&mut rng)).max(2.0),
            ));
            let score = if rng.gen_bool(cfg.low_score_rate.clamp(0.0, 1.0)) {
                rng.gen_range(0.15..0.55)
            } else {
                rng.gen_range(0.72..0.99)
            };
            let mut d = Detection::new(bbox, r32(score), o.class_id);
            d.embedding = o.embedding.as_ref().map(|e| noisy_embedding(&mut rng, e, 0.05));
            dets.push(d);
        }
        let whole = cfg.false_positives.max(0.0).floor();
        let count = whole as usize + usize::from(rng.gen_bool(cfg.false_positives.max(0.0) - whole));
        for _ in 0..count {
            let w = rng.gen_range(cfg.min_size..=cfg.max_size);
            let h = rng.gen_range(cfg.min_size..=cfg.max_size);
            let bbox = round_box(BBox::new(rng.gen_range(0.0..cfg.width), rng.gen_range(0.0..cfg.height), w, h));
            let class_id = if cfg.classes { rng.gen_range(1..=10) } else { 1 };
            let mut d = Detection::new(bbox, r32(rng.gen_range(0.1..0.75)), class_id);
            d.embedding = cfg.embedding_dim.map(|dim| unit_vector(&mut rng, dim));
            dets.push(d);
        }
        dets.shuffle(&mut rng);
        if !dets.is_empty() {
            detections.insert(f, dets);
        }
    }
    gt.declare_range(1, frames);
    SequenceBundle::new(name, detections, Some(gt), motion)
        .with_frame_count(frames)
        .expect("generated data lies within the frame range")
}

/// The 300-frame sequence used by end-to-end determinism checks.
pub fn determinism_bundle() -> SequenceBundle {
    generate(
        "synthetic-300",
        &ScenarioConfig {
            seed: 300,
            frames: 300,
            objects: 30,
            classes: true,
            ..ScenarioConfig::default()
        },
    )
}

/// 45 persistent objects plus 5 false positives: exactly 50 detections per frame.
pub fn benchmark_bundle(frames: u64) -> SequenceBundle {
    generate(
        "bench-50x",
        &ScenarioConfig {
            seed: 50,
            frames,
            objects: 45,
            persistent: true,
            miss_rate: 0.0,
            false_positives: 5.0,
            ..ScenarioConfig::default()
        },
    )
}

fn single(l: f64, t: f64, score: f64) -> Detection {
    Detection::new(BBox::new(l, t, 24.0, 40.0), score, 1)
}

fn numbered(frames: Vec<Vec<Detection>>) -> Vec<FrameInput> {
    frames
        .into_iter()
        .enumerate()
        .map(|(i, d)| FrameInput::new(0, i as u64 + 1, d))
        .collect()
}

/// One stationary object whose score drops to 0.3 on frames 4, 5 and 6 of 9.
pub fn low_score_dip() -> Vec<FrameInput> {
    numbered(
        (1..=9)
            .map(|f| {
                let s = if (4..=6).contains(&f) { 0.3 } else { 0.9 };
                vec![single(200.0, 120.0, r32(s))]
            })
            .collect(),
    )
}

/// One stationary object seen on frames 1-2, absent for `absent` frames,
/// then seen again for two frames.
pub fn reappearance(absent: usize) -> Vec<FrameInput> {
    let seen = || vec![single(60.0, 60.0, r32(0.9))];
    let mut frames = vec![seen(), seen()];
    frames.extend((0..absent).map(|_| Vec::new()));
    frames.extend([seen(), seen()]);
    numbered(frames)
}

/// Two objects on one horizontal line that pass through each other at
/// frame `frames / 2`, each with its own orthogonal embedding.
pub fn crossing(frames: u64) -> (Vec<FrameInput>, LabeledFrameSet) {
    let mid = (frames / 2) as f64;
    let speed = 3.0;
    let mut gt = LabeledFrameSet::new(Source::GroundTruth);
    let inputs = (1..=frames)
        .map(|f| {
            let dx = speed * (f as f64 - mid);
            let a = round_box(BBox::new(300.0 + dx, 200.0, 24.0, 40.0));
            let b = round_box(BBox::new(300.0 - dx, 202.0, 24.0, 40.0));
            gt.push(f, LabeledBox { id: 1, bbox: a, class_id: Some(1) });
            gt.push(f, LabeledBox { id: 2, bbox: b, class_id: Some(1) });
            let dets = vec![
                Detection::new(a, r32(0.9), 1).with_embedding(vec![1.0, 0.0, 0.0, 0.0]),
                Detection::new(b, r32(0.85), 1).with_embedding(vec![0.0, 1.0, 0.0, 0.0]),
            ];
            FrameInput::new(0, f, dets)
        })
        .collect();
    (inputs, gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{parse_gmc_file, parse_mot_detections, parse_mot_labeled, write_detections, write_gmc, write_labeled};

    #[test]
    fn same_seed_same_bundle() {
        let cfg = ScenarioConfig {
            embedding_dim: Some(8),
            camera_pan: Some((1.5, -0.5)),
            classes: true,
            ..ScenarioConfig::default()
        };
        assert_eq!(generate("a", &cfg), generate("a", &cfg));
        let other = ScenarioConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate("a", &cfg).detections, generate("a", &other).detections);
    }

    #[test]
    fn generated_frames_validate_and_survive_text_round_trip() {
        let cfg = ScenarioConfig {
            embedding_dim: Some(4),
            camera_pan: Some((2.0, 1.0)),
            classes: true,
            ..ScenarioConfig::default()
        };
        let b = generate("rt", &cfg);
        for f in b.frame_inputs(0) {
            f.validate().unwrap();
        }
        assert_eq!(parse_mot_detections(&write_detections(&b.detections)).unwrap(), b.detections);
        let gt = b.ground_truth.as_ref().unwrap();
        let mut back = parse_mot_labeled(&write_labeled(gt), Source::GroundTruth).unwrap();
        back.declare_range(1, b.frame_count);
        assert_eq!(&back, gt);
        let cm = b.camera_motion.as_ref().unwrap();
        assert_eq!(&parse_gmc_file(&write_gmc(cm)).unwrap(), cm);
    }

    #[test]
    fn benchmark_bundle_has_fifty_detections_per_frame() {
        let b = benchmark_bundle(20);
        assert_eq!(b.frame_count, 20);
        assert!(b.frame_inputs(0).iter().all(|f| f.detections.len() == 50));
    }

    #[test]
    fn fixtures_have_expected_shape() {
        assert_eq!(low_score_dip().len(), 9);
        assert_eq!(reappearance(30).len(), 34);
        let (inputs, gt) = crossing(40);
        assert_eq!(inputs.len(), 40);
        assert_eq!(gt.len(), 80);
    }
}

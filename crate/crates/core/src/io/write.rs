use std::fmt::Write;

use crate::metrics::LabeledFrameSet;
use crate::tracker::FrameOutput;

use super::{CameraMotion, DetectionFrames};

/// Shortest decimal that reads back as the same `f32`.
fn real(x: f64) -> f32 {
    x as f32
}

/// MOTChallenge results: `frame,id,left,top,width,height,score,-1,-1,-1`.
///
/// Frames ascending, ids ascending within a frame, geometry to 2 decimals and
/// score to 6, all rounded from `f32` values.
pub fn write_results(outputs: &[FrameOutput]) -> String {
    let mut frames: Vec<&FrameOutput> = outputs.iter().collect();
    frames.sort_by_key(|f| f.frame_no);
    let mut out = String::new();
    for f in frames {
        let mut tracks: Vec<_> = f.tracks.iter().collect();
        tracks.sort_by_key(|t| t.track_id);
        for t in tracks {
            let _ = writeln!(
                out,
                "{},{},{:.2},{:.2},{:.2},{:.2},{:.6},-1,-1,-1",
                f.frame_no,
                t.track_id,
                real(t.bbox.left),
                real(t.bbox.top),
                real(t.bbox.width),
                real(t.bbox.height),
                real(t.score),
            );
        }
    }
    out
}

/// Detections in the extended MOT layout read by `parse_mot_detections`.
/// Values are written exactly (as `f32`).
pub fn write_detections(frames: &DetectionFrames) -> String {
    let mut out = String::new();
    for (frame, dets) in frames {
        for d in dets {
            let b = &d.bbox;
            let _ = write!(
                out,
                "{frame},-1,{},{},{},{},{},-1,-1,-1,{}",
                real(b.left),
                real(b.top),
                real(b.width),
                real(b.height),
                real(d.score),
                d.class_id
            );
            for v in d.embedding.iter().flatten() {
                let _ = write!(out, ",{}", real(*v));
            }
            out.push('\n');
        }
    }
    out
}

/// MOTChallenge ground-truth layout: `frame,id,left,top,width,height,1,class,1`.
pub fn write_labeled(set: &LabeledFrameSet) -> String {
    let mut out = String::new();
    for (frame, boxes) in set.frames() {
        let mut boxes: Vec<_> = boxes.iter().collect();
        boxes.sort_by_key(|b| b.id);
        for lb in boxes {
            let b = &lb.bbox;
            let class = lb.class_id.map_or(-1, i64::from);
            let _ = writeln!(
                out,
                "{frame},{},{},{},{},{},1,{class},1",
                lb.id,
                real(b.left),
                real(b.top),
                real(b.width),
                real(b.height)
            );
        }
    }
    out
}

/// VisDrone layout; boxes without a class are written as category 0.
pub fn write_visdrone_annotations(set: &LabeledFrameSet) -> String {
    let mut out = String::new();
    for (frame, boxes) in set.frames() {
        let mut boxes: Vec<_> = boxes.iter().collect();
        boxes.sort_by_key(|b| b.id);
        for lb in boxes {
            let b = &lb.bbox;
            let _ = writeln!(
                out,
                "{frame},{},{},{},{},{},1,{},0,0",
                lb.id,
                real(b.left),
                real(b.top),
                real(b.width),
                real(b.height),
                lb.class_id.unwrap_or(0)
            );
        }
    }
    out
}

/// `frame,m00,m01,m10,m11,t0,t1` for every listed frame.
pub fn write_gmc(motion: &CameraMotion) -> String {
    let mut out = String::new();
    for (frame, t) in motion.iter() {
        let [[a, b], [c, d]] = t.linear;
        let [tx, ty] = t.translation;
        let _ = writeln!(
            out,
            "{frame},{},{},{},{},{},{}",
            real(a),
            real(b),
            real(c),
            real(d),
            real(tx),
            real(ty)
        );
    }
    out
}

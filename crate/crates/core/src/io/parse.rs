use std::collections::BTreeSet;

use crate::geometry::{AffineTransform, BBox, Detection, EMBEDDING_NORM_TOLERANCE};
use crate::metrics::{LabeledBox, LabeledFrameSet, Source};

use super::{CameraMotion, DetectionFrames, ParseError};

/// The fields of one non-blank line.
struct Line<'a> {
    no: usize,
    fields: Vec<&'a str>,
}

fn lines<'a>(text: &'a str, separators: &'a [char]) -> impl Iterator<Item = Line<'a>> + 'a {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let raw = raw.trim();
        if raw.is_empty() {
            None
        } else {
            Some(Line {
                no: i + 1,
                fields: raw.split(separators).map(str::trim).collect(),
            })
        }
    })
}

impl Line<'_> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(self.no, message)
    }

    fn require(&self, min: usize, what: &str) -> Result<(), ParseError> {
        if self.fields.len() < min {
            Err(self.err(format!("{what} needs at least {min} fields, found {}", self.fields.len())))
        } else {
            Ok(())
        }
    }

    fn frame(&self, col: usize) -> Result<u64, ParseError> {
        let f: u64 = self.fields[col]
            .parse()
            .map_err(|_| self.err(format!("frame number {:?} is not a positive integer", self.fields[col])))?;
        if f == 0 {
            return Err(self.err("frame numbers start at 1"));
        }
        Ok(f)
    }

    fn int(&self, col: usize, name: &str) -> Result<i64, ParseError> {
        let s = self.fields[col];
        if let Ok(v) = s.parse::<i64>() {
            return Ok(v);
        }
        // Tools sometimes write integers as reals, e.g. "-1.0".
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
            _ => Err(self.err(format!("{name} {s:?} is not an integer"))),
        }
    }

    /// A finite real read at `f32` precision.
    fn real(&self, col: usize, name: &str) -> Result<f64, ParseError> {
        let s = self.fields[col];
        match s.parse::<f32>() {
            Ok(v) if v.is_finite() => Ok(f64::from(v)),
            _ => Err(self.err(format!("{name} {s:?} is not a finite number"))),
        }
    }

    fn bbox(&self, first: usize) -> Result<BBox, ParseError> {
        let b = BBox::new(
            self.real(first, "left")?,
            self.real(first + 1, "top")?,
            self.real(first + 2, "width")?,
            self.real(first + 3, "height")?,
        );
        if b.width < 0.0 || b.height < 0.0 {
            return Err(self.err(format!("negative box size {}x{}", b.width, b.height)));
        }
        Ok(b)
    }

    fn class(&self, col: usize) -> Result<Option<u16>, ParseError> {
        if col >= self.fields.len() {
            return Ok(None);
        }
        let c = self.int(col, "class")?;
        if c < 0 {
            Ok(None)
        } else {
            u16::try_from(c)
                .map(Some)
                .map_err(|_| self.err(format!("class {c} is out of range")))
        }
    }

    fn identity(&self, col: usize) -> Result<u32, ParseError> {
        let id = self.int(col, "identity")?;
        u32::try_from(id).map_err(|_| self.err(format!("identity {id} must be a non-negative 32-bit integer")))
    }
}

/// Parses `frame,id,left,top,width,height,conf,x,y,z[,class[,e1,e2,...]]`.
///
/// The id and world-coordinate columns are ignored. `conf` becomes the score,
/// clamped to `[0, 1]`. The optional class column defaults to 0; trailing
/// columns form an appearance embedding, normalized to unit length.
pub fn parse_mot_detections(text: &str) -> Result<DetectionFrames, ParseError> {
    let mut out = DetectionFrames::new();
    for line in lines(text, &[',']) {
        line.require(7, "detection")?;
        let frame = line.frame(0)?;
        line.int(1, "identity")?;
        let bbox = line.bbox(2)?;
        let score = line.real(6, "confidence")?.clamp(0.0, 1.0);
        for col in 7..line.fields.len().min(10) {
            line.real(col, "coordinate")?;
        }
        let class_id = line.class(10)?.unwrap_or(0);
        let mut det = Detection::new(bbox, score, class_id);
        if line.fields.len() > 11 {
            let raw = (11..line.fields.len())
                .map(|c| line.real(c, "embedding value"))
                .collect::<Result<Vec<f64>, _>>()?;
            det.embedding = Some(normalize_f32(&raw).ok_or_else(|| line.err("embedding has zero length"))?);
        }
        out.entry(frame).or_default().push(det);
    }
    Ok(out)
}

/// Unit-normalizes, then rounds each component to `f32`. Vectors already
/// within the embedding tolerance of unit length are kept as read.
fn normalize_f32(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    if (norm - 1.0).abs() <= EMBEDDING_NORM_TOLERANCE / 4.0 {
        return Some(v.to_vec());
    }
    Some(v.iter().map(|x| f64::from((x / norm) as f32)).collect())
}

/// Parses MOTChallenge ground truth or tracker results:
/// `frame,id,left,top,width,height[,conf[,class[,visibility]]]`.
///
/// For ground truth, rows with `conf == 0` are ignore markers and are
/// dropped. The class comes from column 8 when present and non-negative.
pub fn parse_mot_labeled(text: &str, source: Source) -> Result<LabeledFrameSet, ParseError> {
    let mut out = LabeledFrameSet::new(source);
    let mut seen = BTreeSet::new();
    for line in lines(text, &[',']) {
        line.require(6, "annotation")?;
        let frame = line.frame(0)?;
        let id = line.identity(1)?;
        let bbox = line.bbox(2)?;
        let conf = if line.fields.len() > 6 { Some(line.real(6, "confidence")?) } else { None };
        let class_id = line.class(7)?;
        if line.fields.len() > 8 {
            line.real(8, "visibility")?;
        }
        if source == Source::GroundTruth && conf == Some(0.0) {
            continue;
        }
        if !seen.insert((frame, id)) {
            return Err(line.err(format!("identity {id} appears twice in frame {frame}")));
        }
        out.push(frame, LabeledBox { id, bbox, class_id });
    }
    Ok(out)
}

/// Which VisDrone annotations to keep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisDroneFilter {
    /// Categories dropped outright (0 = ignored region, 11 = others).
    pub excluded_categories: Vec<u16>,
}

impl Default for VisDroneFilter {
    fn default() -> Self {
        Self {
            excluded_categories: vec![0, 11],
        }
    }
}

/// [`parse_visdrone_annotations_with`] using the default filter.
pub fn parse_visdrone_annotations(text: &str) -> Result<LabeledFrameSet, ParseError> {
    parse_visdrone_annotations_with(text, &VisDroneFilter::default())
}

/// Parses `frame,target_id,left,top,width,height,score,category,truncation,occlusion`.
///
/// Rows with score flag 0 and rows in an excluded category are dropped.
/// A `(frame, target_id)` pair may appear only once among kept rows.
pub fn parse_visdrone_annotations_with(text: &str, filter: &VisDroneFilter) -> Result<LabeledFrameSet, ParseError> {
    let mut out = LabeledFrameSet::new(Source::GroundTruth);
    let mut seen = BTreeSet::new();
    for line in lines(text, &[',']) {
        line.require(8, "annotation")?;
        let frame = line.frame(0)?;
        let id = line.identity(1)?;
        let bbox = line.bbox(2)?;
        let flag = line.int(6, "score flag")?;
        let category = line.class(7)?.ok_or_else(|| line.err("category must be non-negative"))?;
        for col in 8..line.fields.len() {
            line.int(col, "attribute")?;
        }
        if flag == 0 || filter.excluded_categories.contains(&category) {
            continue;
        }
        if !seen.insert((frame, id)) {
            return Err(line.err(format!("identity {id} appears twice in frame {frame}")));
        }
        out.push(
            frame,
            LabeledBox {
                id,
                bbox,
                class_id: Some(category),
            },
        );
    }
    Ok(out)
}

/// Parses `frame, m00, m01, m10, m11, t0, t1` lines, separated by commas or tabs.
pub fn parse_gmc_file(text: &str) -> Result<CameraMotion, ParseError> {
    let mut out = CameraMotion::new();
    for line in lines(text, &[',', '\t']) {
        if line.fields.len() != 7 {
            return Err(line.err(format!("transform needs 7 fields, found {}", line.fields.len())));
        }
        let frame = line.frame(0)?;
        let v = (1..7)
            .map(|c| line.real(c, "transform entry"))
            .collect::<Result<Vec<f64>, _>>()?;
        let t = AffineTransform::new([[v[0], v[1]], [v[2], v[3]]], [v[4], v[5]])
            .map_err(|e| line.err(format!("frame {frame}: {e}")))?;
        if out.transforms.insert(frame, t).is_some() {
            return Err(line.err(format!("frame {frame} listed twice")));
        }
    }
    Ok(out)
}

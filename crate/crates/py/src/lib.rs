//! Python bindings: boxes, the per-stream tracker, text formats and evaluation.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use skytrack::io::{self, GtFormat, IoError};
use skytrack::metrics::{self, EvalOptions, ReportRow, Source};
use skytrack::tracker::{FrameOutput, TrackError, TrackOutput, Tracker as CoreTracker, TrackerConfig};
use skytrack::{AffineTransform, BBox as CoreBBox, Detection, FrameInput};

/// `(left, top, width, height, score, class_id, embedding)`; the last two are optional.
type DetTuple = (f64, f64, f64, f64, f64, Option<u16>, Option<Vec<f64>>);
/// `(track_id, left, top, width, height, score, class_id)`.
type TrackTuple = (u32, f64, f64, f64, f64, f64, u16);

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: IoError) -> PyErr {
    match e {
        IoError::Read { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn track_err(e: TrackError) -> PyErr {
    value_err(e)
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn track_tuple(t: &TrackOutput) -> TrackTuple {
    let b = t.bbox;
    (t.track_id, b.left, b.top, b.width, b.height, t.score, t.class_id)
}

fn to_detection(d: DetTuple) -> PyResult<Detection> {
    let (l, t, w, h, score, class_id, emb) = d;
    let bbox = CoreBBox::checked(l, t, w, h).map_err(value_err)?;
    let mut det = Detection::new(bbox, score, class_id.unwrap_or(0));
    if let Some(e) = emb {
        det = det.with_embedding(e);
    }
    Ok(det)
}

fn to_transform(m: [f64; 6]) -> PyResult<AffineTransform> {
    AffineTransform::new([[m[0], m[1]], [m[2], m[3]]], [m[4], m[5]]).map_err(value_err)
}

fn config_from(settings: Option<&Bound<'_, PyDict>>) -> PyResult<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    if let Some(kw) = settings {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            let value = if let Ok(b) = v.extract::<bool>() {
                b.to_string()
            } else {
                v.str()?.to_string()
            };
            cfg.set(&key, &value).map_err(value_err)?;
        }
    }
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Axis-aligned box in pixels: top-left corner plus size.
#[pyclass(name = "BBox", frozen, skip_from_py_object, module = "skytrack")]
#[derive(Clone, Copy)]
struct PyBBox(CoreBBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(left: f64, top: f64, width: f64, height: f64) -> PyResult<Self> {
        CoreBBox::checked(left, top, width, height).map(Self).map_err(value_err)
    }

    #[getter]
    fn left(&self) -> f64 {
        self.0.left
    }

    #[getter]
    fn top(&self) -> f64 {
        self.0.top
    }

    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    #[getter]
    fn height(&self) -> f64 {
        self.0.height
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn center(&self) -> (f64, f64) {
        self.0.center()
    }

    fn iou(&self, other: &PyBBox) -> f64 {
        skytrack::iou(&self.0, &other.0)
    }

    fn __repr__(&self) -> String {
        let b = self.0;
        format!("BBox(left={}, top={}, width={}, height={})", b.left, b.top, b.width, b.height)
    }

    fn __eq__(&self, other: &PyBBox) -> bool {
        self.0 == other.0
    }
}

/// Intersection over union of two boxes.
#[pyfunction]
fn iou(a: &PyBBox, b: &PyBBox) -> f64 {
    skytrack::iou(&a.0, &b.0)
}

/// One stream's tracker. Keyword arguments override defaults and use the
/// command-line names with underscores, e.g. `tau_high=0.6, tracker="botsort"`.
#[pyclass(name = "Tracker", module = "skytrack")]
struct PyTracker {
    inner: CoreTracker,
    stream_id: u32,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (stream_id = 0, **settings))]
    fn new(stream_id: u32, settings: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = config_from(settings)?;
        Ok(Self {
            inner: CoreTracker::new(cfg).map_err(value_err)?,
            stream_id,
        })
    }

    /// Advances one frame and returns the confirmed tracks as
    /// `(track_id, left, top, width, height, score, class_id)` tuples.
    ///
    /// Each detection is `(left, top, width, height, score[, class_id[, embedding]])`.
    /// `camera_motion` is `(a11, a12, a21, a22, tx, ty)`.
    #[pyo3(signature = (frame_no, detections, camera_motion = None))]
    fn step(
        &mut self,
        frame_no: u64,
        detections: Vec<Bound<'_, PyAny>>,
        camera_motion: Option<[f64; 6]>,
    ) -> PyResult<Vec<TrackTuple>> {
        let mut dets = Vec::with_capacity(detections.len());
        for d in detections {
            dets.push(to_detection(extract_det(&d)?)?);
        }
        let mut frame = FrameInput::new(self.stream_id, frame_no, dets);
        if let Some(m) = camera_motion {
            frame = frame.with_camera_motion(to_transform(m)?);
        }
        let out = self.inner.step(&frame).map_err(track_err)?;
        Ok(out.tracks.iter().map(track_tuple).collect())
    }

    #[getter]
    fn frame_no(&self) -> u64 {
        self.inner.frame_no()
    }

    #[getter]
    fn stream_id(&self) -> u32 {
        self.stream_id
    }

    /// Effective configuration as a dict.
    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let v = serde_json::to_value(self.inner.config()).map_err(value_err)?;
        json_to_py(py, &v)
    }
}

fn extract_det(d: &Bound<'_, PyAny>) -> PyResult<DetTuple> {
    if let Ok(t) = d.extract::<(f64, f64, f64, f64, f64)>() {
        return Ok((t.0, t.1, t.2, t.3, t.4, None, None));
    }
    if let Ok(t) = d.extract::<(f64, f64, f64, f64, f64, u16)>() {
        return Ok((t.0, t.1, t.2, t.3, t.4, Some(t.5), None));
    }
    d.extract::<(f64, f64, f64, f64, f64, u16, Vec<f64>)>()
        .map(|t| (t.0, t.1, t.2, t.3, t.4, Some(t.5), Some(t.6)))
        .map_err(|_| value_err("detection must be (left, top, width, height, score[, class_id[, embedding]])"))
}

/// Parses a MOTChallenge detection file into `{frame: [(l, t, w, h, score, class_id, embedding)]}`.
#[pyfunction]
fn parse_detections(text: &str) -> PyResult<HashMap<u64, Vec<DetTuple>>> {
    let frames = io::parse_mot_detections(text).map_err(value_err)?;
    Ok(frames
        .into_iter()
        .map(|(f, dets)| {
            let v = dets
                .into_iter()
                .map(|d| {
                    let b = d.bbox;
                    (b.left, b.top, b.width, b.height, d.score, Some(d.class_id), d.embedding)
                })
                .collect();
            (f, v)
        })
        .collect())
}

/// Parses a camera-motion file into `{frame: (a11, a12, a21, a22, tx, ty)}`.
#[pyfunction]
fn parse_camera_motion(text: &str) -> PyResult<HashMap<u64, [f64; 6]>> {
    let motion = io::parse_gmc_file(text).map_err(value_err)?;
    Ok(motion
        .iter()
        .map(|(f, t)| {
            let [[a, b], [c, d]] = t.linear;
            (f, [a, b, c, d, t.translation[0], t.translation[1]])
        })
        .collect())
}

/// Formats tracks as a MOTChallenge results file.
///
/// `frames` is a sequence of `(frame_no, [(track_id, l, t, w, h, score, class_id)])`.
#[pyfunction]
fn write_results(frames: Vec<(u64, Vec<TrackTuple>)>) -> PyResult<String> {
    let mut outputs = Vec::with_capacity(frames.len());
    for (frame_no, tracks) in frames {
        let mut out = Vec::with_capacity(tracks.len());
        for (id, l, t, w, h, score, class_id) in tracks {
            out.push(TrackOutput {
                track_id: id,
                bbox: CoreBBox::checked(l, t, w, h).map_err(value_err)?,
                score,
                class_id,
            });
        }
        outputs.push(FrameOutput { frame_no, tracks: out });
    }
    Ok(io::write_results(&outputs))
}

/// Tracks a detection file and returns the results text.
#[pyfunction]
#[pyo3(signature = (detections_path, camera_motion_path = None, **settings))]
fn track_file(
    detections_path: PathBuf,
    camera_motion_path: Option<PathBuf>,
    settings: Option<&Bound<'_, PyDict>>,
) -> PyResult<String> {
    let cfg = config_from(settings)?;
    let bundle = io::SequenceBundle::load(&detections_path, None, camera_motion_path.as_deref()).map_err(io_err)?;
    let mut tracker = CoreTracker::new(cfg).map_err(value_err)?;
    let mut outputs = Vec::new();
    for frame in bundle.frame_inputs(0) {
        outputs.push(tracker.step(&frame).map_err(track_err)?);
    }
    Ok(io::write_results(&outputs))
}

/// Scores a results file against ground truth and returns the metrics as a dict.
///
/// Ratios are in the unit interval. `gt_format` is `"mot"` or `"visdrone"`.
#[pyfunction]
#[pyo3(signature = (gt_path, res_path, gt_format = "mot", collapse_classes = false, alpha = false))]
fn evaluate<'py>(
    py: Python<'py>,
    gt_path: PathBuf,
    res_path: PathBuf,
    gt_format: &str,
    collapse_classes: bool,
    alpha: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let format: GtFormat = gt_format.parse().map_err(value_err)?;
    let mut gt = io::read_labeled(&gt_path, format, Source::GroundTruth).map_err(io_err)?;
    let mut res = io::read_labeled(&res_path, GtFormat::Mot, Source::Result).map_err(io_err)?;
    if let (Some(g), Some(r)) = (gt.range(), res.range()) {
        let (lo, hi) = (g.0.min(r.0), g.1.max(r.1));
        gt.declare_range(lo, hi);
        res.declare_range(lo, hi);
    }
    let counts = py
        .detach(|| metrics::evaluate(&gt, &res, EvalOptions { collapse_classes }))
        .map_err(value_err)?;
    let row = ReportRow {
        name: res_path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        report: counts.report(),
        fps: None,
    };
    json_to_py(py, &metrics::machine_report(&[row], alpha))
}

#[pymodule]
#[pyo3(name = "skytrack")]
fn skytrack_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyBBox>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(parse_detections, m)?)?;
    m.add_function(wrap_pyfunction!(parse_camera_motion, m)?)?;
    m.add_function(wrap_pyfunction!(write_results, m)?)?;
    m.add_function(wrap_pyfunction!(track_file, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

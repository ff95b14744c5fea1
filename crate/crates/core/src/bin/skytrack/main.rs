//! `skytrack` command-line entry point.
//!
//! Exit codes: 0 success, 1 input error, 2 protocol or I/O error, 3 internal failure.

mod commands;
mod settings;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use skytrack::io::IoError;
use skytrack::metrics::MetricsError;
use skytrack::stream::{CheckpointError, ProducerError, StreamError};
use skytrack::tracker::TrackError;
use skytrack::InputError;

use settings::Settings;

/// Invalid arguments, settings or input that is not a parse error.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "skytrack", version, about = "Multi-object tracking for aerial video: track, evaluate, serve, benchmark")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track a detection file offline and write MOT-format results.
    Track(TrackArgs),
    /// Score result files against ground truth (HOTA, MOTA, IDF1, IDs).
    Eval(EvalArgs),
    /// Run the streaming tracking server until Ctrl-C.
    Serve(ServeArgs),
    /// Stream a detection file to a server and collect the results.
    Produce(ProduceArgs),
    /// Measure frames per second of the tracking step.
    Bench(BenchArgs),
    /// Write a synthetic sequence (detections, ground truth, camera motion).
    Synth(SynthArgs),
}

/// Tracker thresholds; each overrides the config file, which overrides the defaults.
#[derive(Args, Debug, Default)]
struct TrackerFlags {
    /// byte or botsort [default: byte]
    #[arg(long)]
    tracker: Option<String>,
    /// First-stage score threshold [default: 0.6]
    #[arg(long)]
    tau_high: Option<f64>,
    /// Second-stage score threshold [default: 0.1]
    #[arg(long)]
    tau_low: Option<f64>,
    /// Minimum score to start a track [default: 0.7]
    #[arg(long)]
    new_track_threshold: Option<f64>,
    /// First-stage cost gate, 1 - IoU [default: 0.8]
    #[arg(long)]
    first_gate: Option<f64>,
    /// Second-stage cost gate [default: 0.5]
    #[arg(long)]
    second_gate: Option<f64>,
    /// Frames a lost track is kept [default: 30]
    #[arg(long)]
    track_buffer: Option<u32>,
    /// Multiply IoU similarity by detection score [default: true]
    #[arg(long)]
    fuse_score: Option<bool>,
    /// Appearance distance gate [default: 0.25]
    #[arg(long)]
    emb_theta: Option<f64>,
    /// IoU distance gate for appearance fusion [default: 0.5]
    #[arg(long)]
    prox_theta: Option<f64>,
    /// Embedding moving-average momentum [default: 0.9]
    #[arg(long)]
    emb_momentum: Option<f64>,
    /// Forbid matches across classes [default: true]
    #[arg(long)]
    class_aware: Option<bool>,
    #[arg(long)]
    std_weight_position: Option<f64>,
    #[arg(long)]
    std_weight_velocity: Option<f64>,
}

impl TrackerFlags {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        vec![
            ("tracker", self.tracker.clone()),
            ("tau-high", s(self.tau_high)),
            ("tau-low", s(self.tau_low)),
            ("new-track-threshold", s(self.new_track_threshold)),
            ("first-gate", s(self.first_gate)),
            ("second-gate", s(self.second_gate)),
            ("track-buffer", self.track_buffer.map(|v| v.to_string())),
            ("fuse-score", self.fuse_score.map(|v| v.to_string())),
            ("emb-theta", s(self.emb_theta)),
            ("prox-theta", s(self.prox_theta)),
            ("emb-momentum", s(self.emb_momentum)),
            ("class-aware", self.class_aware.map(|v| v.to_string())),
            ("std-weight-position", s(self.std_weight_position)),
            ("std-weight-velocity", s(self.std_weight_velocity)),
        ]
    }
}

/// Config file, then flags that were given.
fn layered(config: Option<&Path>, flags: Vec<(&'static str, Option<String>)>) -> Result<Settings> {
    let mut s = match config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    for (k, v) in flags {
        if let Some(v) = v {
            s.push(k, v);
        }
    }
    Ok(s)
}

#[derive(Args, Debug)]
struct TrackArgs {
    /// MOT-format detection file.
    #[arg(long)]
    dets: PathBuf,
    /// Per-frame camera motion file (frame,a11,a12,a21,a22,tx,ty).
    #[arg(long)]
    gmc: Option<PathBuf>,
    /// Results file to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Settings file (key=value, keys as flag names) or a manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest path [default: <out>.manifest.json]
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth file; repeat once per sequence.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    /// Results file; repeat in the same order as --gt.
    #[arg(long, required = true)]
    res: Vec<PathBuf>,
    /// mot or visdrone
    #[arg(long, default_value = "mot")]
    gt_format: String,
    /// Score all classes together instead of averaging per class.
    #[arg(long)]
    collapse_classes: bool,
    /// Also print HOTA at each localization threshold.
    #[arg(long)]
    alpha: bool,
    /// Print unit-interval JSON instead of the percent table.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Address to listen on [default: 127.0.0.1:7878]
    #[arg(long)]
    listen: Option<String>,
    /// Worker threads; streams are partitioned by id [default: 2]
    #[arg(long)]
    workers: Option<usize>,
    /// Messages queued per worker [default: 256]
    #[arg(long)]
    queue_capacity: Option<usize>,
    /// Frames a stream may run ahead [default: 64]
    #[arg(long)]
    reorder_window: Option<u64>,
    /// Write deadline for replies, ms [default: 500]
    #[arg(long)]
    ack_timeout_ms: Option<u64>,
    /// Frames between checkpoints [default: 100]
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    /// block or drop-oldest [default: block]
    #[arg(long)]
    overload_policy: Option<String>,
    /// Checkpoint directory, or "none" [default: ckpt]
    #[arg(long)]
    checkpoint_dir: Option<String>,
    /// Stop after this many seconds instead of waiting for Ctrl-C.
    #[arg(long)]
    duration_secs: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Args, Debug)]
struct ProduceArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gmc: Option<PathBuf>,
    /// Server address [default: 127.0.0.1:7878]
    #[arg(long)]
    endpoint: Option<String>,
    /// [default: 1]
    #[arg(long)]
    stream_id: Option<u32>,
    /// Frames per second, 0 for unpaced [default: 0]
    #[arg(long)]
    rate: Option<f64>,
    /// Resend unacknowledged frames after this long, ms [default: 500]
    #[arg(long)]
    ack_timeout_ms: Option<u64>,
    /// [default: 63]
    #[arg(long)]
    max_in_flight: Option<u64>,
    /// Reconnection attempts [default: 5]
    #[arg(long)]
    max_retries: Option<u32>,
    /// [default: 200]
    #[arg(long)]
    retry_delay_ms: Option<u64>,
    /// Inject faults: drop every n-th frame message.
    #[arg(long)]
    drop_every: Option<u64>,
    #[arg(long)]
    drop_probability: Option<f64>,
    #[arg(long)]
    duplicate_probability: Option<f64>,
    #[arg(long)]
    reorder_probability: Option<f64>,
    #[arg(long)]
    fault_seed: Option<u64>,
    /// Results file to write.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the delivery report as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Detection file; omit to use --synthetic.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    dets: Option<PathBuf>,
    #[arg(long)]
    gmc: Option<PathBuf>,
    /// Benchmark a generated sequence of this many frames at 50 detections per frame.
    #[arg(long)]
    synthetic: Option<u64>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    tracker: TrackerFlags,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Directory for dets.txt, gt.txt and gmc.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// custom, determinism (300 frames) or benchmark (50 detections per frame)
    #[arg(long, default_value = "custom")]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    frames: u64,
    #[arg(long, default_value_t = 10)]
    objects: usize,
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Global camera pan per frame, "dx,dy"; writes gmc.txt.
    #[arg(long)]
    pan: Option<String>,
    /// Give objects categories.
    #[arg(long)]
    classes: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Exit code for an error, from the first recognised cause.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() || cause.is::<InputError>() || cause.is::<MetricsError>() {
            return 1;
        }
        if let Some(io) = cause.downcast_ref::<IoError>() {
            return match io {
                IoError::Read { .. } => 2,
                _ => 1,
            };
        }
        if let Some(t) = cause.downcast_ref::<TrackError>() {
            return match t {
                TrackError::Input(_) => 1,
                TrackError::OutOfOrder { .. } => 3,
            };
        }
        if let Some(p) = cause.downcast_ref::<ProducerError>() {
            return match p {
                ProducerError::BadSequence { .. } => 3,
                _ => 2,
            };
        }
        if let Some(s) = cause.downcast_ref::<StreamError>() {
            return match s {
                StreamError::Config(_) => 1,
                _ => 2,
            };
        }
        if cause.is::<CheckpointError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = std::panic::catch_unwind(|| match cli.command {
        Command::Track(a) => commands::track(a),
        Command::Eval(a) => commands::eval(a),
        Command::Serve(a) => commands::serve(a),
        Command::Produce(a) => commands::produce(a),
        Command::Bench(a) => commands::bench(a),
        Command::Synth(a) => commands::synth(a),
    });
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}

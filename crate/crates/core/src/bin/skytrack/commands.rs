use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use log::{info, warn};
use serde_json::json;
use skytrack::io::{read_labeled, write_detections, write_gmc, write_labeled, write_results, GtFormat, SequenceBundle};
use skytrack::metrics::{aggregate, evaluate, format_alpha_table, format_table, machine_report, EvalOptions, ReportRow, Source};
use skytrack::stream::{run_producer, FaultConfig, OverloadPolicy, ProducerConfig, Server, ServerConfig};
use skytrack::synth::{self, ScenarioConfig};
use skytrack::tracker::{FrameOutput, Tracker, TrackerConfig, TrackerMode};
use skytrack::FrameInput;

use crate::settings::{manifest_path, tracker_config, RunManifest};
use crate::{layered, BenchArgs, EvalArgs, ProduceArgs, ServeArgs, SynthArgs, TrackArgs, Usage};

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_bundle(dets: &Path, gmc: Option<&Path>, cfg: &TrackerConfig) -> Result<SequenceBundle> {
    if cfg.mode == TrackerMode::BotSort && gmc.is_none() {
        warn!("botsort without a camera motion file: using identity transforms");
    }
    Ok(SequenceBundle::load(dets, None, gmc)?)
}

/// Runs the tracker, timing only the per-frame steps.
fn run_timed(cfg: TrackerConfig, frames: &[FrameInput]) -> Result<(Vec<FrameOutput>, Duration)> {
    let mut tracker = Tracker::new(cfg)?;
    let mut out = Vec::with_capacity(frames.len());
    let mut spent = Duration::ZERO;
    for f in frames {
        let t = Instant::now();
        let o = tracker.step(f)?;
        spent += t.elapsed();
        out.push(o);
    }
    Ok((out, spent))
}

fn fps(frames: usize, spent: Duration) -> Option<f64> {
    let s = spent.as_secs_f64();
    (frames > 0 && s > 0.0).then(|| frames as f64 / s)
}

pub fn track(a: TrackArgs) -> Result<()> {
    let start = Instant::now();
    let settings = layered(a.config.as_deref(), a.tracker.pairs())?;
    let cfg = tracker_config(&settings, &[])?;
    let bundle = load_bundle(&a.dets, a.gmc.as_deref(), &cfg)?;
    let frames = bundle.frame_inputs(0);
    let (outputs, spent) = run_timed(cfg, &frames)?;
    write_file(&a.out, &write_results(&outputs))?;

    let mut m = RunManifest::new("track").with_tracker(&cfg);
    m.input("detections", Some(&a.dets));
    m.input("camera_motion", a.gmc.as_deref());
    m.outputs.insert("results".into(), a.out.clone());
    m.frames = frames.len() as u64;
    m.fps = fps(frames.len(), spent);
    m.timings_secs.insert("tracking".into(), spent.as_secs_f64());
    m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
    let mp = manifest_path(a.manifest.as_deref(), &a.out);
    m.write(&mp)?;
    println!(
        "{}: {} frames, {} tracker {:.1} fps -> {}",
        bundle.name,
        frames.len(),
        cfg.mode,
        m.fps.unwrap_or(0.0),
        a.out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let start = Instant::now();
    if a.gt.len() != a.res.len() {
        return Err(Usage(format!("{} --gt files but {} --res files", a.gt.len(), a.res.len())).into());
    }
    let format: GtFormat = a.gt_format.parse().map_err(|e| Usage(format!("--gt-format: {e}")))?;
    let opts = EvalOptions {
        collapse_classes: a.collapse_classes,
    };
    let pairs: Vec<(&PathBuf, &PathBuf)> = a.gt.iter().zip(&a.res).collect();
    let results: Vec<Result<_>> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .iter()
            .map(|&(g, r)| s.spawn(move || eval_pair(g, r, format, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("evaluation thread panicked"))))
            .collect()
    });
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for (r, (_, res)) in results.into_iter().zip(&pairs) {
        let c = r?;
        rows.push(ReportRow {
            name: stem(res),
            report: c.report(),
            fps: None,
        });
        counts.push(c);
    }
    if counts.len() > 1 {
        rows.push(ReportRow {
            name: "COMBINED".into(),
            report: aggregate(&counts)?.report(),
            fps: None,
        });
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&machine_report(&rows, a.alpha))?);
    } else {
        print!("{}", format_table(&rows));
        if a.alpha {
            for r in &rows {
                print!("\n{}", format_alpha_table(&r.name, &r.report));
            }
        }
    }
    if let Some(mp) = a.manifest {
        let mut m = RunManifest::new("eval");
        m.settings.insert("gt-format".into(), format.to_string());
        m.settings.insert("collapse-classes".into(), a.collapse_classes.to_string());
        for (i, (g, r)) in pairs.iter().enumerate() {
            m.inputs.insert(format!("gt[{i}]"), (*g).clone());
            m.inputs.insert(format!("res[{i}]"), (*r).clone());
        }
        m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
        m.write(&mp)?;
    }
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn eval_pair(gt_path: &Path, res_path: &Path, format: GtFormat, opts: EvalOptions) -> Result<skytrack::metrics::EvalCounts> {
    let mut gt = read_labeled(gt_path, format, Source::GroundTruth)?;
    let mut res = read_labeled(res_path, GtFormat::Mot, Source::Result)?;
    if let (Some(g), Some(r)) = (gt.range(), res.range()) {
        if g != r {
            let union = (g.0.min(r.0), g.1.max(r.1));
            warn!(
                "{}: ground truth covers frames {}..={} but results cover {}..={}; evaluating over {}..={}",
                res_path.display(),
                g.0,
                g.1,
                r.0,
                r.1,
                union.0,
                union.1
            );
            gt.declare_range(union.0, union.1);
            res.declare_range(union.0, union.1);
        }
    }
    Ok(evaluate(&gt, &res, opts)?)
}

const SERVE_KEYS: &[&str] = &[
    "listen",
    "workers",
    "queue-capacity",
    "reorder-window",
    "ack-timeout-ms",
    "checkpoint-interval",
    "overload-policy",
    "checkpoint-dir",
    "duration-secs",
];

pub fn serve(a: ServeArgs) -> Result<()> {
    let start = Instant::now();
    let mut flags = a.tracker.pairs();
    flags.extend([
        ("listen", a.listen.clone()),
        ("workers", a.workers.map(|v| v.to_string())),
        ("queue-capacity", a.queue_capacity.map(|v| v.to_string())),
        ("reorder-window", a.reorder_window.map(|v| v.to_string())),
        ("ack-timeout-ms", a.ack_timeout_ms.map(|v| v.to_string())),
        ("checkpoint-interval", a.checkpoint_interval.map(|v| v.to_string())),
        ("overload-policy", a.overload_policy.clone()),
        ("checkpoint-dir", a.checkpoint_dir.clone()),
        ("duration-secs", a.duration_secs.map(|v| v.to_string())),
    ]);
    let s = layered(a.config.as_deref(), flags)?;
    let tracker = tracker_config(&s, SERVE_KEYS)?;
    let d = ServerConfig::default();
    let cfg = ServerConfig {
        listen: s.get("listen").map_or(d.listen, str::to_string),
        worker_count: s.parse("workers")?.unwrap_or(d.worker_count),
        queue_capacity: s.parse("queue-capacity")?.unwrap_or(d.queue_capacity),
        reorder_window: s.parse("reorder-window")?.unwrap_or(d.reorder_window),
        ack_timeout: s.parse("ack-timeout-ms")?.map_or(d.ack_timeout, Duration::from_millis),
        checkpoint_interval: s.parse("checkpoint-interval")?.unwrap_or(d.checkpoint_interval),
        overload_policy: s.parse::<OverloadPolicy>("overload-policy")?.unwrap_or(d.overload_policy),
        checkpoint_dir: match s.get("checkpoint-dir") {
            Some("none") | Some("") => None,
            Some(p) => Some(PathBuf::from(p)),
            None => d.checkpoint_dir,
        },
        tracker,
    };
    let duration: Option<f64> = s.parse("duration-secs")?;

    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).context("installing Ctrl-C handler")?;

    let server = Server::start(cfg.clone())?;
    println!(
        "listening on {} ({} workers, {} tracker); Ctrl-C to stop",
        server.local_addr(),
        cfg.worker_count,
        cfg.tracker.mode
    );
    let mut last: Vec<u64> = vec![0; cfg.worker_count];
    let mut tick = Instant::now();
    while !stop.load(Ordering::SeqCst) && duration.is_none_or(|d| start.elapsed().as_secs_f64() < d) {
        std::thread::sleep(Duration::from_millis(50));
        if tick.elapsed() >= Duration::from_secs(1) {
            let secs = tick.elapsed().as_secs_f64();
            tick = Instant::now();
            let stats = server.stats();
            let line: Vec<String> = stats
                .workers
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let rate = (w.frames - last[i]) as f64 / secs;
                    last[i] = w.frames;
                    format!("w{i} {rate:.1} fps")
                })
                .collect();
            println!("{}", line.join("  "));
        }
    }
    info!("shutting down");
    let stats = server.shutdown();
    println!(
        "stopped: {} frames processed, {} checkpoints written",
        stats.total_frames(),
        stats.workers.iter().map(|w| w.checkpoints).sum::<u64>()
    );
    if let Some(mp) = a.manifest {
        let mut m = RunManifest::new("serve").with_tracker(&cfg.tracker);
        for (k, v) in &s.0 {
            if SERVE_KEYS.contains(&k.as_str()) {
                m.settings.insert(k.clone(), v.clone());
            }
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            m.outputs.insert("checkpoints".into(), dir.clone());
        }
        m.frames = stats.total_frames();
        m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
        m.write(&mp)?;
    }
    Ok(())
}

const PRODUCE_KEYS: &[&str] = &[
    "endpoint",
    "stream-id",
    "rate",
    "ack-timeout-ms",
    "max-in-flight",
    "max-retries",
    "retry-delay-ms",
    "drop-every",
    "drop-probability",
    "duplicate-probability",
    "reorder-probability",
    "fault-seed",
];

pub fn produce(a: ProduceArgs) -> Result<()> {
    let start = Instant::now();
    let s = layered(
        a.config.as_deref(),
        vec![
            ("endpoint", a.endpoint.clone()),
            ("stream-id", a.stream_id.map(|v| v.to_string())),
            ("rate", a.rate.map(|v| v.to_string())),
            ("ack-timeout-ms", a.ack_timeout_ms.map(|v| v.to_string())),
            ("max-in-flight", a.max_in_flight.map(|v| v.to_string())),
            ("max-retries", a.max_retries.map(|v| v.to_string())),
            ("retry-delay-ms", a.retry_delay_ms.map(|v| v.to_string())),
            ("drop-every", a.drop_every.map(|v| v.to_string())),
            ("drop-probability", a.drop_probability.map(|v| v.to_string())),
            ("duplicate-probability", a.duplicate_probability.map(|v| v.to_string())),
            ("reorder-probability", a.reorder_probability.map(|v| v.to_string())),
            ("fault-seed", a.fault_seed.map(|v| v.to_string())),
        ],
    )?;
    if let Some((k, _)) = s.0.iter().find(|(k, _)| !PRODUCE_KEYS.contains(&k.as_str())) {
        return Err(Usage(format!("unknown setting '{k}'")).into());
    }
    let d = ProducerConfig::default();
    let drop_every: Option<u64> = s.parse("drop-every")?;
    let fault = FaultConfig {
        seed: s.parse("fault-seed")?.unwrap_or(0),
        drop_every,
        drop_probability: s.parse("drop-probability")?.unwrap_or(0.0),
        duplicate_probability: s.parse("duplicate-probability")?.unwrap_or(0.0),
        reorder_probability: s.parse("reorder-probability")?.unwrap_or(0.0),
    };
    let faulty = fault != FaultConfig { seed: fault.seed, ..FaultConfig::default() };
    let cfg = ProducerConfig {
        stream_id: s.parse("stream-id")?.unwrap_or(d.stream_id),
        rate: s.parse("rate")?.unwrap_or(d.rate),
        ack_timeout: s.parse("ack-timeout-ms")?.map_or(d.ack_timeout, Duration::from_millis),
        max_in_flight: s.parse("max-in-flight")?.unwrap_or(d.max_in_flight),
        max_retries: s.parse("max-retries")?.unwrap_or(d.max_retries),
        retry_delay: s.parse("retry-delay-ms")?.map_or(d.retry_delay, Duration::from_millis),
        handshake_timeout: d.handshake_timeout,
        fault: faulty.then_some(fault),
    };
    if !(cfg.rate >= 0.0 && cfg.rate.is_finite()) {
        return Err(Usage(format!("rate must be a non-negative number, got {}", cfg.rate)).into());
    }
    let endpoint = s.get("endpoint").unwrap_or("127.0.0.1:7878").to_string();
    let bundle = SequenceBundle::load(&a.dets, None, a.gmc.as_deref())?;
    let frames = bundle.frame_inputs(cfg.stream_id);

    let report = match run_producer(&frames, &endpoint, &cfg) {
        Ok(r) => r,
        Err(e) => {
            if let Some(r) = e.report() {
                eprintln!("{}", serde_json::to_string_pretty(r)?);
            }
            return Err(e.into());
        }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "stream {}: {} frames acknowledged, {} retransmitted, {} retries, {:.2} s",
            report.stream_id, report.acked, report.retransmitted, report.retries, report.elapsed_secs
        );
    }
    let mut m = RunManifest::new("produce");
    m.settings.insert("endpoint".into(), endpoint);
    for (k, v) in &s.0 {
        m.settings.insert(k.clone(), v.clone());
    }
    if let Some(f) = &cfg.fault {
        m.seeds.insert("fault".into(), f.seed);
    }
    m.input("detections", Some(&a.dets));
    m.input("camera_motion", a.gmc.as_deref());
    m.frames = report.frames;
    m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
    if let Some(out) = &a.out {
        write_file(out, &write_results(&report.results))?;
        m.outputs.insert("results".into(), out.clone());
        m.write(&manifest_path(a.manifest.as_deref(), out))?;
    } else if let Some(mp) = &a.manifest {
        m.write(mp)?;
    }
    Ok(())
}

/// Median and 95th percentile (nearest rank) of `samples`.
fn summarize(samples: &[f64]) -> (f64, f64) {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    (median, v[rank - 1])
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let start = Instant::now();
    let s = layered(a.config.as_deref(), a.tracker.pairs())?;
    let cfg = tracker_config(&s, &[])?;
    let bundle = match (&a.dets, a.synthetic) {
        (Some(d), _) => load_bundle(d, a.gmc.as_deref(), &cfg)?,
        (None, Some(n)) => synth::benchmark_bundle(n),
        (None, None) => return Err(Usage("give --dets or --synthetic".into()).into()),
    };
    let frames = bundle.frame_inputs(0);
    if frames.is_empty() {
        return Err(Usage("nothing to benchmark: the sequence has no frames".into()).into());
    }
    if a.repetitions == 0 {
        return Err(Usage("--repetitions must be at least 1".into()).into());
    }
    let mut samples = Vec::with_capacity(a.repetitions);
    for _ in 0..a.repetitions {
        let (_, spent) = run_timed(cfg, &frames)?;
        samples.push(fps(frames.len(), spent).unwrap_or(f64::INFINITY));
    }
    let (median, p95) = summarize(&samples);
    let dets_per_frame = bundle.detection_count() as f64 / frames.len() as f64;
    if a.json {
        let v = json!({
            "sequence": bundle.name,
            "tracker": cfg.mode.to_string(),
            "frames": frames.len(),
            "detections_per_frame": dets_per_frame,
            "samples_fps": samples,
            "median_fps": median,
            "p95_fps": p95,
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!(
            "{}: {} frames, {:.1} detections/frame, {} tracker, {} repetitions",
            bundle.name,
            frames.len(),
            dets_per_frame,
            cfg.mode,
            samples.len()
        );
        println!("median {median:.1} fps, p95 {p95:.1} fps (tracking step only)");
    }
    if let Some(mp) = a.manifest {
        let mut m = RunManifest::new("bench").with_tracker(&cfg);
        m.settings.insert("repetitions".into(), a.repetitions.to_string());
        m.input("detections", a.dets.as_deref());
        m.input("camera_motion", a.gmc.as_deref());
        if let Some(n) = a.synthetic {
            m.settings.insert("synthetic".into(), n.to_string());
        }
        m.frames = frames.len() as u64;
        m.fps = Some(median);
        m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
        m.write(&mp)?;
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let start = Instant::now();
    let bundle = match a.preset.as_str() {
        "determinism" => synth::determinism_bundle(),
        "benchmark" => synth::benchmark_bundle(a.frames),
        "custom" => {
            let camera_pan = a
                .pan
                .as_deref()
                .map(|p| {
                    p.split_once(',')
                        .and_then(|(x, y)| Some((x.trim().parse().ok()?, y.trim().parse().ok()?)))
                        .ok_or_else(|| Usage(format!("--pan expects dx,dy, got {p:?}")))
                })
                .transpose()?;
            synth::generate(
                "synthetic",
                &ScenarioConfig {
                    seed: a.seed,
                    frames: a.frames,
                    objects: a.objects,
                    embedding_dim: a.embedding_dim,
                    camera_pan,
                    classes: a.classes,
                    ..ScenarioConfig::default()
                },
            )
        }
        other => return Err(Usage(format!("unknown preset {other:?} (custom, determinism, benchmark)")).into()),
    };
    let dets = a.out_dir.join("dets.txt");
    write_file(&dets, &write_detections(&bundle.detections))?;
    let mut m = RunManifest::new("synth");
    m.settings.insert("preset".into(), a.preset.clone());
    m.seeds.insert("scenario".into(), a.seed);
    m.outputs.insert("detections".into(), dets);
    if let Some(gt) = &bundle.ground_truth {
        let p = a.out_dir.join("gt.txt");
        write_file(&p, &write_labeled(gt))?;
        m.outputs.insert("ground_truth".into(), p);
    }
    if let Some(cm) = &bundle.camera_motion {
        let p = a.out_dir.join("gmc.txt");
        write_file(&p, &write_gmc(cm))?;
        m.outputs.insert("camera_motion".into(), p);
    }
    m.frames = bundle.frame_count;
    m.timings_secs.insert("total".into(), start.elapsed().as_secs_f64());
    m.write(&a.manifest.unwrap_or_else(|| a.out_dir.join("manifest.json")))?;
    println!(
        "{}: {} frames, {} detections -> {}",
        bundle.name,
        bundle.frame_count,
        bundle.detection_count(),
        a.out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::summarize;

    #[test]
    fn median_and_p95() {
        assert_eq!(summarize(&[3.0, 1.0]), (2.0, 3.0));
        assert_eq!(summarize(&[5.0]), (5.0, 5.0));
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(summarize(&v), (50.5, 95.0));
    }
}

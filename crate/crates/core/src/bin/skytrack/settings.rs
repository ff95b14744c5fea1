//! Layered settings (defaults < config file < flags) and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use skytrack::tracker::TrackerConfig;

use crate::Usage;

/// Ordered `key=value` pairs; later entries win.
#[derive(Debug, Clone, Default)]
pub struct Settings(pub Vec<(String, String)>);

impl Settings {
    /// Reads a `key=value` file (`#` starts a comment) or a run manifest,
    /// whose `settings` object is replayed verbatim.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
            let obj = v
                .get("settings")
                .and_then(|s| s.as_object())
                .ok_or_else(|| Usage(format!("{}: manifest has no settings object", path.display())))?;
            return Ok(Self(
                obj.iter()
                    .map(|(k, v)| (k.clone(), v.as_str().map_or_else(|| v.to_string(), str::to_string)))
                    .collect(),
            ));
        }
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
            out.push((normalize(k), v.trim().to_string()));
        }
        Ok(Self(out))
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((normalize(key), value.to_string()));
    }

    /// Last value given for `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Usage(format!("{key}={v}: {e}")).into()))
            .transpose()
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

pub const TRACKER_KEYS: &[&str] = &[
    "tracker",
    "tau-high",
    "tau-low",
    "new-track-threshold",
    "first-gate",
    "second-gate",
    "track-buffer",
    "fuse-score",
    "emb-theta",
    "prox-theta",
    "emb-momentum",
    "class-aware",
    "std-weight-position",
    "std-weight-velocity",
];

/// Applies the tracker keys of `settings` over the defaults and rejects
/// unknown keys outside `extra`.
pub fn tracker_config(settings: &Settings, extra: &[&str]) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    for (k, v) in &settings.0 {
        if TRACKER_KEYS.contains(&k.as_str()) {
            cfg.set(k, v)?;
        } else if !extra.contains(&k.as_str()) {
            return Err(Usage(format!("unknown setting '{k}'")).into());
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every tracker field under its flag name, formatted to round-trip exactly.
pub fn tracker_settings(c: &TrackerConfig) -> Vec<(String, String)> {
    [
        ("tracker", c.mode.to_string()),
        ("tau-high", c.tau_high.to_string()),
        ("tau-low", c.tau_low.to_string()),
        ("new-track-threshold", c.new_track_threshold.to_string()),
        ("first-gate", c.first_gate.to_string()),
        ("second-gate", c.second_gate.to_string()),
        ("track-buffer", c.track_buffer.to_string()),
        ("fuse-score", c.fuse_score_enabled.to_string()),
        ("emb-theta", c.emb_theta.to_string()),
        ("prox-theta", c.prox_theta.to_string()),
        ("emb-momentum", c.emb_momentum.to_string()),
        ("class-aware", c.class_aware.to_string()),
        ("std-weight-position", c.noise.std_weight_position.to_string()),
        ("std-weight-velocity", c.noise.std_weight_velocity.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// What a command ran with and what it produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub started_unix_secs: u64,
    /// Resolved settings by flag name; `--config <manifest>` replays them.
    pub settings: BTreeMap<String, String>,
    pub tracker: Option<TrackerConfig>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub timings_secs: BTreeMap<String, f64>,
    pub frames: u64,
    /// Frames per second of the tracking step alone.
    pub fps: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            started_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            settings: BTreeMap::new(),
            tracker: None,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_secs: BTreeMap::new(),
            frames: 0,
            fps: None,
        }
    }

    pub fn with_tracker(mut self, c: &TrackerConfig) -> Self {
        self.settings.extend(tracker_settings(c));
        self.tracker = Some(*c);
        self
    }

    pub fn input(&mut self, name: &str, path: Option<&Path>) {
        if let Some(p) = path {
            self.inputs.insert(name.into(), p.to_path_buf());
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// `<output>.manifest.json` unless a path was given.
pub fn manifest_path(explicit: Option<&Path>, output: &Path) -> PathBuf {
    explicit.map_or_else(
        || {
            let mut s = output.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        },
        Path::to_path_buf,
    )
}

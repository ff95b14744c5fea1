use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::InputError;
use crate::filter::KalmanNoise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackerMode {
    Byte,
    BotSort,
}

impl fmt::Display for TrackerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackerMode::Byte => "byte",
            TrackerMode::BotSort => "botsort",
        })
    }
}

impl FromStr for TrackerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "byte" | "bytetrack" => Ok(TrackerMode::Byte),
            "botsort" | "bot-sort" => Ok(TrackerMode::BotSort),
            other => Err(format!("unknown tracker '{other}' (expected byte or botsort)")),
        }
    }
}

/// Every threshold the tracker uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Detections scoring at or above this go to the first association stage.
    pub tau_high: f64,
    /// Detections in `[tau_low, tau_high)` only rescue already tracked objects.
    pub tau_low: f64,
    /// Minimum score for an unmatched detection to start a track.
    pub new_track_threshold: f64,
    /// Cost gate of the first stage; `1 - 0.2` rejects pairs with IoU below 0.2.
    pub first_gate: f64,
    pub second_gate: f64,
    /// Frames a lost track survives without a match.
    pub track_buffer: u32,
    pub fuse_score_enabled: bool,
    pub mode: TrackerMode,
    pub emb_theta: f64,
    pub prox_theta: f64,
    pub emb_momentum: f64,
    pub class_aware: bool,
    pub noise: NoiseWeights,
}

/// Serializable mirror of [`KalmanNoise`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseWeights {
    pub std_weight_position: f64,
    pub std_weight_velocity: f64,
}

impl From<NoiseWeights> for KalmanNoise {
    fn from(n: NoiseWeights) -> Self {
        KalmanNoise {
            std_weight_position: n.std_weight_position,
            std_weight_velocity: n.std_weight_velocity,
        }
    }
}

impl Default for NoiseWeights {
    fn default() -> Self {
        let k = KalmanNoise::default();
        Self {
            std_weight_position: k.std_weight_position,
            std_weight_velocity: k.std_weight_velocity,
        }
    }
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau_high: 0.6,
            tau_low: 0.1,
            new_track_threshold: 0.7,
            first_gate: 0.8,
            second_gate: 0.5,
            track_buffer: 30,
            fuse_score_enabled: true,
            mode: TrackerMode::Byte,
            emb_theta: 0.25,
            prox_theta: 0.5,
            emb_momentum: 0.9,
            class_aware: true,
            noise: NoiseWeights::default(),
        }
    }
}

impl TrackerConfig {
    pub fn botsort() -> Self {
        Self {
            mode: TrackerMode::BotSort,
            ..Self::default()
        }
    }

    /// Strict check used before operator runs: `tau_low < tau_high <= new_track_threshold`.
    pub fn validate(&self) -> Result<(), InputError> {
        self.check_common()?;
        if self.tau_low >= self.tau_high {
            return Err(InputError::InvalidConfig(format!(
                "tau_low ({}) must be below tau_high ({})",
                self.tau_low, self.tau_high
            )));
        }
        Ok(())
    }

    /// Accepts `tau_low == tau_high`, which collapses BYTE to single-stage association.
    pub(crate) fn validate_relaxed(&self) -> Result<(), InputError> {
        self.check_common()?;
        if self.tau_low > self.tau_high {
            return Err(InputError::InvalidConfig(format!(
                "tau_low ({}) exceeds tau_high ({})",
                self.tau_low, self.tau_high
            )));
        }
        Ok(())
    }

    fn check_common(&self) -> Result<(), InputError> {
        let unit = [
            ("tau_high", self.tau_high),
            ("tau_low", self.tau_low),
            ("new_track_threshold", self.new_track_threshold),
            ("emb_theta", self.emb_theta),
            ("prox_theta", self.prox_theta),
            ("emb_momentum", self.emb_momentum),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(InputError::InvalidConfig(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if self.tau_high > self.new_track_threshold {
            return Err(InputError::InvalidConfig(format!(
                "tau_high ({}) exceeds new_track_threshold ({})",
                self.tau_high, self.new_track_threshold
            )));
        }
        if self.track_buffer == 0 {
            return Err(InputError::InvalidConfig("track_buffer must be positive".into()));
        }
        for (name, g) in [("first_gate", self.first_gate), ("second_gate", self.second_gate)] {
            if g.is_nan() {
                return Err(InputError::InvalidConfig(format!("{name} is NaN")));
            }
        }
        let n = self.noise;
        if !(n.std_weight_position > 0.0 && n.std_weight_velocity > 0.0) {
            return Err(InputError::InvalidConfig("noise weights must be positive".into()));
        }
        Ok(())
    }

    /// Applies one `key=value` override; keys mirror the command-line flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), InputError> {
        let bad = |e: String| InputError::InvalidConfig(format!("{key}={value}: {e}"));
        let num = || value.trim().parse::<f64>().map_err(|e| bad(e.to_string()));
        let flag = || parse_flag(value).ok_or_else(|| bad("expected true/false".into()));
        match key.trim().replace('_', "-").as_str() {
            "tau-high" => self.tau_high = num()?,
            "tau-low" => self.tau_low = num()?,
            "new-track-threshold" => self.new_track_threshold = num()?,
            "first-gate" => self.first_gate = num()?,
            "second-gate" => self.second_gate = num()?,
            "track-buffer" => {
                self.track_buffer = value.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
            }
            "fuse-score" => self.fuse_score_enabled = flag()?,
            "tracker" | "mode" => self.mode = value.parse().map_err(bad)?,
            "emb-theta" => self.emb_theta = num()?,
            "prox-theta" => self.prox_theta = num()?,
            "emb-momentum" => self.emb_momentum = num()?,
            "class-aware" => self.class_aware = flag()?,
            "std-weight-position" => self.noise.std_weight_position = num()?,
            "std-weight-velocity" => self.noise.std_weight_velocity = num()?,
            _ => return Err(InputError::InvalidConfig(format!("unknown tracker setting '{key}'"))),
        }
        Ok(())
    }
}

fn parse_flag(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Some(true),
        "0" | "false" | "off" | "no" => Some(false),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_operating_point() {
        let c = TrackerConfig::default();
        assert_eq!(c.tau_high, 0.6);
        assert_eq!(c.first_gate, 0.8);
        assert_eq!(c.track_buffer, 30);
        assert_eq!(c.tau_low, 0.1);
        assert_eq!(c.second_gate, 0.5);
        assert_eq!(c.new_track_threshold, 0.7);
        assert!(c.fuse_score_enabled && c.class_aware);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation() {
        let c = TrackerConfig {
            tau_low: 0.6,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(c.validate_relaxed().is_ok());
        let c = TrackerConfig {
            tau_high: 0.8,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrackerConfig {
            track_buffer: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides() {
        let mut c = TrackerConfig::default();
        c.set("tau_high", "0.5").unwrap();
        c.set("tracker", "botsort").unwrap();
        c.set("class-aware", "false").unwrap();
        c.set("track-buffer", "12").unwrap();
        assert_eq!(c.tau_high, 0.5);
        assert_eq!(c.mode, TrackerMode::BotSort);
        assert!(!c.class_aware);
        assert_eq!(c.track_buffer, 12);
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("tau-low", "x").is_err());
    }
}

//! Flat `key = value` configuration with environment overrides.
//!
//! Lines are `key = value`; `#` starts a comment. An environment variable
//! `DUET_<KEY>` (key upper-cased) overrides the file. Every key must be
//! consumed by some reader, so typos are reported instead of ignored.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accompaniment::{StrikeDynamics, StrikeThresholds};
use crate::cpg::OscillatorParams;
use crate::mir::MirConfig;
use crate::model::{ModelConfig, TrainConfig};
use crate::robot::{KeyboardGeometry, MpcConfig};
use crate::tokenizer::TimeSignature;

pub const ENV_PREFIX: &str = "DUET_";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File(usize),
    Env(String),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File(line) => write!(f, "line {line}"),
            Origin::Env(var) => write!(f, "environment variable {var}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("{origin}: invalid value `{value}` for `{key}`: {detail}")]
    Value {
        key: String,
        value: String,
        origin: String,
        detail: String,
    },
    #[error("unknown configuration keys: {}", .0.join(", "))]
    Unknown(Vec<String>),
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("cannot read {path}: {detail}")]
    Io { path: String, detail: String },
}

#[derive(Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, Origin)>,
    used: RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries
                .insert(key.clone(), (v.trim().to_string(), Origin::File(i + 1)))
                .is_some()
            {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(KeyValues {
            entries,
            used: RefCell::default(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Apply `DUET_*` variables from `vars`.
    pub fn overlay_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                if !rest.is_empty() {
                    self.entries.insert(
                        rest.to_ascii_lowercase(),
                        (value, Origin::Env(name.clone())),
                    );
                }
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(
            key.to_ascii_lowercase(),
            (value.to_string(), Origin::Override),
        );
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.used.borrow_mut().insert(key.to_string());
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, origin)) => v.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
                key: key.to_string(),
                value: v.clone(),
                origin: origin.to_string(),
                detail: e.to_string(),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn check<T>(&self, key: &str, value: T, ok: bool, detail: &str) -> Result<T, ConfigError> {
        if ok {
            return Ok(value);
        }
        let (v, origin) = self.entries.get(key).cloned().unwrap_or_default_entry();
        Err(ConfigError::Value {
            key: key.to_string(),
            value: v,
            origin: origin.to_string(),
            detail: detail.to_string(),
        })
    }

    pub fn positive(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v: f64 = self.get_or(key, default)?;
        self.check(
            key,
            v,
            v.is_finite() && v > 0.0,
            "must be a positive number",
        )
    }

    /// Error on any key no reader asked for.
    pub fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Unknown(unknown))
        }
    }
}

trait DefaultEntry {
    fn unwrap_or_default_entry(self) -> (String, Origin);
}

impl DefaultEntry for Option<(String, Origin)> {
    fn unwrap_or_default_entry(self) -> (String, Origin) {
        self.unwrap_or((String::new(), Origin::Override))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Replay,
    Live,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replay" => Ok(Mode::Replay),
            "live" => Ok(Mode::Live),
            _ => Err("expected `replay` or `live`".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub tempo: f64,
    pub signature: TimeSignature,
    pub checkpoint: Option<PathBuf>,
    pub mode: Mode,
    /// Modelled decision latency after the last token instant (s).
    pub latency: f64,
    /// How long a live bar waits for stragglers before deciding (s).
    pub grace: f64,
    /// Per-cycle compute budget (s).
    pub budget: f64,
    pub seed: u64,
    pub delta_melody: f64,
    pub thresholds: StrikeThresholds,
    pub dynamics: StrikeDynamics,
    pub mpc: MpcConfig,
    pub geometry: KeyboardGeometry,
    pub oscillator: OscillatorParams,
    pub bind: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            tempo: 90.0,
            signature: TimeSignature::default(),
            checkpoint: None,
            mode: Mode::Replay,
            latency: 0.013,
            grace: 0.030,
            budget: 0.013,
            seed: 0,
            delta_melody: crate::tokenizer::DEFAULT_DELTA_MELODY,
            thresholds: StrikeThresholds::default(),
            dynamics: StrikeDynamics::default(),
            mpc: MpcConfig::default(),
            geometry: KeyboardGeometry::default(),
            oscillator: OscillatorParams::default(),
            bind: "127.0.0.1:9090".into(),
        }
    }
}

impl SessionConfig {
    pub fn t_bar(&self) -> f64 {
        crate::tokenizer::bar_duration(self.tempo, self.signature.beats)
    }

    pub fn read(kv: &KeyValues) -> Result<Self, ConfigError> {
        let d = SessionConfig::default();
        let mut mpc = d.mpc.clone();
        mpc.dt = kv.positive("control_dt", mpc.dt)?;
        mpc.v_max = kv.positive("v_max", mpc.v_max)?;
        mpc.horizon = kv.get_or("horizon", mpc.horizon)?;
        mpc.horizon = kv.check(
            "horizon",
            mpc.horizon,
            mpc.horizon >= 1,
            "must be at least 1",
        )?;
        mpc.w_track = kv.positive("w_track", mpc.w_track)?;
        mpc.w_effort = kv.positive("w_effort", mpc.w_effort)?;
        let mut geometry = d.geometry;
        geometry.key_width = kv.positive("key_width", geometry.key_width)?;
        let t_rise = kv.positive("cpg_t_rise", d.oscillator.t_rise)?;
        let ratio = kv.positive(
            "cpg_adapt_ratio",
            d.oscillator.t_adapt / d.oscillator.t_rise,
        )?;
        let oscillator = OscillatorParams {
            t_rise,
            t_adapt: t_rise * ratio,
            ..d.oscillator.clone()
        };
        let double: u32 = kv.get_or("ck_double", d.thresholds.double)?;
        let quadruple: u32 = kv.get_or("ck_quadruple", d.thresholds.quadruple)?;
        let quadruple = kv.check(
            "ck_quadruple",
            quadruple,
            quadruple >= double,
            "must not be below ck_double",
        )?;
        let initial: f64 = kv.get_or("velocity_initial", d.dynamics.initial)?;
        let initial = kv.check(
            "velocity_initial",
            initial,
            (1.0..=127.0).contains(&initial),
            "must be in 1..=127",
        )?;
        let decay: f64 = kv.get_or("velocity_decay", d.dynamics.decay)?;
        let decay = kv.check(
            "velocity_decay",
            decay,
            decay > 0.0 && decay <= 1.0,
            "must be in (0, 1]",
        )?;
        let delta_melody: f64 = kv.get_or("delta_melody", d.delta_melody)?;
        let delta_melody = kv.check(
            "delta_melody",
            delta_melody,
            delta_melody >= 0.0,
            "must be nonnegative",
        )?;
        Ok(SessionConfig {
            tempo: kv.positive("tempo", d.tempo)?,
            signature: kv.get_or("signature", d.signature)?,
            checkpoint: kv.get("checkpoint")?,
            mode: kv.get_or("mode", d.mode)?,
            latency: kv.positive("latency", d.latency)?,
            grace: kv.positive("grace", d.grace)?,
            budget: kv.positive("budget", d.budget)?,
            seed: kv.get_or("seed", d.seed)?,
            delta_melody,
            thresholds: StrikeThresholds { double, quadruple },
            dynamics: StrikeDynamics { initial, decay },
            mpc,
            geometry,
            oscillator,
            bind: kv.get_or("bind", d.bind)?,
        })
    }
}

pub fn read_mir_config(kv: &KeyValues) -> Result<MirConfig, ConfigError> {
    let d = MirConfig::default();
    Ok(MirConfig {
        delta_chord: kv.positive("delta_chord", d.delta_chord)?,
        delta_melody: kv.get_or("delta_melody", d.delta_melody)?,
        target_bpm: kv.positive("target_bpm", d.target_bpm)?,
        signature: kv.get_or("signature", d.signature)?,
        melody_split_pitch: kv.get_or("melody_split_pitch", d.melody_split_pitch)?,
        melody_track_name: kv.get_or("melody_track", d.melody_track_name.clone())?,
        ..d
    })
}

pub fn read_train_config(kv: &KeyValues) -> Result<TrainConfig, ConfigError> {
    let d = TrainConfig::default();
    let hidden = kv.get_or("hidden", d.model.hidden)?;
    let layers = kv.get_or("layers", d.model.layers)?;
    let dropout: f64 = kv.get_or("dropout", d.model.dropout)?;
    let dropout = kv.check(
        "dropout",
        dropout,
        (0.0..1.0).contains(&dropout),
        "must be in [0, 1)",
    )?;
    let batch_size: usize = kv.get_or("batch_size", d.batch_size)?;
    let batch_size = kv.check("batch_size", batch_size, batch_size > 0, "must be positive")?;
    let split = match kv.get::<String>("split")? {
        None => d.split,
        Some(s) => {
            let parts: Vec<u32> = s.split(':').filter_map(|p| p.trim().parse().ok()).collect();
            let ok = parts.len() == 3 && parts[0] > 0;
            kv.check(
                "split",
                [0, 1, 2].map(|i| parts.get(i).copied().unwrap_or(0)),
                ok,
                "expected train:val:test",
            )?
        }
    };
    Ok(TrainConfig {
        model: ModelConfig {
            hidden,
            layers,
            dropout,
            ..d.model
        },
        batch_size,
        learning_rate: kv.positive("learning_rate", d.learning_rate)?,
        max_epochs: kv.get_or("max_epochs", d.max_epochs)?,
        split,
        seed: kv.get_or("seed", d.seed)?,
        patience: kv.get("patience")?,
        stop_at_accuracy: kv.get("stop_at_accuracy")?,
        ..d
    })
}

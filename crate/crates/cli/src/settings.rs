//! Every tunable a subcommand may read, from one flat `key = value` file,
//! `DUET_*` environment variables and command-line overrides, in rising
//! precedence.

use std::path::Path;

use duet_core::metrics::feedback::FeedbackParams;
use duet_core::model::DEFAULT_STRENGTH;
use duet_core::session::config::{read_mir_config, read_train_config};
use duet_core::session::{ConfigError, KeyValues, SessionConfig};
use duet_core::{AnalysisConfig, MirConfig, TrainConfig};

#[derive(Clone, Debug)]
pub struct Settings {
    pub session: SessionConfig,
    pub mir: MirConfig,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub feedback: FeedbackParams,
    /// Strength of the replacement threshold between the weakest and
    /// strongest observed substitution.
    pub replacement_strength: f64,
}

impl Settings {
    pub fn load<I>(
        file: Option<&Path>,
        env: I,
        seed: Option<u64>,
        overrides: &[String],
    ) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut kv = match file {
            Some(path) => KeyValues::load(path)?,
            None => KeyValues::default(),
        };
        kv.overlay_env(env);
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: format!("override `{o}` is not key=value"),
            })?;
            kv.set(k.trim(), v.trim());
        }
        if let Some(seed) = seed {
            kv.set("seed", &seed.to_string());
        }
        Self::read(&kv)
    }

    pub fn read(kv: &KeyValues) -> Result<Self, ConfigError> {
        let session = SessionConfig::read(kv)?;
        let mir = read_mir_config(kv)?;
        let train = read_train_config(kv)?;
        let analysis = read_analysis(kv)?;
        let feedback = read_feedback(kv)?;
        let strength: f64 = kv.get_or("replacement_strength", DEFAULT_STRENGTH)?;
        let replacement_strength = kv.check(
            "replacement_strength",
            strength,
            (0.0..=1.0).contains(&strength),
            "must be in [0, 1]",
        )?;
        kv.finish()?;
        Ok(Settings {
            session,
            mir,
            train,
            analysis,
            feedback,
            replacement_strength,
        })
    }

    pub fn seed(&self) -> u64 {
        self.session.seed
    }
}

fn read_analysis(kv: &KeyValues) -> Result<AnalysisConfig, ConfigError> {
    let d = AnalysisConfig::default();
    let te_bins: usize = kv.get_or("te_bins", d.te_bins)?;
    let target_lag: usize = kv.get_or("te_target_lag", d.target_lag)?;
    let source_lag: usize = kv.get_or("te_source_lag", d.source_lag)?;
    Ok(AnalysisConfig {
        bin_width: kv.positive("entropy_bin_width", d.bin_width)?,
        te_bins: kv.check("te_bins", te_bins, te_bins >= 2, "must be at least 2")?,
        target_lag: kv.check(
            "te_target_lag",
            target_lag,
            target_lag >= 1,
            "must be at least 1",
        )?,
        source_lag: kv.check(
            "te_source_lag",
            source_lag,
            source_lag >= 1,
            "must be at least 1",
        )?,
    })
}

fn read_feedback(kv: &KeyValues) -> Result<FeedbackParams, ConfigError> {
    let d = FeedbackParams::default();
    let nonneg = |key: &str, default: f64| -> Result<f64, ConfigError> {
        let v: f64 = kv.get_or(key, default)?;
        kv.check(
            key,
            v,
            v.is_finite() && v >= 0.0,
            "must be a nonnegative number",
        )
    };
    let beats: usize = kv.get_or("feedback_beats", d.beats)?;
    let repetitions: usize = kv.get_or("feedback_repetitions", d.repetitions)?;
    Ok(FeedbackParams {
        beats: kv.check("feedback_beats", beats, beats >= 8, "must be at least 8")?,
        period: kv.positive("feedback_period", d.period)?,
        gain_visual: nonneg("gain_visual", d.gain_visual)?,
        gain_audio: nonneg("gain_audio", d.gain_audio)?,
        drift_bias: kv.get_or("drift_bias", d.drift_bias)?,
        drift_sd: nonneg("drift_sd", d.drift_sd)?,
        motor_sd: nonneg("motor_sd", d.motor_sd)?,
        robot_sd: nonneg("robot_sd", d.robot_sd)?,
        repetitions: kv.check(
            "feedback_repetitions",
            repetitions,
            repetitions >= 1,
            "must be at least 1",
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(
        text: &str,
        env: &[(&str, &str)],
        seed: Option<u64>,
        overrides: &[&str],
    ) -> Result<Settings, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("duet.conf");
        std::fs::write(&path, text).unwrap();
        let env = env.iter().map(|(k, v)| (k.to_string(), v.to_string()));
        let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        Settings::load(Some(&path), env, seed, &overrides)
    }

    #[test]
    fn precedence_file_env_override_seed() {
        let s = load(
            "tempo = 100\nseed = 1\nhidden = 16\n",
            &[("DUET_TEMPO", "110"), ("DUET_HIDDEN", "24")],
            Some(9),
            &["hidden=32"],
        )
        .unwrap();
        assert_eq!(s.session.tempo, 110.0);
        assert_eq!(s.train.model.hidden, 32);
        assert_eq!(s.seed(), 9);
        assert_eq!(s.train.seed, 9);
    }

    #[test]
    fn unknown_and_invalid_keys_are_config_errors() {
        assert!(matches!(
            load("tempoo = 90\n", &[], None, &[]),
            Err(ConfigError::Unknown(_))
        ));
        assert!(matches!(
            load("te_bins = 1\n", &[], None, &[]),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            load("", &[], None, &["noequals"]),
            Err(ConfigError::Syntax { .. })
        ));
    }
}

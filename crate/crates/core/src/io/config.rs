//! TOML configuration with one section per stage. Every key is optional;
//! unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localize::LocalizeConfig;
use crate::losses::LossWeights;
use crate::metrics::{ThresholdMode, DEFAULT_THRESHOLDS};
use crate::synth::SceneConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// F-score thresholds, interpreted according to `threshold_mode`.
    pub thresholds: Vec<f64>,
    pub threshold_mode: ThresholdMode,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { thresholds: DEFAULT_THRESHOLDS.to_vec(), threshold_mode: ThresholdMode::Squared }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.thresholds.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Config {
                key: "metrics.thresholds".into(),
                message: "needs at least one positive finite threshold".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub losses: LossWeights,
    pub train: TrainConfig,
    pub localize: LocalizeConfig,
    pub metrics: MetricsConfig,
    pub synth: SceneConfig,
}

impl Config {
    /// Checks every section; the training config picks up `losses`.
    pub fn validate(&self) -> Result<()> {
        self.losses.validate()?;
        self.train.validate()?;
        self.localize.validate()?;
        self.metrics.validate()?;
        self.synth.validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { losses: self.losses, ..self.train.clone() }
    }
}

/// Dotted key for a deserialization error: the enclosing `[section]` plus
/// the offending key, recovered from the error span.
fn error_key(text: &str, err: &toml::de::Error) -> String {
    let msg = err.message();
    let span = err.span().unwrap_or(0..0);
    let before = &text[..span.start.min(text.len())];
    let section = before
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('[') && l.ends_with(']'))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    // the reported field, or the key on the offending line
    let field = if let Some(rest) = msg.strip_prefix("unknown field `") {
        rest.split('`').next().map(str::to_string)
    } else {
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let line = &text[line_start..];
        line.split_once('=').map(|(k, _)| k.trim().to_string()).filter(|k| !k.starts_with('['))
    };
    match (section, field) {
        (Some(s), Some(f)) if !f.contains('.') => format!("{s}.{f}"),
        (_, Some(f)) => f,
        (Some(s), None) => s,
        (None, None) => "<root>".into(),
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let config: Config = toml::from_str(text).map_err(|e| Error::Config {
        key: error_key(text, &e),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn format_config(config: &Config) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::Config { key: "<root>".into(), message: e.to_string() })
}

pub fn read_config(path: &Path) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn write_config(path: &Path, config: &Config) -> Result<()> {
    super::write_atomic(path, format_config(config)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::DistanceMode;
    use proptest::prelude::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.losses.lambda_rgb, 0.2);
        assert_eq!(c.losses.lambda_geom, 0.1);
        assert_eq!(c.losses.lambda_prob, 0.1);
        assert_eq!(c.losses.lambda_scale, 100.0);
        assert_eq!(c.losses.lambda_perc, 0.5);
    }

    #[test]
    fn loss_constants_parse() {
        let c = parse_config("[losses]\nk = 20\nd = 0.9\ndistance_mode = \"euclidean\"\n").unwrap();
        assert_eq!((c.losses.k, c.losses.d), (20.0, 0.9));
        assert_eq!(c.losses.distance_mode, DistanceMode::Euclidean);
        assert_eq!(c.train_config().losses, c.losses);
    }

    #[test]
    fn misspelled_key_is_named() {
        match parse_config("[train]\niterations = 5\n\n[losses]\nlamda_geom = 0.3\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "losses.lamda_geom"),
            other => panic!("{other:?}"),
        }
        match parse_config("bogus = 1\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn type_mismatch_is_named() {
        match parse_config("[localize]\nrefine_steps = \"many\"\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "localize.refine_steps"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(parse_config("[losses]\nk = -1\n"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("[localize]\nouter_iterations = 0\n"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("[metrics]\nthresholds = []\n"), Err(Error::Config { .. })));
    }

    #[test]
    fn round_trip_is_stable() {
        let mut c = Config::default();
        c.losses.lambda_prob = 0.0;
        c.train.iterations = 123;
        c.train.background = [0.1, 0.2, 0.3];
        c.localize.use_icp = false;
        c.metrics.thresholds = vec![0.5];
        c.synth.frames = 4;
        let text = format_config(&c).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(format_config(&back).unwrap(), text);
    }

    proptest! {
        #[test]
        fn never_panics_on_garbage(text in "[\\[\\]a-z_=\". 0-9\\n-]{0,200}") {
            let _ = parse_config(&text);
        }
    }
}

//! Detection run configuration: a flat `key = value` file with `#`
//! comments, every key mirroring a CLI flag; flags override file values.

use std::fs;
use std::path::Path;

use blast_bocd::AlarmRule;

use crate::CliError;

/// `sigma^2` source for the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2 {
    /// Reuse the noise variance elicited with the prior.
    FromPrior,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hazard_lambda: f64,
    pub sigma2: Sigma2,
    pub truncation: usize,
    pub alarm_rule: AlarmRuleKind,
    pub alarm_threshold: f64,
    pub alarm_window: usize,
    pub alarm_burn_in: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmRuleKind {
    MapDrop,
    ProbMass,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            hazard_lambda: 20.0,
            sigma2: Sigma2::FromPrior,
            truncation: 200,
            alarm_rule: AlarmRuleKind::MapDrop,
            alarm_threshold: 0.5,
            alarm_window: 2,
            alarm_burn_in: blast_bocd::AlarmDetector::DEFAULT_BURN_IN,
        }
    }
}

impl RunConfig {
    pub fn alarm(&self) -> AlarmRule {
        match self.alarm_rule {
            AlarmRuleKind::MapDrop => AlarmRule::MapDrop,
            AlarmRuleKind::ProbMass => AlarmRule::ProbMass {
                threshold: self.alarm_threshold,
                window: self.alarm_window,
            },
        }
    }

    pub fn detector(&self) -> blast_bocd::AlarmDetector {
        blast_bocd::AlarmDetector::with_burn_in(self.alarm(), self.alarm_burn_in)
    }

    pub fn sigma2_for(&self, prior_noise_variance: f64) -> f64 {
        match self.sigma2 {
            Sigma2::FromPrior => prior_noise_variance,
            Sigma2::Explicit(v) => v,
        }
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let parse_f64 = |v: &str| -> Result<f64, CliError> {
            v.parse::<f64>()
                .map_err(|_| CliError::Input(format!("invalid number for {key}: {v}")))
        };
        let positive = |x: f64| -> Result<f64, CliError> {
            if x > 0.0 {
                Ok(x)
            } else {
                Err(CliError::Input(format!("{key} must be positive, got {x}")))
            }
        };
        match key {
            "hazard_lambda" => {
                let v = positive(parse_f64(value)?)?;
                if v < 1.0 {
                    return Err(CliError::Input(
                        "hazard_lambda must be at least 1 (hazard in (0, 1])".into(),
                    ));
                }
                self.hazard_lambda = v;
            }
            "sigma2" => {
                self.sigma2 = if value == "from-prior" {
                    Sigma2::FromPrior
                } else {
                    Sigma2::Explicit(positive(parse_f64(value)?)?)
                };
            }
            "truncation" => {
                let v = value
                    .parse::<usize>()
                    .map_err(|_| CliError::Input(format!("invalid truncation: {value}")))?;
                if v == 0 {
                    return Err(CliError::Input("truncation must be positive".into()));
                }
                self.truncation = v;
            }
            "alarm_rule" => {
                self.alarm_rule = match value {
                    "map-drop" | "map_drop" => AlarmRuleKind::MapDrop,
                    "prob-mass" | "prob_mass" => AlarmRuleKind::ProbMass,
                    other => {
                        return Err(CliError::Input(format!(
                            "unknown alarm rule: {other} (use map-drop or prob-mass)"
                        )))
                    }
                };
            }
            "alarm_threshold" => self.alarm_threshold = positive(parse_f64(value)?)?,
            "alarm_window" => {
                self.alarm_window = value
                    .parse::<usize>()
                    .map_err(|_| CliError::Input(format!("invalid alarm window: {value}")))?;
            }
            "alarm_burn_in" => {
                self.alarm_burn_in = value
                    .parse::<usize>()
                    .map_err(|_| CliError::Input(format!("invalid burn-in: {value}")))?;
            }
            other => return Err(CliError::Input(format!("unknown config key: {other}"))),
        }
        Ok(())
    }

    /// Loads assignments from a config file on top of `self`.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<(), CliError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Input(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

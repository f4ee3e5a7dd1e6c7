//! Plain-text `key=value` configuration for model parameters, initial
//! state, and horizon. Missing keys fall back to the default normalized
//! weekly values; `#` starts a comment.

use std::fmt;
use std::path::Path;

use crate::model::{default_initial_state, InvalidParam, ModelParams, StateVec};

/// Model parameters plus the run's initial condition and final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub params: ModelParams,
    /// Initial state; the cost component is always zero.
    pub x_init: StateVec,
    /// Horizon in weeks.
    pub t_final: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            params: ModelParams::default(),
            x_init: default_initial_state(),
            t_final: 52.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    /// A line without a `key=value` shape.
    Malformed { line: usize, text: String },
    /// A key outside the documented set.
    UnknownKey { line: usize, key: String },
    /// A value that does not parse as a number.
    BadValue { line: usize, key: String, value: String },
    /// Parsed parameters violate a model invariant.
    Invalid(InvalidParam),
    /// Non-finite initial state or non-positive final time.
    BadRun { what: &'static str },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Malformed { line, text } => {
                write!(f, "line {line}: expected key=value, got `{text}`")
            }
            ConfigError::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigError::BadValue { line, key, value } => {
                write!(f, "line {line}: value `{value}` for `{key}` is not a number")
            }
            ConfigError::Invalid(e) => write!(f, "{e}"),
            ConfigError::BadRun { what } => write!(f, "{what}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// All recognized configuration keys.
pub const CONFIG_KEYS: [&str; 19] = [
    "alpha_r", "alpha_m", "beta", "eta", "mu", "rho", "theta", "tau", "phi", "omega", "p_total",
    "gamma_d", "gamma_f", "gamma_e", "x1_0", "x2_0", "x3_0", "x4_0", "t_final",
];

/// Parse configuration text. Later assignments of the same key win.
pub fn parse_config(text: &str) -> Result<ModelConfig, ConfigError> {
    let mut config = ModelConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
            line: line_no,
            text: line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        let parsed: f64 = value.parse().map_err(|_| ConfigError::BadValue {
            line: line_no,
            key: key.to_string(),
            value: value.to_string(),
        })?;
        match key {
            "alpha_r" => config.params.alpha_r = parsed,
            "alpha_m" => config.params.alpha_m = parsed,
            "beta" => config.params.beta = parsed,
            "eta" => config.params.eta = parsed,
            "mu" => config.params.mu = parsed,
            "rho" => config.params.rho = parsed,
            "theta" => config.params.theta = parsed,
            "tau" => config.params.tau = parsed,
            "phi" => config.params.phi = parsed,
            "omega" => config.params.omega = parsed,
            "p_total" => config.params.p_total = parsed,
            "gamma_d" => config.params.gamma_d = parsed,
            "gamma_f" => config.params.gamma_f = parsed,
            "gamma_e" => config.params.gamma_e = parsed,
            "x1_0" => config.x_init[0] = parsed,
            "x2_0" => config.x_init[1] = parsed,
            "x3_0" => config.x_init[2] = parsed,
            "x4_0" => config.x_init[3] = parsed,
            "t_final" => config.t_final = parsed,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                })
            }
        }
    }
    config.params.validate().map_err(ConfigError::Invalid)?;
    if !config.x_init.is_finite() {
        return Err(ConfigError::BadRun {
            what: "initial state must be finite",
        });
    }
    if !config.t_final.is_finite() || config.t_final <= 0.0 {
        return Err(ConfigError::BadRun {
            what: "t_final must be positive and finite",
        });
    }
    Ok(config)
}

/// Read and parse a configuration file.
pub fn load_config(path: &Path) -> Result<ModelConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ModelConfig::default());
        assert_eq!(c.params.alpha_r, 0.20);
        assert_eq!(c.t_final, 52.0);
        assert_eq!(c.x_init[4], 0.0);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "\
# tuned run
beta = 0.25   # lower contact rate
x3_0 = 0.01
t_final = 26
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.params.beta, 0.25);
        assert_eq!(c.x_init[2], 0.01);
        assert_eq!(c.t_final, 26.0);
        // Untouched keys keep defaults.
        assert_eq!(c.params.eta, 0.15);
    }

    #[test]
    fn last_assignment_wins() {
        let c = parse_config("mu = 0.3\nmu = 0.05\n").unwrap();
        assert_eq!(c.params.mu, 0.05);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            parse_config("betta = 0.3"),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            parse_config("beta = fast"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            parse_config("just a line"),
            Err(ConfigError::Malformed { .. })
        ));
    }

    #[test]
    fn rejects_invariant_violations() {
        assert!(matches!(
            parse_config("mu = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            parse_config("t_final = -3"),
            Err(ConfigError::BadRun { .. })
        ));
    }
}

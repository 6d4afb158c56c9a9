//! Run configuration: engine knobs with defaults, plus the plain-text
//! `key = value` file format used by the CLI.

use crate::error::{Error, Result};
use crate::memory::{MemoryConfig, PruningPolicy};
use std::path::Path;

/// Where frame features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    /// Hand-crafted patch descriptor computed from the frames themselves.
    Builtin,
    /// Per-frame feature files produced by an external encoder.
    Precomputed,
}

/// Full engine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub memory: MemoryConfig,
    /// Softmax temperature for affinity computation.
    pub temperature: f64,
    /// Feature-vs-position balance in cluster similarity.
    pub lambda: f64,
    /// Inter-cluster separation weight in label refinement.
    pub zeta: f64,
    /// Desired grid cells along the longer feature-map side.
    pub grid_cells: usize,
    /// Gradient-descent iterations for label refinement.
    pub steps: usize,
    /// Gradient-descent step size.
    pub step_size: f64,
    pub provider: ProviderKind,
    /// Patch side length for the builtin descriptor.
    pub patch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            memory: MemoryConfig::default(),
            temperature: 0.07,
            lambda: 0.5,
            zeta: 0.5,
            grid_cells: 8,
            steps: 10,
            step_size: 0.1,
            provider: ProviderKind::Builtin,
            patch_size: 4,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::validation(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::validation(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !self.zeta.is_finite() || self.zeta < 0.0 {
            return Err(Error::validation(format!(
                "zeta must be non-negative, got {}",
                self.zeta
            )));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::validation(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.grid_cells == 0 {
            return Err(Error::validation("grid_cells must be positive".to_string()));
        }
        if self.patch_size == 0 {
            return Err(Error::validation("patch_size must be positive".to_string()));
        }
        Ok(())
    }

    /// Key/value pairs for report echoes, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let policy = |p: PruningPolicy| match p {
            PruningPolicy::Fifo => "fifo",
            PruningPolicy::Fid => "fid",
        };
        vec![
            ("beta".into(), format!("{}", self.memory.beta)),
            ("gamma".into(), format!("{}", self.memory.gamma)),
            (
                "short_capacity".into(),
                format!("{}", self.memory.short_capacity),
            ),
            (
                "long_capacity".into(),
                format!("{}", self.memory.long_capacity),
            ),
            (
                "long_min_gap".into(),
                format!("{}", self.memory.long_min_gap),
            ),
            (
                "short_pruning".into(),
                policy(self.memory.short_pruning).into(),
            ),
            (
                "long_pruning".into(),
                policy(self.memory.long_pruning).into(),
            ),
            ("temperature".into(), format!("{}", self.temperature)),
            ("lambda".into(), format!("{}", self.lambda)),
            ("zeta".into(), format!("{}", self.zeta)),
            ("grid_cells".into(), format!("{}", self.grid_cells)),
            ("steps".into(), format!("{}", self.steps)),
            ("step_size".into(), format!("{}", self.step_size)),
            (
                "provider".into(),
                match self.provider {
                    ProviderKind::Builtin => "builtin".into(),
                    ProviderKind::Precomputed => "precomputed".into(),
                },
            ),
            ("patch_size".into(), format!("{}", self.patch_size)),
        ]
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("config key {key} has invalid value '{value}'")))
}

/// Parses the `key = value` configuration text. Blank lines and `#`
/// comments are ignored; unknown or repeated keys are rejected; absent
/// keys keep their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::validation(format!(
                "config line {} is not 'key = value': '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(Error::validation(format!(
                "config key {key} appears more than once"
            )));
        }
        seen.push(key.to_string());

        match key {
            "beta" => config.memory.beta = parse_num(key, value)?,
            "gamma" => config.memory.gamma = parse_num(key, value)?,
            "short_capacity" => config.memory.short_capacity = parse_num(key, value)?,
            "long_capacity" => config.memory.long_capacity = parse_num(key, value)?,
            "long_min_gap" => config.memory.long_min_gap = parse_num(key, value)?,
            "pruning" => {
                // A single pruning key overrides both banks.
                let policy = match value {
                    "fifo" => PruningPolicy::Fifo,
                    "fid" => PruningPolicy::Fid,
                    other => {
                        return Err(Error::validation(format!(
                            "pruning must be 'fifo' or 'fid', got '{other}'"
                        )))
                    }
                };
                config.memory.short_pruning = policy;
                config.memory.long_pruning = policy;
            }
            "temperature" => config.temperature = parse_num(key, value)?,
            "lambda" => config.lambda = parse_num(key, value)?,
            "zeta" => config.zeta = parse_num(key, value)?,
            "grid_cells" => config.grid_cells = parse_num(key, value)?,
            "steps" => config.steps = parse_num(key, value)?,
            "step_size" => config.step_size = parse_num(key, value)?,
            "provider" => {
                config.provider = match value {
                    "builtin" => ProviderKind::Builtin,
                    "precomputed" => ProviderKind::Precomputed,
                    other => {
                        return Err(Error::validation(format!(
                            "provider must be 'builtin' or 'precomputed', got '{other}'"
                        )))
                    }
                }
            }
            "patch_size" => config.patch_size = parse_num(key, value)?,
            other => {
                return Err(Error::validation(format!("unknown config key '{other}'")));
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Loads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.memory.beta, 0.15);
        assert_eq!(c.memory.gamma, 0.85);
        assert_eq!(c.memory.short_capacity, 5);
        assert_eq!(c.memory.long_capacity, 3);
        assert_eq!(c.memory.long_min_gap, 15);
        assert_eq!(c.temperature, 0.07);
    }

    #[test]
    fn full_file_overrides_everything() {
        let text = "\
# engine knobs
beta = 0.2
gamma = 0.9
short_capacity = 4
long_capacity = 2
long_min_gap = 10
pruning = fid
temperature = 0.1
lambda = 0.3
zeta = 0.7
grid_cells = 4
steps = 5
step_size = 0.05
provider = precomputed
patch_size = 8
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.memory.beta, 0.2);
        assert_eq!(c.memory.gamma, 0.9);
        assert_eq!(c.memory.short_pruning, PruningPolicy::Fid);
        assert_eq!(c.memory.long_pruning, PruningPolicy::Fid);
        assert_eq!(c.provider, ProviderKind::Precomputed);
        assert_eq!(c.patch_size, 8);
        assert_eq!(c.grid_cells, 4);
    }

    #[test]
    fn unknown_bad_and_duplicate_keys_are_rejected() {
        assert!(parse_config("volume = 11").unwrap_err().is_validation());
        assert!(parse_config("beta = fast").unwrap_err().is_validation());
        assert!(parse_config("beta = 0.1\nbeta = 0.2")
            .unwrap_err()
            .is_validation());
        assert!(parse_config("pruning = lru").unwrap_err().is_validation());
        assert!(parse_config("just words").unwrap_err().is_validation());
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        assert!(parse_config("beta = -1").unwrap_err().is_validation());
        assert!(parse_config("gamma = 0").unwrap_err().is_validation());
        assert!(parse_config("temperature = 0").unwrap_err().is_validation());
        assert!(parse_config("lambda = 1.5").unwrap_err().is_validation());
        assert!(parse_config("patch_size = 0").unwrap_err().is_validation());
    }

    #[test]
    fn echo_lists_keys_in_fixed_order() {
        let echo = RunConfig::default().echo();
        let keys: Vec<&str> = echo.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(
            keys,
            vec![
                "beta",
                "gamma",
                "short_capacity",
                "long_capacity",
                "long_min_gap",
                "short_pruning",
                "long_pruning",
                "temperature",
                "lambda",
                "zeta",
                "grid_cells",
                "steps",
                "step_size",
                "provider",
                "patch_size"
            ]
        );
    }
}

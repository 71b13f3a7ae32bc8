//! Experiment configuration: flat `key = value` files, CLI overrides, validation.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are exactly the
//! field names of [`ExperimentConfig`]; unknown keys are errors so typos do not
//! silently fall back to defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which verification suite a configuration drives. Each has its own defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Warren,
    Occupation,
    Semigroup,
    Flow,
    SdeResidual,
    Chaos,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Warren,
        Suite::Occupation,
        Suite::Semigroup,
        Suite::Flow,
        Suite::SdeResidual,
        Suite::Chaos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Warren => "warren-check",
            Suite::Occupation => "occupation-check",
            Suite::Semigroup => "semigroup-check",
            Suite::Flow => "flow-check",
            Suite::SdeResidual => "sde-residual",
            Suite::Chaos => "chaos-check",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub theta: f64,
    pub t_horizon: f64,
    /// Output (or coarsest) time steps.
    pub n_time_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub zero_detect_c: f64,
    /// Include Brownian-bridge minima between grid points in the source reflection.
    pub bridge_minima: bool,
    /// Source steps per output step in the time change.
    pub source_factor: usize,
    /// Stickiness on the simulated side of the joint-law test; `None` = `theta`.
    pub theta_sim: Option<f64>,
    pub quad_tol: f64,
    /// Step-halving levels in the residual study.
    pub halvings: usize,
    pub space_nodes: usize,
    pub x_max: f64,
    pub n_max: usize,
    /// Worker threads; 0 = all cores.
    pub threads: usize,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(suite: Suite) -> Self {
        let base = Self {
            theta: 1.0,
            t_horizon: 1.0,
            n_time_steps: 2000,
            n_paths: 100_000,
            seed: 1,
            zero_detect_c: 0.01,
            bridge_minima: true,
            source_factor: 1,
            theta_sim: None,
            quad_tol: 1e-12,
            halvings: 3,
            space_nodes: 200,
            x_max: 16.0,
            n_max: 3,
            threads: 0,
            out_dir: PathBuf::from("out"),
        };
        match suite {
            Suite::Warren => base,
            Suite::Occupation => Self {
                n_time_steps: 1 << 16,
                n_paths: 10_000,
                ..base
            },
            Suite::Semigroup => Self {
                n_time_steps: 1,
                n_paths: 100_000,
                ..base
            },
            Suite::Flow => Self {
                n_time_steps: 1000,
                n_paths: 1000,
                ..base
            },
            Suite::SdeResidual => Self {
                n_time_steps: 64,
                n_paths: 1000,
                ..base
            },
            Suite::Chaos => Self {
                n_time_steps: 200,
                n_paths: 1000,
                ..base
            },
        }
    }

    /// Applies `key = value` pairs from a config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "theta" => self.theta = parse(key, value)?,
            "t_horizon" => self.t_horizon = parse(key, value)?,
            "n_time_steps" => self.n_time_steps = parse(key, value)?,
            "n_paths" => self.n_paths = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "zero_detect_c" => self.zero_detect_c = parse(key, value)?,
            "bridge_minima" => self.bridge_minima = parse(key, value)?,
            "source_factor" => self.source_factor = parse(key, value)?,
            "theta_sim" => {
                self.theta_sim = if value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "quad_tol" => self.quad_tol = parse(key, value)?,
            "halvings" => self.halvings = parse(key, value)?,
            "space_nodes" => self.space_nodes = parse(key, value)?,
            "x_max" => self.x_max = parse(key, value)?,
            "n_max" => self.n_max = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Range checks for everything downstream modules would otherwise reject mid-run.
    pub fn validate(&self, suite: Suite) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bad(key, format!("must be positive and finite, got {v}"))
            }
        };
        positive("theta", self.theta)?;
        positive("t_horizon", self.t_horizon)?;
        positive("zero_detect_c", self.zero_detect_c)?;
        positive("quad_tol", self.quad_tol)?;
        positive("x_max", self.x_max)?;
        if let Some(ts) = self.theta_sim {
            positive("theta_sim", ts)?;
        }
        if self.n_time_steps == 0 {
            return bad("n_time_steps", "must be >= 1".into());
        }
        if self.n_paths < 2 {
            return bad(
                "n_paths",
                format!("need at least 2 paths for an error bar, got {}", self.n_paths),
            );
        }
        if self.source_factor == 0 {
            return bad("source_factor", "must be >= 1".into());
        }
        match suite {
            Suite::Chaos => {
                if self.n_time_steps > crate::chaos::MAX_TIME_STEPS {
                    return bad(
                        "n_time_steps",
                        format!("chaos propagators are capped at {} steps", crate::chaos::MAX_TIME_STEPS),
                    );
                }
                if self.n_max > crate::chaos::MAX_ORDER {
                    return bad("n_max", format!("at most {}", crate::chaos::MAX_ORDER));
                }
                if self.space_nodes < 16 {
                    return bad("space_nodes", "need at least 16".into());
                }
            }
            Suite::SdeResidual => {
                if self.halvings == 0 {
                    return bad("halvings", "need at least one halving for a ratio".into());
                }
                if self.n_time_steps >> self.halvings == 0 || !self.n_time_steps.is_multiple_of(1 << self.halvings) {
                    return bad(
                        "n_time_steps",
                        format!("must be divisible by 2^halvings = {}", 1 << self.halvings),
                    );
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theta = {}", self.theta)?;
        writeln!(f, "t_horizon = {}", self.t_horizon)?;
        writeln!(f, "n_time_steps = {}", self.n_time_steps)?;
        writeln!(f, "n_paths = {}", self.n_paths)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "zero_detect_c = {}", self.zero_detect_c)?;
        writeln!(f, "bridge_minima = {}", self.bridge_minima)?;
        writeln!(f, "source_factor = {}", self.source_factor)?;
        match self.theta_sim {
            Some(v) => writeln!(f, "theta_sim = {v}")?,
            None => writeln!(f, "theta_sim = none")?,
        }
        writeln!(f, "quad_tol = {:e}", self.quad_tol)?;
        writeln!(f, "halvings = {}", self.halvings)?;
        writeln!(f, "space_nodes = {}", self.space_nodes)?;
        writeln!(f, "x_max = {}", self.x_max)?;
        writeln!(f, "n_max = {}", self.n_max)?;
        writeln!(f, "threads = {}", self.threads)?;
        writeln!(f, "out_dir = {}", self.out_dir.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_config_round_trips() {
        for suite in Suite::ALL {
            let mut cfg = ExperimentConfig::defaults(suite);
            cfg.theta_sim = Some(0.25);
            let mut back = ExperimentConfig::defaults(Suite::Warren);
            back.apply_text(&cfg.to_string()).unwrap();
            assert_eq!(back, cfg, "{}", suite.name());
            cfg.validate(suite).unwrap();
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut cfg = ExperimentConfig::defaults(Suite::Warren);
        cfg.apply_text("# run\n\n  theta = 2.5 \nn_paths=10\n").unwrap();
        assert_eq!(cfg.theta, 2.5);
        assert_eq!(cfg.n_paths, 10);
    }

    #[test]
    fn errors_are_actionable() {
        let mut cfg = ExperimentConfig::defaults(Suite::Warren);
        let e = cfg.apply_text("thetta = 1").unwrap_err().to_string();
        assert!(e.contains("line 1") && e.contains("thetta"), "{e}");
        let e = cfg.apply_text("theta = abc").unwrap_err().to_string();
        assert!(e.contains("theta"), "{e}");
        assert!(cfg.apply_text("theta").is_err());
        cfg.theta = -1.0;
        assert!(cfg.validate(Suite::Warren).unwrap_err().to_string().contains("theta"));
    }

    #[test]
    fn suite_specific_guards() {
        let mut cfg = ExperimentConfig::defaults(Suite::Chaos);
        cfg.n_time_steps = 1024;
        assert!(cfg.validate(Suite::Chaos).is_err());
        assert!(cfg.validate(Suite::Warren).is_ok());
        let mut cfg = ExperimentConfig::defaults(Suite::SdeResidual);
        cfg.n_time_steps = 60;
        assert!(cfg.validate(Suite::SdeResidual).is_err());
    }
}

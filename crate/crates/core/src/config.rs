//! Run configuration: map, potential, numerical parameters and command,
//! read from a TOML file.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{BranchSystem, MapSpec};
use crate::potential::{Potential, PotentialSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Eigen,
    Kernel,
    Dual,
    Subaction,
    Betascan,
    Turning,
    Pieces,
    Example2,
    #[default]
    All,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Eigen,
        Command::Kernel,
        Command::Dual,
        Command::Subaction,
        Command::Betascan,
        Command::Turning,
        Command::Pieces,
        Command::Example2,
        Command::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Eigen => "eigen",
            Command::Kernel => "kernel",
            Command::Dual => "dual",
            Command::Subaction => "subaction",
            Command::Betascan => "betascan",
            Command::Turning => "turning",
            Command::Pieces => "pieces",
            Command::Example2 => "example2",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Grid size N for v, V and phi_beta.
    pub grid: usize,
    /// Cylinder depth K of the eigenmeasure tree.
    pub eigen_depth: usize,
    pub eigen_tol: f64,
    pub eigen_max_iters: usize,
    /// beta above which power iteration runs in the log domain.
    pub log_threshold: f64,
    /// Depth of the V* prefix tree.
    pub dual_depth: usize,
    /// Maximal preperiod K_c of candidate words.
    pub candidate_depth: usize,
    /// Truncation depth of the kernel series.
    pub kernel_depth: usize,
    pub x_ref: f64,
    pub lo_tol: f64,
    pub lo_max_iters: usize,
    pub vstar_tol: f64,
    pub vstar_max_iters: usize,
    pub betas: Vec<f64>,
    pub p_max: usize,
    pub turning_tol: f64,
    pub orbit_tol: f64,
    pub orbit_budget: usize,
    /// Extra room in the branch-and-bound pruning of the sup formula.
    pub prune_slack: f64,
    pub projection_steps: usize,
    pub twist_samples: usize,
    pub fr1_samples: usize,
    pub kernel_samples: usize,
    pub lemma_samples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            grid: 4096,
            eigen_depth: 10,
            eigen_tol: 1e-12,
            eigen_max_iters: 100_000,
            log_threshold: 30.0,
            dual_depth: 12,
            candidate_depth: 16,
            kernel_depth: 40,
            x_ref: 0.5,
            lo_tol: 1e-10,
            lo_max_iters: 10_000,
            vstar_tol: 1e-10,
            vstar_max_iters: 10_000,
            betas: vec![5.0, 10.0, 20.0, 40.0],
            p_max: 12,
            turning_tol: 1e-12,
            orbit_tol: 1e-9,
            orbit_budget: 64,
            prune_slack: 1e-3,
            projection_steps: 12,
            twist_samples: 10_000,
            fr1_samples: 1000,
            kernel_samples: 100,
            lemma_samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example2Config {
    /// Period word of the orbit the product potential vanishes on.
    pub period: Vec<u8>,
    /// Perturbation sizes tried in order when the unperturbed potential is
    /// not twist.
    pub eps_ladder: Vec<f64>,
    /// Center of the quadratic perturbation; the orbit mean when absent.
    pub center: Option<f64>,
}

impl Default for Example2Config {
    fn default() -> Self {
        Example2Config {
            period: vec![0, 0, 0, 1],
            eps_ladder: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0],
            center: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub map: MapSpec,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub example2: Example2Config,
    #[serde(default)]
    pub command: Command,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            map: MapSpec::Doubling,
            potential: PotentialSpec::quadratic(),
            numerics: Numerics::default(),
            example2: Example2Config::default(),
            command: Command::All,
            output: None,
            seed: 0,
        }
    }
}

/// One problem found while validating a configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every field and returns all problems at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = vec![];
        let mut push = |field: &str, message: String| errs.push(FieldError { field: field.into(), message });
        let n = &self.numerics;
        let positive = [
            ("numerics.eigen_tol", n.eigen_tol),
            ("numerics.lo_tol", n.lo_tol),
            ("numerics.vstar_tol", n.vstar_tol),
            ("numerics.turning_tol", n.turning_tol),
            ("numerics.orbit_tol", n.orbit_tol),
            ("numerics.log_threshold", n.log_threshold),
        ];
        for (f, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                push(f, format!("must be a positive number, got {v}"));
            }
        }
        if !(n.prune_slack >= 0.0 && n.prune_slack.is_finite()) {
            push("numerics.prune_slack", format!("must be nonnegative, got {}", n.prune_slack));
        }
        if n.grid < 2 {
            push("numerics.grid", format!("must be at least 2, got {}", n.grid));
        }
        if !(1..=20).contains(&n.eigen_depth) {
            push("numerics.eigen_depth", format!("must be in 1..=20, got {}", n.eigen_depth));
        }
        if !(1..=22).contains(&n.dual_depth) {
            push("numerics.dual_depth", format!("must be in 1..=22, got {}", n.dual_depth));
        }
        if !(1..=24).contains(&n.candidate_depth) {
            push("numerics.candidate_depth", format!("must be in 1..=24, got {}", n.candidate_depth));
        }
        if n.kernel_depth == 0 {
            push("numerics.kernel_depth", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&n.x_ref) {
            push("numerics.x_ref", format!("must lie in [0,1], got {}", n.x_ref));
        }
        if n.p_max == 0 || n.p_max > 24 {
            push("numerics.p_max", format!("must be in 1..=24, got {}", n.p_max));
        }
        for (f, v) in [
            ("numerics.eigen_max_iters", n.eigen_max_iters),
            ("numerics.lo_max_iters", n.lo_max_iters),
            ("numerics.vstar_max_iters", n.vstar_max_iters),
            ("numerics.orbit_budget", n.orbit_budget),
            ("numerics.projection_steps", n.projection_steps),
        ] {
            if v == 0 {
                push(f, "must be positive".into());
            }
        }
        if n.betas.is_empty() {
            push("numerics.betas", "must not be empty".into());
        } else if n.betas.iter().any(|b| !(b.is_finite() && *b >= 1.0)) {
            push("numerics.betas", format!("every beta must be finite and at least 1, got {:?}", n.betas));
        } else if n.betas.windows(2).any(|w| !(w[1] > w[0])) {
            push("numerics.betas", format!("must be strictly increasing, got {:?}", n.betas));
        }
        let e = &self.example2;
        if e.period.is_empty() {
            push("example2.period", "must not be empty".into());
        }
        if e.eps_ladder.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            push("example2.eps_ladder", format!("entries must be positive, got {:?}", e.eps_ladder));
        }
        match BranchSystem::from_spec(&self.map) {
            Err(err) => push("map", err.to_string()),
            Ok(sys) => {
                if let Err(err) = Potential::new(&self.potential, &sys) {
                    push("potential", err.to_string());
                }
                if self.command == Command::Example2 && self.map != MapSpec::Doubling {
                    push("map", "the example2 command needs the doubling map".into());
                }
                if e.period.iter().any(|&s| s as usize >= sys.d()) {
                    push("example2.period", format!("symbols must be below {}", sys.d()));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file() {
        let cfg = RunConfig::from_toml(
            r#"
command = "eigen"
[potential]
kind = "locally_constant"
g = [0.4, 0.6]
[numerics]
grid = 257
"#,
        )
        .unwrap();
        assert_eq!(cfg.command, Command::Eigen);
        assert_eq!(cfg.numerics.grid, 257);
        assert_eq!(cfg.numerics.eigen_depth, 10);
    }

    #[test]
    fn field_level_errors() {
        assert!(RunConfig::from_toml("[numerics]\ngrd = 3\n").is_err());
        let mut cfg = RunConfig::default();
        cfg.numerics.eigen_tol = 0.0;
        cfg.numerics.betas = vec![10.0, 5.0];
        let Err(ConfigError::Invalid(errs)) = cfg.validate() else { panic!() };
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["numerics.eigen_tol", "numerics.betas"]);
    }
}

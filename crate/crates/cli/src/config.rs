//! Run configuration: JSON file with a versioned schema key, then flag
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinlat::physics::{PerMode, DEFAULT_GAMMA_CM, DEFAULT_LINEWIDTH_CM};
use spinlat::relaxation::Convention;
use spinlat::{GTensor, RamanPairing};

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "spinlat-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    /// Seed for the randomized checks in `validate`.
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA.to_string(),
            paths: Paths::default(),
            physics: Physics::default(),
            numerics: Numerics::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// NMODES v1 file.
    #[serde(default)]
    pub modes: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Second manifest at a different δ for the convergence check.
    #[serde(default)]
    pub convergence_manifest: Option<PathBuf>,
    /// Couplings JSON written by `couplings`.
    #[serde(default)]
    pub couplings: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("spinlat-out")
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            modes: None,
            manifest: None,
            convergence_manifest: None,
            couplings: None,
            output_dir: default_output_dir(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    /// K
    #[serde(default = "default_temperatures")]
    pub temperatures_k: Vec<f64>,
    /// Field magnitudes, mT.
    #[serde(default = "default_fields")]
    pub fields_mt: Vec<f64>,
    /// Defaults to the direction the couplings were assembled for, else z.
    #[serde(default)]
    pub field_direction: Option<[f64; 3]>,
    /// Quantization axis; defaults to the field direction.
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
    /// Equilibrium g-tensor rows; defaults to the baseline stored with the
    /// couplings, else the free-electron value.
    #[serde(default)]
    pub g0: Option<[[f64; 3]; 3]>,
    #[serde(default = "default_linewidth")]
    pub linewidth: PerMode,
    #[serde(default = "default_gamma")]
    pub gamma: PerMode,
    #[serde(default)]
    pub pairing: RamanPairing,
    #[serde(default)]
    pub convention: Convention,
    /// Fixed Ω in cm⁻¹.
    #[serde(default)]
    pub omega_override: Option<f64>,
}

fn default_temperatures() -> Vec<f64> {
    vec![20.0]
}

fn default_fields() -> Vec<f64> {
    vec![1266.0]
}

fn default_linewidth() -> PerMode {
    PerMode::uniform(DEFAULT_LINEWIDTH_CM)
}

fn default_gamma() -> PerMode {
    PerMode::uniform(DEFAULT_GAMMA_CM)
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            temperatures_k: default_temperatures(),
            fields_mt: default_fields(),
            field_direction: None,
            axis: None,
            g0: None,
            linewidth: default_linewidth(),
            gamma: default_gamma(),
            pairing: RamanPairing::default(),
            convention: Convention::default(),
            omega_override: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Lindblad,
    Redfield,
    #[default]
    Both,
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lindblad" => Ok(Model::Lindblad),
            "redfield" => Ok(Model::Redfield),
            "both" => Ok(Model::Both),
            _ => Err(format!("unknown model `{s}` (lindblad, redfield, both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Å
    #[serde(default = "default_delta")]
    pub delta_angstrom: f64,
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default = "default_threshold")]
    pub convergence_threshold: f64,
    /// Number of modes listed in attribution tables; all when absent.
    #[serde(default = "default_top")]
    pub top: Option<usize>,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub secular: bool,
    /// μs; five analytic T1 when absent.
    #[serde(default)]
    pub t1_end_us: Option<f64>,
    #[serde(default = "default_t1_steps")]
    pub t1_steps: usize,
    /// μs; five analytic T2 when absent.
    #[serde(default)]
    pub t2_end_us: Option<f64>,
    #[serde(default = "default_t2_steps")]
    pub t2_steps: usize,
    #[serde(default)]
    pub fit_t_start_us: f64,
    #[serde(default)]
    pub fit_t_end_us: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default)]
    pub max_step_us: Option<f64>,
    /// Write full trajectories next to the fitted rates.
    #[serde(default = "yes")]
    pub write_trajectories: bool,
}

fn default_delta() -> f64 {
    spinlat::ingest::DEFAULT_DELTA_ANGSTROM
}

fn default_order() -> u8 {
    2
}

fn default_threshold() -> f64 {
    0.05
}

fn default_top() -> Option<usize> {
    Some(10)
}

fn default_t1_steps() -> usize {
    10_000
}

fn default_t2_steps() -> usize {
    20_000
}

fn default_safety() -> f64 {
    100.0
}

fn yes() -> bool {
    true
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            delta_angstrom: default_delta(),
            order: default_order(),
            convergence_threshold: default_threshold(),
            top: default_top(),
            model: Model::default(),
            secular: false,
            t1_end_us: None,
            t1_steps: default_t1_steps(),
            t2_end_us: None,
            t2_steps: default_t2_steps(),
            fit_t_start_us: 0.0,
            fit_t_end_us: None,
            safety: default_safety(),
            max_step_us: None,
            write_trajectories: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::validation(format!("config key `{path}`: {}", e.inner()))
        })?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(CliError::validation(format!(
                "config key `schema`: unsupported `{}`, expected `{CONFIG_SCHEMA}`",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)
            }
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn g0(&self) -> Result<Option<GTensor>, CliError> {
        self.physics
            .g0
            .map(|rows| GTensor::from_rows(rows).map_err(|e| CliError::validation(format!("config key `physics.g0`: {e}"))))
            .transpose()
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.physics;
        if p.temperatures_k.is_empty() {
            return Err(CliError::validation("config key `physics.temperatures_k`: list is empty"));
        }
        if let Some(t) = p.temperatures_k.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(CliError::validation(format!("config key `physics.temperatures_k`: {t} is not >= 0")));
        }
        if p.fields_mt.is_empty() {
            return Err(CliError::validation("config key `physics.fields_mt`: list is empty"));
        }
        if let Some(b) = p.fields_mt.iter().find(|b| !b.is_finite()) {
            return Err(CliError::validation(format!("config key `physics.fields_mt`: {b} is not finite")));
        }
        if let Some(d) = p.field_direction {
            let n = nalgebra::Vector3::from(d).norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(CliError::validation("config key `physics.field_direction`: must be a nonzero vector"));
            }
        }
        if let Some(a) = p.axis {
            let n = nalgebra::Vector3::from(a).norm();
            if (n - 1.0).abs() > 1e-9 {
                return Err(CliError::validation(format!("config key `physics.axis`: |n| = {n}, expected 1")));
            }
        }
        if !(p.linewidth.default > 0.0) || p.linewidth.overrides.values().any(|v| !(*v > 0.0)) {
            return Err(CliError::validation("config key `physics.linewidth`: values must be > 0"));
        }
        if !(p.gamma.default > 0.0) || p.gamma.overrides.values().any(|v| !(*v > 0.0)) {
            return Err(CliError::validation("config key `physics.gamma`: values must be > 0"));
        }
        if let Some(w) = p.omega_override {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(CliError::validation(format!("config key `physics.omega_override`: {w} is not >= 0")));
            }
        }
        let n = &self.numerics;
        if !(n.delta_angstrom > 0.0) || !n.delta_angstrom.is_finite() {
            return Err(CliError::validation(format!(
                "config key `numerics.delta_angstrom`: {} is not > 0",
                n.delta_angstrom
            )));
        }
        if n.order != 1 && n.order != 2 {
            return Err(CliError::validation(format!("config key `numerics.order`: {} is not 1 or 2", n.order)));
        }
        if n.t1_steps == 0 || n.t2_steps == 0 {
            return Err(CliError::validation("config key `numerics.t1_steps`/`t2_steps`: must be > 0"));
        }
        for (key, v) in [("t1_end_us", n.t1_end_us), ("t2_end_us", n.t2_end_us), ("max_step_us", n.max_step_us)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(CliError::validation(format!("config key `numerics.{key}`: {v} is not > 0")));
                }
            }
        }
        if !(n.safety > 0.0) {
            return Err(CliError::validation(format!("config key `numerics.safety`: {} is not > 0", n.safety)));
        }
        if !(n.convergence_threshold > 0.0) {
            return Err(CliError::validation("config key `numerics.convergence_threshold`: must be > 0"));
        }
        Ok(())
    }
}

/// Parsed value grid of a range flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    parse_range(s).map(Grid)
}

/// `start:stop:count` (inclusive, evenly spaced), a comma list, or a single
/// value.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => one.split(',').map(num).collect(),
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| format!("`{n}` is not a point count"))?;
            match n {
                0 => Err("range needs at least one point".into()),
                1 if a == b => Ok(vec![a]),
                1 => Err("a one-point range needs start == stop".into()),
                _ => Ok((0..n)
                    .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
                    .collect()),
            }
        }
        _ => Err(format!("`{s}` is not start:stop:count")),
    }
}

pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(format!("`{s}` needs three comma-separated components")),
    }
}

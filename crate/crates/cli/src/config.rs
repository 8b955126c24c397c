//! Experiment configuration and precondition checks.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sympidx::floer::GeometryParams;
use sympidx::magnetic::MagneticConfig;
use sympidx::path::{min_eigenvalue, SympPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Index,
    Sturm,
    Magnetic,
    Growth,
    FloerLevels,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Index => "index",
            Command::Sturm => "sturm",
            Command::Magnetic => "magnetic",
            Command::Growth => "growth",
            Command::FloerLevels => "floer-levels",
            Command::Sweep => "sweep",
        }
    }
}

/// One experiment: a command, its parameter record, a seed and where the
/// artifacts go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default = "empty_params")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn empty_params() -> Value {
    Value::Object(Default::default())
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(command: Command, params: Value, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig { command, params, seed, output_dir: output_dir.into() }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("config {}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// Typed parameters for the command.
    pub fn params(&self) -> Result<Params, String> {
        let v = self.params.clone();
        let typed = match self.command {
            Command::Index => serde_json::from_value(v).map(Params::Index),
            Command::Sturm => serde_json::from_value(v).map(Params::Sturm),
            Command::Magnetic => serde_json::from_value(v).map(Params::Magnetic),
            Command::Growth => serde_json::from_value(v).map(Params::Growth),
            Command::FloerLevels => serde_json::from_value(v).map(Params::FloerLevels),
            Command::Sweep => serde_json::from_value(v).map(Params::Sweep),
        };
        typed.map_err(|e| format!("{} params: {e}", self.command.name()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Index(IndexParams),
    Sturm(SturmParams),
    Magnetic(MagneticParams),
    Growth(GrowthParams),
    FloerLevels(FloerParams),
    Sweep(SweepParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexParams {
    /// JSON list of `{t, frame}` records.
    pub path: PathBuf,
}

/// Two constant quadratic Hamiltonians. Missing matrices default to
/// `c0 · I` and `c1 · I` of size `2 dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SturmParams {
    #[serde(default)]
    pub s0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub s1: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub c0: f64,
    #[serde(default = "one_f")]
    pub c1: f64,
    pub t: f64,
    #[serde(default = "default_path_steps")]
    pub steps: usize,
}

/// Inline magnetic system or the path of a JSON file holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Inline(MagneticConfig),
    File(PathBuf),
}

impl Default for SystemSource {
    fn default() -> Self {
        SystemSource::Inline(MagneticConfig::flat(1.0))
    }
}

impl SystemSource {
    pub fn load(&self) -> Result<MagneticConfig, String> {
        match self {
            SystemSource::Inline(c) => Ok(c.clone()),
            SystemSource::File(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("magnetic config {}: {e}", p.display()))?;
                MagneticConfig::from_json(&text).map_err(|e| format!("magnetic config {}: {e}", p.display()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagneticParams {
    #[serde(default)]
    pub system: SystemSource,
    pub r: f64,
    /// Initial kinetic momentum direction; drawn from the seed when absent.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "one")]
    pub periods: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    #[serde(default)]
    pub system: SystemSource,
    pub r: f64,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_iterates")]
    pub k: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloerParams {
    pub m: u32,
    pub q: u32,
    pub r2: f64,
    pub eps0: f64,
    #[serde(default = "one_f")]
    pub lam_min: f64,
    #[serde(default = "one_f")]
    pub lam_max: f64,
    #[serde(default)]
    pub lambda0: Option<f64>,
    #[serde(default)]
    pub h: Option<f64>,
    /// Largest `l` written to the level table; all levels when absent.
    #[serde(default)]
    pub l_max: Option<u64>,
}

impl FloerParams {
    pub fn geometry(&self) -> GeometryParams {
        GeometryParams {
            m: self.m,
            q: self.q,
            r: self.r2.max(0.0).sqrt(),
            eps0: self.eps0,
            lam_min: self.lam_min,
            lam_max: self.lam_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepParams {
    #[serde(default)]
    pub system: SystemSource,
    pub r: Vec<f64>,
    #[serde(default = "default_sweep_k")]
    pub k: usize,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn default_path_steps() -> usize {
    64
}

fn default_max_iter() -> usize {
    30
}

fn default_iterates() -> usize {
    8
}

fn default_sweep_k() -> usize {
    3
}

fn positive(name: &str, x: f64, out: &mut Vec<String>) {
    if !(x > 0.0 && x.is_finite()) {
        out.push(format!("{name} must be positive and finite, got {x}"));
    }
}

fn system_violations(src: &SystemSource, out: &mut Vec<String>) {
    match src.load() {
        Ok(c) => out.extend(c.violations()),
        Err(e) => out.push(e),
    }
}

fn matrix_of(rows: &[Vec<f64>], name: &str, out: &mut Vec<String>) -> Option<nalgebra::DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || !n.is_multiple_of(2) || rows.iter().any(|r| r.len() != n) {
        out.push(format!("{name} must be a square matrix of even size"));
        return None;
    }
    Some(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SturmParams {
    /// `(S0, S1)`, or the violations that prevent building them.
    pub fn matrices(&self) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>), Vec<String>> {
        let mut out = Vec::new();
        let scalar = |c: f64| nalgebra::DMatrix::identity(2 * self.dim, 2 * self.dim) * c;
        if self.dim == 0 && (self.s0.is_none() || self.s1.is_none()) {
            out.push("dim must be positive".to_string());
        }
        let s0 = match &self.s0 {
            Some(rows) => matrix_of(rows, "s0", &mut out),
            None => Some(scalar(self.c0)),
        };
        let s1 = match &self.s1 {
            Some(rows) => matrix_of(rows, "s1", &mut out),
            None => Some(scalar(self.c1)),
        };
        match (s0, s1) {
            (Some(a), Some(b)) if out.is_empty() => Ok((a, b)),
            _ => Err(out),
        }
    }
}

/// Every violated precondition of `config`; empty iff `run` would start.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    if config.output_dir.is_file() {
        out.push(format!("output_dir {} is an existing file", config.output_dir.display()));
    }
    let params = match config.params() {
        Ok(p) => p,
        Err(e) => {
            out.push(e);
            return out;
        }
    };
    match &params {
        Params::Index(p) => match fs::read_to_string(&p.path) {
            Ok(text) => {
                if let Err(e) = SympPath::from_json(&text) {
                    out.push(format!("path {}: {e}", p.path.display()));
                }
            }
            Err(e) => out.push(format!("path {}: {e}", p.path.display())),
        },
        Params::Sturm(p) => {
            positive("t", p.t, &mut out);
            if p.steps < 1 {
                out.push("steps must be positive".into());
            }
            match p.matrices() {
                Ok((s0, s1)) => {
                    if s0.nrows() != s1.nrows() {
                        out.push(format!("s0 and s1 differ in size: {} vs {}", s0.nrows(), s1.nrows()));
                    } else {
                        for (name, s) in [("s0", &s0), ("s1", &s1)] {
                            if (s - s.transpose()).amax() > 1e-10 {
                                out.push(format!("{name} must be symmetric"));
                            }
                        }
                        if out.is_empty() && min_eigenvalue(&(&s1 - &s0)) < -1e-12 {
                            out.push("Sturm comparison requires S1 - S0 positive semidefinite".into());
                        }
                    }
                }
                Err(v) => out.extend(v),
            }
        }
        Params::Magnetic(p) => {
            system_violations(&p.system, &mut out);
            positive("r", p.r, &mut out);
            if p.periods == 0 {
                out.push("periods must be at least 1".into());
            }
        }
        Params::Growth(p) => {
            system_violations(&p.system, &mut out);
            positive("r", p.r, &mut out);
            if !(3..=64).contains(&p.k) {
                out.push(format!("growth fit needs 3 <= k <= 64 iterates, got {}", p.k));
            }
        }
        Params::FloerLevels(p) => {
            out.extend(p.geometry().violations());
            if !(p.r2 > 0.0) {
                out.push(format!("r2 must be positive, got {}", p.r2));
            }
            if let Some(l) = p.lambda0 {
                positive("lambda0", l, &mut out);
            }
            if let Some(h) = p.h {
                positive("h", h, &mut out);
            }
        }
        Params::Sweep(p) => {
            system_violations(&p.system, &mut out);
            if p.r.is_empty() {
                out.push("sweep needs at least one r".into());
            }
            for &r in &p.r {
                positive("r", r, &mut out);
            }
            if p.r.windows(2).any(|w| !(w[1] < w[0])) {
                out.push("r values must be strictly decreasing".into());
            }
            if p.k > 16 {
                out.push(format!("at most 16 iterates per row, got {}", p.k));
            }
        }
    }
    out
}

//! Run configuration: defaults, a flat `key=value` file, then flags.
//! Every file key is a CLI flag name without the leading dashes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::propagator::Backend;
use crate::qae::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitSpec {
    Maxwell { sigma_v: f64 },
    Fermidirac { v_th: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForceSpec {
    Analytic { amplitude: f64, wavenumber: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub dim: usize,
    pub ngr: usize,
    pub box_length: f64,
    pub vmax: f64,
    pub force: ForceSpec,
    pub nt: usize,
    pub tmax: f64,
    pub backend: Backend,
    pub tol: f64,
    pub init: InitSpec,
    pub pert_file: Option<PathBuf>,
    pub ensemble: usize,
    /// Target mode as per-axis indices; missing trailing axes are 0.
    pub target: Vec<usize>,
    pub shells: Vec<(f64, f64)>,
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub deterministic: bool,
    pub scheme: Scheme,
    pub sweep: Option<String>,
    pub dump_matrix: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seed: 0,
            dim: 1,
            ngr: 64,
            box_length: 2.0,
            vmax: 1.0,
            force: ForceSpec::Analytic { amplitude: -1.0, wavenumber: PI },
            nt: 8,
            tmax: 0.2,
            backend: Backend::Dense,
            tol: 1e-8,
            init: InitSpec::Maxwell { sigma_v: 0.1 },
            pert_file: None,
            ensemble: 1,
            target: vec![1],
            shells: Vec::new(),
            eps: 0.05,
            delta: 0.05,
            trials: 1,
            deterministic: false,
            scheme: Scheme::SamplingMle,
            sweep: None,
            dump_matrix: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_pair(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("{key}: expected two comma-separated numbers, got '{v}'")))?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true/false, got '{other}'"))),
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const KEYS: [&str; 23] = [
    "out",
    "seed",
    "dim",
    "ngr",
    "box-length",
    "vmax",
    "force-file",
    "force-analytic",
    "nt",
    "tmax",
    "backend",
    "tol",
    "init",
    "pert-file",
    "ensemble",
    "target",
    "shell",
    "eps",
    "delta",
    "trials",
    "deterministic",
    "scheme",
    "sweep",
];

impl RunConfig {
    /// Applies one `key=value` setting. `shell` accumulates; other keys overwrite.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = parse_num(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "ngr" => self.ngr = parse_num(key, value)?,
            "box-length" => self.box_length = parse_num(key, value)?,
            "vmax" => self.vmax = parse_num(key, value)?,
            "force-file" => self.force = ForceSpec::File { path: PathBuf::from(value) },
            "force-analytic" => {
                let (amplitude, wavenumber) = parse_pair(key, value)?;
                self.force = ForceSpec::Analytic { amplitude, wavenumber };
            }
            "nt" => self.nt = parse_num(key, value)?,
            "tmax" => self.tmax = parse_num(key, value)?,
            "backend" => self.backend = value.trim().parse()?,
            "tol" => self.tol = parse_num(key, value)?,
            "init" => {
                let (kind, arg) = value
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("init: expected maxwell:SIGMA or fermidirac:VTH, got '{value}'")))?;
                self.init = match kind {
                    "maxwell" => InitSpec::Maxwell { sigma_v: parse_num(key, arg)? },
                    "fermidirac" => InitSpec::Fermidirac { v_th: parse_num(key, arg)? },
                    other => return Err(Error::Config(format!("init: unknown kind '{other}'"))),
                };
            }
            "pert-file" => self.pert_file = Some(PathBuf::from(value)),
            "ensemble" => self.ensemble = parse_num(key, value)?,
            "target" => {
                self.target = value
                    .split(',')
                    .map(|v| parse_num(key, v))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "shell" => {
                let s = parse_pair(key, value)?;
                self.shells.push(s);
            }
            "eps" => self.eps = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "scheme" => self.scheme = value.trim().parse()?,
            "sweep" => self.sweep = Some(value.to_string()),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: expected key=value", n + 1),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", n + 1),
            })?;
        }
        Ok(())
    }

    /// Checks parameter combinations before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("--dim must be 1, 2 or 3 (got {})", self.dim));
        }
        if self.ngr < 2 || !self.ngr.is_power_of_two() {
            return bad(format!("--ngr must be a power of two >= 2 (got {})", self.ngr));
        }
        if self.nt == 0 {
            return bad("--nt must be at least 1".into());
        }
        if !(self.tmax >= 0.0 && self.tmax.is_finite()) {
            return bad(format!("--tmax must be finite and >= 0 (got {})", self.tmax));
        }
        if self.backend == Backend::Krylov && !(self.tol > 0.0) {
            return bad(format!("--tol must be > 0 for the krylov backend (got {})", self.tol));
        }
        if self.ensemble == 0 || !self.ensemble.is_power_of_two() {
            return bad(format!("--ensemble must be a power of two (got {})", self.ensemble));
        }
        if matches!(self.init, InitSpec::Fermidirac { .. }) && self.pert_file.is_none() && self.ensemble > 1 {
            return bad("--ensemble > 1 with fermidirac needs --pert-file with that many records".into());
        }
        if self.target.len() > self.dim || self.target.iter().any(|&i| i >= self.ngr) {
            return bad(format!("--target {:?} is not a mode index of a d={} n_gr={} grid", self.target, self.dim, self.ngr));
        }
        if self.target.iter().all(|&i| i == 0) {
            return bad("--target must not be the zero wavevector".into());
        }
        if let Some((a, b)) = self.shells.iter().find(|(a, b)| !(0.0 <= *a && a <= b)) {
            return bad(format!("--shell {a},{b} needs 0 <= k1 <= k2"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("--eps must be positive (got {})", self.eps));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("--delta must lie in (0, 1) (got {})", self.delta));
        }
        if self.trials == 0 {
            return bad("--trials must be at least 1".into());
        }
        Ok(())
    }

    /// Flat spatial index of `target`.
    pub fn target_index(&self) -> usize {
        self.target.iter().rev().fold(0, |acc, &i| acc * self.ngr + i)
    }
}

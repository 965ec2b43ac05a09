//! Query and qubit counts from the complexity bounds, with every big-O
//! constant set to 1 and natural logarithms. Outputs are unit-constant
//! estimates: indicative scalings, not absolute gate counts.

use serde::Serialize;

use crate::error::{domain, Error, Result};

pub const UNIT_CONSTANT_LABEL: &str = "unit-constant estimate";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResourceParams {
    pub dim: usize,
    pub ngr: usize,
    pub nt: usize,
    pub tmax: f64,
    pub box_length: f64,
    pub vmax: f64,
    pub fmax: f64,
    pub eps: f64,
    pub delta: f64,
    pub c: f64,
    pub niv: usize,
}

impl ResourceParams {
    /// The §IV demo set: d=1, n_gr=64, n_t=8, T=0.2, L=2, V=1, F_max=1.
    pub fn demo() -> Self {
        Self {
            dim: 1,
            ngr: 64,
            nt: 8,
            tmax: 0.2,
            box_length: 2.0,
            vmax: 1.0,
            fmax: 1.0,
            eps: 0.01,
            delta: 0.05,
            c: 1.0,
            niv: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return domain(format!("d = {} not in 1..=3", self.dim));
        }
        if self.ngr == 0 || self.nt == 0 || self.niv == 0 {
            return domain("n_gr, n_t and n_IV must be positive");
        }
        for (name, v) in [("T", self.tmax), ("L", self.box_length), ("V", self.vmax)] {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.fmax >= 0.0 && self.fmax.is_finite()) {
            return domain(format!("F_max must be non-negative, got {}", self.fmax));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return domain(format!("ε must lie in (0, 1/2), got {}", self.eps));
        }
        Ok(())
    }

    fn validate_qae(&self) -> Result<()> {
        self.validate()?;
        if !(self.c > 0.0 && self.c <= 1.0) {
            return domain(format!("C must lie in (0, 1], got {}", self.c));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return domain(format!("δ must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }

    /// `max{V/L, F_max/V}`.
    pub fn rate(&self) -> f64 {
        (self.vmax / self.box_length).max(self.fmax / self.vmax)
    }

    /// `n_gr T max{V/L, F_max/V}`.
    pub fn hamiltonian_term(&self) -> f64 {
        self.ngr as f64 * self.tmax * self.rate()
    }

    /// `N_gr = n_gr^{2d}`.
    pub fn n_grid(&self) -> f64 {
        (self.ngr as f64).powi(2 * self.dim as i32)
    }
}

fn queries_at(p: &ResourceParams, eps: f64) -> f64 {
    let nt = p.nt as f64;
    p.hamiltonian_term() + nt * (nt / eps).ln()
}

/// `n_gr T max{V/L, F_max/V} + n_t ln(n_t/ε)`.
pub fn theorem1_queries(p: &ResourceParams) -> Result<f64> {
    p.validate()?;
    Ok(queries_at(p, p.eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitCount {
    /// `ln^{5/2}(argument)`.
    pub ancilla: f64,
    /// `2 lg N_gr + 5`.
    pub working: f64,
    pub total: f64,
}

fn qubits_for(p: &ResourceParams, argument: f64) -> Result<QubitCount> {
    if !(argument > 1.0) {
        return domain(format!("qubit-count log argument {argument} must exceed 1"));
    }
    let ancilla = argument.ln().powf(2.5);
    let working = 2.0 * p.n_grid().log2() + 5.0;
    Ok(QubitCount { ancilla, working, total: ancilla + working })
}

pub fn theorem1_qubits(p: &ResourceParams) -> Result<QubitCount> {
    p.validate()?;
    qubits_for(p, p.hamiltonian_term() / p.eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Totals {
    /// Oracle queries for one `U_{f(T), Cε/4}`.
    pub per_build_queries: f64,
    /// `ln(1/δ) / (Cε)`.
    pub repetitions: f64,
    pub total_queries: f64,
    /// Queries to the initial-state oracle; equals `repetitions`.
    pub initial_state_queries: f64,
    pub qubits: QubitCount,
}

pub fn theorem2_totals(p: &ResourceParams) -> Result<Theorem2Totals> {
    p.validate_qae()?;
    let ce = p.c * p.eps;
    let per_build_queries = queries_at(p, ce / 4.0);
    let repetitions = (1.0 / p.delta).ln() / ce;
    Ok(Theorem2Totals {
        per_build_queries,
        repetitions,
        total_queries: per_build_queries * repetitions,
        initial_state_queries: repetitions,
        qubits: qubits_for(p, p.hamiltonian_term() / ce)?,
    })
}

/// The forms obtained with `VT = L` and `F_max T = V`, where
/// `n_gr T max{V/L, F_max/V}` becomes `n_gr`; logarithms are kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplifiedForms {
    pub theorem1_queries: f64,
    pub theorem1_ancilla_qubits: f64,
    pub theorem2_total_queries: f64,
}

pub fn simplified_forms(p: &ResourceParams) -> Result<SimplifiedForms> {
    p.validate_qae()?;
    let n = p.ngr as f64;
    let nt = p.nt as f64;
    let ce = p.c * p.eps;
    let arg = n / p.eps;
    if !(arg > 1.0) {
        return domain(format!("qubit-count log argument {arg} must exceed 1"));
    }
    Ok(SimplifiedForms {
        theorem1_queries: n + nt * (nt / p.eps).ln(),
        theorem1_ancilla_qubits: arg.ln().powf(2.5),
        theorem2_total_queries: (n + nt * (4.0 * nt / ce).ln()) * (1.0 / p.delta).ln() / ce,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QramFootprint {
    /// One force QRAM per time slice and realization.
    pub force_qrams: usize,
    pub axes: usize,
    pub entries_per_axis: usize,
    pub force_entries: usize,
    pub delta_entries: usize,
    pub bulk_velocity_entries: usize,
}

pub fn qram_footprint(p: &ResourceParams) -> QramFootprint {
    let per_axis = p.ngr.pow(p.dim as u32);
    QramFootprint {
        force_qrams: p.nt * p.niv,
        axes: p.dim,
        entries_per_axis: per_axis,
        force_entries: per_axis * p.dim * p.nt * p.niv,
        delta_entries: per_axis * p.niv,
        bulk_velocity_entries: p.dim * per_axis * p.niv,
    }
}

/// Classical cost `n_t N_gr` of stepping every grid point once per slice.
pub fn classical_queries(p: &ResourceParams) -> f64 {
    p.nt as f64 * p.n_grid()
}

/// Smallest power-of-two `n_gr` at which the classical count exceeds the
/// quantum total, if one exists below `2^30`.
pub fn crossover_ngr(p: &ResourceParams) -> Result<Option<usize>> {
    let mut q = *p;
    q.ngr = 2;
    while q.ngr <= 1 << 30 {
        if classical_queries(&q) > theorem2_totals(&q)?.total_queries {
            return Ok(Some(q.ngr));
        }
        q.ngr *= 2;
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResourceEstimate {
    pub label: &'static str,
    pub inputs: ResourceParams,
    pub theorem1_queries: f64,
    pub theorem1_qubits: QubitCount,
    pub theorem2: Theorem2Totals,
    pub simplified: SimplifiedForms,
    pub qram: QramFootprint,
    pub classical_queries: f64,
    pub crossover_ngr: Option<usize>,
}

pub fn estimate(p: &ResourceParams) -> Result<ResourceEstimate> {
    Ok(ResourceEstimate {
        label: UNIT_CONSTANT_LABEL,
        inputs: *p,
        theorem1_queries: theorem1_queries(p)?,
        theorem1_qubits: theorem1_qubits(p)?,
        theorem2: theorem2_totals(p)?,
        simplified: simplified_forms(p)?,
        qram: qram_footprint(p),
        classical_queries: classical_queries(p),
        crossover_ngr: crossover_ngr(p)?,
    })
}

/// A parameter sweep `name=start:stop:*factor` or `name=start:stop:+step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub name: String,
    pub values: Vec<f64>,
}

const SWEEPABLE: [&str; 9] = ["ngr", "nt", "tmax", "box-length", "vmax", "fmax", "eps", "delta", "c"];

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("bad sweep '{s}': {m}"));
        let (name, range) = s.split_once('=').ok_or_else(|| bad("expected name=start:stop:step"))?;
        if !SWEEPABLE.contains(&name) {
            return Err(bad(&format!("unknown parameter (one of {})", SWEEPABLE.join(", "))));
        }
        let parts: Vec<&str> = range.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(&format!("'{v}' is not a number")));
        let (start, stop) = (num(start)?, num(stop)?);
        let (mul, inc) = match step.as_bytes().first() {
            Some(b'*') => (num(&step[1..])?, 0.0),
            Some(b'+') => (1.0, num(&step[1..])?),
            _ => (1.0, num(step)?),
        };
        if !(mul > 1.0 || (mul == 1.0 && inc > 0.0)) || start > stop || !start.is_finite() || !stop.is_finite() {
            return Err(bad("range does not advance from start to stop"));
        }
        let mut values = Vec::new();
        let mut v = start;
        while v <= stop * (1.0 + 1e-12) {
            values.push(v);
            if values.len() > 100_000 {
                return Err(bad("more than 100000 points"));
            }
            v = v * mul + inc;
        }
        Ok(Sweep { name: name.to_string(), values })
    }
}

impl Sweep {
    /// Parameter sets for each sweep point.
    pub fn apply(&self, base: &ResourceParams) -> Result<Vec<ResourceParams>> {
        self.values
            .iter()
            .map(|&v| {
                let mut p = *base;
                let as_count = |v: f64| -> Result<usize> {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        domain(format!("{} must be a positive integer, got {v}", self.name))
                    }
                };
                match self.name.as_str() {
                    "ngr" => p.ngr = as_count(v)?,
                    "nt" => p.nt = as_count(v)?,
                    "tmax" => p.tmax = v,
                    "box-length" => p.box_length = v,
                    "vmax" => p.vmax = v,
                    "fmax" => p.fmax = v,
                    "eps" => p.eps = v,
                    "delta" => p.delta = v,
                    "c" => p.c = v,
                    _ => unreachable!("validated on parse"),
                }
                Ok(p)
            })
            .collect()
    }
}

/// Log-log slope between two points.
pub fn two_point_exponent(x1: f64, y1: f64, x2: f64, y2: f64) -> f64 {
    (y2 / y1).ln() / (x2 / x1).ln()
}

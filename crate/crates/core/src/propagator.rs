//! Piecewise-constant unitary evolution `f(T) = exp(Δt A_{n_t-1}) ⋯ exp(Δt A_0) f(0)`.
//!
//! `exp(-iΔt H) = exp(Δt A)` with `H = iA`. Two backends:
//!
//! * dense: eigendecomposition of `H² = AᵀA = S²` (real symmetric), then
//!   `exp(tA) = cos(tS) + A · sin(tS)/S`. Both functions are entire in `S²`,
//!   so no square roots of small eigenvalues leak into the result.
//! * krylov: Lanczos on `H` with adaptive sub-stepping driven by the
//!   standard a-posteriori error estimate.

use std::rc::Rc;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::forcefield::{ForceEnsemble, ForceField};
use crate::grid::PhaseSpaceGrid;
use crate::hamiltonian::{assemble, SparseHamiltonian};

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionState {
    values: Vec<Complex64>,
    time: f64,
}

impl DistributionState {
    pub fn new(values: Vec<Complex64>, time: f64) -> Result<Self> {
        if let Some(p) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return domain(format!("non-finite state entry at index {p}"));
        }
        Ok(Self { values, time })
    }

    pub fn from_real(values: Vec<f64>) -> Result<Self> {
        Self::new(values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(), 0.0)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// `f_sum = Σ_i f_i`.
    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.im.abs()))
    }

    pub fn min_real(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.re))
    }

    /// `Σ_b |f_b| / Σ |f|` over the outermost velocity grid points `b`.
    pub fn boundary_mass_fraction(&self, grid: &PhaseSpaceGrid) -> f64 {
        let total: f64 = self.values.iter().map(|v| v.norm()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| grid.is_velocity_boundary(*i))
            .map(|(_, v)| v.norm())
            .sum();
        edge / total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Dense,
    Krylov,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "krylov" => Ok(Self::Krylov),
            other => Err(Error::Config(format!("unknown backend '{other}' (dense|krylov)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Largest Krylov subspace built for one sub-step.
    pub max_dim: usize,
    /// Lanczos iterations allowed per time step, summed over sub-steps.
    pub max_iterations: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { max_dim: 40, max_iterations: 200 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
    pub sum_re: f64,
    pub sum_im: f64,
    /// `|‖f(t_{i+1})‖ − ‖f(t_i)‖| / ‖f(0)‖`
    pub norm_drift: f64,
    /// `|sum(t_{i+1}) − sum(t_i)| / |sum(0)|`
    pub sum_drift: f64,
    pub boundary_mass_fraction: f64,
    pub min_value: f64,
    pub max_imag: f64,
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    pub backend: Backend,
    pub tmax: f64,
    pub nt: usize,
    pub initial_norm: f64,
    pub initial_sum_re: f64,
    pub initial_sum_im: f64,
    pub initial_boundary_mass_fraction: f64,
    pub steps: Vec<StepDiagnostics>,
}

impl EvolutionReport {
    pub fn max_norm_drift(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.norm_drift))
    }

    pub fn max_sum_drift(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.sum_drift))
    }

    pub fn max_boundary_mass_fraction(&self) -> f64 {
        self.steps
            .iter()
            .fold(self.initial_boundary_mass_fraction, |m, s| m.max(s.boundary_mass_fraction))
    }

    /// `|sum(T) − sum(0)| / |sum(0)|`.
    pub fn total_sum_drift(&self) -> f64 {
        let Some(last) = self.steps.last() else { return 0.0 };
        let s0 = Complex64::new(self.initial_sum_re, self.initial_sum_im);
        let s1 = Complex64::new(last.sum_re, last.sum_im);
        relative(s1 - s0, s0.norm())
    }

    /// `|‖f(T)‖ − ‖f(0)‖| / ‖f(0)‖`.
    pub fn total_norm_drift(&self) -> f64 {
        let Some(last) = self.steps.last() else { return 0.0 };
        (last.norm - self.initial_norm).abs() / self.initial_norm
    }

    pub fn min_value(&self) -> f64 {
        self.steps.iter().fold(f64::INFINITY, |m, s| m.min(s.min_value))
    }

    pub fn max_imag(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.max_imag))
    }
}

fn relative(diff: Complex64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff.norm() / scale
    } else {
        diff.norm()
    }
}

/// Spectral factors of `AᵀA` for one time slice.
struct DenseExp {
    q: Mat<f64>,
    s2: Vec<f64>,
}

impl DenseExp {
    fn new(h: &SparseHamiltonian) -> Result<Self> {
        let n = h.dim();
        // (AᵀA)_ij = Σ_k A_ki A_kj, accumulated row by row of A.
        let mut m = Mat::<f64>::zeros(n, n);
        let mut row = Vec::with_capacity(16);
        for k in 0..n {
            row.clear();
            row.extend(h.row(k));
            for &(i, vi) in &row {
                for &(j, vj) in &row {
                    m[(i, j)] += vi * vj;
                }
            }
        }
        let eig = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let q = eig.U().to_owned();
        let s = eig.S().column_vector();
        let s2 = (0..n).map(|i| s[i].max(0.0)).collect();
        Ok(Self { q, s2 })
    }

    fn apply(&self, h: &SparseHamiltonian, f: &[Complex64], t: f64) -> Vec<Complex64> {
        let n = f.len();
        let fm = Mat::<f64>::from_fn(n, 2, |i, c| if c == 0 { f[i].re } else { f[i].im });
        let coef = self.q.transpose() * &fm;
        let cos_part = Mat::<f64>::from_fn(n, 2, |i, c| cos_sqrt(self.s2[i], t) * coef[(i, c)]);
        let sin_part = Mat::<f64>::from_fn(n, 2, |i, c| sinc_sqrt(self.s2[i], t) * coef[(i, c)]);
        let g1 = &self.q * &cos_part;
        let g2 = &self.q * &sin_part;
        let g2c: Vec<Complex64> = (0..n).map(|i| Complex64::new(g2[(i, 0)], g2[(i, 1)])).collect();
        let mut ag2 = vec![Complex64::new(0.0, 0.0); n];
        h.apply(&g2c, &mut ag2);
        (0..n)
            .map(|i| Complex64::new(g1[(i, 0)], g1[(i, 1)]) + ag2[i])
            .collect()
    }
}

/// `cos(t √s2)`.
fn cos_sqrt(s2: f64, t: f64) -> f64 {
    (t * s2.sqrt()).cos()
}

/// `sin(t √s2) / √s2`, continuous at `s2 = 0`.
fn sinc_sqrt(s2: f64, t: f64) -> f64 {
    let x2 = t * t * s2;
    if x2 < 1e-8 {
        t * (1.0 - x2 / 6.0 + x2 * x2 / 120.0)
    } else {
        let mu = s2.sqrt();
        (t * mu).sin() / mu
    }
}

/// Applies `exp(-iτH)` (i.e. `exp(τA)`) to `f` by Lanczos with adaptive
/// sub-stepping. Returns the result and the Lanczos iterations spent.
///
/// `tol_abs` bounds the estimated error of the whole step of length `dt`.
pub fn krylov_step(
    h: &SparseHamiltonian,
    f: &[Complex64],
    dt: f64,
    tol_abs: f64,
    opts: &KrylovOptions,
) -> Result<(Vec<Complex64>, usize)> {
    let mut cur = f.to_vec();
    let mut remaining = dt;
    let mut iterations = 0;
    let min_tau = dt.abs() * 1e-12;

    while remaining > 0.0 {
        let budget = opts.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            return Err(Error::NoConvergence { residual: f64::INFINITY, tol: tol_abs });
        }
        let lz = Lanczos::build(h, &cur, opts.max_dim.min(budget), |lz| {
            lz.error_estimate(remaining) <= tol_abs * remaining / dt
        });
        iterations += lz.alpha.len();

        let mut tau = remaining;
        let mut err = lz.error_estimate(tau);
        while err > tol_abs * tau / dt {
            tau *= 0.5;
            if tau < min_tau {
                return Err(Error::NoConvergence { residual: err, tol: tol_abs });
            }
            err = lz.error_estimate(tau);
        }
        cur = lz.propagate(tau);
        remaining -= tau;
        if remaining < min_tau {
            remaining = 0.0;
        }
    }
    Ok((cur, iterations))
}

struct Lanczos {
    beta0: f64,
    basis: Vec<Vec<Complex64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// `β_m`, the coupling to the first vector outside the basis (0 on breakdown).
    residual_beta: f64,
}

impl Lanczos {
    /// Builds up to `max_dim` Lanczos vectors for `H = iA`, stopping early on
    /// breakdown or when `done` reports the basis is large enough.
    fn build(
        h: &SparseHamiltonian,
        f: &[Complex64],
        max_dim: usize,
        mut done: impl FnMut(&Lanczos) -> bool,
    ) -> Lanczos {
        let n = f.len();
        let beta0 = f.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mut lz = Lanczos { beta0, basis: Vec::new(), alpha: Vec::new(), beta: Vec::new(), residual_beta: 0.0 };
        if beta0 == 0.0 {
            return lz;
        }
        lz.basis.push(f.iter().map(|v| v / beta0).collect());
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        let scale = h.max_abs().max(f64::MIN_POSITIVE);

        loop {
            let j = lz.basis.len() - 1;
            h.apply(&lz.basis[j], &mut w);
            for x in w.iter_mut() {
                *x *= Complex64::i();
            }
            let a: f64 = lz.basis[j].iter().zip(&w).map(|(v, x)| (v.conj() * x).re).sum();
            lz.alpha.push(a);
            // full reorthogonalization, applied twice
            for _ in 0..2 {
                for v in &lz.basis {
                    let c: Complex64 = v.iter().zip(&w).map(|(v, x)| v.conj() * x).sum();
                    for (x, v) in w.iter_mut().zip(v) {
                        *x -= c * v;
                    }
                }
            }
            let b = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            lz.residual_beta = b;
            let breakdown = b <= 1e-13 * scale;
            if breakdown {
                lz.residual_beta = 0.0;
            }
            if breakdown || lz.alpha.len() >= max_dim || done(&lz) {
                return lz;
            }
            lz.beta.push(b);
            lz.basis.push(w.iter().map(|x| x / b).collect());
        }
    }

    /// `exp(-iτ T_m) e_1` for the tridiagonal projection `T_m`.
    fn small_exp(&self, tau: f64) -> Vec<Complex64> {
        let m = self.alpha.len();
        let t = Mat::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                self.alpha[i]
            } else if i + 1 == j {
                self.beta[i]
            } else if j + 1 == i {
                self.beta[j]
            } else {
                0.0
            }
        });
        let eig = t.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
        let u = eig.U();
        let s = eig.S().column_vector();
        let w: Vec<Complex64> = (0..m)
            .map(|k| Complex64::from_polar(1.0, -tau * s[k]) * u[(0, k)])
            .collect();
        (0..m).map(|i| (0..m).map(|k| w[k] * u[(i, k)]).sum()).collect()
    }

    fn error_estimate(&self, tau: f64) -> f64 {
        if self.alpha.is_empty() || self.residual_beta == 0.0 {
            return 0.0;
        }
        let phi = self.small_exp(tau);
        self.beta0 * self.residual_beta * phi[phi.len() - 1].norm()
    }

    fn propagate(&self, tau: f64) -> Vec<Complex64> {
        let n = self.basis.first().map_or(0, |b| b.len());
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        if self.alpha.is_empty() {
            return out;
        }
        let phi = self.small_exp(tau);
        for (c, v) in phi.iter().zip(&self.basis) {
            let c = c * self.beta0;
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
        out
    }
}

/// Evolves states under one force field, caching per-slice matrices and
/// dense factorizations across calls.
pub struct Propagator<'a> {
    grid: &'a PhaseSpaceGrid,
    ff: &'a ForceField,
    backend: Backend,
    tol: f64,
    opts: KrylovOptions,
    hams: Vec<Option<Rc<SparseHamiltonian>>>,
    dense: Vec<Option<Rc<DenseExp>>>,
}

impl<'a> Propagator<'a> {
    pub fn new(grid: &'a PhaseSpaceGrid, ff: &'a ForceField, backend: Backend, tol: f64) -> Result<Self> {
        if !ff.matches_grid(grid) {
            return domain("force field does not match the grid");
        }
        if backend == Backend::Krylov && !(tol > 0.0 && tol.is_finite()) {
            return domain(format!("krylov backend needs tol > 0, got {tol}"));
        }
        let nt = ff.nt();
        Ok(Self {
            grid,
            ff,
            backend,
            tol,
            opts: KrylovOptions::default(),
            hams: vec![None; nt],
            dense: (0..nt).map(|_| None).collect(),
        })
    }

    pub fn with_krylov_options(mut self, opts: KrylovOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Earlier slice with bit-identical force samples, if any.
    fn twin(&self, i_t: usize) -> Option<usize> {
        (0..i_t).find(|&j| self.ff.slice(j) == self.ff.slice(i_t))
    }

    pub fn hamiltonian(&mut self, i_t: usize) -> Result<Rc<SparseHamiltonian>> {
        if let Some(h) = &self.hams[i_t] {
            return Ok(h.clone());
        }
        let h = match self.twin(i_t) {
            Some(j) => self.hamiltonian(j)?,
            None => Rc::new(assemble(self.grid, self.ff, i_t)?),
        };
        self.hams[i_t] = Some(h.clone());
        Ok(h)
    }

    fn dense_exp(&mut self, i_t: usize) -> Result<Rc<DenseExp>> {
        if let Some(d) = &self.dense[i_t] {
            return Ok(d.clone());
        }
        let d = match self.twin(i_t) {
            Some(j) => self.dense_exp(j)?,
            None => {
                let h = self.hamiltonian(i_t)?;
                log::debug!("dense factorization of slice {i_t} (N = {})", h.dim());
                Rc::new(DenseExp::new(&h)?)
            }
        };
        self.dense[i_t] = Some(d.clone());
        Ok(d)
    }

    /// Evolves `state` over `[t, t + tmax]` using all `n_t` slices of the field.
    pub fn evolve(&mut self, state: &DistributionState, tmax: f64) -> Result<(DistributionState, EvolutionReport)> {
        let nt = self.ff.nt();
        self.evolve_slices(state, 0..nt, tmax / nt as f64)
    }

    /// Applies slices `range` in order, each for `dt`.
    pub fn evolve_slices(
        &mut self,
        state: &DistributionState,
        range: std::ops::Range<usize>,
        dt: f64,
    ) -> Result<(DistributionState, EvolutionReport)> {
        if range.end > self.ff.nt() || range.start > range.end {
            return domain(format!("slice range {range:?} invalid for n_t = {}", self.ff.nt()));
        }
        let nt = range.len();
        let tmax = dt * nt as f64;
        if state.len() != self.grid.len() {
            return domain(format!("state has {} entries, grid has {}", state.len(), self.grid.len()));
        }
        if !(tmax.is_finite() && tmax >= 0.0) {
            return domain(format!("evolution time must be finite and non-negative, got {tmax}"));
        }
        let norm0 = state.norm();
        let sum0 = state.sum();
        let mut report = EvolutionReport {
            backend: self.backend,
            tmax,
            nt,
            initial_norm: norm0,
            initial_sum_re: sum0.re,
            initial_sum_im: sum0.im,
            initial_boundary_mass_fraction: state.boundary_mass_fraction(self.grid),
            steps: Vec::with_capacity(nt),
        };
        // per-step share of the error budget
        let tol_step = self.tol / self.ff.nt() as f64 * norm0;

        let mut cur = state.values.clone();
        let mut prev_norm = norm0;
        let mut prev_sum = sum0;
        for (step, i_t) in range.enumerate() {
            let h = self.hamiltonian(i_t)?;
            let mut iters = 0;
            cur = if dt == 0.0 {
                cur
            } else {
                match self.backend {
                    Backend::Dense => self.dense_exp(i_t)?.apply(&h, &cur, dt),
                    Backend::Krylov => {
                        let (v, it) = krylov_step(&h, &cur, dt, tol_step, &self.opts)?;
                        iters = it;
                        v
                    }
                }
            };
            let st = DistributionState::new(cur, state.time + dt * (step + 1) as f64)?;
            let norm = st.norm();
            let sum = st.sum();
            report.steps.push(StepDiagnostics {
                step: i_t,
                time: st.time,
                norm,
                sum_re: sum.re,
                sum_im: sum.im,
                norm_drift: (norm - prev_norm).abs() / norm0,
                sum_drift: relative(sum - prev_sum, sum0.norm()),
                boundary_mass_fraction: st.boundary_mass_fraction(self.grid),
                min_value: st.min_real(),
                max_imag: st.max_imag(),
                krylov_iterations: iters,
            });
            prev_norm = norm;
            prev_sum = sum;
            cur = st.values;
        }
        Ok((DistributionState { values: cur, time: state.time + tmax }, report))
    }
}

/// Evolves `state0` to time `tmax` in `nt` equal steps; `nt` must match the
/// number of force slices. `nt == 0` returns the state unchanged.
pub fn evolve(
    state0: &DistributionState,
    grid: &PhaseSpaceGrid,
    ff: &ForceField,
    tmax: f64,
    nt: usize,
    backend: Backend,
    tol: f64,
) -> Result<(DistributionState, EvolutionReport)> {
    if nt == 0 {
        if tmax != 0.0 {
            return domain("nt = 0 requires tmax = 0");
        }
        let report = EvolutionReport {
            backend,
            tmax,
            nt,
            initial_norm: state0.norm(),
            initial_sum_re: state0.sum().re,
            initial_sum_im: state0.sum().im,
            initial_boundary_mass_fraction: state0.boundary_mass_fraction(grid),
            steps: Vec::new(),
        };
        return Ok((state0.clone(), report));
    }
    if ff.nt() != nt {
        return domain(format!("nt = {nt} does not match the force field's {} time slices", ff.nt()));
    }
    Propagator::new(grid, ff, backend, tol)?.evolve(state0, tmax)
}

/// Evolves every realization of an ensemble under its own force field.
pub fn evolve_ensemble(
    states: &[DistributionState],
    grid: &PhaseSpaceGrid,
    forces: &ForceEnsemble,
    tmax: f64,
    backend: Backend,
    tol: f64,
) -> Result<Vec<(DistributionState, EvolutionReport)>> {
    if states.len() != forces.len() {
        return domain(format!(
            "{} initial states but {} force realizations",
            states.len(),
            forces.len()
        ));
    }
    states
        .iter()
        .zip(forces.realizations())
        .map(|(s, ff)| Propagator::new(grid, ff, backend, tol)?.evolve(s, tmax))
        .collect()
}

/// Box-sizing ratios `VT/L` and `F_max T/V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSizing {
    pub position_ratio: f64,
    pub velocity_ratio: f64,
}

impl BoxSizing {
    /// True when either ratio exceeds 1: particles may exit the box.
    pub fn particles_may_exit(&self) -> bool {
        self.position_ratio > 1.0 || self.velocity_ratio > 1.0
    }
}

pub fn check_box_sizing(grid: &PhaseSpaceGrid, ff: &ForceField, tmax: f64) -> BoxSizing {
    BoxSizing {
        position_ratio: grid.vmax() * tmax / grid.box_length(),
        velocity_ratio: ff.fmax() * tmax / grid.vmax(),
    }
}

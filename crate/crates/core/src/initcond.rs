//! Initial distribution states and the normalization constant `C`.

use std::f64::consts::{LN_2, PI};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{domain, Error, Result};
use crate::forcefield::{read_vqff, ForceEnsemble};
use crate::grid::PhaseSpaceGrid;
use crate::propagator::{Backend, DistributionState, EvolutionReport, Propagator};

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV_PER_K: f64 = 8.617_333_262e-5;

/// `f(0, x, u) = Π_k (2πσ²)^{-1/2} exp(-u_k²/(2σ²))`, constant in `x`.
pub fn maxwell_demo(grid: &PhaseSpaceGrid, sigma_v: f64) -> Result<DistributionState> {
    if !(sigma_v > 0.0 && sigma_v.is_finite()) {
        return domain(format!("velocity dispersion must be positive, got {sigma_v}"));
    }
    let profile = maxwell_profile(grid, sigma_v);
    let ones = vec![1.0; grid.n_spatial()];
    product_state(grid, &ones, &profile)
}

fn maxwell_profile(grid: &PhaseSpaceGrid, sigma_v: f64) -> Vec<f64> {
    let norm = (2.0 * PI * sigma_v * sigma_v).sqrt().recip();
    let g: Vec<f64> = grid
        .u_values()
        .iter()
        .map(|u| norm * (-u * u / (2.0 * sigma_v * sigma_v)).exp())
        .collect();
    let n = grid.ngr();
    let nv = grid.n_spatial();
    (0..nv)
        .map(|iv| {
            let mut rest = iv;
            let mut p = 1.0;
            for _ in 0..grid.dim() {
                p *= g[rest % n];
                rest /= n;
            }
            p
        })
        .collect()
}

/// `f_(ix, iv) = spatial[ix] · velocity[iv]`.
pub fn product_state(grid: &PhaseSpaceGrid, spatial: &[f64], velocity: &[f64]) -> Result<DistributionState> {
    let ns = grid.n_spatial();
    if spatial.len() != ns || velocity.len() != ns {
        return domain(format!(
            "factor lengths {} and {} do not match n_gr^d = {ns}",
            spatial.len(),
            velocity.len()
        ));
    }
    let values = velocity
        .iter()
        .flat_map(|v| spatial.iter().map(move |s| s * v))
        .collect();
    DistributionState::from_real(values)
}

/// `(1 + δ(x)) · Maxwell(u)`: a density-perturbed demo state.
pub fn perturbed_maxwell(grid: &PhaseSpaceGrid, sigma_v: f64, delta: &[f64]) -> Result<DistributionState> {
    if !(sigma_v > 0.0 && sigma_v.is_finite()) {
        return domain(format!("velocity dispersion must be positive, got {sigma_v}"));
    }
    let spatial = density_factor(delta)?;
    product_state(grid, &spatial, &maxwell_profile(grid, sigma_v))
}

fn density_factor(delta: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = delta.iter().position(|d| 1.0 + d < 0.0) {
        return domain(format!("1 + δ = {} < 0 at spatial index {i}", 1.0 + delta[i]));
    }
    Ok(delta.iter().map(|d| 1.0 + d).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiDiracParams {
    v_th: f64,
}

impl FermiDiracParams {
    pub fn from_vth(v_th: f64) -> Result<Self> {
        if !(v_th > 0.0 && v_th.is_finite()) {
            return domain(format!("thermal velocity must be positive, got {v_th}"));
        }
        Ok(Self { v_th })
    }

    /// `v_th = k_B T_ν / m_ν`, in units of c for `m_ν` in eV and `T_ν` in K.
    pub fn physical(m_nu_ev: f64, t_nu_kelvin: f64) -> Result<Self> {
        if !(m_nu_ev > 0.0) {
            return domain(format!("neutrino mass must be positive, got {m_nu_ev}"));
        }
        Self::from_vth(BOLTZMANN_EV_PER_K * t_nu_kelvin / m_nu_ev)
    }

    pub fn v_th(&self) -> f64 {
        self.v_th
    }

    /// `F_FD(v) = 1 / (exp(v / v_th) + 1)` for a speed `v ≥ 0`.
    pub fn occupation(&self, speed: f64) -> f64 {
        1.0 / ((speed / self.v_th).exp() + 1.0)
    }
}

/// Initial density contrast and bulk velocity on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationField {
    dim: usize,
    ngr: usize,
    delta: Vec<f64>,
    /// `v_b` laid out axis-major: `bulk[axis * n_gr^d + spatial]`.
    bulk: Vec<f64>,
}

impl PerturbationField {
    pub fn new(grid: &PhaseSpaceGrid, delta: Vec<f64>, bulk: Vec<f64>) -> Result<Self> {
        let ns = grid.n_spatial();
        if delta.len() != ns {
            return domain(format!("δ has {} samples, expected {ns}", delta.len()));
        }
        if bulk.len() != grid.dim() * ns {
            return domain(format!("v_b has {} samples, expected {}", bulk.len(), grid.dim() * ns));
        }
        if delta.iter().chain(&bulk).any(|v| !v.is_finite()) {
            return domain("perturbation field has non-finite samples");
        }
        let mean = delta.iter().sum::<f64>() / ns as f64;
        if mean.abs() > 1e-12 {
            return domain(format!("δ must have zero mean, got {mean:e}"));
        }
        Ok(Self { dim: grid.dim(), ngr: grid.ngr(), delta, bulk })
    }

    /// No density contrast, no bulk flow.
    pub fn unperturbed(grid: &PhaseSpaceGrid) -> Self {
        let ns = grid.n_spatial();
        Self { dim: grid.dim(), ngr: grid.ngr(), delta: vec![0.0; ns], bulk: vec![0.0; grid.dim() * ns] }
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn bulk_velocity(&self, axis: usize) -> &[f64] {
        let ns = self.delta.len();
        &self.bulk[axis * ns..(axis + 1) * ns]
    }

    fn check_grid(&self, grid: &PhaseSpaceGrid) -> Result<()> {
        if self.dim != grid.dim() || self.ngr != grid.ngr() {
            return domain("perturbation field does not match the grid");
        }
        Ok(())
    }

    /// `Σ_x (1 + δ_x)² / n_gr^d`.
    pub fn spatial_factor(&self) -> f64 {
        self.delta.iter().map(|d| (1.0 + d) * (1.0 + d)).sum::<f64>() / self.delta.len() as f64
    }
}

/// Reads perturbation realizations from a VQFF1 file.
///
/// Each record has `n_t = 2`: slice 0 carries δ on axis 0 (other axes zero),
/// slice 1 carries `v_b` component-wise.
pub fn load_perturbations(path: &Path, grid: &PhaseSpaceGrid) -> Result<Vec<PerturbationField>> {
    let data = read_vqff(path)?;
    let fmt = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    if data.dim != grid.dim() || data.ngr != grid.ngr() {
        return Err(fmt(format!(
            "dimension mismatch: file has d={}, n_gr={}, run uses d={}, n_gr={}",
            data.dim,
            data.ngr,
            grid.dim(),
            grid.ngr()
        )));
    }
    if data.nt != 2 {
        return Err(fmt(format!("perturbation file needs n_t = 2 (δ, v_b), got {}", data.nt)));
    }
    let ns = grid.n_spatial();
    let d = grid.dim();
    (0..data.niv)
        .map(|i| {
            let rec = data.realization(i);
            let delta = rec[..ns].to_vec();
            if let Some(p) = rec[ns..d * ns].iter().position(|v| *v != 0.0) {
                return Err(fmt(format!(
                    "record i_IV={i}: slice 0 axis {} spatial {} must be 0",
                    1 + p / ns,
                    p % ns
                )));
            }
            let bulk = rec[d * ns..].to_vec();
            PerturbationField::new(grid, delta, bulk)
                .map_err(|e| fmt(format!("record i_IV={i}: {e}")))
        })
        .collect()
}

/// `f = (1 + δ(x)) · F_FD(‖v − v_b(x)‖)`.
pub fn fermi_dirac_state(
    grid: &PhaseSpaceGrid,
    params: &FermiDiracParams,
    pert: &PerturbationField,
) -> Result<DistributionState> {
    pert.check_grid(grid)?;
    let dens = density_factor(&pert.delta)?;
    let ns = grid.n_spatial();
    let n = grid.ngr();
    let u = grid.u_values();
    let mut values = Vec::with_capacity(grid.len());
    for iv in 0..ns {
        for (ix, rho) in dens.iter().enumerate() {
            let mut rest = iv;
            let mut s2 = 0.0;
            for axis in 0..grid.dim() {
                let dv = u[rest % n] - pert.bulk[axis * ns + ix];
                s2 += dv * dv;
                rest /= n;
            }
            values.push(Complex64::new(rho * params.occupation(s2.sqrt()), 0.0));
        }
    }
    DistributionState::new(values, 0.0)
}

/// `C = ((Σ f)² / N) / Σ |f|²`.
pub fn compute_c(state: &DistributionState) -> Result<f64> {
    compute_c_values(state.values())
}

pub(crate) fn compute_c_values(values: &[Complex64]) -> Result<f64> {
    let norm2: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    if norm2 == 0.0 {
        return domain("C is undefined for a zero state");
    }
    let sum: Complex64 = values.iter().sum();
    Ok(sum.norm_sqr() / values.len() as f64 / norm2)
}

/// `C` with the velocity sum of `F_FD²` replaced by its integral over ℝ^d:
/// `C ≈ ρ̄² / ((n_gr Δv)^d · S₂ · I₂)`, where `ρ̄ = Δv^d Σ_v F_FD(‖v‖)` is the
/// grid normalization, `I₂ = ∫ F_FD²` and `S₂ = Σ(1+δ)²/n_gr^d`.
pub fn compute_c_semianalytic(
    grid: &PhaseSpaceGrid,
    params: &FermiDiracParams,
    pert: &PerturbationField,
) -> Result<f64> {
    pert.check_grid(grid)?;
    density_factor(&pert.delta)?;
    let i2 = fd_moment(grid.dim(), params, 2)?;
    let dv_d = grid.dv().powi(grid.dim() as i32);
    let rho_bar = dv_d * velocity_sum(grid, params);
    let box_v = (grid.ngr() as f64 * grid.dv()).powi(grid.dim() as i32);
    Ok(rho_bar * rho_bar / (box_v * pert.spatial_factor() * i2))
}

/// `Σ_v F_FD(‖v‖)` over the velocity grid.
fn velocity_sum(grid: &PhaseSpaceGrid, params: &FermiDiracParams) -> f64 {
    let u = grid.u_values();
    let n = grid.ngr();
    (0..grid.n_spatial())
        .map(|iv| {
            let mut rest = iv;
            let mut s2 = 0.0;
            for _ in 0..grid.dim() {
                s2 += u[rest % n] * u[rest % n];
                rest /= n;
            }
            params.occupation(s2.sqrt())
        })
        .sum()
}

/// `∫_{ℝ^d} F_FD(‖v‖)^p dv` by radial Gauss–Legendre quadrature.
pub fn fd_moment(dim: usize, params: &FermiDiracParams, p: i32) -> Result<f64> {
    let surface = match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => return domain(format!("dimension {dim} not in 1..=3")),
    };
    let a = params.v_th();
    let integrand = |r: f64| r.powi(dim as i32 - 1) * params.occupation(r).powi(p);
    // tail bound: r^{d-1} e^{-p r/a} < 1e-16
    let mut r_max = a;
    while integrand(r_max) >= 1e-16 || r_max < 10.0 * a {
        r_max *= 1.5;
        if r_max > 1e6 * a {
            return Err(Error::Quadrature("integrand does not decay".into()));
        }
    }
    let mut prev = gauss_legendre(&integrand, 0.0, r_max, 64);
    for panels in [128, 256, 512, 1024] {
        let cur = gauss_legendre(&integrand, 0.0, r_max, panels);
        if (cur - prev).abs() <= 1e-13 * cur.abs() {
            return Ok(surface * cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("F_FD^{p} moment in d={dim} did not settle")))
}

/// Composite 5-point Gauss–Legendre rule.
fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = a + (k as f64 + 0.5) * h;
            X.iter().zip(&W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// 1D closed forms: `∫ F_FD = 2a ln 2`, `∫ F_FD² = 2a (ln 2 − 1/2)`.
pub fn fd_moments_1d_exact(params: &FermiDiracParams) -> (f64, f64) {
    let a = params.v_th();
    (2.0 * a * LN_2, 2.0 * a * (LN_2 - 0.5))
}

/// Superposition of `n_IV` realizations: block `i` holds `f⁽ⁱ⁾ / √n_IV`.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    blocks: Vec<DistributionState>,
}

pub fn build_ensemble(states: Vec<DistributionState>) -> Result<EnsembleState> {
    let Some(first) = states.first() else {
        return domain("ensemble needs at least one state");
    };
    if !states.len().is_power_of_two() {
        return domain(format!("n_IV = {} is not a power of two", states.len()));
    }
    let n = first.len();
    if let Some(i) = states.iter().position(|s| s.len() != n) {
        return domain(format!("realization {i} has {} entries, expected {n}", states[i].len()));
    }
    Ok(EnsembleState { blocks: states })
}

impl EnsembleState {
    pub fn n_iv(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_len(&self) -> usize {
        self.blocks[0].len()
    }

    /// Realizations without the `1/√n_IV` factor.
    pub fn realizations(&self) -> &[DistributionState] {
        &self.blocks
    }

    /// The block vector over `[N_gr] × [n_IV]`, block-major.
    pub fn vector(&self) -> Vec<Complex64> {
        let s = (self.n_iv() as f64).sqrt().recip();
        self.blocks
            .iter()
            .flat_map(|b| b.values().iter().map(move |v| v * s))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.vector().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `C` of the block vector.
    pub fn compute_c(&self) -> Result<f64> {
        compute_c_values(&self.vector())
    }

    /// Block-diagonal evolution: block `i` evolves under force realization `i`.
    pub fn evolve(
        &self,
        grid: &PhaseSpaceGrid,
        forces: &ForceEnsemble,
        tmax: f64,
        backend: Backend,
        tol: f64,
    ) -> Result<(EnsembleState, Vec<EvolutionReport>)> {
        if forces.len() != self.n_iv() {
            return domain(format!(
                "{} force realizations for {} ensemble members",
                forces.len(),
                self.n_iv()
            ));
        }
        let mut blocks = Vec::with_capacity(self.n_iv());
        let mut reports = Vec::with_capacity(self.n_iv());
        for (b, ff) in self.blocks.iter().zip(forces.realizations()) {
            let (s, r) = Propagator::new(grid, ff, backend, tol)?.evolve(b, tmax)?;
            blocks.push(s);
            reports.push(r);
        }
        Ok((EnsembleState { blocks }, reports))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwell_values() {
        let g = PhaseSpaceGrid::new(1, 64, 2.0, 1.0).unwrap();
        let s = maxwell_demo(&g, 0.1).unwrap();
        let iu = 31;
        let u = g.u_values()[iu];
        let want = (2.0 * PI * 0.01).powf(-0.5) * (-u * u / 0.02).exp();
        for ix in 0..64 {
            assert!((s.values()[ix + 64 * iu].re / want - 1.0).abs() < 1e-15);
        }
        assert!(s.boundary_mass_fraction(&g) < 1e-8);
        assert!(maxwell_demo(&g, 0.0).is_err());
    }

    #[test]
    fn maxwell_is_isotropic_product_in_2d() {
        let g = PhaseSpaceGrid::new(2, 4, 2.0, 1.0).unwrap();
        let s = maxwell_demo(&g, 0.5).unwrap();
        let one = maxwell_demo(&PhaseSpaceGrid::new(1, 4, 2.0, 1.0).unwrap(), 0.5).unwrap();
        let g1: Vec<f64> = (0..4).map(|i| one.values()[4 * i].re).collect();
        let idx = g.flatten(&[1, 2, 3, 0]).unwrap();
        assert!((s.values()[idx].re - g1[3] * g1[0]).abs() < 1e-15);
    }

    #[test]
    fn fermi_dirac_values() {
        let g = PhaseSpaceGrid::new(1, 8, 2.0, 1.0).unwrap();
        let p = FermiDiracParams::from_vth(0.3).unwrap();
        assert_eq!(p.occupation(0.0), 0.5);
        assert!((p.occupation(0.3) - 1.0 / (std::f64::consts::E + 1.0)).abs() < 1e-15);
        assert!((p.occupation(0.3) - 0.26894).abs() < 1e-5);
        let s = fermi_dirac_state(&g, &p, &PerturbationField::unperturbed(&g)).unwrap();
        // reflection symmetry u -> -u on the symmetric grid
        for ix in 0..8 {
            for iu in 0..8 {
                assert_eq!(s.values()[ix + 8 * iu], s.values()[ix + 8 * (7 - iu)]);
            }
        }
        assert!(FermiDiracParams::from_vth(-1.0).is_err());
    }

    #[test]
    fn fermi_dirac_bulk_shift() {
        let g = PhaseSpaceGrid::new(1, 8, 2.0, 1.0).unwrap();
        let p = FermiDiracParams::from_vth(0.2).unwrap();
        let u = g.u_values().to_vec();
        let vb = u[5];
        let pert = PerturbationField::new(&g, vec![0.0; 8], vec![vb; 8]).unwrap();
        let s = fermi_dirac_state(&g, &p, &pert).unwrap();
        assert_eq!(s.values()[8 * 5].re, 0.5);
    }

    #[test]
    fn negative_density_rejected() {
        let g = PhaseSpaceGrid::new(1, 4, 2.0, 1.0).unwrap();
        let pert = PerturbationField::new(&g, vec![-1.5, 1.5, 0.0, 0.0], vec![0.0; 4]).unwrap();
        let p = FermiDiracParams::from_vth(0.2).unwrap();
        assert!(fermi_dirac_state(&g, &p, &pert).is_err());
        assert!(PerturbationField::new(&g, vec![0.1, 0.0, 0.0, 0.0], vec![0.0; 4]).is_err());
    }

    #[test]
    fn c_extremes() {
        let u = DistributionState::from_real(vec![2.0; 16]).unwrap();
        assert!((compute_c(&u).unwrap() - 1.0).abs() < 1e-15);
        let mut one = vec![0.0; 16];
        one[3] = 5.0;
        let s = DistributionState::from_real(one).unwrap();
        assert!((compute_c(&s).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        assert!(compute_c(&DistributionState::from_real(vec![0.0; 4]).unwrap()).is_err());
    }

    #[test]
    fn one_dimensional_moments_match_closed_form() {
        let p = FermiDiracParams::from_vth(0.13).unwrap();
        let (i1, i2) = fd_moments_1d_exact(&p);
        assert!((fd_moment(1, &p, 1).unwrap() / i1 - 1.0).abs() < 1e-12);
        assert!((fd_moment(1, &p, 2).unwrap() / i2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_dimensional_first_moment() {
        // ∫ r² / (e^{r/a} + 1) dr = (3/2) ζ(3) a³
        let a = 0.2;
        let p = FermiDiracParams::from_vth(a).unwrap();
        let zeta3 = 1.202_056_903_159_594_3;
        let want = 4.0 * PI * 1.5 * zeta3 * a.powi(3);
        assert!((fd_moment(3, &p, 1).unwrap() / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn semianalytic_tracks_exact_sum() {
        for (dim, n) in [(1, 64), (2, 16)] {
            let g = PhaseSpaceGrid::new(dim, n, 2.0, 1.0).unwrap();
            let p = FermiDiracParams::from_vth(0.15).unwrap();
            let pert = PerturbationField::unperturbed(&g);
            let exact = compute_c(&fermi_dirac_state(&g, &p, &pert).unwrap()).unwrap();
            let semi = compute_c_semianalytic(&g, &p, &pert).unwrap();
            assert!((semi / exact - 1.0).abs() < 0.02, "d={dim}: {semi} vs {exact}");
        }
    }

    #[test]
    fn ensemble_norms() {
        let a = DistributionState::from_real(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = DistributionState::from_real(vec![0.0, 0.0, 3.0, 0.0]).unwrap();
        let e = build_ensemble(vec![a.clone()]).unwrap();
        assert_eq!(e.norm(), a.norm());
        let e = build_ensemble(vec![a, b]).unwrap();
        assert!((e.norm().powi(2) - 5.0).abs() < 1e-14);
        let c = DistributionState::from_real(vec![1.0; 4]).unwrap();
        assert!(build_ensemble(vec![c.clone(), c.clone(), c]).is_err());
    }
}

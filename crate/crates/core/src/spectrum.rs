//! Density, density contrast, Fourier modes and power spectra.
//!
//! `δ̃_k = n_gr^{-d} Σ_x δ_x exp(+2πi k·x / n_gr)`, literal indices `k ∈ [0, n_gr)^d`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::Serialize;

use crate::error::{domain, Result};
use crate::grid::PhaseSpaceGrid;
use crate::initcond::{compute_c_values, EnsembleState};
use crate::propagator::DistributionState;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `ρ_x = Σ_v f_(x,v) Δv^d`.
pub fn density(state: &DistributionState, grid: &PhaseSpaceGrid) -> Result<Vec<Complex64>> {
    density_of(state.values(), grid)
}

fn density_of(values: &[Complex64], grid: &PhaseSpaceGrid) -> Result<Vec<Complex64>> {
    if values.len() != grid.len() {
        return domain(format!("state has {} entries, grid has {}", values.len(), grid.len()));
    }
    let ns = grid.n_spatial();
    let w = grid.dv().powi(grid.dim() as i32);
    let mut rho = vec![ZERO; ns];
    for block in values.chunks_exact(ns) {
        for (r, v) in rho.iter_mut().zip(block) {
            *r += v;
        }
    }
    for r in &mut rho {
        *r *= w;
    }
    Ok(rho)
}

/// `δ_x = (ρ_x − ρ̄) / ρ̄` with `ρ̄` the grid mean.
pub fn perturbation(rho: &[Complex64]) -> Result<Vec<Complex64>> {
    if rho.is_empty() {
        return domain("empty density");
    }
    let mean = rho.iter().sum::<Complex64>() / rho.len() as f64;
    if !(mean.re > 0.0) {
        return domain(format!("mean density {mean} is not positive"));
    }
    Ok(rho.iter().map(|r| (r - mean) / mean).collect())
}

/// Calls `f` on every 1D line of a `n^dim` array along `axis`.
fn for_each_line(data: &mut [Complex64], n: usize, dim: usize, axis: usize, mut f: impl FnMut(&mut [Complex64])) {
    let stride = n.pow(axis as u32);
    let total = n.pow(dim as u32);
    let mut line = vec![ZERO; n];
    for base in 0..total {
        if !(base / stride).is_multiple_of(n) {
            continue;
        }
        for (j, l) in line.iter_mut().enumerate() {
            *l = data[base + j * stride];
        }
        f(&mut line);
        for (j, l) in line.iter().enumerate() {
            data[base + j * stride] = *l;
        }
    }
}

/// The positive-exponent, `1/n_gr^d`-normalized DFT over the spatial axes.
pub fn fourier(delta: &[Complex64], grid: &PhaseSpaceGrid) -> Result<Vec<Complex64>> {
    let n = grid.ngr();
    let d = grid.dim();
    if delta.len() != grid.n_spatial() {
        return domain(format!("field has {} samples, expected {}", delta.len(), grid.n_spatial()));
    }
    let mut out = delta.to_vec();
    let fft = FftPlanner::new().plan_fft(n, FftDirection::Inverse);
    for axis in 0..d {
        for_each_line(&mut out, n, d, axis, |line| fft.process(line));
    }
    let scale = (grid.n_spatial() as f64).recip();
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

/// `‖k‖` for literal mode index `spatial`.
pub fn wavenumber(grid: &PhaseSpaceGrid, spatial: usize) -> f64 {
    let n = grid.ngr();
    let mut rest = spatial;
    let mut s = 0.0;
    for _ in 0..grid.dim() {
        let i = (rest % n) as f64;
        s += i * i;
        rest /= n;
    }
    2.0 * PI / grid.box_length() * s.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub rho: Vec<Complex64>,
    pub delta: Vec<Complex64>,
    pub delta_tilde: Vec<Complex64>,
    pub power: Vec<f64>,
    /// `C` of the analyzed state.
    pub c: f64,
    /// The zero mode before it was set to 0.
    pub raw_zero_mode: Complex64,
}

impl SpectrumResult {
    pub fn analyze(state: &DistributionState, grid: &PhaseSpaceGrid) -> Result<Self> {
        let rho = density(state, grid)?;
        let delta = perturbation(&rho)?;
        let mut delta_tilde = fourier(&delta, grid)?;
        let raw_zero_mode = delta_tilde[0];
        delta_tilde[0] = ZERO;
        let power = delta_tilde.iter().map(|v| v.norm_sqr()).collect();
        let c = compute_c_values(state.values())?;
        Ok(Self { rho, delta, delta_tilde, power, c, raw_zero_mode })
    }

    /// `|Σ|δ̃|² − n^{-d} Σ|δ|²|`.
    pub fn parseval_residual(&self) -> f64 {
        let lhs: f64 = self.power.iter().sum();
        let rhs = self.delta.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.delta.len() as f64;
        (lhs - rhs).abs()
    }

    /// `max_k |δ̃(−k) − conj δ̃(k)|`; meaningful for real states.
    pub fn conjugate_symmetry_residual(&self, grid: &PhaseSpaceGrid) -> f64 {
        let n = grid.ngr();
        (0..self.delta_tilde.len())
            .map(|k| {
                let mut rest = k;
                let mut neg = 0;
                let mut stride = 1;
                for _ in 0..grid.dim() {
                    neg += ((n - rest % n) % n) * stride;
                    rest /= n;
                    stride *= n;
                }
                (self.delta_tilde[neg] - self.delta_tilde[k].conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Mode index with the largest power among `candidates`.
    pub fn dominant_mode(&self, candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
        candidates
            .into_iter()
            .max_by(|&a, &b| self.power[a].total_cmp(&self.power[b]))
    }
}

/// `Σ |δ̃|²` over literal modes with `k1 ≤ ‖k‖ ≤ k2`.
pub fn shell_power(power: &[f64], grid: &PhaseSpaceGrid, k1: f64, k2: f64) -> Result<f64> {
    if !(0.0 <= k1 && k1 <= k2) {
        return domain(format!("shell bounds must satisfy 0 <= k1 <= k2, got [{k1}, {k2}]"));
    }
    Ok(shell_modes(grid, k1, k2).map(|i| power[i]).sum())
}

pub fn shell_modes(grid: &PhaseSpaceGrid, k1: f64, k2: f64) -> impl Iterator<Item = usize> + '_ {
    // widen by a few ulps so that bounds given as exact grid wavenumbers are inclusive
    let lo = k1 * (1.0 - 4.0 * f64::EPSILON);
    let hi = k2 * (1.0 + 4.0 * f64::EPSILON);
    (0..grid.n_spatial()).filter(move |&i| {
        let k = wavenumber(grid, i);
        lo <= k && k <= hi
    })
}

fn qft_matrix(n: usize) -> Vec<Complex64> {
    let s = (n as f64).sqrt().recip();
    (0..n * n)
        .map(|jl| {
            let (j, l) = (jl / n, jl % n);
            Complex64::from_polar(s, 2.0 * PI * ((j * l) % n) as f64 / n as f64)
        })
        .collect()
}

fn hadamard_matrix(n: usize) -> Vec<Complex64> {
    let s = (n as f64).sqrt().recip();
    (0..n * n)
        .map(|jl| {
            let (j, l) = (jl / n, jl % n);
            let sign = if (j & l).count_ones() % 2 == 0 { s } else { -s };
            Complex64::new(sign, 0.0)
        })
        .collect()
}

/// Amplitudes `⟨i_k, 0_v| W |f/‖f‖⟩` for every spatial mode `i_k`, where
/// `W` is the QFT on each position axis and the Hadamard transform on each
/// velocity axis, applied as dense per-axis matrices.
pub fn w_amplitudes(values: &[Complex64], grid: &PhaseSpaceGrid) -> Result<Vec<Complex64>> {
    if values.len() != grid.len() {
        return domain(format!("state has {} entries, grid has {}", values.len(), grid.len()));
    }
    let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return domain("W amplitudes are undefined for a zero state");
    }
    let n = grid.ngr();
    let d = grid.dim();
    let q = qft_matrix(n);
    let h = hadamard_matrix(n);
    let mut psi: Vec<Complex64> = values.iter().map(|v| v / norm).collect();
    let mut tmp = vec![ZERO; n];
    for axis in 0..2 * d {
        let m = if axis < d { &q } else { &h };
        for_each_line(&mut psi, n, 2 * d, axis, |line| {
            for (j, t) in tmp.iter_mut().enumerate() {
                *t = (0..n).map(|l| m[j * n + l] * line[l]).sum();
            }
            line.copy_from_slice(&tmp);
        });
    }
    psi.truncate(grid.n_spatial());
    Ok(psi)
}

/// `max_{i_k ≠ 0} | |⟨i_k, 0|W|f⟩|² − C |δ̃_{i_k}|² |`.
pub fn w_operator_check(state: &DistributionState, grid: &PhaseSpaceGrid, c: f64) -> Result<f64> {
    let spec = SpectrumResult::analyze(state, grid)?;
    let amp = w_amplitudes(state.values(), grid)?;
    Ok((1..amp.len())
        .map(|i| (amp[i].norm_sqr() - c * spec.power[i]).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsemblePower {
    /// `(1/n_IV) Σ_i |δ̃⁽ⁱ⁾|²` per mode.
    pub mean: Vec<f64>,
    /// `Σ_{i_IV} |⟨i_IV, i_k, 0|W|F⟩|² / C_ens` from the block vector.
    pub amplitude_route: Vec<f64>,
    /// `n_IV Σ_i |S_i|² |δ̃⁽ⁱ⁾|² / |Σ_i S_i|²` with `S_i = Σ f⁽ⁱ⁾`; equals
    /// `amplitude_route` always and `mean` when all `S_i` coincide.
    pub weighted_mean: Vec<f64>,
    pub c_ensemble: f64,
}

pub fn ensemble_power(ens: &EnsembleState, grid: &PhaseSpaceGrid) -> Result<EnsemblePower> {
    let n_iv = ens.n_iv();
    let ns = grid.n_spatial();
    let specs = ens
        .realizations()
        .iter()
        .map(|s| SpectrumResult::analyze(s, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; ns];
    for s in &specs {
        for (m, p) in mean.iter_mut().zip(&s.power) {
            *m += p / n_iv as f64;
        }
    }

    let big = ens.vector();
    let c_ensemble = compute_c_values(&big)?;
    let big_norm = big.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut amplitude_route = vec![0.0; ns];
    for block in big.chunks_exact(grid.len()) {
        let bn = block.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if bn == 0.0 {
            continue;
        }
        // amplitudes of the normalized block, rescaled to the full register
        let amp = w_amplitudes(block, grid)?;
        for (a, w) in amplitude_route.iter_mut().zip(&amp) {
            *a += (w * (bn / big_norm)).norm_sqr() / c_ensemble;
        }
    }
    amplitude_route[0] = 0.0;

    let sums: Vec<Complex64> = ens.realizations().iter().map(|s| s.sum()).collect();
    let total = sums.iter().sum::<Complex64>().norm_sqr();
    let mut weighted_mean = vec![0.0; ns];
    for (s, spec) in sums.iter().zip(&specs) {
        for (w, p) in weighted_mean.iter_mut().zip(&spec.power) {
            *w += n_iv as f64 * s.norm_sqr() * p / total;
        }
    }
    Ok(EnsemblePower { mean, amplitude_route, weighted_mean, c_ensemble })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_dft(x: &[Complex64], grid: &PhaseSpaceGrid) -> Vec<Complex64> {
        let n = grid.ngr();
        let d = grid.dim();
        let idx = |mut i: usize| {
            (0..d)
                .map(|_| {
                    let v = i % n;
                    i /= n;
                    v
                })
                .collect::<Vec<_>>()
        };
        (0..x.len())
            .map(|k| {
                let kk = idx(k);
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let jj = idx(j);
                        let ph: usize = kk.iter().zip(&jj).map(|(a, b)| a * b).sum();
                        v * Complex64::from_polar(1.0, 2.0 * PI * (ph % n) as f64 / n as f64)
                    })
                    .sum::<Complex64>()
                    / x.len() as f64
            })
            .collect()
    }

    fn random_complex(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| Complex64::new(rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5))).collect()
    }

    #[test]
    fn fft_matches_direct_dft() {
        for (d, n) in [(1, 8), (2, 4), (3, 4), (1, 16)] {
            let g = PhaseSpaceGrid::new(d, n, 2.0, 1.0).unwrap();
            let x = random_complex(g.n_spatial(), n as u64);
            let a = fourier(&x, &g).unwrap();
            let b = direct_dft(&x, &g);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn cosine_mode() {
        let g = PhaseSpaceGrid::new(1, 8, 2.0, 1.0).unwrap();
        let x: Vec<Complex64> = (0..8).map(|i| Complex64::new((2.0 * PI * i as f64 / 8.0).cos(), 0.0)).collect();
        let t = fourier(&x, &g).unwrap();
        for (k, v) in t.iter().enumerate() {
            let want = if k == 1 || k == 7 { 0.5 } else { 0.0 };
            assert!((v - want).norm() < 1e-15, "{k}: {v}");
        }
    }

    #[test]
    fn density_and_perturbation() {
        let g = PhaseSpaceGrid::new(1, 4, 2.0, 1.0).unwrap();
        let s = DistributionState::from_real(vec![3.0; 16]).unwrap();
        let rho = density(&s, &g).unwrap();
        for r in &rho {
            assert!((r.re - 3.0 * 4.0 * g.dv()).abs() < 1e-15);
        }
        assert!(perturbation(&rho).unwrap().iter().all(|d| d.norm() == 0.0));

        let mut one = vec![0.0; 16];
        one[2 + 4 * 3] = 1.0;
        let rho = density(&DistributionState::from_real(one).unwrap(), &g).unwrap();
        assert_eq!(rho[2].re, g.dv());
        assert_eq!(rho[0].re, 0.0);

        let g2 = PhaseSpaceGrid::new(1, 2, 2.0, 1.0).unwrap();
        let _ = g2;
        let d = perturbation(&[Complex64::new(2.0, 0.0), ZERO]).unwrap();
        assert_eq!(d, vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        assert!(perturbation(&[ZERO, ZERO]).is_err());
    }

    #[test]
    fn spectrum_invariants() {
        let g = PhaseSpaceGrid::new(2, 4, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = DistributionState::from_real((0..g.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let r = SpectrumResult::analyze(&s, &g).unwrap();
        assert!(r.raw_zero_mode.norm() < 1e-12);
        assert!(r.parseval_residual() < 1e-12);
        assert!(r.conjugate_symmetry_residual(&g) < 1e-12);
        let all = shell_power(&r.power, &g, 0.0, f64::INFINITY).unwrap();
        assert_eq!(all, r.total_power());
        assert_eq!(shell_power(&r.power, &g, 0.0, 0.0).unwrap(), 0.0);
        assert!(shell_power(&r.power, &g, 2.0, 1.0).is_err());
    }

    #[test]
    fn shell_bounds_are_inclusive() {
        let g = PhaseSpaceGrid::new(1, 8, 2.0, 1.0).unwrap();
        let k1 = wavenumber(&g, 1);
        let modes: Vec<usize> = shell_modes(&g, k1, k1).collect();
        assert_eq!(modes, vec![1]);
        let modes: Vec<usize> = shell_modes(&g, k1, wavenumber(&g, 3)).collect();
        assert_eq!(modes, vec![1, 2, 3]);
    }

    #[test]
    fn w_identity_random_complex() {
        for (d, n, seed) in [(1, 8, 1), (1, 4, 2), (2, 4, 3)] {
            let g = PhaseSpaceGrid::new(d, n, 2.0, 1.0).unwrap();
            let s = DistributionState::new(random_complex(g.len(), seed), 0.0).unwrap();
            let c = compute_c_values(s.values()).unwrap();
            assert!(w_operator_check(&s, &g, c).unwrap() < 1e-12);
        }
    }

    #[test]
    fn hadamard_is_orthogonal() {
        let h = hadamard_matrix(8);
        for i in 0..8 {
            for j in 0..8 {
                let dot: Complex64 = (0..8).map(|k| h[i * 8 + k] * h[j * 8 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot.re - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ensemble_of_identical_states() {
        let g = PhaseSpaceGrid::new(1, 4, 2.0, 1.0).unwrap();
        let s = DistributionState::new(random_complex(g.len(), 8), 0.0).unwrap();
        let single = SpectrumResult::analyze(&s, &g).unwrap();
        let ens = crate::initcond::build_ensemble(vec![s.clone(); 4]).unwrap();
        let p = ensemble_power(&ens, &g).unwrap();
        for k in 1..4 {
            assert!((p.mean[k] - single.power[k]).abs() < 1e-15);
            assert!((p.amplitude_route[k] - single.power[k]).abs() < 1e-12 * single.power[k].max(1e-3));
        }
    }
}

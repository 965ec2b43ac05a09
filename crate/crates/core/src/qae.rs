//! Amplitude-estimation emulator and the end-to-end power-spectrum estimator.
//!
//! Measurements are drawn from the exact Grover statistics: after `k`
//! iterations the good outcome has probability `sin²((2k+1)θ)`, `a = sin²θ`.
//! Every run reports oracle calls as `Σ (2k+1) · shots`.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::forcefield::ForceField;
use crate::grid::PhaseSpaceGrid;
use crate::propagator::{evolve, Backend, DistributionState};
use crate::spectrum::{shell_modes, w_amplitudes, SpectrumResult};

/// Failure probability of a single run before median amplification.
const BASE_FAILURE: f64 = 0.1;
/// One-sided normal quantile at `1 − BASE_FAILURE / 2`.
const Z_BASE: f64 = 1.644_853_626_951_472_2;
/// Slack on the asymptotic MLE standard error.
const MLE_SAFETY: f64 = 1.5;
const MLE_MIN_SHOTS: u64 = 32;
const IQAE_SHOTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    SamplingMle,
    Iterative,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampling-mle" | "mle" => Ok(Self::SamplingMle),
            "iterative" | "iqae" => Ok(Self::Iterative),
            other => Err(Error::Config(format!("unknown QAE scheme '{other}' (sampling-mle|iterative)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QaeConfig {
    pub eps: f64,
    pub delta_fail: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Pass the exact amplitude through instead of sampling.
    pub deterministic: bool,
}

impl QaeConfig {
    pub fn new(eps: f64, delta_fail: f64, seed: u64, scheme: Scheme) -> Result<Self> {
        let cfg = Self { eps, delta_fail, seed, scheme, deterministic: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return domain(format!("QAE accuracy must lie in (0, 1/2), got {}", self.eps));
        }
        if !(self.delta_fail > 0.0 && self.delta_fail < 1.0) {
            return domain(format!("failure probability must lie in (0, 1), got {}", self.delta_fail));
        }
        Ok(())
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QaeResult {
    pub estimate: f64,
    pub truth: f64,
    pub oracle_calls: u64,
    pub success: bool,
    /// Independent runs combined by the median.
    pub runs: usize,
}

/// Smallest odd `K` with `P(Bin(K, p) ≥ (K+1)/2) ≤ delta`.
pub fn median_runs(p: f64, delta: f64) -> usize {
    let mut k = 1;
    loop {
        if binomial_upper_tail(k, p, k.div_ceil(2)) <= delta {
            return k;
        }
        k += 2;
    }
}

fn binomial_upper_tail(n: usize, p: f64, m: usize) -> f64 {
    let mut coef = 1.0_f64;
    let mut total = 0.0;
    for j in 0..=n {
        if j > 0 {
            coef *= (n - j + 1) as f64 / j as f64;
        }
        if j >= m {
            total += coef * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32);
        }
    }
    total
}

/// RNG for trial `trial` of a batch seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy)]
struct Level {
    k: u64,
    shots: u64,
    hits: u64,
}

fn good_probability(k: u64, theta: f64) -> f64 {
    let s = ((2 * k + 1) as f64 * theta).sin();
    (s * s).clamp(0.0, 1.0)
}

fn measure(k: u64, shots: u64, theta: f64, rng: &mut ChaCha8Rng) -> u64 {
    let p = good_probability(k, theta);
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        shots
    } else {
        Binomial::new(shots, p).expect("valid binomial").sample(rng)
    }
}

fn log_likelihood(levels: &[Level], theta: f64) -> f64 {
    let mut ll = 0.0;
    for l in levels {
        let p = good_probability(l.k, theta);
        if l.hits > 0 {
            ll += l.hits as f64 * p.ln();
        }
        if l.shots > l.hits {
            ll += (l.shots - l.hits) as f64 * (1.0 - p).ln();
        }
    }
    ll
}

/// Maximizes the likelihood over `[lo, hi]`: grid scan, then golden section.
/// Endpoints are candidates, so boundary maxima are returned exactly.
fn maximize_likelihood(levels: &[Level], lo: f64, hi: f64, points: usize) -> f64 {
    let ll = |t: f64| log_likelihood(levels, t);
    let mut best = (lo, ll(lo));
    let h = (hi - lo) / points as f64;
    for i in 1..=points {
        let t = if i == points { hi } else { lo + i as f64 * h };
        let v = ll(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    if h <= 0.0 {
        return best.0;
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > 1e-13 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = ll(d);
        }
    }
    let t = 0.5 * (a + b);
    let v = ll(t);
    if v > best.1 {
        t
    } else {
        best.0
    }
}

/// Grover powers and shots per power for one maximum-likelihood run.
///
/// Per-shot Fisher information about `θ` at power `k` is `4(2k+1)²`, and
/// `|da/dθ| ≤ 1`, so the run targets total information `(1.5 z / ε)²`.
pub fn mle_schedule(eps: f64) -> (Vec<u64>, u64) {
    let target = (MLE_SAFETY * Z_BASE / eps).powi(2);
    let mut powers = vec![0u64];
    let info = |ks: &[u64]| ks.iter().map(|k| 4.0 * ((2 * k + 1) as f64).powi(2)).sum::<f64>();
    loop {
        let next = match *powers.last().expect("non-empty") {
            0 => 1,
            k => 2 * k,
        };
        let mut longer = powers.clone();
        longer.push(next);
        // grow the schedule while the minimum shot count still suffices
        if (target / info(&longer)).ceil() as u64 >= MLE_MIN_SHOTS {
            powers = longer;
        } else {
            break;
        }
    }
    let shots = ((target / info(&powers)).ceil() as u64).max(MLE_MIN_SHOTS);
    (powers, shots)
}

fn mle_run(theta: f64, eps: f64, rng: &mut ChaCha8Rng) -> (f64, u64) {
    let (powers, shots) = mle_schedule(eps);
    let levels: Vec<Level> = powers
        .iter()
        .map(|&k| Level { k, shots, hits: measure(k, shots, theta, rng) })
        .collect();
    let calls = powers.iter().map(|k| (2 * k + 1) * shots).sum();
    let k_max = *powers.last().expect("non-empty");
    let t = maximize_likelihood(&levels, 0.0, FRAC_PI_2, 16 * (2 * k_max as usize + 1));
    (t.sin().powi(2), calls)
}

/// Next Grover power for the iterative scheme: the largest `K = 4k+2`
/// (at least doubling the current one) keeping `Kθ_l` and `Kθ_u` in the
/// same half-plane. Returns `(k, upper_half)`.
fn find_next_k(k: u64, up: bool, lo: f64, hi: f64) -> (u64, bool) {
    use std::f64::consts::{PI, TAU};
    let k_cur = 4 * k + 2;
    let width = hi - lo;
    if width <= 0.0 {
        return (k, up);
    }
    let k_max = (PI / width).floor() as u64;
    if k_max < 2 {
        return (k, up);
    }
    let mut kk = k_max - (k_max - 2) % 4;
    while kk >= 2 * k_cur {
        let a = (kk as f64 * lo).rem_euclid(TAU);
        let b = (kk as f64 * hi).rem_euclid(TAU);
        if a <= b && b <= PI {
            return ((kk - 2) / 4, true);
        }
        if a <= b && a >= PI {
            return ((kk - 2) / 4, false);
        }
        if kk < 4 {
            break;
        }
        kk -= 4;
    }
    (k, up)
}

fn iterative_run(theta: f64, eps: f64, alpha: f64, rng: &mut ChaCha8Rng) -> (f64, u64) {
    use std::f64::consts::TAU;
    let rounds = (std::f64::consts::PI / (8.0 * eps)).log2().ceil().max(1.0);
    let (mut lo, mut hi) = (0.0_f64, FRAC_PI_2);
    let (mut k, mut up) = (0u64, true);
    let mut levels: Vec<Level> = Vec::new();
    let mut calls = 0u64;
    let amp = |t: f64| t.sin().powi(2);
    let mut guard = 0;

    while amp(hi) - amp(lo) >= 2.0 * eps {
        guard += 1;
        if guard > 10_000 {
            break;
        }
        let (nk, nup) = find_next_k(k, up, lo, hi);
        k = nk;
        up = nup;
        let hits = measure(k, IQAE_SHOTS, theta, rng);
        calls += (2 * k + 1) * IQAE_SHOTS;
        let level = match levels.iter_mut().find(|l| l.k == k) {
            Some(l) => {
                l.shots += IQAE_SHOTS;
                l.hits += hits;
                *l
            }
            None => {
                let l = Level { k, shots: IQAE_SHOTS, hits };
                levels.push(l);
                l
            }
        };
        let p = level.hits as f64 / level.shots as f64;
        let half = ((2.0 * rounds / alpha).ln() / (2.0 * level.shots as f64)).sqrt();
        let (p_lo, p_hi) = ((p - half).max(0.0), (p + half).min(1.0));
        let kk = (4 * k + 2) as f64;
        let (t_lo, t_hi) = if up {
            ((1.0 - 2.0 * p_lo).acos(), (1.0 - 2.0 * p_hi).acos())
        } else {
            (TAU - (1.0 - 2.0 * p_hi).acos(), TAU - (1.0 - 2.0 * p_lo).acos())
        };
        let base = (kk * lo / TAU).floor() * TAU;
        let new_lo = (base + t_lo) / kk;
        let new_hi = (base + t_hi) / kk;
        lo = lo.max(new_lo);
        hi = hi.min(new_hi);
        if lo > hi {
            // inconsistent statistics; fall back to the latest interval
            lo = new_lo.max(0.0);
            hi = new_hi.min(FRAC_PI_2);
        }
    }
    let t = maximize_likelihood(&levels, lo, hi, 64);
    (amp(t), calls)
}

/// Estimates `a` to within `cfg.eps` with failure probability at most
/// `cfg.delta_fail`, using randomness from `rng`.
pub fn qae_estimate_with(a: f64, cfg: &QaeConfig, rng: &mut ChaCha8Rng) -> Result<QaeResult> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("amplitude {a} is not in [0, 1]"));
    }
    let runs = median_runs(BASE_FAILURE, cfg.delta_fail);
    if cfg.deterministic {
        let (powers, shots) = mle_schedule(cfg.eps);
        let calls: u64 = powers.iter().map(|k| (2 * k + 1) * shots).sum();
        return Ok(QaeResult { estimate: a, truth: a, oracle_calls: calls * runs as u64, success: true, runs });
    }
    let theta = a.sqrt().asin();
    let mut estimates = Vec::with_capacity(runs);
    let mut calls = 0;
    for _ in 0..runs {
        let (e, c) = match cfg.scheme {
            Scheme::SamplingMle => mle_run(theta, cfg.eps, rng),
            // the final interval has width < eps, so every point in it is eps-accurate
            Scheme::Iterative => iterative_run(theta, 0.5 * cfg.eps, BASE_FAILURE, rng),
        };
        estimates.push(e);
        calls += c;
    }
    estimates.sort_by(f64::total_cmp);
    let estimate = estimates[runs / 2];
    Ok(QaeResult { estimate, truth: a, oracle_calls: calls, success: (estimate - a).abs() <= cfg.eps, runs })
}

/// Runs trial `0` of the batch seeded by `cfg.seed`.
pub fn qae_estimate(a: f64, cfg: &QaeConfig) -> Result<QaeResult> {
    qae_estimate_with(a, cfg, &mut trial_rng(cfg.seed, 0))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_oracle_calls: f64,
}

pub fn run_trials(a: f64, cfg: &QaeConfig, trials: usize) -> Result<(Vec<QaeResult>, TrialSummary)> {
    let results = (0..trials as u64)
        .map(|t| qae_estimate_with(a, cfg, &mut trial_rng(cfg.seed, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok((results.clone(), summarize(results.iter().map(|r| (r.success, r.oracle_calls)))))
}

fn summarize(it: impl Iterator<Item = (bool, u64)>) -> TrialSummary {
    let (mut n, mut fails, mut calls) = (0usize, 0usize, 0f64);
    for (ok, c) in it {
        n += 1;
        fails += usize::from(!ok);
        calls += c as f64;
    }
    TrialSummary {
        trials: n,
        failures: fails,
        failure_rate: if n > 0 { fails as f64 / n as f64 } else { 0.0 },
        mean_oracle_calls: if n > 0 { calls / n as f64 } else { 0.0 },
    }
}

/// `a = C |δ̃_target|²` from the dense spectrum of `state`.
pub fn exact_amplitude(state: &DistributionState, grid: &PhaseSpaceGrid, target: usize) -> Result<f64> {
    if target == 0 {
        return domain("the zero wavevector is not a valid target");
    }
    if target >= grid.n_spatial() {
        return domain(format!("target mode {target} outside [1, {})", grid.n_spatial()));
    }
    let spec = SpectrumResult::analyze(state, grid)?;
    Ok((spec.c * spec.power[target]).clamp(0.0, 1.0))
}

/// How the accuracy target is split between evolution and amplitude estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// Evolution tolerance as a fraction of `C ε`.
    pub evolution: f64,
    /// QAE accuracy as a fraction of `C ε`.
    pub estimation: f64,
}

impl Default for ErrorBudget {
    fn default() -> Self {
        Self { evolution: 0.25, estimation: 0.25 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub estimate: f64,
    pub exact: f64,
    pub oracle_calls: u64,
    pub success: bool,
}

/// Everything Algorithm 1 needs before amplitude estimation: the measured
/// probability from the evolved state and the exact reference value.
#[derive(Debug, Clone, Serialize)]
pub struct PreparedEstimate {
    pub c: f64,
    pub eps: f64,
    pub qae_eps: f64,
    pub evolution_tol: f64,
    /// Probability of the marked outcome(s) after `W`.
    pub probability: f64,
    /// `|δ̃|²` (or shell sum) from dense evolution and the direct spectrum.
    pub exact: f64,
    pub modes: Vec<usize>,
}

/// Problem description shared by the single-mode and shell estimators.
#[derive(Debug, Clone, Copy)]
pub struct EvolutionProblem<'a> {
    pub state0: &'a DistributionState,
    pub grid: &'a PhaseSpaceGrid,
    pub ff: &'a ForceField,
    pub tmax: f64,
    pub nt: usize,
    pub backend: Backend,
}

impl PreparedEstimate {
    fn prepare(
        problem: &EvolutionProblem<'_>,
        modes: Vec<usize>,
        c: f64,
        eps: f64,
        budget: ErrorBudget,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return domain(format!("accuracy must be positive, got {eps}"));
        }
        if !(c > 0.0 && c <= 1.0 + 1e-12) {
            return domain(format!("C must lie in (0, 1], got {c}"));
        }
        let mut qae_eps = budget.estimation * c * eps;
        if qae_eps >= 0.5 {
            log::warn!("QAE accuracy {qae_eps} is degenerate; clamped below 1/2");
            qae_eps = 0.5 - 1e-9;
        }
        let evolution_tol = budget.evolution * c * eps;
        let EvolutionProblem { state0, grid, ff, tmax, nt, backend } = *problem;
        let (evolved, _) = evolve(state0, grid, ff, tmax, nt, backend, evolution_tol)?;
        let amp = w_amplitudes(evolved.values(), grid)?;
        let probability = modes.iter().map(|&m| amp[m].norm_sqr()).sum::<f64>().clamp(0.0, 1.0);

        let exact = if backend == Backend::Dense {
            spectrum_sum(&evolved, grid, &modes)?
        } else {
            let (dense, _) = evolve(state0, grid, ff, tmax, nt, Backend::Dense, 0.0)?;
            spectrum_sum(&dense, grid, &modes)?
        };
        Ok(Self { c, eps, qae_eps, evolution_tol, probability, exact, modes })
    }

    /// Algorithm 1 for a single nonzero mode (flat spatial index).
    pub fn single_mode(
        problem: &EvolutionProblem<'_>,
        target: usize,
        c: f64,
        eps: f64,
        budget: ErrorBudget,
    ) -> Result<Self> {
        if target == 0 {
            return domain("the zero wavevector is not a valid target");
        }
        if target >= problem.grid.n_spatial() {
            return domain(format!("target mode {target} outside [1, {})", problem.grid.n_spatial()));
        }
        Self::prepare(problem, vec![target], c, eps, budget)
    }

    /// Algorithm 1 for the shell `k1 ≤ ‖k‖ ≤ k2` (zero mode excluded).
    pub fn shell(
        problem: &EvolutionProblem<'_>,
        k1: f64,
        k2: f64,
        c: f64,
        eps: f64,
        budget: ErrorBudget,
    ) -> Result<Self> {
        if !(0.0 <= k1 && k1 <= k2) {
            return domain(format!("shell bounds must satisfy 0 <= k1 <= k2, got [{k1}, {k2}]"));
        }
        let modes: Vec<usize> = shell_modes(problem.grid, k1, k2).filter(|&m| m != 0).collect();
        if modes.is_empty() {
            return domain(format!("shell [{k1}, {k2}] contains no nonzero mode"));
        }
        Self::prepare(problem, modes, c, eps, budget)
    }

    /// One seeded run of amplitude estimation on the prepared probability.
    pub fn run(&self, cfg: &QaeConfig, trial: u64) -> Result<EstimateResult> {
        let qcfg = cfg.with_eps(self.qae_eps);
        let r = qae_estimate_with(self.probability, &qcfg, &mut trial_rng(cfg.seed, trial))?;
        let estimate = r.estimate / self.c;
        Ok(EstimateResult {
            estimate,
            exact: self.exact,
            oracle_calls: r.oracle_calls,
            success: (estimate - self.exact).abs() <= self.eps,
        })
    }

    pub fn run_trials(&self, cfg: &QaeConfig, trials: usize) -> Result<(Vec<EstimateResult>, TrialSummary)> {
        let results = (0..trials as u64).map(|t| self.run(cfg, t)).collect::<Result<Vec<_>>>()?;
        Ok((results.clone(), summarize(results.iter().map(|r| (r.success, r.oracle_calls)))))
    }
}

fn spectrum_sum(state: &DistributionState, grid: &PhaseSpaceGrid, modes: &[usize]) -> Result<f64> {
    let spec = SpectrumResult::analyze(state, grid)?;
    Ok(modes.iter().map(|&m| spec.power[m]).sum())
}

/// Algorithm 1: estimate `|δ̃_target|²` to accuracy `cfg.eps`.
pub fn algorithm1(problem: &EvolutionProblem<'_>, target: usize, c: f64, cfg: &QaeConfig) -> Result<EstimateResult> {
    PreparedEstimate::single_mode(problem, target, c, cfg.eps, ErrorBudget::default())?.run(cfg, 0)
}

/// Algorithm 1 on the shell-summed probability.
pub fn algorithm1_shell(
    problem: &EvolutionProblem<'_>,
    k1: f64,
    k2: f64,
    c: f64,
    cfg: &QaeConfig,
) -> Result<EstimateResult> {
    PreparedEstimate::shell(problem, k1, k2, c, cfg.eps, ErrorBudget::default())?.run(cfg, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(eps: f64, scheme: Scheme) -> QaeConfig {
        QaeConfig::new(eps, 0.05, 17, scheme).unwrap()
    }

    #[test]
    fn median_run_count() {
        assert_eq!(median_runs(0.1, 0.05), 3);
        assert_eq!(median_runs(0.1, 0.5), 1);
        assert!(median_runs(0.1, 1e-6) > 3);
        assert!((binomial_upper_tail(3, 0.1, 2) - 0.028).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(QaeConfig::new(0.0, 0.05, 0, Scheme::SamplingMle).is_err());
        assert!(QaeConfig::new(0.5, 0.05, 0, Scheme::SamplingMle).is_err());
        assert!(QaeConfig::new(0.1, 1.0, 0, Scheme::SamplingMle).is_err());
        assert!("mle".parse::<Scheme>().is_ok());
        assert!("qpe".parse::<Scheme>().is_err());
    }

    #[test]
    fn extreme_amplitudes_are_exact() {
        for scheme in [Scheme::SamplingMle, Scheme::Iterative] {
            for t in 0..20 {
                let c = cfg(0.02, scheme);
                let r0 = qae_estimate_with(0.0, &c, &mut trial_rng(3, t)).unwrap();
                let r1 = qae_estimate_with(1.0, &c, &mut trial_rng(3, t)).unwrap();
                assert_eq!(r0.estimate, 0.0, "{scheme:?}");
                assert_eq!(r1.estimate, 1.0, "{scheme:?}");
                assert!(r0.oracle_calls > 0 && r1.oracle_calls > 0);
            }
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let c = cfg(0.02, Scheme::Iterative);
        assert_eq!(qae_estimate(0.3, &c).unwrap(), qae_estimate(0.3, &c).unwrap());
        let a = qae_estimate_with(0.3, &c, &mut trial_rng(1, 0)).unwrap();
        let b = qae_estimate_with(0.3, &c, &mut trial_rng(1, 1)).unwrap();
        assert_ne!(a.estimate, b.estimate);
    }

    #[test]
    fn both_schemes_meet_contract() {
        for scheme in [Scheme::SamplingMle, Scheme::Iterative] {
            let (_, s) = run_trials(0.25, &cfg(0.02, scheme), 200).unwrap();
            assert!(s.failure_rate <= 0.05, "{scheme:?}: {s:?}");
        }
    }

    #[test]
    fn schedule_grows_with_precision() {
        let (p1, n1) = mle_schedule(0.04);
        let (p2, n2) = mle_schedule(0.005);
        assert!(n1 >= MLE_MIN_SHOTS && n2 >= MLE_MIN_SHOTS);
        assert!(p2.len() > p1.len());
        assert_eq!(p2[..4], [0, 1, 2, 4]);
    }

    #[test]
    fn next_k_keeps_half_plane() {
        let (k, up) = find_next_k(0, true, 0.30, 0.34);
        let kk = (4 * k + 2) as f64;
        let a = (kk * 0.30).rem_euclid(std::f64::consts::TAU);
        let b = (kk * 0.34).rem_euclid(std::f64::consts::TAU);
        assert!(k > 0);
        assert!(a <= b);
        assert_eq!(up, b <= std::f64::consts::PI);
    }

    #[test]
    fn deterministic_passthrough() {
        let mut c = cfg(0.01, Scheme::SamplingMle);
        c.deterministic = true;
        let r = qae_estimate(0.123, &c).unwrap();
        assert_eq!(r.estimate, 0.123);
        assert!(r.oracle_calls > 0);
    }
}

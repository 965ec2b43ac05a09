//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use num_complex::Complex64;
use qvlasov::forcefield::{sample_analytic, AnalyticForce, ForceEnsemble, ForceField};
use qvlasov::grid::PhaseSpaceGrid;
use qvlasov::hamiltonian::{assemble, hmax_bound, verify_oracles, SparseHamiltonian};
use qvlasov::initcond::{
    build_ensemble, compute_c, compute_c_semianalytic, fermi_dirac_state, maxwell_demo, perturbed_maxwell,
    FermiDiracParams, PerturbationField,
};
use qvlasov::propagator::{evolve, Backend, DistributionState, EvolutionReport};
use qvlasov::qae::{run_trials, ErrorBudget, EvolutionProblem, PreparedEstimate, QaeConfig, Scheme};
use qvlasov::resources::{theorem1_queries, theorem2_totals, two_point_exponent, ResourceParams};
use qvlasov::spectrum::{ensemble_power, w_operator_check, SpectrumResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Check = fn() -> Result<Verdict, String>;

struct Demo {
    f0: DistributionState,
    ft: DistributionState,
    report: EvolutionReport,
    spec: SpectrumResult,
}

fn demo() -> &'static Demo {
    static DEMO: OnceLock<Demo> = OnceLock::new();
    DEMO.get_or_init(|| {
        let grid = PhaseSpaceGrid::new(1, 64, 2.0, 1.0).unwrap();
        let ff = sample_analytic(&AnalyticForce::new(-1.0, PI), &grid, 8).unwrap();
        let f0 = maxwell_demo(&grid, 0.1).unwrap();
        let (ft, report) = evolve(&f0, &grid, &ff, 0.2, 8, Backend::Dense, 0.0).unwrap();
        let spec = SpectrumResult::analyze(&ft, &grid).unwrap();
        Demo { f0, ft, report, spec }
    })
}

fn random_field(grid: &PhaseSpaceGrid, nt: usize, amp: f64, rng: &mut ChaCha8Rng) -> ForceField {
    let n = nt * grid.dim() * grid.n_spatial();
    let samples = (0..n).map(|_| rng.gen_range(-amp..amp)).collect();
    ForceField::from_samples(grid.dim(), grid.ngr(), nt, samples).unwrap()
}

fn assembled(grid: &PhaseSpaceGrid, ff: &ForceField) -> Vec<SparseHamiltonian> {
    (0..ff.nt()).map(|i| assemble(grid, ff, i).unwrap()).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c1a_demo_delta_extrema() -> Result<Verdict, String> {
    let d = demo();
    let delta: Vec<f64> = d.spec.delta.iter().map(|z| z.re).collect();
    let argmax = (0..delta.len()).max_by(|&a, &b| delta[a].total_cmp(&delta[b])).unwrap();
    let argmin = (0..delta.len()).min_by(|&a, &b| delta[a].total_cmp(&delta[b])).unwrap();
    let min_ok = argmin == 0 || argmin >= 61;
    Ok(verdict(
        argmax == 32 && min_ok,
        format!(
            "argmax δ at index {argmax} (want 32), argmin at {argmin} (want 0 or near 63); δ[0]={:.4e} δ[32]={:.4e}",
            delta[0], delta[32]
        ),
    ))
}

fn c1b_demo_dominant_mode() -> Result<Verdict, String> {
    let d = demo();
    let m = d.spec.dominant_mode(1..=32).unwrap();
    Ok(verdict(m == 1, format!("argmax |δ̃|² over [1, 32] is {m}")))
}

fn c1c_demo_mode_ratio() -> Result<Verdict, String> {
    let d = demo();
    let p1 = d.spec.power[1];
    let (worst, pw) = (2..=32)
        .map(|i| (i, d.spec.power[i]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let ratio = p1 / pw;
    Ok(verdict(
        ratio >= 10.0,
        format!("|δ̃₁|² = {p1:.4e}, next largest mode {worst} at {pw:.4e}, ratio {ratio:.1}"),
    ))
}

fn c2_unitarity() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut cases = Vec::new();
    for n in [4, 8, 16] {
        for _ in 0..4 {
            cases.push((1, n, 3));
        }
    }
    for _ in 0..7 {
        cases.push((2, 4, 3));
    }
    cases.push((2, 8, 1));
    let mut worst = 0.0_f64;
    for &(d, n, nt) in &cases {
        let grid = PhaseSpaceGrid::new(d, n, 2.0, 1.0).map_err(err)?;
        let ff = random_field(&grid, nt, 1.0, &mut rng);
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f0 = DistributionState::from_real(vals).map_err(err)?;
        let (ft, _) = evolve(&f0, &grid, &ff, 0.5, nt, Backend::Dense, 0.0).map_err(err)?;
        worst = worst.max((ft.norm() / f0.norm() - 1.0).abs());
    }
    Ok(verdict(worst <= 1e-12, format!("{} cases, max |‖f(T)‖/‖f(0)‖ − 1| = {worst:.2e}", cases.len())))
}

fn c3_particle_number() -> Result<Verdict, String> {
    let d = demo();
    let s0 = d.f0.sum().re;
    let drift = (d.ft.sum().re - s0).abs() / s0;
    let step_drift = d.report.max_sum_drift();
    let boundary = d.report.max_boundary_mass_fraction();
    Ok(verdict(
        drift.max(step_drift) < 1e-6 && boundary < 1e-8,
        format!("relative sum drift {drift:.2e} (max over steps {step_drift:.2e}), max boundary mass fraction {boundary:.2e}"),
    ))
}

fn c4_w_identity() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let configs = [(1, 4), (1, 8), (2, 4), (2, 8)];
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let (d, n) = configs[k % configs.len()];
        let grid = PhaseSpaceGrid::new(d, n, 2.0, 1.0).map_err(err)?;
        let vals = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(0.1..1.0), rng.gen_range(-0.2..0.2)))
            .collect();
        let state = DistributionState::new(vals, 0.0).map_err(err)?;
        let c = compute_c(&state).map_err(err)?;
        worst = worst.max(w_operator_check(&state, &grid, c).map_err(err)?);
    }
    Ok(verdict(worst < 1e-12, format!("50 states, max deviation {worst:.2e}")))
}

fn c5_oracle_consistency() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut matrices = 0;
    let mut entries = 0;
    for d in 1..=3 {
        for n in [4, 8] {
            let grid = PhaseSpaceGrid::new(d, n, 2.0, 1.0).map_err(err)?;
            for _ in 0..5 {
                let ff = random_field(&grid, 2, 1.0, &mut rng);
                for h in assembled(&grid, &ff) {
                    let r = verify_oracles(&h, &ff).map_err(err)?;
                    mismatches += r.mismatch_count();
                    entries += r.checked_entries;
                    matrices += 1;
                }
            }
        }
    }
    Ok(verdict(
        mismatches == 0,
        format!("{matrices} matrices, {entries} entries rebuilt, {mismatches} mismatches"),
    ))
}

fn c6_hmax_bound() -> Result<Verdict, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    let mut checked = 0;
    let mut worst_ratio = 0.0_f64;
    for d in 1..=2 {
        for n in [4, 8, 16] {
            if d == 2 && n == 16 {
                continue;
            }
            let grid = PhaseSpaceGrid::new(d, n, 2.0, 1.0).map_err(err)?;
            for _ in 0..5 {
                let ff = random_field(&grid, 2, 1.0, &mut rng);
                let bound = hmax_bound(&grid, &ff);
                for h in assembled(&grid, &ff) {
                    checked += 1;
                    let r = h.max_abs() / bound;
                    worst_ratio = worst_ratio.max(r);
                    if r > 1.0 + 1e-12 {
                        violations += 1;
                    }
                }
            }
        }
    }

    // Equality cases: a force-free grid is velocity dominated, and a strong
    // uniform force is force dominated.
    let grid = PhaseSpaceGrid::new(1, 16, 2.0, 1.0).map_err(err)?;
    let free = ForceField::zeros(&grid, 1).map_err(err)?;
    let hv = assemble(&grid, &free, 0).map_err(err)?;
    let gap_v = (hv.max_abs() - hmax_bound(&grid, &free)).abs();
    let strong = sample_analytic(&AnalyticForce::new(4.0, PI), &grid, 1).map_err(err)?;
    let hf = assemble(&grid, &strong, 0).map_err(err)?;
    let gap_f = (hf.max_abs() - hmax_bound(&grid, &strong)).abs();
    let pass = violations == 0 && gap_v < 1e-12 && gap_f < 1e-12;
    Ok(verdict(
        pass,
        format!(
            "{violations}/{checked} random matrices exceed the bound (worst ratio {worst_ratio:.4}); \
             equality gaps: velocity {gap_v:.3e}, force {gap_f:.3e}"
        ),
    ))
}

fn fitted_exponent(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn c7_qae_contract() -> Result<Verdict, String> {
    let trials = 1000;
    let sigma = (0.05_f64 * 0.95 / trials as f64).sqrt();
    let limit = 0.05 + 3.0 * sigma;
    let eps = [0.04, 0.02, 0.01];
    let mut pass = true;
    let mut worst_rate = 0.0_f64;
    let mut exps = Vec::new();
    for scheme in [Scheme::SamplingMle, Scheme::Iterative] {
        for a in [0.1, 0.25, 0.5] {
            let mut calls = Vec::new();
            for &e in &eps {
                let cfg = QaeConfig::new(e, 0.05, 7, scheme).map_err(err)?;
                let (_, s) = run_trials(a, &cfg, trials).map_err(err)?;
                worst_rate = worst_rate.max(s.failure_rate);
                pass &= s.failure_rate <= limit;
                calls.push(s.mean_oracle_calls);
            }
            let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
            let k = fitted_exponent(&inv, &calls);
            pass &= (0.8..=1.2).contains(&k);
            exps.push(k);
        }
    }
    let (lo, hi) = exps.iter().fold((f64::MAX, f64::MIN), |(l, h), &k| (l.min(k), h.max(k)));
    Ok(verdict(
        pass,
        format!(
            "worst failure rate {worst_rate:.3} (limit {limit:.4}); call exponents in [{lo:.3}, {hi:.3}] across 2 schemes × 3 amplitudes"
        ),
    ))
}

fn c8_algorithm1() -> Result<Verdict, String> {
    let grid = PhaseSpaceGrid::new(1, 16, 2.0, 1.0).map_err(err)?;
    let ff = sample_analytic(&AnalyticForce::new(-1.0, PI), &grid, 8).map_err(err)?;
    let f0 = maxwell_demo(&grid, 0.1).map_err(err)?;
    let c = compute_c(&f0).map_err(err)?;
    let problem = EvolutionProblem {
        state0: &f0,
        grid: &grid,
        ff: &ff,
        tmax: 0.2,
        nt: 8,
        backend: Backend::Krylov,
    };
    let eps = 0.05;
    let prepared = PreparedEstimate::single_mode(&problem, 1, c, eps, ErrorBudget::default()).map_err(err)?;
    let cfg = QaeConfig::new(eps, 0.05, 8, Scheme::SamplingMle).map_err(err)?;
    let trials = 200;
    let (_, s) = prepared.run_trials(&cfg, trials).map_err(err)?;
    let rate = 1.0 - s.failure_rate;
    let need = 0.95 - 3.0 * (0.05_f64 * 0.95 / trials as f64).sqrt();
    Ok(verdict(
        rate >= need,
        format!(
            "{:.1}% of {trials} trials within ε of exact |δ̃₁|² = {:.4e} (need {:.1}%), C = {c:.4}",
            100.0 * rate,
            prepared.exact,
            100.0 * need
        ),
    ))
}

fn c9_ensemble_equivalence() -> Result<Verdict, String> {
    let grid = PhaseSpaceGrid::new(1, 32, 2.0, 1.0).map_err(err)?;
    let ns = grid.n_spatial();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut states = Vec::new();
    let mut fields = Vec::new();
    for _ in 0..4 {
        let mut delta: Vec<f64> = (0..ns).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let mean = delta.iter().sum::<f64>() / ns as f64;
        delta.iter_mut().for_each(|d| *d -= mean);
        states.push(perturbed_maxwell(&grid, 0.1, &delta).map_err(err)?);
        fields.push(random_field(&grid, 2, 0.5, &mut rng));
    }
    let (tmax, tol) = (0.1, 0.0);
    let mut mean = vec![0.0; ns];
    for (s, ff) in states.iter().zip(&fields) {
        let (st, _) = evolve(s, &grid, ff, tmax, 2, Backend::Dense, tol).map_err(err)?;
        let p = SpectrumResult::analyze(&st, &grid).map_err(err)?.power;
        mean.iter_mut().zip(&p).for_each(|(m, v)| *m += v / 4.0);
    }
    let ens = build_ensemble(states).map_err(err)?;
    let forces = ForceEnsemble::new(fields).map_err(err)?;
    let (evolved, _) = ens.evolve(&grid, &forces, tmax, Backend::Dense, tol).map_err(err)?;
    let route = ensemble_power(&evolved, &grid).map_err(err)?.amplitude_route;
    let worst = (1..ns)
        .map(|i| (route[i] - mean[i]).abs() / mean[i])
        .fold(0.0, f64::max);
    Ok(verdict(worst <= 1e-12, format!("n_IV = 4, {} modes, max relative deviation {worst:.2e}", ns - 1)))
}

fn c10_c_consistency() -> Result<Verdict, String> {
    let d = demo();
    let c0 = compute_c(&d.f0).map_err(err)?;
    let ct = compute_c(&d.ft).map_err(err)?;
    let rel = (ct - c0).abs() / c0;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0_f64;
    for (dim, n, v_th) in [(1, 16, 0.2), (1, 64, 0.2), (1, 64, 0.1), (2, 16, 0.2), (2, 32, 0.1)] {
        let grid = PhaseSpaceGrid::new(dim, n, 2.0, 1.0).map_err(err)?;
        let ns = grid.n_spatial();
        let mut delta: Vec<f64> = (0..ns).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mean = delta.iter().sum::<f64>() / ns as f64;
        delta.iter_mut().for_each(|x| *x -= mean);
        let pert = PerturbationField::new(&grid, delta, vec![0.0; dim * ns]).map_err(err)?;
        let params = FermiDiracParams::from_vth(v_th).map_err(err)?;
        let exact = compute_c(&fermi_dirac_state(&grid, &params, &pert).map_err(err)?).map_err(err)?;
        let semi = compute_c_semianalytic(&grid, &params, &pert).map_err(err)?;
        worst = worst.max((semi - exact).abs() / exact);
    }
    Ok(verdict(
        rel < 1e-10 && worst < 0.02,
        format!("demo C(0) = {c0:.10}, C(T) relative change {rel:.2e}; semianalytic worst relative error {worst:.2e}"),
    ))
}

fn c11_resources() -> Result<Verdict, String> {
    let p = ResourceParams::demo();
    let q1 = theorem1_queries(&p).map_err(err)?;
    let hand1 = 64.0 * 0.2 * 1.0 + 8.0 * 800.0_f64.ln();
    let mut ok = (q1 - hand1).abs() <= 1e-9 && (q1 - 66.3).abs() < 0.05;

    let p2 = ResourceParams { eps: 0.1, ..p };
    let t2 = theorem2_totals(&p2).map_err(err)?;
    let per_build = 12.8 + 8.0 * (8.0 / 0.025_f64).ln();
    let reps = 20.0_f64.ln() / 0.1;
    ok &= (t2.per_build_queries - per_build).abs() <= 1e-9;
    ok &= (t2.repetitions - reps).abs() <= 1e-9;
    ok &= (t2.total_queries - per_build * reps).abs() <= 1e-9 * per_build * reps;

    let base = ResourceParams {
        dim: 3,
        ngr: 1024,
        nt: 16,
        tmax: 1.0,
        box_length: 1.0,
        vmax: 1.0,
        fmax: 1.0,
        eps: 0.01,
        delta: 0.05,
        c: 1.0,
        niv: 1,
    };
    let total = |q: ResourceParams| theorem2_totals(&q).map(|t| t.total_queries).map_err(err);
    let k_ngr = two_point_exponent(
        1024.0,
        total(base)?,
        16384.0,
        total(ResourceParams { ngr: 16384, ..base })?,
    );
    let k_nt = two_point_exponent(
        1024.0,
        total(ResourceParams { ngr: 16, nt: 1024, ..base })?,
        16384.0,
        total(ResourceParams { ngr: 16, nt: 16384, ..base })?,
    );
    let k_eps = two_point_exponent(
        100.0,
        total(ResourceParams { eps: 0.01, ..base })?,
        1000.0,
        total(ResourceParams { eps: 0.001, ..base })?,
    );
    ok &= (k_ngr - 1.0).abs() <= 0.2 && (k_nt - 1.0).abs() <= 0.2 && (k_eps - 1.0).abs() <= 0.2;
    Ok(verdict(
        ok,
        format!(
            "theorem 1 demo queries {q1:.6} (hand {hand1:.6}); theorem 2 total {:.6}; exponents n_gr {k_ngr:.3}, n_t {k_nt:.3}, 1/ε {k_eps:.3}",
            t2.total_queries
        ),
    ))
}

fn main() {
    let checks: &[(&str, &str, Check)] = &[
        ("4", "W-operator identity", c4_w_identity),
        ("5", "oracle consistency", c5_oracle_consistency),
        ("6", "max-entry bound", c6_hmax_bound),
        ("11", "resource formulas", c11_resources),
        ("7", "amplitude estimation contract", c7_qae_contract),
        ("9", "ensemble equivalence", c9_ensemble_equivalence),
        ("8", "end-to-end estimate", c8_algorithm1),
        ("2", "unitarity", c2_unitarity),
        ("1a", "demo δ(x) extrema", c1a_demo_delta_extrema),
        ("1b", "demo dominant mode", c1b_demo_dominant_mode),
        ("1c", "demo mode dominance ratio", c1c_demo_mode_ratio),
        ("3", "particle-number conservation", c3_particle_number),
        ("10", "C consistency", c10_c_consistency),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(Ok(v)) => (v.pass, v.detail),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:<3} {tag}  {name}: {detail} [{secs:.1}s]");
        if !pass {
            failed.push(*id);
        }
    }
    println!(
        "acceptance: {} passed, {} failed{}",
        checks.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

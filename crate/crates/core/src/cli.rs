//! Command-line orchestration. Arrays go to CSV, scalars and manifests to
//! JSON; nothing time- or host-dependent is written, so identical configs
//! give byte-identical outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ForceSpec, InitSpec, RunConfig};
use crate::error::{Error, Result};
use crate::forcefield::{load_force_ensemble, sample_analytic, ForceEnsemble, ForceField};
use crate::grid::PhaseSpaceGrid;
use crate::hamiltonian::{assemble, hmax_bound, hmax_tight, verify_oracles};
use crate::initcond::{
    build_ensemble, compute_c, compute_c_semianalytic, fermi_dirac_state, load_perturbations, maxwell_demo,
    perturbed_maxwell, FermiDiracParams, PerturbationField,
};
use crate::propagator::{check_box_sizing, Backend, DistributionState, EvolutionReport, Propagator};
use crate::qae::{ErrorBudget, EvolutionProblem, PreparedEstimate, QaeConfig};
use crate::resources::{estimate as resource_estimate, ResourceParams, Sweep};
use crate::spectrum::{ensemble_power, shell_power, w_operator_check, wavenumber, SpectrumResult};

/// Exit status when every stage ran but an invariant check failed.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qvlasov", version, about = "Linearized Vlasov evolution, power-spectrum extraction and QAE emulation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reproduce the 1D demonstration: snapshots, δ(x) and |δ̃|².
    Demo,
    /// Evolve the initial state to --tmax.
    Evolve,
    /// Evolve, then extract density contrast and power spectrum.
    Spectrum,
    /// Run Algorithm 1 for --target and every --shell.
    Estimate,
    /// Check the sparse-access oracles and the ‖H‖_max bound.
    VerifyOracles {
        /// Write every assembled matrix as CSV.
        #[arg(long)]
        dump_matrix: bool,
    },
    /// Evaluate the query and qubit formulas.
    Resources,
    /// evolve → spectrum → estimate with all invariant checks.
    Pipeline,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat key=value file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub dim: Option<String>,
    #[arg(long, global = true)]
    pub ngr: Option<String>,
    #[arg(long, global = true)]
    pub box_length: Option<String>,
    #[arg(long, global = true)]
    pub vmax: Option<String>,
    /// VQFF1 force file.
    #[arg(long, global = true)]
    pub force_file: Option<String>,
    /// A,K for F = A sin(K x).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub force_analytic: Option<String>,
    #[arg(long, global = true)]
    pub nt: Option<String>,
    #[arg(long, global = true)]
    pub tmax: Option<String>,
    /// dense | krylov
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub tol: Option<String>,
    /// maxwell:SIGMA | fermidirac:VTH
    #[arg(long, global = true)]
    pub init: Option<String>,
    #[arg(long, global = true)]
    pub pert_file: Option<String>,
    #[arg(long, global = true)]
    pub ensemble: Option<String>,
    /// Comma-separated mode index.
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// K1,K2 (repeatable).
    #[arg(long, global = true)]
    pub shell: Vec<String>,
    #[arg(long, global = true)]
    pub eps: Option<String>,
    #[arg(long, global = true)]
    pub delta: Option<String>,
    #[arg(long, global = true)]
    pub trials: Option<String>,
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// sampling-mle | iterative
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// e.g. ngr=16:1024:*2
    #[arg(long, global = true)]
    pub sweep: Option<String>,
}

impl GlobalArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let singles: [(&'static str, &Option<String>); 21] = [
            ("out", &self.out),
            ("seed", &self.seed),
            ("dim", &self.dim),
            ("ngr", &self.ngr),
            ("box-length", &self.box_length),
            ("vmax", &self.vmax),
            ("force-file", &self.force_file),
            ("force-analytic", &self.force_analytic),
            ("nt", &self.nt),
            ("tmax", &self.tmax),
            ("backend", &self.backend),
            ("tol", &self.tol),
            ("init", &self.init),
            ("pert-file", &self.pert_file),
            ("ensemble", &self.ensemble),
            ("target", &self.target),
            ("eps", &self.eps),
            ("delta", &self.delta),
            ("trials", &self.trials),
            ("scheme", &self.scheme),
            ("sweep", &self.sweep),
        ];
        for (k, v) in singles {
            if let Some(v) = v {
                out.push((k, v.clone()));
            }
        }
        if self.force_file.is_some() && self.force_analytic.is_some() {
            // keep the later-listed flag from silently winning
            out.retain(|(k, _)| *k != "force-analytic");
        }
        for s in &self.shell {
            out.push(("shell", s.clone()));
        }
        if self.deterministic {
            out.push(("deterministic", "true".into()));
        }
        out
    }
}

/// Merges defaults, the config file and the flags.
pub fn resolve_config(args: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if !args.shell.is_empty() {
        cfg.shells.clear();
    }
    for (k, v) in args.pairs() {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Files written by one command, in write order.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, u64)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push((name.to_string(), contents.len() as u64));
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    fn manifest(&mut self, command: &str, cfg: &RunConfig, checks: &Checks) -> Result<()> {
        let files: Vec<Value> = self.files.iter().map(|(n, b)| json!({ "name": n, "bytes": b })).collect();
        let m = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": cfg,
            "files": files,
            "checks": checks.items,
            "all_checks_passed": checks.all_passed(),
        });
        self.json("manifest.json", &m)
    }
}

#[derive(Debug, Default)]
struct Checks {
    items: Vec<Value>,
}

impl Checks {
    fn add(&mut self, name: &str, passed: bool, value: f64, limit: f64) {
        if !passed {
            log::warn!("check {name} failed: {value:e} vs limit {limit:e}");
        }
        self.items.push(json!({ "name": name, "passed": passed, "value": value, "limit": limit }));
    }

    fn below(&mut self, name: &str, value: f64, limit: f64) {
        self.add(name, value < limit, value, limit);
    }

    fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c["passed"] == json!(true))
    }
}

struct Setup {
    grid: PhaseSpaceGrid,
    forces: ForceEnsemble,
    states: Vec<DistributionState>,
    perturbations: Option<Vec<PerturbationField>>,
}

fn build_setup(cfg: &RunConfig) -> Result<Setup> {
    let grid = PhaseSpaceGrid::new(cfg.dim, cfg.ngr, cfg.box_length, cfg.vmax)?;
    let n_iv = cfg.ensemble;
    let forces = match &cfg.force {
        ForceSpec::Analytic { amplitude, wavenumber } => {
            let ff = sample_analytic(&crate::forcefield::AnalyticForce::new(*amplitude, *wavenumber), &grid, cfg.nt)?;
            ForceEnsemble::new(vec![ff; n_iv])?
        }
        ForceSpec::File { path } => {
            let ens = load_force_ensemble(path, &grid)?;
            if ens.realizations()[0].nt() != cfg.nt {
                return Err(Error::Config(format!(
                    "--nt {} does not match the {} time slices in {}",
                    cfg.nt,
                    ens.realizations()[0].nt(),
                    path.display()
                )));
            }
            match ens.len() {
                n if n == n_iv => ens,
                1 => ForceEnsemble::new(vec![ens.into_inner().remove(0); n_iv])?,
                n => {
                    return Err(Error::Config(format!(
                        "{} holds {n} force realizations but --ensemble is {n_iv}",
                        path.display()
                    )))
                }
            }
        }
    };

    let perturbations = match &cfg.pert_file {
        Some(path) => {
            let p = load_perturbations(path, &grid)?;
            let p = match p.len() {
                n if n == n_iv => p,
                1 => vec![p[0].clone(); n_iv],
                n => {
                    return Err(Error::Config(format!(
                        "{} holds {n} perturbation records but --ensemble is {n_iv}",
                        path.display()
                    )))
                }
            };
            Some(p)
        }
        None => None,
    };

    let states = (0..n_iv)
        .map(|i| match (cfg.init, &perturbations) {
            (InitSpec::Maxwell { sigma_v }, None) => maxwell_demo(&grid, sigma_v),
            (InitSpec::Maxwell { sigma_v }, Some(p)) => perturbed_maxwell(&grid, sigma_v, p[i].delta()),
            (InitSpec::Fermidirac { v_th }, p) => {
                let params = FermiDiracParams::from_vth(v_th)?;
                let unperturbed = PerturbationField::unperturbed(&grid);
                fermi_dirac_state(&grid, &params, p.as_ref().map_or(&unperturbed, |p| &p[i]))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Setup { grid, forces, states, perturbations })
}

fn axis_indices(mut flat: usize, n: usize, count: usize) -> Vec<usize> {
    (0..count)
        .map(|_| {
            let i = flat % n;
            flat /= n;
            i
        })
        .collect()
}

fn state_csv(state: &DistributionState, grid: &PhaseSpaceGrid) -> String {
    let d = grid.dim();
    let mut s = String::new();
    let names: Vec<String> = (0..d)
        .map(|a| format!("i_x{a}"))
        .chain((0..d).map(|a| format!("i_u{a}")))
        .chain((0..d).map(|a| format!("x{a}")))
        .chain((0..d).map(|a| format!("u{a}")))
        .collect();
    let _ = writeln!(s, "{},f_re,f_im", names.join(","));
    for (i, v) in state.values().iter().enumerate() {
        let idx = axis_indices(i, grid.ngr(), 2 * d);
        for k in &idx {
            let _ = write!(s, "{k},");
        }
        for k in &idx[..d] {
            let _ = write!(s, "{},", grid.x_values()[*k]);
        }
        for k in &idx[d..] {
            let _ = write!(s, "{},", grid.u_values()[*k]);
        }
        let _ = writeln!(s, "{},{}", v.re, v.im);
    }
    s
}

fn delta_csv(spec: &SpectrumResult, grid: &PhaseSpaceGrid) -> String {
    let d = grid.dim();
    let mut s = String::new();
    let idx: Vec<String> = (0..d).map(|a| format!("i_x{a}")).collect();
    let xs: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
    let _ = writeln!(s, "{},{},rho_re,rho_im,delta_re,delta_im", idx.join(","), xs.join(","));
    for (i, (r, dl)) in spec.rho.iter().zip(&spec.delta).enumerate() {
        let ii = axis_indices(i, grid.ngr(), d);
        let xv: Vec<String> = ii.iter().map(|k| grid.x_values()[*k].to_string()).collect();
        let iv: Vec<String> = ii.iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "{},{},{},{},{},{}", iv.join(","), xv.join(","), r.re, r.im, dl.re, dl.im);
    }
    s
}

fn power_csv(power: &[f64], grid: &PhaseSpaceGrid) -> String {
    let d = grid.dim();
    let mut s = String::new();
    let idx: Vec<String> = (0..d).map(|a| format!("i_k{a}")).collect();
    let _ = writeln!(s, "{},k,power", idx.join(","));
    for (i, p) in power.iter().enumerate() {
        let iv: Vec<String> = axis_indices(i, grid.ngr(), d).iter().map(|k| k.to_string()).collect();
        let _ = writeln!(s, "{},{},{}", iv.join(","), wavenumber(grid, i), p);
    }
    s
}

fn steps_csv(report: &EvolutionReport) -> String {
    let mut s = String::from(
        "step,time,norm,sum_re,sum_im,norm_drift,sum_drift,boundary_mass_fraction,min_value,max_imag,krylov_iterations\n",
    );
    for st in &report.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            st.step,
            st.time,
            st.norm,
            st.sum_re,
            st.sum_im,
            st.norm_drift,
            st.sum_drift,
            st.boundary_mass_fraction,
            st.min_value,
            st.max_imag,
            st.krylov_iterations
        );
    }
    s
}

/// Nonzero modes whose components all lie in `[0, n_gr/2]`.
fn half_space_modes(grid: &PhaseSpaceGrid) -> impl Iterator<Item = usize> + '_ {
    (1..grid.n_spatial()).filter(move |&i| axis_indices(i, grid.ngr(), grid.dim()).iter().all(|&k| k <= grid.ngr() / 2))
}

fn spectrum_summary(spec: &SpectrumResult, grid: &PhaseSpaceGrid, cfg: &RunConfig) -> Result<Value> {
    let dominant = spec.dominant_mode(half_space_modes(grid));
    let shells = cfg
        .shells
        .iter()
        .map(|&(k1, k2)| Ok(json!({ "k1": k1, "k2": k2, "power": shell_power(&spec.power, grid, k1, k2)? })))
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "c": spec.c,
        "parseval_residual": spec.parseval_residual(),
        "conjugate_symmetry_residual": spec.conjugate_symmetry_residual(grid),
        "raw_zero_mode": spec.raw_zero_mode.norm(),
        "total_power": spec.total_power(),
        "dominant_mode": dominant.map(|i| axis_indices(i, grid.ngr(), grid.dim())),
        "dominant_power": dominant.map(|i| spec.power[i]),
        "shells": shells,
    }))
}

fn evolve_all(setup: &Setup, cfg: &RunConfig) -> Result<Vec<(DistributionState, EvolutionReport)>> {
    for (i, ff) in setup.forces.realizations().iter().enumerate() {
        let b = check_box_sizing(&setup.grid, ff, cfg.tmax);
        if b.particles_may_exit() {
            log::warn!(
                "realization {i}: VT/L = {:.3}, F_max T/V = {:.3}; particles may exit the box",
                b.position_ratio,
                b.velocity_ratio
            );
        }
    }
    setup
        .states
        .iter()
        .zip(setup.forces.realizations())
        .map(|(s, ff)| Propagator::new(&setup.grid, ff, cfg.backend, cfg.tol)?.evolve(s, cfg.tmax))
        .collect()
}

/// Result of a command: whether its invariant checks passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub checks_passed: bool,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Command::VerifyOracles { dump_matrix } = cli.command {
        cfg.dump_matrix = dump_matrix;
    }
    match cli.command {
        Command::Demo => cmd_demo(&cfg),
        Command::Evolve => cmd_evolve(&cfg),
        Command::Spectrum => cmd_spectrum(&cfg),
        Command::Estimate => cmd_estimate(&cfg),
        Command::VerifyOracles { .. } => cmd_verify_oracles(&cfg),
        Command::Resources => cmd_resources(&cfg),
        Command::Pipeline => cmd_pipeline(&cfg),
    }
}

fn unitarity_limit(cfg: &RunConfig) -> f64 {
    match cfg.backend {
        Backend::Dense => 1e-12,
        Backend::Krylov => 10.0 * cfg.tol,
    }
}

pub fn cmd_demo(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let grid = &setup.grid;
    let ff = &setup.forces.realizations()[0];
    let f0 = &setup.states[0];
    let mut art = Artifacts::new(&cfg.out)?;
    let mut checks = Checks::default();

    // snapshots at 0, T/2 (when n_t is even) and T
    let mut snaps = vec![(0.0, f0.clone())];
    let mut reports = Vec::new();
    if cfg.nt.is_multiple_of(2) && cfg.nt >= 2 {
        let half = cfg.nt / 2;
        let dt = cfg.tmax / cfg.nt as f64;
        let mut prop = Propagator::new(grid, ff, cfg.backend, cfg.tol)?;
        let (mid, r1) = prop.evolve_slices(f0, 0..half, dt)?;
        let (end, r2) = prop.evolve_slices(&mid, half..cfg.nt, dt)?;
        snaps.push((0.5 * cfg.tmax, mid));
        snaps.push((cfg.tmax, end));
        reports.extend([r1, r2]);
    } else {
        let (end, r) = Propagator::new(grid, ff, cfg.backend, cfg.tol)?.evolve(f0, cfg.tmax)?;
        snaps.push((cfg.tmax, end));
        reports.push(r);
    }
    for (k, (t, s)) in snaps.iter().enumerate() {
        log::info!("writing snapshot {k} at T = {t}");
        art.write(&format!("f_snapshot{k}.csv"), &state_csv(s, grid))?;
    }
    let (_, f_t) = snaps.last().expect("at least one snapshot");
    let spec = SpectrumResult::analyze(f_t, grid)?;
    art.write("delta.csv", &delta_csv(&spec, grid))?;
    art.write("power.csv", &power_csv(&spec.power, grid))?;

    let delta_re: Vec<f64> = spec.delta.iter().map(|d| d.re).collect();
    let argmax = (0..delta_re.len()).max_by(|&a, &b| delta_re[a].total_cmp(&delta_re[b]));
    let argmin = (0..delta_re.len()).min_by(|&a, &b| delta_re[a].total_cmp(&delta_re[b]));
    let norm_drift = (f_t.norm() / f0.norm() - 1.0).abs();
    checks.below("unitarity", norm_drift, unitarity_limit(cfg));
    checks.below("zero_mode", spec.raw_zero_mode.norm(), 1e-12);
    checks.below("parseval", spec.parseval_residual(), 1e-10);

    let summary = json!({
        "snapshot_times": snaps.iter().map(|(t, _)| *t).collect::<Vec<_>>(),
        "delta_argmax": argmax.map(|i| axis_indices(i, grid.ngr(), grid.dim())),
        "delta_argmin": argmin.map(|i| axis_indices(i, grid.ngr(), grid.dim())),
        "spectrum": spectrum_summary(&spec, grid, cfg)?,
        "c_initial": compute_c(f0)?,
        "evolution": reports,
    });
    art.json("demo.json", &summary)?;
    art.manifest("demo", cfg, &checks)?;
    Ok(Outcome { checks_passed: checks.all_passed() })
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let mut art = Artifacts::new(&cfg.out)?;
    let mut checks = Checks::default();
    let runs = evolve_all(&setup, cfg)?;
    for (i, (state, report)) in runs.iter().enumerate() {
        let tag = if runs.len() == 1 { String::new() } else { format!("_{i}") };
        art.write(&format!("final_state{tag}.csv"), &state_csv(state, &setup.grid))?;
        art.write(&format!("steps{tag}.csv"), &steps_csv(report))?;
        checks.below(&format!("unitarity{tag}"), report.total_norm_drift(), unitarity_limit(cfg));
    }
    let reports: Vec<&EvolutionReport> = runs.iter().map(|(_, r)| r).collect();
    art.json("report.json", &reports)?;
    art.manifest("evolve", cfg, &checks)?;
    Ok(Outcome { checks_passed: checks.all_passed() })
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let grid = &setup.grid;
    let mut art = Artifacts::new(&cfg.out)?;
    let mut checks = Checks::default();
    let runs = evolve_all(&setup, cfg)?;
    let mut summaries = Vec::new();
    for (i, (state, _)) in runs.iter().enumerate() {
        let tag = if runs.len() == 1 { String::new() } else { format!("_{i}") };
        let spec = SpectrumResult::analyze(state, grid)?;
        art.write(&format!("delta{tag}.csv"), &delta_csv(&spec, grid))?;
        art.write(&format!("spectrum{tag}.csv"), &power_csv(&spec.power, grid))?;
        checks.below(&format!("zero_mode{tag}"), spec.raw_zero_mode.norm(), 1e-12);
        checks.below(&format!("parseval{tag}"), spec.parseval_residual(), 1e-10);
        let mut s = spectrum_summary(&spec, grid, cfg)?;
        s["c_initial"] = json!(compute_c(&setup.states[i])?);
        summaries.push(s);
    }
    if runs.len() > 1 {
        let ens = build_ensemble(runs.iter().map(|(s, _)| s.clone()).collect())?;
        let p = ensemble_power(&ens, grid)?;
        art.write("ensemble_power.csv", &power_csv(&p.mean, grid))?;
    }
    art.json("spectrum.json", &summaries)?;
    art.manifest("spectrum", cfg, &checks)?;
    Ok(Outcome { checks_passed: checks.all_passed() })
}

fn qae_config(cfg: &RunConfig) -> Result<QaeConfig> {
    // the accuracy itself is replaced by the C ε/4 budget inside Algorithm 1
    let mut q = QaeConfig::new(0.25, cfg.delta, cfg.seed, cfg.scheme)?;
    q.deterministic = cfg.deterministic;
    Ok(q)
}

fn estimate_runs(cfg: &RunConfig, setup: &Setup, art: &mut Artifacts) -> Result<Vec<Value>> {
    let grid = &setup.grid;
    if setup.states.len() > 1 {
        log::warn!("estimate uses the first ensemble member only");
    }
    let c = compute_c(&setup.states[0])?;
    let problem = EvolutionProblem {
        state0: &setup.states[0],
        grid,
        ff: &setup.forces.realizations()[0],
        tmax: cfg.tmax,
        nt: cfg.nt,
        backend: cfg.backend,
    };
    let qcfg = qae_config(cfg)?;
    let mut jobs = vec![(
        format!("target {:?}", cfg.target),
        PreparedEstimate::single_mode(&problem, cfg.target_index(), c, cfg.eps, ErrorBudget::default())?,
    )];
    for &(k1, k2) in &cfg.shells {
        jobs.push((
            format!("shell [{k1}, {k2}]"),
            PreparedEstimate::shell(&problem, k1, k2, c, cfg.eps, ErrorBudget::default())?,
        ));
    }
    let mut out = Vec::new();
    for (j, (label, prep)) in jobs.iter().enumerate() {
        let (results, summary) = prep.run_trials(&qcfg, cfg.trials)?;
        let mut csv = String::from("trial,estimate,exact,oracle_calls,success\n");
        for (t, r) in results.iter().enumerate() {
            let _ = writeln!(csv, "{t},{},{},{},{}", r.estimate, r.exact, r.oracle_calls, r.success);
        }
        art.write(&format!("trials_{j}.csv"), &csv)?;
        let first = &results[0];
        out.push(json!({
            "label": label,
            "estimate": first.estimate,
            "true_value": first.exact,
            "oracle_calls": first.oracle_calls,
            "success": first.success,
            "probability": prep.probability,
            "c": prep.c,
            "qae_eps": prep.qae_eps,
            "evolution_tol": prep.evolution_tol,
            "trials": summary,
        }));
    }
    Ok(out)
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let mut art = Artifacts::new(&cfg.out)?;
    let results = estimate_runs(cfg, &setup, &mut art)?;
    art.json("estimate.json", &results)?;
    art.manifest("estimate", cfg, &Checks::default())?;
    Ok(Outcome { checks_passed: true })
}

pub fn cmd_verify_oracles(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let grid = &setup.grid;
    let mut art = Artifacts::new(&cfg.out)?;
    let mut checks = Checks::default();
    let mut rows = Vec::new();
    for (r, ff) in setup.forces.realizations().iter().enumerate() {
        for i_t in 0..ff.nt() {
            let h = assemble(grid, ff, i_t)?;
            let rep = verify_oracles(&h, ff)?;
            let single = single_slice(ff, i_t)?;
            let bound = hmax_bound(grid, &single);
            let tight = hmax_tight(grid, &single);
            checks.add(&format!("oracles_r{r}_t{i_t}"), rep.is_consistent(), rep.mismatch_count() as f64, 0.0);
            checks.add(&format!("hmax_bound_r{r}_t{i_t}"), h.max_abs() <= bound, h.max_abs(), bound);
            if cfg.dump_matrix {
                let name = format!("matrix_r{r}_t{i_t}.csv");
                h.write_csv(&art.dir.join(&name))?;
                let bytes = fs::metadata(art.dir.join(&name))?.len();
                art.files.push((name, bytes));
            }
            rows.push(json!({
                "realization": r,
                "time_slice": i_t,
                "rows": rep.n_rows,
                "checked_entries": rep.checked_entries,
                "mismatches": rep.mismatch_count(),
                "sparsity": h.sparsity(),
                "max_abs": h.max_abs(),
                "hmax_bound": bound,
                "hmax_tight": tight,
            }));
        }
    }
    art.json("oracles.json", &rows)?;
    art.manifest("verify-oracles", cfg, &checks)?;
    Ok(Outcome { checks_passed: checks.all_passed() })
}

fn single_slice(ff: &ForceField, i_t: usize) -> Result<ForceField> {
    ff.slices(i_t..i_t + 1)
}

fn resource_params(cfg: &RunConfig, setup: &Setup) -> Result<ResourceParams> {
    let fmax = setup.forces.realizations().iter().fold(0.0_f64, |m, f| m.max(f.fmax()));
    let c = compute_c(&setup.states[0])?;
    Ok(ResourceParams {
        dim: cfg.dim,
        ngr: cfg.ngr,
        nt: cfg.nt,
        tmax: cfg.tmax,
        box_length: cfg.box_length,
        vmax: cfg.vmax,
        fmax,
        eps: cfg.eps,
        delta: cfg.delta,
        c,
        niv: cfg.ensemble,
    })
}

pub fn cmd_resources(cfg: &RunConfig) -> Result<Outcome> {
    let setup = build_setup(cfg)?;
    let mut art = Artifacts::new(&cfg.out)?;
    let params = resource_params(cfg, &setup)?;
    art.json("resources.json", &resource_estimate(&params)?)?;
    if let Some(sweep) = &cfg.sweep {
        let sweep: Sweep = sweep.parse()?;
        let mut csv = format!(
            "{},theorem1_queries,theorem1_qubits,theorem2_per_build,theorem2_repetitions,theorem2_total,theorem2_qubits,classical_queries\n",
            sweep.name
        );
        for (v, p) in sweep.values.iter().zip(sweep.apply(&params)?) {
            let e = resource_estimate(&p)?;
            let _ = writeln!(
                csv,
                "{v},{},{},{},{},{},{},{}",
                e.theorem1_queries,
                e.theorem1_qubits.total,
                e.theorem2.per_build_queries,
                e.theorem2.repetitions,
                e.theorem2.total_queries,
                e.theorem2.qubits.total,
                e.classical_queries
            );
        }
        art.write("sweep.csv", &csv)?;
    }
    art.manifest("resources", cfg, &Checks::default())?;
    Ok(Outcome { checks_passed: true })
}

pub fn cmd_pipeline(cfg: &RunConfig) -> Result<Outcome> {
    let stage = |name: &'static str| move |e: Error| Error::Verification(format!("stage '{name}': {e}"));
    let setup = build_setup(cfg).map_err(stage("setup"))?;
    let grid = &setup.grid;
    let mut art = Artifacts::new(&cfg.out)?;
    let mut checks = Checks::default();

    for (r, ff) in setup.forces.realizations().iter().enumerate() {
        for i_t in 0..ff.nt() {
            let h = assemble(grid, ff, i_t).map_err(stage("oracles"))?;
            let rep = verify_oracles(&h, ff).map_err(stage("oracles"))?;
            checks.add(&format!("oracles_r{r}_t{i_t}"), rep.is_consistent(), rep.mismatch_count() as f64, 0.0);
        }
    }

    let runs = evolve_all(&setup, cfg).map_err(stage("evolve"))?;
    let mut spectra = Vec::new();
    for (i, ((state, report), f0)) in runs.iter().zip(&setup.states).enumerate() {
        let tag = if runs.len() == 1 { String::new() } else { format!("_{i}") };
        art.write(&format!("final_state{tag}.csv"), &state_csv(state, grid))?;
        art.write(&format!("steps{tag}.csv"), &steps_csv(report))?;
        checks.below(&format!("unitarity{tag}"), report.total_norm_drift(), unitarity_limit(cfg));

        let spec = SpectrumResult::analyze(state, grid).map_err(stage("spectrum"))?;
        art.write(&format!("delta{tag}.csv"), &delta_csv(&spec, grid))?;
        art.write(&format!("spectrum{tag}.csv"), &power_csv(&spec.power, grid))?;
        checks.below(&format!("zero_mode{tag}"), spec.raw_zero_mode.norm(), 1e-12);
        checks.below(&format!("parseval{tag}"), spec.parseval_residual(), 1e-10);
        if state.max_imag() <= 1e-12 * state.norm() {
            checks.below(&format!("conjugate_symmetry{tag}"), spec.conjugate_symmetry_residual(grid), 1e-12);
        }
        let w = w_operator_check(state, grid, spec.c).map_err(stage("spectrum"))?;
        checks.below(&format!("w_identity{tag}"), w, 1e-12);
        let c0 = compute_c(f0)?;
        if report.max_boundary_mass_fraction() < 1e-8 && cfg.backend == Backend::Dense {
            checks.below(&format!("c_consistency{tag}"), (spec.c / c0 - 1.0).abs(), 1e-10);
        }
        let mut s = spectrum_summary(&spec, grid, cfg)?;
        s["c_initial"] = json!(c0);
        s["w_identity_deviation"] = json!(w);
        if let (InitSpec::Fermidirac { v_th }, Some(p)) = (cfg.init, &setup.perturbations) {
            let params = FermiDiracParams::from_vth(v_th)?;
            s["c_semianalytic"] = json!(compute_c_semianalytic(grid, &params, &p[i])?);
        }
        spectra.push(s);
    }
    art.json("spectrum.json", &spectra)?;

    if runs.len() > 1 {
        let ens = build_ensemble(runs.iter().map(|(s, _)| s.clone()).collect()).map_err(stage("ensemble"))?;
        let p = ensemble_power(&ens, grid).map_err(stage("ensemble"))?;
        let dev = p
            .amplitude_route
            .iter()
            .zip(&p.weighted_mean)
            .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max);
        checks.below("ensemble_amplitude_route", dev, 1e-10);
        art.write("ensemble_power.csv", &power_csv(&p.mean, grid))?;
    }

    let estimates = estimate_runs(cfg, &setup, &mut art).map_err(stage("estimate"))?;
    art.json("estimate.json", &estimates)?;
    art.manifest("pipeline", cfg, &checks)?;
    Ok(Outcome { checks_passed: checks.all_passed() })
}

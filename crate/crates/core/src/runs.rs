//! Experiment runners shared by the command line and the acceptance suite.
//! Each run returns named checks, a JSON summary and its artifacts; nothing
//! here touches the file system.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Kp5Error, Result};
use crate::lab::bilinear::{bilinear_sweep, non_increasing_within_noise, BilinearSetup};
use crate::lab::interpolation::{interpolated_bilinear_check, ModulationHalf};
use crate::lab::it_bound::{it_bound_experiment, random_packet, IT_TIMES};
use crate::lab::kernel_decay::{kernel_decay, kernel_fft_comparison, FFT_BANDS};
use crate::lab::resonance::{beta_integral_error, jacobian_batch, modulation_batch, resonance_batch, JACOBIAN_CONSTANT};
use crate::lab::strichartz::{strichartz_scaling_experiment, ScaledSetup};
use crate::lab::tail_shrink::{l4_profile, tail_shrink_experiment, TailShrinkSetup};
use crate::lab::{trial_rng, write_rows, ExperimentSummary};
use crate::norms::{hm12_norm, l2_norm, v2_brute_force, v2_from_distances, v2_variation, SampledPath};
use crate::propagator::{bump_psi, propagate, write_trajectory, FieldTrajectory};
use crate::scattering::{directional_derivative_check, DERIVATIVE_EPS, inverse_wave_operator, scatter, ScatteringReport};
use crate::solver::{picard_solve, Direction, SolverConfig};
use crate::spectral::{gaussian_packet, write_snapshot, DispersionParams, Grid, SpectralField, C64};

/// Tolerances of the checks.
pub const GROUP_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const L2_CONSERVATION_TOL: f64 = 1e-6;
pub const TERMINAL_DIFF_TOL: f64 = 1e-6;
pub const CAUCHY_FINAL_TOL: f64 = 1e-4;
pub const ASYMPTOTE_L2_TOL: f64 = 1e-5;
pub const ROUNDTRIP_TOL: f64 = 5e-3;
pub const HALVING_BAND: f64 = 0.3;
pub const DERIVATIVE_TOL: f64 = 1e-3;
pub const SLOPE_TOL: f64 = 0.1;
pub const SPREAD_LIMIT: f64 = 3.0;
pub const KERNEL_FFT_TOL: f64 = 1e-6;
pub const TAIL_LIMIT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    Scatter,
    Roundtrip,
    Strichartz,
    Bilinear,
    Resonance,
    Modulation,
    Kernel,
    Tailshrink,
    NormsSelftest,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Solve,
        Experiment::Scatter,
        Experiment::Roundtrip,
        Experiment::Strichartz,
        Experiment::Bilinear,
        Experiment::Resonance,
        Experiment::Modulation,
        Experiment::Kernel,
        Experiment::Tailshrink,
        Experiment::NormsSelftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Scatter => "scatter",
            Experiment::Roundtrip => "roundtrip",
            Experiment::Strichartz => "strichartz",
            Experiment::Bilinear => "bilinear",
            Experiment::Resonance => "resonance",
            Experiment::Modulation => "modulation",
            Experiment::Kernel => "kernel",
            Experiment::Tailshrink => "tailshrink",
            Experiment::NormsSelftest => "norms-selftest",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Kp5Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Kp5Error::Domain(format!("unknown experiment '{s}'")))
    }
}

/// Physical and numerical parameters of a run. `dt = None` picks the largest
/// power of two admitted by the phase-step rule.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub alpha: f64,
    pub t_max: f64,
    pub dt: Option<f64>,
    pub small_data_delta: f64,
    pub picard_tol: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nx: 64,
            ny: 64,
            lx: 32.0 * PI,
            ly: 32.0 * PI,
            alpha: 1.0,
            t_max: 32.0,
            dt: None,
            small_data_delta: 1e-3,
            picard_tol: 1e-6,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn params(&self) -> Result<DispersionParams> {
        DispersionParams::new(self.alpha)
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let (grid, params) = (self.grid()?, self.params()?);
        let base = SolverConfig {
            t_max: self.t_max,
            small_data_delta: self.small_data_delta,
            picard_tol: self.picard_tol,
            ..SolverConfig::default()
        };
        if let Some(dt) = self.dt {
            let cfg = SolverConfig { dt, ..base };
            cfg.validate(&grid, &params)?;
            return Ok(cfg);
        }
        // largest power of two leaving at least two steps, halved until the phase rule holds
        let mut dt = 2f64.powi((0.5 * self.t_max).log2().floor().min(0.0) as i32);
        for _ in 0..40 {
            let cfg = SolverConfig { dt, ..base.clone() };
            match cfg.validate(&grid, &params) {
                Ok(_) => return Ok(cfg),
                Err(Kp5Error::Constraint(_)) => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
        Err(Kp5Error::Constraint("no power-of-two dt satisfies the phase-step rule".into()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    /// Acceptance criterion this check belongs to, if any.
    pub criterion: Option<&'static str>,
    /// `module::operation` that produced the value.
    pub source: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(criterion: Option<&'static str>, source: &'static str, pass: bool, detail: String) -> Self {
        Check { criterion, source, pass, detail }
    }
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct Outcome {
    pub summary: ExperimentSummary,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.summary.pass
    }
}

/// Acceptance criteria in reporting order.
pub const CRITERIA: [&str; 13] = [
    "resonance algebra",
    "modulation bounds",
    "linear group",
    "strichartz scaling",
    "bilinear strichartz",
    "kernel decay",
    "v2 oracle",
    "small-data solve",
    "scattering",
    "wave-operator round trip",
    "derivative check",
    "uniform-in-T bilinear bound",
    "tail shrink",
];

struct Builder {
    checks: Vec<Check>,
    artifacts: Vec<Artifact>,
    stats: serde_json::Map<String, serde_json::Value>,
}

impl Builder {
    fn new() -> Self {
        Builder { checks: Vec::new(), artifacts: Vec::new(), stats: serde_json::Map::new() }
    }

    fn check(&mut self, criterion: Option<&'static str>, source: &'static str, pass: bool, detail: String) {
        self.checks.push(Check::new(criterion, source, pass, detail));
    }

    fn stat(&mut self, key: &str, v: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(v).map_err(|e| Kp5Error::Format(e.to_string()))?;
        self.stats.insert(key.into(), v);
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut bytes = Vec::new();
        write_rows(&mut bytes, rows)?;
        self.artifacts.push(Artifact { name: name.into(), bytes });
        Ok(())
    }

    fn finish(self, exp: Experiment, cfg: &RunConfig) -> Result<Outcome> {
        let pass = self.checks.iter().all(|c| c.pass);
        let mut stats = self.stats;
        let checks = serde_json::to_value(&self.checks).map_err(|e| Kp5Error::Format(e.to_string()))?;
        stats.insert("checks".into(), checks);
        let summary = ExperimentSummary::new(exp.name(), cfg.seed, cfg, stats, pass)?;
        Ok(Outcome { summary, checks: self.checks, artifacts: self.artifacts })
    }
}

/// Runs one experiment. Solver breakdowns (divergence, non-convergence,
/// failed post-conditions) become a failed outcome with the diagnostic;
/// configuration errors are returned.
pub fn run(exp: Experiment, cfg: &RunConfig) -> Result<Outcome> {
    let mut b = Builder::new();
    let res = match exp {
        Experiment::Solve => run_solve(cfg, &mut b),
        Experiment::Scatter => run_scatter(cfg, &mut b),
        Experiment::Roundtrip => run_roundtrip(cfg, &mut b),
        Experiment::Strichartz => run_strichartz(cfg, &mut b),
        Experiment::Bilinear => run_bilinear(cfg, &mut b),
        Experiment::Resonance => run_resonance(cfg, &mut b),
        Experiment::Modulation => run_modulation(cfg, &mut b),
        Experiment::Kernel => run_kernel(cfg, &mut b),
        Experiment::Tailshrink => run_tailshrink(cfg, &mut b),
        Experiment::NormsSelftest => run_norms_selftest(cfg, &mut b),
    };
    match res {
        Ok(()) => {}
        Err(e @ (Kp5Error::Divergence(_) | Kp5Error::NonConvergence(_) | Kp5Error::Assertion(_) | Kp5Error::Numerical(_))) => {
            b.check(None, "runs::run", false, format!("{exp} aborted: {e}"));
        }
        Err(e) => return Err(e),
    }
    b.finish(exp, cfg)
}

/// The reference profile: a packet around `xi = 0.75` at `hm12 = delta`.
pub fn reference_profile(grid: Grid, delta: f64, fraction: f64) -> SpectralField {
    let f = gaussian_packet(grid, 0.75, 0.25, 0.25, fraction);
    f.scale(delta / hm12_norm(&f))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn decimated(traj: &FieldTrajectory, every: usize) -> Result<FieldTrajectory> {
    let snaps = traj.snapshots().iter().step_by(every).cloned().collect();
    FieldTrajectory::new(traj.t0(), traj.dt() * every as f64, snaps)
}

fn run_solve(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("small-data solve");
    let (grid, params, sc) = (cfg.grid()?, cfg.params()?, cfg.solver_config()?);
    let profiles = [
        reference_profile(grid, cfg.small_data_delta, sc.dealias_fraction),
        random_packet(grid, sc.dealias_fraction, cfg.seed, 0).scale(cfg.small_data_delta),
    ];
    let mut summaries = Vec::new();
    for (k, u0) in profiles.iter().enumerate() {
        let (traj, log) = picard_solve(u0, &params, &sc)?;
        let ratios = log.ratios();
        let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
        let l2 = l2_norm(u0);
        let drift = traj.snapshots().iter().map(|s| (l2_norm(s) / l2 - 1.0).abs()).fold(0.0, f64::max);
        b.check(C, "solver::picard_solve", ratios.iter().all(|&r| r < 1.0), format!("profile {k}: Picard difference ratios {}, all must be < 1", sci(&ratios)));
        b.check(C, "solver::picard_solve", log.last_diff() < TERMINAL_DIFF_TOL, format!("profile {k}: terminal Ydot difference {:.3e} < {TERMINAL_DIFF_TOL:.0e}", log.last_diff()));
        b.check(C, "solver::picard_solve", drift <= L2_CONSERVATION_TOL, format!("profile {k}: max relative L2 drift {drift:.3e} <= {L2_CONSERVATION_TOL:.0e}"));
        let mut csv = Vec::new();
        log.write_csv(&mut csv)?;
        b.artifacts.push(Artifact { name: format!("picard_{k}.csv"), bytes: csv });
        let every = ((1.0 / sc.dt).round() as usize).max(1);
        let mut bin = Vec::new();
        write_trajectory(&mut bin, &decimated(&traj, every)?)?;
        b.artifacts.push(Artifact { name: format!("solution_{k}.kp5t"), bytes: bin });
        summaries.push(serde_json::json!({ "profile": k, "iterations": log.rows.len(), "max_ratio": max_ratio, "terminal_diff": log.last_diff(), "l2_drift": drift }));
    }
    b.stat("profiles", summaries)?;

    // uniformity in T of the bilinear Duhamel bound
    let t_it = *IT_TIMES.last().expect("nonempty");
    let it_cfg = SolverConfig { t_max: t_it, ..sc };
    let (rows, res) = it_bound_experiment(grid, 4, &IT_TIMES, &params, &it_cfg, cfg.seed)?;
    b.check(
        Some("uniform-in-T bilinear bound"),
        "lab::it_bound_experiment",
        res.spread <= SPREAD_LIMIT,
        format!("constants per T {:?}, spread {:.3} <= {SPREAD_LIMIT}", res.constants, res.spread),
    );
    b.csv("it_bound.csv", &rows)?;
    b.stat("it_bound", &res)
}

#[derive(Serialize)]
struct CauchyRow {
    t_from: f64,
    t_to: f64,
    hm12_diff: f64,
}

fn run_scatter(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("scattering");
    let (grid, params, sc) = (cfg.grid()?, cfg.params()?, cfg.solver_config()?);
    let u0 = reference_profile(grid, cfg.small_data_delta, sc.dealias_fraction);
    let s = scatter(&u0, Direction::Plus, &params, &sc)?;
    let a = &s.asymptote;
    let h0 = hm12_norm(&u0);
    let tail = &a.cauchy[a.cauchy.len() - 3..];
    let last = *a.cauchy.last().expect("nonempty");
    b.check(C, "scattering::extract_asymptote", tail.windows(2).all(|w| w[1] < w[0]), format!("Cauchy differences over the last 4 checkpoints {} strictly decreasing", sci(tail)));
    b.check(C, "scattering::extract_asymptote", last < CAUCHY_FINAL_TOL * h0, format!("final Cauchy difference {last:.3e} < {CAUCHY_FINAL_TOL:.0e} * hm12(u0) = {:.3e}", CAUCHY_FINAL_TOL * h0));
    let report = ScatteringReport::new(&u0, a, None);
    b.check(C, "scattering::scatter", report.l2_defect <= ASYMPTOTE_L2_TOL, format!("| ||u_+|| / ||u0|| - 1 | = {:.3e} <= {ASYMPTOTE_L2_TOL:.0e}", report.l2_defect));
    if let Some(w) = &a.warning {
        b.stat("warning", w)?;
    }
    let rows: Vec<CauchyRow> = a.checkpoints.windows(2).zip(&a.cauchy).map(|(t, &d)| CauchyRow { t_from: t[0], t_to: t[1], hm12_diff: d }).collect();
    b.csv("cauchy.csv", &rows)?;
    let mut bin = Vec::new();
    write_snapshot(&mut bin, &a.u_pm)?;
    b.artifacts.push(Artifact { name: "u_plus.kp5f".into(), bytes: bin });
    b.artifacts.push(Artifact { name: "scattering.json".into(), bytes: report.to_json().into_bytes() });
    b.stat("report", &report)
}

#[derive(Serialize)]
struct RoundtripRow {
    t_inverse: f64,
    t_forward: f64,
    defect: f64,
}

fn run_roundtrip(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("wave-operator round trip");
    let (grid, params, sc) = (cfg.grid()?, cfg.params()?, cfg.solver_config()?);
    let u0 = reference_profile(grid, cfg.small_data_delta, sc.dealias_fraction);
    let h0 = hm12_norm(&u0);
    let u_plus = scatter(&u0, Direction::Plus, &params, &sc)?.asymptote.u_pm;
    let mut rows = Vec::new();
    for t in [sc.t_max / 4.0, sc.t_max / 2.0, sc.t_max] {
        let back = inverse_wave_operator(&u_plus, Direction::Plus, &params, &SolverConfig { t_max: t, ..sc.clone() })?;
        rows.push(RoundtripRow { t_inverse: t, t_forward: sc.t_max, defect: hm12_norm(&back.sub(&u0)?) / h0 });
    }
    let matched = rows[2].defect;
    let halving = rows[1].defect / rows[0].defect;
    b.check(C, "scattering::inverse_wave_operator", matched < ROUNDTRIP_TOL, format!("matched-horizon defect {matched:.3e} < {ROUNDTRIP_TOL:.0e}"));
    b.check(
        C,
        "scattering::inverse_wave_operator",
        (halving - 0.5).abs() <= HALVING_BAND * 0.5,
        format!("defect ratio D({}) / D({}) = {halving:.3} within 0.5 +- 30% ({:.3e}, {:.3e})", rows[1].t_inverse, rows[0].t_inverse, rows[1].defect, rows[0].defect),
    );
    b.csv("roundtrip.csv", &rows)?;
    b.stat("matched_defect", matched)?;
    b.stat("halving_ratio", halving)?;

    // derivative of W_+ at zero along the reference direction
    const D: Option<&str> = Some("derivative check");
    // the largest step eps h sits on the boundary of the small-data ball
    let zero = SpectralField::zeros(grid);
    let h = u0.scale(1.0 / DERIVATIVE_EPS[0]);
    let r = directional_derivative_check(&zero, &h, &params, &sc)?;
    let order = r.order_ratio.log10() / (r.eps[0] / r.eps[1]).log10();
    let err = *r.error_vs_h.last().expect("two levels");
    b.check(D, "scattering::directional_derivative_check", err < DERIVATIVE_TOL, format!("relative error at eps = {:.0e}: {err:.3e} < {DERIVATIVE_TOL:.0e}", r.eps[1]));
    b.check(D, "scattering::directional_derivative_check", (order - 2.0).abs() <= 0.5, format!("observed order {order:.3} (errors {}) within 2 +- 0.5", sci(&r.error_vs_h)));
    b.stat("derivative", serde_json::json!({ "eps": r.eps, "error_vs_h": r.error_vs_h, "order": order, "richardson_error_vs_h": r.richardson_error_vs_h }))
}

fn run_strichartz(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("strichartz scaling");
    let params = cfg.params()?;
    let bands: Vec<f64> = (-4..=6).map(|k| 2f64.powi(k)).filter(|&n| n != 2.0).collect();
    let pairs = [(4.0, 4.0), (8.0, 8.0 / 3.0)];
    let (rows, res) = strichartz_scaling_experiment(&bands, &pairs, 3, &params, cfg.seed, &ScaledSetup::default())?;
    for f in &res.fits {
        let large = f.large_slope.unwrap_or(f64::NAN);
        let small = f.small_slope.unwrap_or(f64::NAN);
        let crit = if f.q == 4.0 { C } else { None };
        b.check(crit, "lab::strichartz_scaling_experiment", (large - f.predicted_slope).abs() <= SLOPE_TOL, format!("L^{}L^{:.4}: slope {large:.4} over N >= 4, expected {:.4} +- {SLOPE_TOL}", f.q, f.r, f.predicted_slope));
        b.check(crit, "lab::strichartz_scaling_experiment", small.abs() <= SLOPE_TOL, format!("L^{}L^{:.4}: slope {small:.4} over N <= 1, expected 0 +- {SLOPE_TOL}", f.q, f.r));
    }
    b.csv("strichartz.csv", &rows)?;
    b.stat("fits", &res.fits)?;
    b.stat("max_tail_fraction", res.max_tail_fraction)?;
    b.stat("warning", &res.warning)
}

fn run_bilinear(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("bilinear strichartz");
    let params = cfg.params()?;
    let setup = BilinearSetup::default();
    let (mut rows, ratio_sweep) = bilinear_sweep(&[(1.0, 4.0), (0.25, 4.0), (1.0 / 16.0, 4.0)], 6, &params, cfg.seed, &setup)?;
    let constants: Vec<f64> = ratio_sweep.cells.iter().map(|c| c.max_ratio).collect();
    b.check(C, "lab::bilinear_sweep", ratio_sweep.spread <= SPREAD_LIMIT, format!("constants {constants:.4?} for N2/N1 = 4, 16, 64: spread {:.3} <= {SPREAD_LIMIT}", ratio_sweep.spread));
    let (more, high_sweep) = bilinear_sweep(&[(0.25, 8.0), (0.25, 16.0)], 6, &params, cfg.seed, &setup)?;
    rows.extend(more);
    let sharp: Vec<f64> = std::iter::once(&ratio_sweep.cells[1]).chain(&high_sweep.cells).filter_map(|c| c.max_sharp_ratio).collect();
    b.check(C, "lab::bilinear_strichartz_experiment", non_increasing_within_noise(&sharp), format!("sharp constants {sharp:.4?} for N2 = 4, 8, 16 non-increasing within 10%"));
    b.csv("bilinear.csv", &rows)?;
    b.stat("ratio_sweep", &ratio_sweep)?;
    b.stat("sharp_constants", sharp)
}

fn run_resonance(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("resonance algebra");
    let params = cfg.params()?;
    let r = resonance_batch(10_000, cfg.seed, &params);
    b.check(C, "lab::resonance_residual", r.max_residual < RESIDUAL_TOL, format!("max residual {:.3e} < {RESIDUAL_TOL:.0e} over {} triples", r.max_residual, r.samples));
    b.check(C, "lab::resonance_batch", r.sign_violations == 0, format!("{} sign-structure violations", r.sign_violations));
    b.check(C, "lab::nu_range", r.nu_range_violations == 0, format!("{} nu-range violations", r.nu_range_violations));
    let mut jac = Vec::new();
    for ratio in [8.0, 32.0, 128.0] {
        let j = jacobian_batch(ratio, 2000, cfg.seed, &params)?;
        b.check(None, "lab::jacobian_bound_check", j.min_ratio >= JACOBIAN_CONSTANT, format!("N2/N1 = {ratio}: min J/bound {:.4} >= {JACOBIAN_CONSTANT}", j.min_ratio));
        jac.push(j);
    }
    let beta = beta_integral_error(&[1e-3, 1.0, 1e3])?;
    b.check(None, "lab::beta_integral", beta < 1e-8, format!("beta integral error {beta:.3e} < 1e-8"));
    b.csv("jacobian.csv", &jac)?;
    b.stat("resonance", &r)?;
    b.stat("jacobian", &jac)
}

fn run_modulation(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    let m = modulation_batch(10_000, cfg.seed)?;
    b.check(
        Some("modulation bounds"),
        "lab::modulation_lower_bounds",
        m.violations == 0,
        format!("{} violations over {} samples (min slack {:.3e}, first {:?})", m.violations, m.samples, m.min_slack, m.first_violation),
    );
    let row = ModulationRow { samples: m.samples, violations: m.violations, min_slack: m.min_slack, tight_case_slack: m.tight_case_slack };
    b.csv("modulation.csv", &[row])?;
    b.stat("modulation", &m)
}

#[derive(Serialize)]
struct ModulationRow {
    samples: usize,
    violations: usize,
    min_slack: f64,
    tight_case_slack: f64,
}

fn run_kernel(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("kernel decay");
    let params = cfg.params()?;
    let (rows, stats) = kernel_decay(64, cfg.seed, &params)?;
    b.check(C, "lab::kernel_decay", stats.spread <= SPREAD_LIMIT, format!("C = {:.4}, per-cell spread {:.3} <= {SPREAD_LIMIT}", stats.c, stats.spread));
    let mut cmp = Vec::new();
    for n in FFT_BANDS {
        let c = kernel_fft_comparison(n, 1.0, 24, &params)?;
        b.check(C, "propagator::kernel", c.rel_l2 < KERNEL_FFT_TOL, format!("N = {n}: quadrature vs FFT relative L2 {:.3e} < {KERNEL_FFT_TOL:.0e}", c.rel_l2));
        cmp.push(c);
    }
    b.csv("kernel.csv", &rows)?;
    b.csv("kernel_fft.csv", &cmp)?;
    b.stat("decay", &stats)
}

fn run_tailshrink(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    const C: Option<&str> = Some("tail shrink");
    let params = cfg.params()?;
    let setup = TailShrinkSetup::default();
    let phi = setup.datum()?;
    let profile = l4_profile(&phi, &params, setup.window, setup.dt)?;
    let curve = tail_shrink_experiment(&profile, setup.m, &setup.t_list)?;
    b.check(C, "lab::tail_shrink_experiment", curve.strictly_decreasing, format!("both modulation halves strictly decreasing in T over {:?}", setup.t_list));
    b.check(C, "lab::tail_shrink_experiment", curve.final_relative < TAIL_LIMIT, format!("largest half at T = {} is {:.4} ||phi|| < {TAIL_LIMIT}", curve.window, curve.final_relative));
    b.csv("tailshrink.csv", &curve.rows)?;
    b.stat("curve", &curve)?;

    // interpolation between the Holder and bilinear endpoints, N2/N1 = 16
    let g = Grid::new(1024, 128, 800.0, 200.0)?;
    let f = SpectralField::from_fn(g, |xi, eta| C64::new(bump_psi(16.0 * xi) * (-eta * eta).exp(), 0.0));
    let f = f.scale(1.0 / l2_norm(&f));
    let dt = 1.0 / 32.0;
    let small = tail_shrink_experiment(&l4_profile(&f, &params, 8.0, dt)?, 1.0, &[1.0, 2.0, 4.0, 8.0])?;
    let t_cut = 4.0;
    let eps = small.rows[2].low / small.l2;
    let rep = interpolated_bilinear_check(&f, 1.0 / 16.0, 1.0, &small, ModulationHalf::Low, t_cut, eps, 4, dt, &params, cfg.seed)?;
    b.check(None, "lab::interpolated_bilinear_check", rep.c.is_finite() && rep.c > 0.0, format!("T = {t_cut}, eps = {eps:.4}: c = {:.4}", rep.c));
    b.csv("interpolation.csv", &rep.rows)?;
    b.stat("interpolation", serde_json::json!({ "n1": rep.n1, "n2": rep.n2, "t_cut": rep.t_cut, "eps": rep.eps, "c": rep.c }))
}

fn random_field(grid: Grid, seed: u64, trial: u64) -> SpectralField {
    use rand::Rng;
    let mut rng = trial_rng(seed, trial);
    SpectralField::from_fn(grid, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn run_norms_selftest(cfg: &RunConfig, b: &mut Builder) -> Result<()> {
    use rand::Rng;
    const G: Option<&str> = Some("linear group");
    let (grid, params, sc) = (cfg.grid()?, cfg.params()?, cfg.solver_config()?);
    let (mut unitary, mut group) = (0.0f64, 0.0f64);
    for k in 0..20 {
        let f = random_field(grid, cfg.seed, k);
        let mut rng = trial_rng(cfg.seed ^ 0x5eed, k);
        let (s, t) = (rng.gen_range(-2048i32..2048) as f64 / 64.0, rng.gen_range(-2048i32..2048) as f64 / 64.0);
        let n = l2_norm(&f);
        let one = propagate(&f, s + t, &params);
        let two = propagate(&propagate(&f, s, &params), t, &params);
        unitary = unitary.max((l2_norm(&one) / n - 1.0).abs());
        group = group.max(l2_norm(&two.sub(&one)?) / n);
    }
    b.check(G, "propagator::propagate", unitary <= GROUP_TOL, format!("max unitarity defect {unitary:.3e} <= {GROUP_TOL:.0e}"));
    b.check(G, "propagator::propagate", group <= GROUP_TOL, format!("max group-law defect {group:.3e} <= {GROUP_TOL:.0e}"));
    let phi = reference_profile(grid, 1.0, sc.dealias_fraction);
    let traj = FieldTrajectory::free_wave(&phi, 0.0, sc.dt, 65, &params)?;
    let frames: Vec<SpectralField> = (0..traj.len()).map(|m| propagate(traj.snapshot(m), -traj.time(m), &params)).collect();
    let v2 = v2_variation(&SampledPath::new(frames)?);
    let v2_err = (v2 / l2_norm(&phi) - 1.0).abs();
    b.check(G, "norms::v2_variation", v2_err <= GROUP_TOL, format!("free-wave V2 surrogate / ||phi|| - 1 = {v2_err:.3e}"));

    const O: Option<&str> = Some("v2 oracle");
    let small = Grid::new(8, 4, 2.0 * PI, 2.0 * PI)?;
    let mut mismatches = 0;
    for k in 0..200u64 {
        let mut rng = trial_rng(cfg.seed, 1_000 + k);
        let n = rng.gen_range(1..=10);
        let vals = (0..n).map(|j| random_field(small, cfg.seed ^ k, j as u64)).collect();
        let path = SampledPath::new(vals)?;
        let d = path.distance_matrix();
        let dp = v2_from_distances(d.len(), |i, j| d[i][j]);
        let bf = v2_brute_force(d.len(), |i, j| d[i][j]);
        if dp != bf || v2_variation(&path) != dp {
            mismatches += 1;
        }
    }
    b.check(O, "norms::v2_from_distances", mismatches == 0, format!("{mismatches} of 200 paths (up to 12 points) differ from brute force"));
    b.stat("unitarity_defect", unitary)?;
    b.stat("group_defect", group)?;
    b.stat("free_wave_v2_defect", v2_err)
}

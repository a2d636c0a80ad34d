//! Verification suites: property checks per module plus the builtin scenarios,
//! aggregated into one JSON report.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use popowicz::dynamics::{momentum, velocity, Popowicz, SolverConfig, State};
use popowicz::ensemble::{pairs, rng, BandLimited};
use popowicz::lagrangian::{
    continuous_dependence_experiment, fit_growth_constant, l1_bound_check, l1_constant,
    simulate_with_diagnostics,
};
use popowicz::littlewood_paley::{
    bony_decomposition, build_cutoffs, decompose, dealiased_product, product_estimate_ratio, BesovParams,
};
use popowicz::picard::calibrate_constant;
use popowicz::report::Verdict;
use popowicz::spectral::{helmholtz_forward, helmholtz_inverse, Field, Grid, HelmholtzKernel, TWO_THIRDS};

use crate::config::{InitialData, Profile, ScenarioConfig, Sign, Space};
use crate::error::{CliError, CliResult};
use crate::picard_run;
use crate::run::{run_scenario, RunArtifact, RunOptions};
use crate::scenarios;

/// Environment variable holding the worker count (integer >= 1).
pub const WORKERS_ENV: &str = "POPOWICZ_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Core,
    Lp,
    Picard,
    Lagrangian,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Core => "core",
            Suite::Lp => "lp",
            Suite::Picard => "picard",
            Suite::Lagrangian => "lagrangian",
            Suite::All => "all",
        }
    }

    fn members(self) -> Vec<Suite> {
        match self {
            Suite::All => vec![Suite::Core, Suite::Lp, Suite::Picard, Suite::Lagrangian],
            s => vec![s],
        }
    }
}

/// Deliberate defects for checking that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mutation {
    /// Pushforward check uses `m q_x^2` instead of `m q_x^3`.
    PushforwardExponent,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteCheck {
    pub suite: &'static str,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub suite: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub checks: Vec<SuiteCheck>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<&SuiteCheck> {
        self.checks.iter().filter(|c| !c.verdict.pass).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Verdict> {
        self.checks.iter().map(|c| &c.verdict).find(|v| v.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Scenario runs write their artifacts under this directory.
    pub out: PathBuf,
    pub mutation: Option<Mutation>,
}

/// Worker count from [`WORKERS_ENV`]; `None` when unset.
pub fn workers_from_env() -> CliResult<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("{WORKERS_ENV}: {e}"))),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{WORKERS_ENV} must be an integer >= 1, got '{text}'"
            ))),
        },
    }
}

/// Runs `suite` on a pool sized by [`WORKERS_ENV`].
pub fn run_suite(suite: Suite, options: &VerifyOptions) -> CliResult<VerifyReport> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers_from_env()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_suite_here(suite, options))
}

fn run_suite_here(suite: Suite, options: &VerifyOptions) -> CliResult<VerifyReport> {
    let start = Instant::now();
    let mut checks = Vec::new();
    for member in suite.members() {
        let verdicts = match member {
            Suite::Core => core_suite(options)?,
            Suite::Lp => lp_suite()?,
            Suite::Picard => picard_suite()?,
            Suite::Lagrangian => lagrangian_suite(options)?,
            Suite::All => unreachable!("expanded above"),
        };
        checks.extend(verdicts.into_iter().map(|verdict| SuiteCheck {
            suite: member.name(),
            verdict,
        }));
    }
    Ok(VerifyReport {
        suite: suite.name(),
        pass: checks.iter().all(|c| c.verdict.pass),
        seconds: start.elapsed().as_secs_f64(),
        checks,
    })
}

/// Runs builtin simulations concurrently, each in its own directory, and
/// prefixes their verdicts with the scenario name.
fn scenario_verdicts(names: &[&str], options: &VerifyOptions) -> CliResult<Vec<(String, RunArtifact)>> {
    let run_options = RunOptions {
        plots: false,
        pushforward_exponents: match options.mutation {
            Some(Mutation::PushforwardExponent) => (2, 2),
            None => crate::run::PUSHFORWARD_EXPONENTS,
        },
    };
    names
        .par_iter()
        .map(|name| {
            let cfg = scenarios::simulation(name)?;
            let art = run_scenario(&cfg, &options.out.join(name), &run_options)?;
            Ok((name.to_string(), art))
        })
        .collect()
}

fn prefixed(name: &str, art: &RunArtifact) -> Vec<Verdict> {
    art.verdicts
        .iter()
        .map(|v| Verdict {
            name: format!("{name}/{}", v.name),
            ..v.clone()
        })
        .collect()
}

fn grid(n: usize, period: f64) -> CliResult<Arc<Grid>> {
    Ok(Grid::new(n, period)?)
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

// ---------------------------------------------------------------------------
// core

fn core_suite(options: &VerifyOptions) -> CliResult<Vec<Verdict>> {
    let mut out = Vec::new();
    let g = grid(128, 2.0 * std::f64::consts::PI)?;
    let shape = BandLimited::new(12, 0.5, 1.0).with_mean();
    let ensemble = pairs(&g, &shape, 20, 11);
    let kernel = HelmholtzKernel::new(&g);

    let mut round_trip = 0.0f64;
    let mut helmholtz = 0.0f64;
    let mut residual = 0.0f64;
    let op = Popowicz::new(&g, TWO_THIRDS)?;
    for (u, v) in &ensemble {
        let s = State::new(u.clone(), v.clone(), 0.0)?;
        let back = velocity(&momentum(&s)?)?;
        let d = back.u.max_diff(&s.u)?.max(back.v.max_diff(&s.v)?);
        round_trip = round_trip.max(relative(d, s.max_abs()));
        let h = helmholtz_forward(&helmholtz_inverse(u, &kernel)?)?;
        helmholtz = helmholtz.max(relative(h.max_diff(u)?, u.max_abs()));
        residual = residual.max(op.momentum_form_residual(&s)?);
    }
    out.push(Verdict::at_most("momentum_round_trip", round_trip, 1e-10));
    out.push(Verdict::at_most("helmholtz_pair", helmholtz, 1e-10));
    out.push(Verdict::at_most("momentum_form_residual", residual, 1e-8));

    // single-component subspaces and constants under 200 steps
    let small = BandLimited::new(4, 1.0, 0.3);
    let f = small.sample(&g, &mut rng(5));
    let zero = Field::zeros(&g);
    let dt = 0.005;
    let mut a = State::new(f.clone(), zero.clone(), 0.0)?;
    let mut b = State::new(zero, f, 0.0)?;
    let mut c = State::new(Field::constant(&g, 0.4), Field::constant(&g, -0.3), 0.0)?;
    let c0 = c.clone();
    for _ in 0..200 {
        a = op.step_rk4(&a, dt)?;
        b = op.step_rk4(&b, dt)?;
        c = op.step_rk4(&c, dt)?;
    }
    out.push(Verdict::at_most("reduction_invariance", a.v.max_abs().max(b.u.max_abs()), 1e-10));
    out.push(Verdict::at_most(
        "constant_equilibrium",
        c.u.max_diff(&c0.u)?.max(c.v.max_diff(&c0.v)?),
        1e-12,
    ));

    // conservation with the momentum-form safety check on every snapshot
    let ms = popowicz::dynamics::MomentumState {
        m: Field::from_fn(&g, |x| 0.5 * (-(x - 2.5).powi(2)).exp()),
        n: Field::from_fn(&g, |x| 0.3 * (-(x - 3.5).powi(2) / 2.0).exp()),
        time: 0.0,
    };
    let s0 = velocity(&ms)?;
    let cfg = SolverConfig::new(0.005, 1.0).with_stride(20).with_safety_checks(true);
    let (summary, _) = simulate_with_diagnostics(&s0, &cfg, None)?;
    out.push(Verdict::flag("safety_checked_run_completes", summary.abort.is_none()));
    out.push(Verdict::at_most("short_run_conservation", summary.conserved_drift, 1e-8));

    for (name, art) in scenario_verdicts(&["ch_reduction_peakon", "dp_reduction_peakon"], options)? {
        out.extend(prefixed(&name, &art));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// lp

fn lp_suite() -> CliResult<Vec<Verdict>> {
    let mut out = Vec::new();
    let two_pi = 2.0 * std::f64::consts::PI;

    let g = grid(1024, two_pi)?;
    let cutoffs = build_cutoffs(&g)?;
    let band = 0.75 * 2f64.powi(cutoffs.j_max());
    let mut partition = 0.0f64;
    for i in 0..g.n_points() {
        if g.wavenumbers()[i].abs() <= band {
            let total: f64 = cutoffs.indices().map(|j| cutoffs.window(j).unwrap()[i]).sum();
            partition = partition.max((total - 1.0).abs());
        }
    }
    out.push(Verdict::at_most("partition_of_unity", partition, 1e-10));

    let g = grid(256, two_pi)?;
    let cutoffs = build_cutoffs(&g)?;
    let mut reconstruction = 0.0f64;
    let mut bony = 0.0f64;
    let mut orthogonality = 0.0f64;
    for seed in 0..20u64 {
        let shape = BandLimited::new(40, 0.5, 1.0).with_mean();
        let f = shape.sample(&g, &mut rng(seed));
        let d = decompose(&f, &cutoffs)?;
        reconstruction = reconstruction.max(relative(d.reconstruct().max_diff(&f)?, f.max_abs()));

        let narrow = BandLimited::new(30, 0.5, 1.0).with_mean();
        let u = narrow.sample(&g, &mut rng(seed + 100));
        let v = narrow.sample(&g, &mut rng(seed + 200));
        let terms = bony_decomposition(&u, &v, &cutoffs)?;
        let sum = terms.t_uv.add(&terms.t_vu)?.add(&terms.remainder)?;
        let uv = dealiased_product(&u, &v)?;
        bony = bony.max(relative(sum.max_diff(&uv)?, uv.max_abs()));

        let rough = BandLimited::new(g.n_points() / 2 - 1, 0.0, 1.0).sample(&g, &mut rng(seed + 300));
        let dr = decompose(&rough, &cutoffs)?;
        for (j, block) in dr.iter() {
            for (jj, b) in decompose(block, &cutoffs)?.iter() {
                if (j - jj).abs() >= 2 {
                    orthogonality = orthogonality.max(b.max_abs());
                }
            }
        }
    }
    out.push(Verdict::at_most("reconstruction", reconstruction, 1e-10));
    out.push(Verdict::at_most("bony_identity", bony, 1e-8));
    out.push(Verdict::at_most("almost_orthogonality", orthogonality, 1e-12));

    // dyadic scaling of single modes
    let params = BesovParams::new(1.0, 2.0, 2.0)?;
    let k = 8.0;
    let norm_of = |freq: f64| -> CliResult<f64> {
        let f = Field::from_fn(&g, |x| (freq * x).cos());
        Ok(decompose(&f, &cutoffs)?.besov_norm(&params))
    };
    let scaling = norm_of(2.0 * k)? / norm_of(k)? / 2f64.powf(params.s);
    out.push(Verdict::within("dyadic_scaling", scaling, 0.85, 1.15));

    out.push(product_refinement()?);
    Ok(out)
}

/// Largest product-estimate ratio over a seeded ensemble on a coarse and a
/// fine grid; the two maxima must agree within a factor 2.
pub fn product_refinement() -> CliResult<Verdict> {
    let params = BesovParams::new(2.6, 2.0, 2.0)?;
    let shape = BandLimited::new(20, 1.0, 1.0);
    let max_ratio = |n: usize| -> CliResult<f64> {
        let g = grid(n, 2.0 * std::f64::consts::PI)?;
        let cutoffs = build_cutoffs(&g)?;
        let ratios = pairs(&g, &shape, 100, 2024)
            .par_iter()
            .map(|(u, v)| product_estimate_ratio(u, v, &params, &cutoffs))
            .collect::<popowicz::Result<Vec<f64>>>()?;
        Ok(ratios.into_iter().fold(0.0, f64::max))
    };
    let (coarse, fine) = (max_ratio(256)?, max_ratio(1024)?);
    let change = (coarse / fine).max(fine / coarse);
    Ok(Verdict::at_most("product_estimate_refinement", change, 2.0))
}

// ---------------------------------------------------------------------------
// picard

/// Calibration ensemble of the Picard constant: same grid and shape as the
/// builtin scenario, a disjoint seed.
pub const PICARD_CALIBRATION_SEED: u64 = 1000;
pub const PICARD_CALIBRATION_SIZE: usize = 20;
pub const PICARD_CALIBRATION_TIME: f64 = 1.0;

pub fn calibrate_picard_constant() -> CliResult<f64> {
    let cfg = scenarios::picard("picard_small_data")?;
    let grid = cfg.grid.build()?;
    let cutoffs = build_cutoffs(&grid)?;
    let Profile::RandomModes {
        max_mode,
        decay,
        amplitude,
    } = cfg.initial_data.first
    else {
        return Err(CliError::Data("picard scenario must use random_modes data".into()));
    };
    let shape = BandLimited::new(max_mode, decay, amplitude);
    let ensemble = pairs(&grid, &shape, PICARD_CALIBRATION_SIZE, PICARD_CALIBRATION_SEED);
    Ok(calibrate_constant(&ensemble, &cfg.iteration, PICARD_CALIBRATION_TIME, &cutoffs)?)
}

fn picard_suite() -> CliResult<Vec<Verdict>> {
    let cfg = scenarios::picard("picard_small_data")?;
    let calibrated = calibrate_picard_constant()?;
    let mut out = vec![Verdict::at_least(
        "frozen_constant_covers_calibration",
        cfg.iteration.fitted_c,
        calibrated,
    )];
    let (_, art) = picard_run::evaluate(&cfg)?;
    out.extend(art.verdicts.iter().map(|v| Verdict {
        name: format!("{}/{}", cfg.name, v.name),
        ..v.clone()
    }));
    Ok(out)
}

// ---------------------------------------------------------------------------
// lagrangian

pub const GROWTH_CALIBRATION_SEED: u64 = 4000;
pub const GROWTH_CALIBRATION_SIZE: usize = 8;

fn random_bump(r: &mut impl rand::Rng, period: f64) -> Profile {
    Profile::GaussianMomentum {
        amplitude: r.gen_range(0.2..1.0),
        width: r.gen_range(1.5..3.0),
        center: r.gen_range(0.3 * period..0.7 * period),
        sign: Sign::Positive,
    }
}

/// Random nonnegative two-bump momentum data on the grid of `template`.
fn growth_calibration_member(template: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    let mut r = rng(seed);
    let l = template.grid.period;
    let first = random_bump(&mut r, l);
    let second = random_bump(&mut r, l);
    ScenarioConfig {
        name: format!("growth_calibration_{seed}"),
        initial_data: InitialData {
            space: Space::Momentum,
            first,
            second,
        },
        diagnostics: Vec::new(),
        growth_constant: None,
        ..template.clone()
    }
}

/// Fits the growth-bound constant over random nonnegative-momentum runs on the
/// grid and horizon of the positive-momentum builtin.
pub fn calibrate_growth_constant() -> CliResult<f64> {
    let template = scenarios::simulation("thm43_positive_momentum")?;
    let grid = template.grid.build()?;
    let cutoffs = build_cutoffs(&grid)?;
    let fits = (0..GROWTH_CALIBRATION_SIZE as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = growth_calibration_member(&template, GROWTH_CALIBRATION_SEED + k);
            let s0 = cfg.initial_state()?;
            let (summary, obs) =
                simulate_with_diagnostics(&s0, &cfg.solver, Some((cfg.besov, cutoffs.clone())))?;
            if let Some(a) = summary.abort {
                return Err(CliError::Abort(a.to_string()));
            }
            Ok(fit_growth_constant(&obs.record))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(fits.into_iter().fold(0.0, f64::max))
}

/// Log-log slope of the distance between two solutions against the size of the
/// initial perturbation; Lipschitz dependence puts it near 1.
pub fn dependence_slope() -> CliResult<Verdict> {
    let g = grid(256, 2.0 * std::f64::consts::PI)?;
    let cutoffs = build_cutoffs(&g)?;
    let shape = BandLimited::new(4, 1.5, 0.05);
    let base = &pairs(&g, &shape, 1, 31)[0];
    let delta = &pairs(&g, &shape, 1, 32)[0];
    let s0 = State::new(base.0.clone(), base.1.clone(), 0.0)?;
    let cfg = SolverConfig::new(0.01, 1.0).with_stride(5);
    let norm = BesovParams::new(1.6, 2.0, 2.0)?;
    let report = continuous_dependence_experiment(
        &s0,
        (&delta.0, &delta.1),
        &[1e-2, 1e-3, 1e-4],
        &cfg,
        &norm,
        &cutoffs,
    )?;
    if !report.aborted.is_empty() {
        return Ok(Verdict::flag("continuous_dependence_slope", false));
    }
    Ok(Verdict::within("continuous_dependence_slope", report.slope, 0.9, 1.1))
}

fn lagrangian_suite(options: &VerifyOptions) -> CliResult<Vec<Verdict>> {
    let mut out = Vec::new();
    let names = [
        "thm43_positive_momentum",
        "lagrangian_pushforward",
        "odd_data",
        "sign_changing_monitor",
        "l1_mutation_probe",
    ];
    for (name, art) in scenario_verdicts(&names, options)? {
        out.extend(prefixed(&name, &art));
        if name == "l1_mutation_probe" && !art.aborted() {
            // the m-bound with rate C_0/4 in place of 4 C_0 must be violated
            let cfg = scenarios::simulation(&name)?;
            let c0 = l1_constant(&momentum(&cfg.initial_state()?)?)?;
            let weak = l1_bound_check(&art.record, c0, 0.25, 2.0);
            out.push(Verdict::at_least("l1_mutation_detected", weak.worst_ratio_m, 1.0 + 1e-9));
        }
    }
    let frozen = scenarios::simulation("thm43_positive_momentum")?
        .growth_constant
        .unwrap_or(0.0);
    out.push(Verdict::at_least(
        "growth_constant_covers_calibration",
        frozen,
        calibrate_growth_constant()?,
    ));
    out.push(dependence_slope()?);
    Ok(out)
}

/// Default scratch location for scenario artifacts of a verify run.
pub fn default_out_dir() -> PathBuf {
    std::env::temp_dir().join(format!("popowicz-verify-{}", std::process::id()))
}

pub fn write_report(report: &VerifyReport, dir: &Path) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).map_err(popowicz::Error::from)? + "\n";
    std::fs::write(&path, text).map_err(CliError::io(format!("writing {}", path.display())))?;
    Ok(path)
}

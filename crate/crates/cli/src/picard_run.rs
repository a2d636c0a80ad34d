//! The `picard` command: iterate the linear transport scheme from a config and
//! report convergence, the uniform bound and the distance to the nonlinear solver.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use popowicz::io::fmt_real;
use popowicz::littlewood_paley::build_cutoffs;
use popowicz::picard::{
    run_iteration_with, solver_gap, uniform_bound_check, InitialGuess, IterateTrace, IterationConfig,
    IterationOutcome, CONVERGENCE_TOL,
};
use popowicz::report::Verdict;
use popowicz::spectral::TWO_THIRDS;

use crate::config::{besov_json, grid_json, parse_besov, parse_grid, parse_initial, GridSpec, InitialData, Obj};
use crate::error::{CliError, CliResult};

/// Successive differences must shrink at least this fast beyond the ramp.
pub const CONTRACTION_LIMIT: f64 = 0.8;

/// Ratios are only read while the earlier difference sits this far above the
/// convergence tolerance; below it the differences are roundoff.
pub const RATIO_FLOOR_FACTOR: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PicardConfig {
    pub name: String,
    pub grid: GridSpec,
    pub initial_data: InitialData,
    pub seed: u64,
    pub iteration: IterationConfig,
    pub initial_guess: InitialGuess,
}

impl PicardConfig {
    pub fn from_json_str(text: &str) -> CliResult<PicardConfig> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(vec![format!("not valid JSON: {e}")]))?;
        let mut errs = Vec::new();
        match Self::collect(&value, &mut errs) {
            Some(cfg) if errs.is_empty() => Ok(cfg),
            _ => Err(CliError::Config(errs)),
        }
    }

    pub fn from_path(path: &Path) -> CliResult<PicardConfig> {
        let text = fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::from_json_str(&text)
    }

    fn collect(value: &Value, errs: &mut Vec<String>) -> Option<PicardConfig> {
        let top = Obj::new(value, "", errs)?;
        top.only(&["name", "grid", "initial_data", "seed", "iteration", "initial_guess"], errs);
        let name = top.text("name", errs).map(str::to_string);
        let grid = parse_grid(&top, errs);
        let initial = parse_initial(&top, errs);
        let seed = top.count_or("seed", 0, errs);
        let guess = match top.get("initial_guess").map(|v| v.as_str()) {
            None | Some(Some("zero")) => Some(InitialGuess::Zero),
            Some(Some("frozen")) => Some(InitialGuess::Frozen),
            Some(_) => {
                errs.push("initial_guess must be \"zero\" or \"frozen\"".into());
                None
            }
        };
        let iteration = top.child("iteration", errs).and_then(|it| {
            it.only(
                &["max_iter", "t_frac", "dt", "norm", "fitted_c", "dealias_fraction", "sample_stride", "tolerance"],
                errs,
            );
            let max_iter = it.count("max_iter", errs);
            let t_frac = it.real("t_frac", errs);
            let dt = it.real("dt", errs);
            let norm = it.required("norm", errs).and_then(|v| parse_besov(v, "iteration.norm", errs));
            let fitted_c = it.real("fitted_c", errs);
            let fraction = it.real_or("dealias_fraction", TWO_THIRDS, errs);
            let stride = it.count_or("sample_stride", 5, errs);
            let tolerance = it.real_or("tolerance", CONVERGENCE_TOL, errs);
            let cfg = IterationConfig {
                max_iter: max_iter? as usize,
                t_frac: t_frac?,
                dt: dt?,
                norm: norm?,
                fitted_c: fitted_c?,
                dealias_fraction: fraction?,
                sample_stride: stride? as usize,
                tolerance: tolerance?,
            };
            if let Err(e) = cfg.validate() {
                errs.push(format!("iteration: {e}"));
                return None;
            }
            Some(cfg)
        });
        if let (Some(g), Some(d)) = (&grid, &initial) {
            crate::config::check_profile_against_grid(&d.first, g, "initial_data", errs);
            crate::config::check_profile_against_grid(&d.second, g, "initial_data", errs);
        }
        Some(PicardConfig {
            name: name?,
            grid: grid?,
            initial_data: initial?,
            seed: seed?,
            iteration: iteration?,
            initial_guess: guess?,
        })
    }

    pub fn to_json(&self) -> Value {
        let it = &self.iteration;
        json!({
            "name": self.name,
            "grid": grid_json(&self.grid),
            "initial_data": self.initial_data.to_json(),
            "seed": self.seed,
            "iteration": {
                "max_iter": it.max_iter,
                "t_frac": it.t_frac,
                "dt": it.dt,
                "norm": besov_json(&it.norm),
                "fitted_c": it.fitted_c,
                "dealias_fraction": it.dealias_fraction,
                "sample_stride": it.sample_stride,
                "tolerance": it.tolerance,
            },
            "initial_guess": match self.initial_guess {
                InitialGuess::Zero => "zero",
                InitialGuess::Frozen => "frozen",
            },
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_gap: f64,
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    pub diverged: bool,
    pub horizon: f64,
    pub a0: f64,
    pub ramp: usize,
    /// Largest successive-difference ratio beyond the ramp.
    pub worst_contraction: f64,
    /// Sup-in-time distance to the nonlinear solver in the shifted norm.
    pub solver_gap: f64,
    /// Largest `A_n(t)` over the uniform bound, across all iterates.
    pub worst_bound_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct PicardArtifact {
    pub summary: PicardSummary,
    pub verdicts: Vec<Verdict>,
}

impl PicardArtifact {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// Largest `diff_{n+1} / diff_n` past the truncation ramp, ignoring ratios
/// whose earlier difference is already at the roundoff floor.
pub fn worst_contraction(trace: &IterateTrace, ramp: usize, tolerance: f64) -> f64 {
    let floor = RATIO_FLOOR_FACTOR * tolerance;
    trace
        .records
        .windows(2)
        .filter(|w| w[1].n > ramp && w[0].diff() > floor)
        .map(|w| w[1].diff() / w[0].diff())
        .fold(0.0, f64::max)
}

pub fn write_trace_csv(trace: &IterateTrace, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "n,sup_norm_u,sup_norm_v,diff_u,diff_v")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            fmt_real(r.sup_norm_u),
            fmt_real(r.sup_norm_v),
            fmt_real(r.diff_u),
            fmt_real(r.diff_v)
        )?;
    }
    Ok(())
}

pub fn evaluate(config: &PicardConfig) -> CliResult<(IterationOutcome, PicardArtifact)> {
    let grid = config.grid.build()?;
    let cutoffs = build_cutoffs(&grid)?;
    let initial = config.initial_data.build(&grid, config.seed)?;
    let it = &config.iteration;
    let outcome = run_iteration_with(&initial.u, &initial.v, it, &cutoffs, None, config.initial_guess)?;
    let gap = solver_gap(&outcome, it, &cutoffs)?;
    let bounds = uniform_bound_check(&outcome.trace, outcome.a0, it.fitted_c);
    let worst_bound = bounds.iter().map(|b| b.worst_ratio).fold(0.0, f64::max);
    let contraction = worst_contraction(&outcome.trace, outcome.ramp, it.tolerance);
    let summary = PicardSummary {
        converged: outcome.converged,
        iterations: outcome.iterations(),
        final_gap: outcome.final_gap(),
        fitted_c: it.fitted_c,
        diverged: outcome.diverged,
        horizon: outcome.horizon,
        a0: outcome.a0,
        ramp: outcome.ramp,
        worst_contraction: contraction,
        solver_gap: gap,
        worst_bound_ratio: worst_bound,
    };
    let verdicts = vec![
        Verdict::flag("picard_converged", outcome.converged),
        Verdict::at_most("picard_contraction", contraction, CONTRACTION_LIMIT),
        Verdict::at_most("picard_solver_gap", gap, 1e-6),
        Verdict::flag("picard_uniform_bound", bounds.iter().all(|b| b.pass)),
    ];
    Ok((outcome, PicardArtifact { summary, verdicts }))
}

/// Runs the iteration and writes `config.json`, `trace.csv`, `summary.json` and
/// `verdicts.json` under `out`.
pub fn run_picard(config: &PicardConfig, out: &Path) -> CliResult<PicardArtifact> {
    fs::create_dir_all(out).map_err(CliError::io(format!("creating {}", out.display())))?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(CliError::io(format!("writing {}", p.display())))
    };
    write("config.json", pretty(&config.to_json()))?;
    let (outcome, artifact) = evaluate(config)?;
    let mut csv = Vec::new();
    write_trace_csv(&outcome.trace, &mut csv).map_err(CliError::io("formatting trace"))?;
    write("trace.csv", String::from_utf8(csv).expect("ascii"))?;
    write("summary.json", pretty(&artifact.summary))?;
    write("verdicts.json", pretty(&artifact.verdicts))?;
    Ok(artifact)
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_round_trips_through_json() {
        let cfg = crate::scenarios::picard("picard_small_data").unwrap();
        let again = PicardConfig::from_json_str(&cfg.to_json().to_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_iteration_block_is_reported() {
        let text = r#"{"name": "x", "grid": {"n_points": 64, "period": 6.283185307179586},
            "initial_data": {"space": "velocity", "u": {"kind": "zero"}, "v": {"kind": "zero"}},
            "iteration": {"max_iter": 0, "t_frac": 1.5, "dt": 0.01, "norm": {"s": 2.6, "p": 2, "r": 2}, "fitted_c": 1, "extra": 1}}"#;
        let err = PicardConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("'extra'"), "{err}");
        assert!(err.contains("t_frac"), "{err}");
    }

    #[test]
    fn trace_header() {
        let mut buf = Vec::new();
        write_trace_csv(&IterateTrace::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,sup_norm_u,sup_norm_v,diff_u,diff_v\n");
    }
}

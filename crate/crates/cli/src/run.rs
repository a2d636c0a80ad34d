//! Runs a scenario end to end and writes its artifact directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use popowicz::dynamics::{momentum, simulate, MomentumState, Observer, RunSummaryRecord, State};
use popowicz::io::{write_diagnostics_csv, SnapshotWriter};
use popowicz::lagrangian::{
    blowup_functional, conservation_check, growth_bound_ratio, integrand_bound_ratio,
    jacobian_closed_form_deviation, l1_bound_check, l1_constant, odd_symmetry_check,
    pushforward_invariants, sign_preservation_check, track_characteristics, CharacteristicMap,
    DiagnosticsObserver, DiagnosticsRecord, SignPattern, SIGN_TOL,
};
use popowicz::littlewood_paley::build_cutoffs;
use popowicz::report::Verdict;
use popowicz::spectral::{Field, Spectrum};

use crate::config::{Check, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::plots;

/// Exponents of the transport laws `m q_x^3 = m_0`, `n q_x^2 = n_0`.
pub const PUSHFORWARD_EXPONENTS: (i32, i32) = (3, 2);

/// A correct pushforward check must beat the wrong-exponent one by this factor.
pub const MUTATION_GAP: f64 = 1e3;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub plots: bool,
    /// Exponents used by the pushforward check; anything other than
    /// [`PUSHFORWARD_EXPONENTS`] is a deliberate mutation.
    pub pushforward_exponents: (i32, i32),
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            plots: false,
            pushforward_exponents: PUSHFORWARD_EXPONENTS,
        }
    }
}

/// What a finished (or aborted) run left on disk.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub name: String,
    pub summary: RunSummaryRecord,
    pub verdicts: Vec<Verdict>,
    /// The diagnostics written to `diagnostics.csv`.
    pub record: DiagnosticsRecord,
}

impl RunArtifact {
    pub fn aborted(&self) -> bool {
        self.summary.abort_reason.is_some()
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

struct SnapshotSink {
    writer: Option<SnapshotWriter<BufWriter<File>>>,
}

impl Observer for SnapshotSink {
    fn name(&self) -> &str {
        "snapshots"
    }

    fn observe(&mut self, _: usize, state: &State) -> Result<(), String> {
        match self.writer.as_mut() {
            Some(w) => w.write(state).map_err(|e| e.to_string()),
            None => Ok(()),
        }
    }
}

/// Follows the crest of the transport velocity `2u + v`.
#[derive(Default)]
struct CrestTracker {
    times: Vec<f64>,
    positions: Vec<f64>,
    first: Option<Field>,
    last: Option<Field>,
}

impl CrestTracker {
    fn speed(&self) -> f64 {
        if self.times.len() < 2 {
            return f64::NAN;
        }
        popowicz::lagrangian::fit_slope(&self.times, &self.positions)
    }

    /// `||G(T) - G(0, . - shift)||_2 / ||G(0)||_2` with the shift the crest travelled.
    fn shape_deviation(&self) -> CliResult<f64> {
        let (Some(first), Some(last)) = (&self.first, &self.last) else {
            return Ok(f64::NAN);
        };
        let shift = self.positions.last().unwrap() - self.positions[0];
        let grid = first.grid();
        let moved: Vec<Complex64> = first
            .spectrum()?
            .coeffs()
            .iter()
            .zip(grid.wavenumbers())
            .map(|(c, k)| c * Complex64::from_polar(1.0, -k * shift))
            .collect();
        let moved = Spectrum::from_coeffs(grid, moved)?.into_field()?;
        Ok(last.sub(&moved)?.l2_norm() / first.l2_norm())
    }
}

impl Observer for CrestTracker {
    fn name(&self) -> &str {
        "crest"
    }

    fn observe(&mut self, _: usize, state: &State) -> Result<(), String> {
        let g = state.transport_velocity();
        let mut x = crest_position(&g);
        let period = g.grid().period();
        if let Some(&prev) = self.positions.last() {
            // unwrap across the periodic boundary
            x += ((prev - x) / period).round() * period;
        }
        self.times.push(state.time);
        self.positions.push(x);
        if self.first.is_none() {
            self.first = Some(g.clone());
        }
        self.last = Some(g);
        Ok(())
    }
}

/// Location of the maximum, refined by a parabola through the three top nodes.
pub fn crest_position(f: &Field) -> f64 {
    let v = f.values();
    let n = v.len();
    let (i, _) = v
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
    let (a, b, c) = (v[(i + n - 1) % n], v[i], v[(i + 1) % n]);
    let curvature = a - 2.0 * b + c;
    let offset = if curvature < 0.0 { 0.5 * (a - c) / curvature } else { 0.0 };
    (i as f64 + offset) * f.grid().dx()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(popowicz::Error::from)?;
    fs::write(path, text + "\n").map_err(CliError::io(format!("writing {}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(CliError::io(format!("creating {}", path.display())))?,
    ))
}

/// Runs `config` and writes `config.json`, `snapshots.csv`, `diagnostics.csv`,
/// `verdicts.json`, `summary.json` and, on request, SVG plots under `out`.
///
/// A solver abort still writes every file; the returned artifact then carries
/// the abort reason and a failed `completed` verdict.
pub fn run_scenario(config: &ScenarioConfig, out: &Path, options: &RunOptions) -> CliResult<RunArtifact> {
    fs::create_dir_all(out).map_err(CliError::io(format!("creating {}", out.display())))?;
    write_json(&out.join("config.json"), &config.to_json())?;

    let initial = config.initial_state()?;
    config.solver.validate()?;
    config.solver.check_stability(&initial)?;
    let grid = initial.grid().clone();

    let mut diagnostics = DiagnosticsObserver::new(true);
    if let Ok(cutoffs) = build_cutoffs(&grid) {
        diagnostics = diagnostics.with_norm(config.besov, cutoffs);
    }
    let mut snapshots = SnapshotSink {
        writer: Some(SnapshotWriter::new(create(&out.join("snapshots.csv"))?)?),
    };
    let mut crest = CrestTracker::default();
    let track_crest = config.wants(Check::CrestSpeed) || config.wants(Check::PeakonShape);

    let run = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut diagnostics, &mut snapshots];
        if track_crest {
            observers.push(&mut crest);
        }
        simulate(&initial, &config.solver, &mut observers)?
    };
    snapshots.writer.take().unwrap().finish()?;
    let summary = run.record();
    let record = &diagnostics.record;
    write_diagnostics_csv(record, create(&out.join("diagnostics.csv"))?)?;

    let mut verdicts = vec![Verdict::flag("completed", run.abort.is_none())];
    if run.abort.is_none() {
        verdicts.extend(check_verdicts(config, options, &initial, &diagnostics, &crest)?);
    }

    write_json(&out.join("verdicts.json"), &verdicts)?;
    write_json(&out.join("summary.json"), &summary)?;
    if options.plots {
        plots::emit_plots(out)?;
    }
    Ok(RunArtifact {
        name: config.name.clone(),
        summary,
        verdicts,
        record: diagnostics.record,
    })
}

fn check_verdicts(
    config: &ScenarioConfig,
    options: &RunOptions,
    initial: &State,
    diagnostics: &DiagnosticsObserver,
    crest: &CrestTracker,
) -> CliResult<Vec<Verdict>> {
    let record = &diagnostics.record;
    let path = &diagnostics.states;
    let mut out = Vec::new();
    let ms0 = momentum(initial)?;
    let c0 = l1_constant(&ms0)?;

    if config.wants(Check::Conservation) || config.wants(Check::MomentumRate) {
        let cons = conservation_check(path)?;
        if config.wants(Check::Conservation) {
            out.push(Verdict::at_most("conservation", cons.drift, 1e-8));
        }
        if config.wants(Check::MomentumRate) {
            out.push(Verdict::at_most("momentum_rate_identity", cons.momentum_rate_residual, 1e-6));
        }
    }
    if config.wants(Check::Sign) {
        let ms: Vec<MomentumState> = path.iter().map(momentum).collect::<popowicz::Result<_>>()?;
        let sign = sign_preservation_check(&ms)?;
        out.push(Verdict::at_most("sign", sign.worst_violation, sign.tolerance));
        if sign.initial_m == SignPattern::Mixed || sign.initial_n == SignPattern::Mixed {
            out.push(Verdict::flag("sign_mixed_persist", sign.both_signs_persist));
        }
    }
    if config.wants(Check::L1Bound) {
        let l1 = l1_bound_check(record, c0, 4.0, 2.0);
        out.push(Verdict::at_most("l1_bound", l1.worst_ratio_m.max(l1.worst_ratio_n), 1.0));
    }
    if config.wants(Check::IntegrandBound) {
        out.push(Verdict::at_most("integrand_bound", integrand_bound_ratio(record, c0), 1.0));
    }
    if config.wants(Check::GrowthBound) {
        let c = config.growth_constant.expect("validated with the config");
        out.push(Verdict::at_most("growth_bound", growth_bound_ratio(record, c), 1.0));
    }
    if config.wants(Check::BlowupMonitor) {
        out.push(Verdict::flag("blowup_integral_monotone", blowup_functional(record).is_ok()));
    }
    if config.wants(Check::Pushforward) {
        let map = CharacteristicMap::on_nodes(initial.grid(), config.label_stride, initial.time);
        let lagr = track_characteristics(initial, map, &config.characteristics_solver())?;
        let (em, en) = options.pushforward_exponents;
        let used = pushforward_invariants(&lagr, em, en)?;
        out.push(Verdict::at_most("pushforward_m", used.deviation_m, 1e-6));
        out.push(Verdict::at_most("pushforward_n", used.deviation_n, 1e-6));
        // sensitivity: the wrong exponent must be visibly worse than the right one
        let right = pushforward_invariants(&lagr, PUSHFORWARD_EXPONENTS.0, PUSHFORWARD_EXPONENTS.1)?;
        let wrong = pushforward_invariants(&lagr, PUSHFORWARD_EXPONENTS.0 - 1, PUSHFORWARD_EXPONENTS.1 + 1)?;
        let gap = |w: f64, r: f64| if r > 0.0 { w / r } else { f64::INFINITY };
        out.push(Verdict::at_least(
            "pushforward_mutation_gap",
            gap(wrong.deviation_m, right.deviation_m).min(gap(wrong.deviation_n, right.deviation_n)),
            MUTATION_GAP,
        ));
        out.push(Verdict::at_most(
            "jacobian_closed_form",
            jacobian_closed_form_deviation(&lagr.map),
            1e-8,
        ));
        out.push(Verdict::at_least("jacobian_positive", lagr.map.min_jacobian(), f64::MIN_POSITIVE));
    }
    if config.wants(Check::OddSymmetry) {
        let odd = odd_symmetry_check(path)?;
        out.push(Verdict::at_most("odd_oddness", odd.oddness, 1e-8));
        out.push(Verdict::at_most("odd_sign_pattern", odd.sign_violation, SIGN_TOL));
        out.push(Verdict::at_most("odd_half_line_conservation", odd.half_line_drift, 1e-7));
        out.push(Verdict::at_most("odd_half_line_rate", odd.half_line_rate_residual, 1e-6));
        out.push(Verdict::at_most("odd_center_velocity", odd.center_velocity, 1e-8));
    }
    if let Some(expected) = config.initial_data.peakon_speed() {
        if config.wants(Check::CrestSpeed) {
            let speed = crest.speed();
            out.push(Verdict::at_most("crest_speed", (speed - expected).abs() / expected, 0.01));
        }
        if config.wants(Check::PeakonShape) {
            out.push(Verdict::at_most("peakon_shape", crest.shape_deviation()?, 0.03));
        }
    }
    Ok(out)
}

/// Prints verdict lines to `w`.
pub fn print_verdicts(w: &mut impl Write, verdicts: &[Verdict]) -> std::io::Result<()> {
    for v in verdicts {
        writeln!(w, "{}", v.line())?;
    }
    Ok(())
}

//! Picard (Friedrichs) iteration for the nonlocal system.
//!
//! Iterate `n+1` solves the *linear* problem
//!
//! ```text
//! u_t + (2u^n + v^n) u_x = F(u^n, v^n),   u(0) = S_{n+1} u_0
//! v_t + (2u^n + v^n) v_x = H(u^n, v^n),   v(0) = S_{n+1} v_0
//! ```
//!
//! on `[0, T]`, starting from the zero iterate. Each iterate's trajectory is
//! stored at every time step together with its time derivative, so the next
//! iterate can read the coefficient at RK4 half steps by cubic Hermite
//! interpolation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{axpy, rk4_combine, step_schedule, Jet, Popowicz, State};
use crate::error::{Error, Result};
use crate::littlewood_paley::{decompose, low_freq_truncate, BesovParams, DyadicCutoffs};
use crate::spectral::{Field, Grid, TWO_THIRDS};

/// Successive differences below this stop the iteration.
pub const CONVERGENCE_TOL: f64 = 1e-10;

/// Consecutive growing differences (after the truncation ramp) that count as
/// divergence.
pub const DIVERGENCE_RUN: usize = 3;

fn default_tolerance() -> f64 {
    CONVERGENCE_TOL
}

fn default_sample_stride() -> usize {
    5
}

fn default_dealias() -> f64 {
    TWO_THIRDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationConfig {
    pub max_iter: usize,
    /// Fraction of the guaranteed horizon `1 / (2 C A_0)` actually used.
    pub t_frac: f64,
    pub dt: f64,
    /// Norm for the iterates; differences are measured at index `s - 1`.
    pub norm: BesovParams,
    pub fitted_c: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    /// Norms are sampled every this many steps (and at the final time).
    #[serde(default = "default_sample_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_iter == 0 {
            problems.push("max_iter must be positive".to_string());
        }
        if !(self.t_frac > 0.0 && self.t_frac < 1.0) {
            problems.push(format!("t_frac must lie in (0, 1), got {}", self.t_frac));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.fitted_c > 0.0 && self.fitted_c.is_finite()) {
            problems.push(format!("fitted_c must be positive, got {}", self.fitted_c));
        }
        if self.sample_stride == 0 {
            problems.push("sample_stride must be positive".to_string());
        }
        if !(self.tolerance > 0.0) {
            problems.push(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if let Err(e) = self.norm.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// `T = t_frac / (2 C A_0)`; infinite for zero data.
    pub fn horizon(&self, a0: f64) -> f64 {
        if a0 == 0.0 {
            f64::INFINITY
        } else {
            self.t_frac / (2.0 * self.fitted_c * a0)
        }
    }
}

/// `||u||_B + ||v||_B` for a state.
pub fn pair_norm(u: &Field, v: &Field, norm: &BesovParams, cutoffs: &DyadicCutoffs) -> Result<f64> {
    Ok(decompose(u, cutoffs)?.besov_norm(norm) + decompose(v, cutoffs)?.besov_norm(norm))
}

/// A stored time history: values and time derivatives at every step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    grid: Arc<Grid>,
    pub times: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    ut: Vec<Vec<f64>>,
    vt: Vec<Vec<f64>>,
}

impl Trajectory {
    fn zero(grid: &Arc<Grid>, times: &[f64]) -> Trajectory {
        let z = vec![vec![0.0; grid.n_points()]; times.len()];
        Trajectory {
            grid: Arc::clone(grid),
            times: times.to_vec(),
            u: z.clone(),
            v: z.clone(),
            ut: z.clone(),
            vt: z,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> State {
        State {
            u: Field::new(Arc::clone(&self.grid), self.u[k].clone()).expect("stored length"),
            v: Field::new(Arc::clone(&self.grid), self.v[k].clone()).expect("stored length"),
            time: self.times[k],
        }
    }

    /// Cubic Hermite value halfway between steps `k` and `k+1`.
    fn midpoint(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.times[k + 1] - self.times[k];
        let mid = |x: &[Vec<f64>], xt: &[Vec<f64>]| -> Vec<f64> {
            (0..x[k].len())
                .map(|i| 0.5 * (x[k][i] + x[k + 1][i]) + h / 8.0 * (xt[k][i] - xt[k + 1][i]))
                .collect()
        };
        (mid(&self.u, &self.ut), mid(&self.v, &self.vt))
    }
}

fn jet_of(op: &Popowicz, u: &[f64], v: &[f64]) -> Result<Jet> {
    let grid = op.grid();
    let s = State {
        u: Field::new(Arc::clone(grid), u.to_vec())?,
        v: Field::new(Arc::clone(grid), v.to_vec())?,
        time: 0.0,
    };
    op.jet(&s)
}

fn rk4_linear(
    op: &Popowicz,
    coeff: [&Jet; 3],
    u0: &[f64],
    v0: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let eval = |c: &Jet, u: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        op.tendency_from_jet(c, &jet_of(op, u, v)?)
    };
    let (k1u, k1v) = eval(coeff[0], u0, v0)?;
    let (k2u, k2v) = eval(coeff[1], &axpy(u0, 0.5 * h, &k1u), &axpy(v0, 0.5 * h, &k1v))?;
    let (k3u, k3v) = eval(coeff[1], &axpy(u0, 0.5 * h, &k2u), &axpy(v0, 0.5 * h, &k2v))?;
    let (k4u, k4v) = eval(coeff[2], &axpy(u0, h, &k3u), &axpy(v0, h, &k3v))?;
    Ok((
        rk4_combine(u0, h, &k1u, &k2u, &k3u, &k4u),
        rk4_combine(v0, h, &k1v, &k2v, &k3v, &k4v),
        k1u,
        k1v,
    ))
}

/// One RK4 step of the linear system with `coeff_state` frozen over the step.
pub fn linear_transport_step(op: &Popowicz, coeff_state: &State, target: &State, dt: f64) -> Result<State> {
    op.grid().ensure_same(coeff_state.grid())?;
    op.grid().ensure_same(target.grid())?;
    coeff_state.validate()?;
    target.validate()?;
    let c = op.jet(coeff_state)?;
    let (u, v, _, _) = rk4_linear(op, [&c, &c, &c], target.u.values(), target.v.values(), dt)?;
    Ok(State {
        u: Field::new(Arc::clone(op.grid()), u)?,
        v: Field::new(Arc::clone(op.grid()), v)?,
        time: target.time + dt,
    })
}

/// Solves for the next iterate over the time grid of `prev`.
fn next_iterate(op: &Popowicz, prev: &Trajectory, u0: &[f64], v0: &[f64]) -> Result<Trajectory> {
    let steps = prev.len() - 1;
    let mut traj = Trajectory {
        grid: Arc::clone(&prev.grid),
        times: prev.times.clone(),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        ut: Vec::with_capacity(steps + 1),
        vt: Vec::with_capacity(steps + 1),
    };
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut c_start = jet_of(op, &prev.u[0], &prev.v[0])?;
    for k in 0..steps {
        let h = prev.times[k + 1] - prev.times[k];
        let (mu, mv) = prev.midpoint(k);
        let c_mid = jet_of(op, &mu, &mv)?;
        let c_end = jet_of(op, &prev.u[k + 1], &prev.v[k + 1])?;
        let (u1, v1, k1u, k1v) = rk4_linear(op, [&c_start, &c_mid, &c_end], &u, &v, h)?;
        if let Some(i) = u1.iter().chain(&v1).position(|x| !x.is_finite()) {
            return Err(Error::Abort(format!("non-finite value at step {} (slot {i})", k + 1)));
        }
        traj.u.push(std::mem::replace(&mut u, u1));
        traj.v.push(std::mem::replace(&mut v, v1));
        traj.ut.push(k1u);
        traj.vt.push(k1v);
        c_start = c_end;
    }
    let (ut, vt) = op.tendency_from_jet(&c_start, &jet_of(op, &u, &v)?)?;
    traj.u.push(u);
    traj.v.push(v);
    traj.ut.push(ut);
    traj.vt.push(vt);
    Ok(traj)
}

/// Norm history of one iterate.
#[derive(Clone, Debug, Serialize)]
pub struct IterateRecord {
    pub n: usize,
    pub times: Vec<f64>,
    /// `||u^n(t)||_{B^s}` at the sampled times.
    pub norm_u: Vec<f64>,
    pub norm_v: Vec<f64>,
    pub sup_norm_u: f64,
    pub sup_norm_v: f64,
    /// `sup_t ||u^n - u^{n-1}||_{B^{s-1}}`.
    pub diff_u: f64,
    pub diff_v: f64,
}

impl IterateRecord {
    pub fn diff(&self) -> f64 {
        self.diff_u.max(self.diff_v)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    /// `diff_{n+1} / diff_n` for consecutive records.
    pub fn difference_ratios(&self) -> Vec<(usize, f64)> {
        self.records
            .windows(2)
            .filter(|w| w[0].diff() > 0.0)
            .map(|w| (w[1].n, w[1].diff() / w[0].diff()))
            .collect()
    }

    pub fn sum_of_differences(&self) -> f64 {
        self.records.iter().map(|r| r.diff()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `(u^0, v^0) = (0, 0)`.
    Zero,
    /// `(u^0, v^0)(t) = (u_0, v_0)` for all t.
    Frozen,
}

#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub trace: IterateTrace,
    pub final_iterate: Trajectory,
    pub converged: bool,
    pub diverged: bool,
    pub horizon: f64,
    /// `A_0 = ||u_0||_{B^s} + ||v_0||_{B^s}`.
    pub a0: f64,
    /// Iterates up to this index still see new frequencies in `S_n u_0`.
    pub ramp: usize,
}

impl IterationOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }

    pub fn final_gap(&self) -> f64 {
        self.trace.records.last().map_or(0.0, |r| r.diff())
    }
}

/// Smallest `n` with `S_n` acting as the identity on the data.
fn truncation_ramp(u0: &Field, v0: &Field, cutoffs: &DyadicCutoffs) -> Result<usize> {
    let scale = u0.max_abs().max(v0.max_abs());
    let last = cutoffs.j_max() as usize + 1;
    for n in 0..=last {
        let du = low_freq_truncate(u0, n as i32, cutoffs)?.max_diff(u0)?;
        let dv = low_freq_truncate(v0, n as i32, cutoffs)?.max_diff(v0)?;
        if du.max(dv) <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Ok(n);
        }
    }
    Ok(last)
}

fn sample_indices(steps: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..=steps).step_by(stride).collect();
    if *idx.last().unwrap() != steps {
        idx.push(steps);
    }
    idx
}

/// Runs the iteration over `[0, horizon]`; `horizon` of `None` uses the
/// config's `t_frac / (2 C A_0)`.
pub fn run_iteration(
    u0: &Field,
    v0: &Field,
    config: &IterationConfig,
    cutoffs: &DyadicCutoffs,
) -> Result<IterationOutcome> {
    run_iteration_with(u0, v0, config, cutoffs, None, InitialGuess::Zero)
}

pub fn run_iteration_with(
    u0: &Field,
    v0: &Field,
    config: &IterationConfig,
    cutoffs: &DyadicCutoffs,
    horizon: Option<f64>,
    guess: InitialGuess,
) -> Result<IterationOutcome> {
    config.validate()?;
    u0.grid().ensure_same(v0.grid())?;
    u0.grid().ensure_same(cutoffs.grid())?;
    u0.validate()?;
    v0.validate()?;
    let grid = u0.grid();
    let op = Popowicz::new(grid, config.dealias_fraction)?;
    let a0 = pair_norm(u0, v0, &config.norm, cutoffs)?;
    let horizon = match horizon {
        Some(t) => t,
        None => config.horizon(a0),
    };
    if !horizon.is_finite() {
        // zero data: nothing to iterate on a finite window; use one step
        return zero_outcome(grid, config, a0);
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let stab = crate::dynamics::SolverConfig::stability_limit(&State {
        u: u0.clone(),
        v: v0.clone(),
        time: 0.0,
    });
    if config.dt > stab {
        return Err(Error::InvalidArgument(format!(
            "dt = {} exceeds the advective bound {stab}",
            config.dt
        )));
    }
    let steps = step_schedule(config.dt, horizon).max(1);
    let times: Vec<f64> = (0..=steps)
        .map(|k| (k as f64 * config.dt).min(horizon))
        .collect();
    let samples = sample_indices(steps, config.sample_stride);
    let diff_norm = config.norm.shifted(-1.0);

    let mut prev = match guess {
        InitialGuess::Zero => Trajectory::zero(grid, &times),
        InitialGuess::Frozen => {
            let mut t = Trajectory::zero(grid, &times);
            for k in 0..t.len() {
                t.u[k] = u0.values().to_vec();
                t.v[k] = v0.values().to_vec();
            }
            t
        }
    };
    let ramp = truncation_ramp(u0, v0, cutoffs)?;
    let mut trace = IterateTrace::default();
    let mut converged = false;
    let mut diverged = false;
    let mut growing = 0;

    for n in 1..=config.max_iter {
        let su = low_freq_truncate(u0, n as i32, cutoffs)?;
        let sv = low_freq_truncate(v0, n as i32, cutoffs)?;
        let next = next_iterate(&op, &prev, su.values(), sv.values())
            .map_err(|e| Error::Abort(format!("iterate {n}: {e}")))?;

        let mut record = IterateRecord {
            n,
            times: Vec::with_capacity(samples.len()),
            norm_u: Vec::with_capacity(samples.len()),
            norm_v: Vec::with_capacity(samples.len()),
            sup_norm_u: 0.0,
            sup_norm_v: 0.0,
            diff_u: 0.0,
            diff_v: 0.0,
        };
        for &k in &samples {
            let s = next.state(k);
            let nu = decompose(&s.u, cutoffs)?.besov_norm(&config.norm);
            let nv = decompose(&s.v, cutoffs)?.besov_norm(&config.norm);
            let p = prev.state(k);
            let du = decompose(&s.u.sub(&p.u)?, cutoffs)?.besov_norm(&diff_norm);
            let dv = decompose(&s.v.sub(&p.v)?, cutoffs)?.besov_norm(&diff_norm);
            record.times.push(times[k]);
            record.norm_u.push(nu);
            record.norm_v.push(nv);
            record.sup_norm_u = record.sup_norm_u.max(nu);
            record.sup_norm_v = record.sup_norm_v.max(nv);
            record.diff_u = record.diff_u.max(du);
            record.diff_v = record.diff_v.max(dv);
        }
        if !(record.sup_norm_u.is_finite() && record.sup_norm_v.is_finite() && record.diff().is_finite()) {
            return Err(Error::Abort(format!("iterate {n}: non-finite norm")));
        }
        let gap = record.diff();
        if let Some(last) = trace.records.last() {
            if n > ramp && gap > last.diff() {
                growing += 1;
            } else {
                growing = 0;
            }
        }
        trace.records.push(record);
        prev = next;
        if gap < config.tolerance {
            converged = true;
            break;
        }
        if growing >= DIVERGENCE_RUN {
            diverged = true;
            break;
        }
    }

    Ok(IterationOutcome {
        trace,
        final_iterate: prev,
        converged,
        diverged,
        horizon,
        a0,
        ramp,
    })
}

fn zero_outcome(grid: &Arc<Grid>, config: &IterationConfig, a0: f64) -> Result<IterationOutcome> {
    let times = vec![0.0, config.dt];
    let record = IterateRecord {
        n: 1,
        times: times.clone(),
        norm_u: vec![0.0; 2],
        norm_v: vec![0.0; 2],
        sup_norm_u: 0.0,
        sup_norm_v: 0.0,
        diff_u: 0.0,
        diff_v: 0.0,
    };
    Ok(IterationOutcome {
        trace: IterateTrace {
            records: vec![record],
        },
        final_iterate: Trajectory::zero(grid, &times),
        converged: true,
        diverged: false,
        horizon: config.dt,
        a0,
        ramp: 0,
    })
}

/// `A_0 / (1 - 2 C A_0 t)`, infinite once the denominator is exhausted.
pub fn uniform_bound(a0: f64, fitted_c: f64, t: f64) -> f64 {
    let denom = 1.0 - 2.0 * fitted_c * a0 * t;
    if denom > 0.0 {
        a0 / denom
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundVerdict {
    pub n: usize,
    pub pass: bool,
    /// Largest `A_n(t) / bound(t)` over the sampled times (0 for zero data).
    pub worst_ratio: f64,
}

/// Checks `A_n(t) <= A_0 / (1 - 2 C A_0 t)` for every iterate and sampled time.
pub fn uniform_bound_check(trace: &IterateTrace, a0: f64, fitted_c: f64) -> Vec<BoundVerdict> {
    trace
        .records
        .iter()
        .map(|r| {
            let mut worst = 0.0f64;
            let mut pass = true;
            for ((t, nu), nv) in r.times.iter().zip(&r.norm_u).zip(&r.norm_v) {
                let a = nu + nv;
                let bound = uniform_bound(a0, fitted_c, *t);
                if a > bound * (1.0 + 1e-12) {
                    pass = false;
                }
                if bound > 0.0 {
                    worst = worst.max(a / bound);
                }
            }
            BoundVerdict {
                n: r.n,
                pass,
                worst_ratio: worst,
            }
        })
        .collect()
}

/// Smallest `C` for which a trace satisfies the uniform bound:
/// `max (1 - A_0 / A_n(t)) / (2 A_0 t)` over samples with `A_n(t) > A_0`.
pub fn required_constant(trace: &IterateTrace, a0: f64) -> f64 {
    let mut c = 0.0f64;
    for r in &trace.records {
        for ((t, nu), nv) in r.times.iter().zip(&r.norm_u).zip(&r.norm_v) {
            let a = nu + nv;
            if a > a0 && *t > 0.0 {
                c = c.max((1.0 - a0 / a) / (2.0 * a0 * t));
            }
        }
    }
    c
}

/// Fits the constant over a calibration ensemble, each member iterated over
/// `[0, t_cal]`.
pub fn calibrate_constant(
    ensemble: &[(Field, Field)],
    config: &IterationConfig,
    t_cal: f64,
    cutoffs: &DyadicCutoffs,
) -> Result<f64> {
    use rayon::prelude::*;
    let fits = ensemble
        .par_iter()
        .map(|(u0, v0)| {
            let out = run_iteration_with(u0, v0, config, cutoffs, Some(t_cal), InitialGuess::Zero)?;
            Ok(required_constant(&out.trace, out.a0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(fits.into_iter().fold(0.0, f64::max))
}

/// `sup_t ||u_pic(t) - u(t)||_{B^{s-1}} + ||v_pic(t) - v(t)||_{B^{s-1}}` against
/// the nonlinear RK4 solver on the same time grid.
pub fn solver_gap(outcome: &IterationOutcome, config: &IterationConfig, cutoffs: &DyadicCutoffs) -> Result<f64> {
    let traj = &outcome.final_iterate;
    let op = Popowicz::new(&traj.grid, config.dealias_fraction)?;
    let norm = config.norm.shifted(-1.0);
    let samples = sample_indices(traj.len() - 1, config.sample_stride);
    let mut state = traj.state(0);
    let mut gap = 0.0f64;
    let mut k = 0;
    for &target in &samples {
        while k < target {
            let h = traj.times[k + 1] - traj.times[k];
            state = op.step_rk4(&state, h)?;
            k += 1;
        }
        let p = traj.state(k);
        let d = decompose(&p.u.sub(&state.u)?, cutoffs)?.besov_norm(&norm)
            + decompose(&p.v.sub(&state.v)?, cutoffs)?.besov_norm(&norm);
        gap = gap.max(d);
    }
    Ok(gap)
}

/// Largest sampled distance between two final iterates on the same time grid.
pub fn iterate_distance(a: &IterationOutcome, b: &IterationOutcome) -> Result<f64> {
    let (ta, tb) = (&a.final_iterate, &b.final_iterate);
    if ta.len() != tb.len() {
        return Err(Error::InvalidArgument("trajectories on different time grids".into()));
    }
    let mut d = 0.0f64;
    for k in 0..ta.len() {
        for i in 0..ta.u[k].len() {
            d = d.max((ta.u[k][i] - tb.u[k][i]).abs()).max((ta.v[k][i] - tb.v[k][i]).abs());
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::littlewood_paley::build_cutoffs;
    use std::f64::consts::PI;

    fn config(fitted_c: f64) -> IterationConfig {
        IterationConfig {
            max_iter: 30,
            t_frac: 0.5,
            dt: 0.005,
            norm: BesovParams::new(2.6, 2.0, 2.0).unwrap(),
            fitted_c,
            dealias_fraction: TWO_THIRDS,
            sample_stride: 5,
            tolerance: CONVERGENCE_TOL,
        }
    }

    #[test]
    fn zero_coefficient_leaves_target_unchanged() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let op = Popowicz::new(&g, TWO_THIRDS).unwrap();
        let target = State::new(Field::from_fn(&g, f64::sin), Field::from_fn(&g, f64::cos), 0.0).unwrap();
        let out = linear_transport_step(&op, &State::zeros(&g), &target, 0.01).unwrap();
        assert!(out.u.max_diff(&target.u).unwrap() < 1e-15);
        assert!(out.v.max_diff(&target.v).unwrap() < 1e-15);
    }

    #[test]
    fn constant_coefficient_translates_rigidly() {
        let g = Grid::new(512, 20.0).unwrap();
        let op = Popowicz::new(&g, TWO_THIRDS).unwrap();
        let (a, b) = (0.3, 0.2);
        let speed = 2.0 * a + b;
        let coeff = State::new(Field::constant(&g, a), Field::constant(&g, b), 0.0).unwrap();
        let bump = |x: f64| (-(x - 8.0).powi(2)).exp();
        let mut target = State::new(Field::from_fn(&g, bump), Field::from_fn(&g, bump), 0.0).unwrap();
        let dt = 0.01;
        for _ in 0..100 {
            target = linear_transport_step(&op, &coeff, &target, dt).unwrap();
        }
        let exact = Field::from_fn(&g, |x| bump(x - speed));
        assert!(target.u.max_diff(&exact).unwrap() <= 1e-6);
        assert!(target.v.max_diff(&exact).unwrap() <= 1e-6);
    }

    #[test]
    fn frozen_step_is_consistent_with_nonlinear_step() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let op = Popowicz::new(&g, TWO_THIRDS).unwrap();
        let s = State::new(
            Field::from_fn(&g, |x| 0.2 * x.sin()),
            Field::from_fn(&g, |x| 0.1 * (2.0 * x).cos()),
            0.0,
        )
        .unwrap();
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&dt| {
                let a = linear_transport_step(&op, &s, &s, dt).unwrap();
                let b = op.step_rk4(&s, dt).unwrap();
                a.u.max_diff(&b.u).unwrap().max(a.v.max_diff(&b.v).unwrap())
            })
            .collect();
        // local defect of freezing the coefficient is O(dt^2)
        assert!(errs[0] < 1e-3);
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.7, "order {order}");
    }

    #[test]
    fn zero_data_iterates_stay_zero() {
        let g = Grid::new(64, 2.0 * PI).unwrap();
        let c = build_cutoffs(&g).unwrap();
        let z = Field::zeros(&g);
        let out = run_iteration(&z, &z, &config(0.5), &c).unwrap();
        assert!(out.converged);
        assert!(out.trace.records.iter().all(|r| r.diff() == 0.0 && r.sup_norm_u == 0.0));
        assert!(uniform_bound_check(&out.trace, 0.0, 0.5).iter().all(|v| v.pass));
    }

    #[test]
    fn bound_is_monotone_in_time() {
        let mut last = 0.0;
        for i in 0..100 {
            let b = uniform_bound(0.7, 0.4, i as f64 * 0.01);
            assert!(b >= last);
            last = b;
        }
        assert!(uniform_bound(1.0, 1.0, 0.5).is_infinite());
    }

    #[test]
    fn small_data_iteration_converges() {
        let g = Grid::new(128, 2.0 * PI).unwrap();
        let c = build_cutoffs(&g).unwrap();
        let u0 = Field::from_fn(&g, |x| 0.05 * x.cos() + 0.02 * (2.0 * x).sin());
        let v0 = Field::from_fn(&g, |x| 0.03 * (3.0 * x).cos());
        let cfg = IterationConfig {
            dt: 0.01,
            ..config(1.0)
        };
        let out = run_iteration_with(&u0, &v0, &cfg, &c, Some(1.0), InitialGuess::Zero).unwrap();
        assert!(out.converged, "{:?}", out.trace.records.iter().map(|r| r.diff()).collect::<Vec<_>>());
        let first = &out.final_iterate.state(0);
        assert!(first.u.max_diff(&u0).unwrap() < 1e-14);
        let gap = solver_gap(&out, &cfg, &c).unwrap();
        assert!(gap < 1e-6, "gap {gap}");
        let other = run_iteration_with(&u0, &v0, &cfg, &c, Some(1.0), InitialGuess::Frozen).unwrap();
        assert!(other.converged);
        assert!(iterate_distance(&out, &other).unwrap() < 1e-8);
    }
}

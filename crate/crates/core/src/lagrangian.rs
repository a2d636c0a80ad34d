//! Characteristics, conserved quantities and a priori bounds.
//!
//! Characteristics follow the transport velocity `G = 2u + v`:
//!
//! ```text
//! q_t = G(t, q),   (q_x)_t = G_x(t, q) q_x,   q(0, x) = x,
//! ```
//!
//! along which `m q_x^3` and `n q_x^2` are constant.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    axpy, blowup_integrand, momentum, rk4_combine, simulate, MomentumState, Observer, Popowicz,
    SolverConfig, State,
};
use crate::error::{Error, Result};
use crate::littlewood_paley::{decompose, BesovParams, DyadicCutoffs};
use crate::report::Verdict;
use crate::spectral::{Field, Grid, Spectrum};

/// Per-snapshot diagnostics of one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DiagnosticsRecord {
    pub times: Vec<f64>,
    pub total_momentum: Vec<f64>,
    /// `int_{L/2}^{L} (m + n)`, the right half of the box.
    pub half_line_momentum: Vec<f64>,
    pub blowup_integrand: Vec<f64>,
    /// Trapezoid integral of the integrand over the snapshot times.
    pub blowup_integral: Vec<f64>,
    pub l1_m: Vec<f64>,
    pub l1_n: Vec<f64>,
    pub min_m: Vec<f64>,
    pub min_n: Vec<f64>,
    pub max_m: Vec<f64>,
    pub max_n: Vec<f64>,
    /// `||u||_B + ||v||_B` when a reporting norm is attached, else empty.
    pub besov_sum: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, state: &State, norm: Option<(&BesovParams, &DyadicCutoffs)>) -> Result<()> {
        let ms = momentum(state)?;
        let grid = state.grid();
        let total = ms.m.add(&ms.n)?;
        let half = total
            .spectrum()?
            .integrate_between(0.5 * grid.period(), grid.period());
        let integrand = blowup_integrand(state)?;
        let integral = match (self.times.last(), self.blowup_integrand.last(), self.blowup_integral.last()) {
            (Some(t), Some(f), Some(acc)) => acc + 0.5 * (state.time - t) * (integrand + f),
            _ => 0.0,
        };
        self.times.push(state.time);
        self.total_momentum.push(total.integral());
        self.half_line_momentum.push(half);
        self.blowup_integrand.push(integrand);
        self.blowup_integral.push(integral);
        self.l1_m.push(ms.m.l1_norm());
        self.l1_n.push(ms.n.l1_norm());
        self.min_m.push(ms.m.min());
        self.min_n.push(ms.n.min());
        self.max_m.push(ms.m.max());
        self.max_n.push(ms.n.max());
        if let Some((params, cutoffs)) = norm {
            let a = decompose(&state.u, cutoffs)?.besov_norm(params)
                + decompose(&state.v, cutoffs)?.besov_norm(params);
            self.besov_sum.push(a);
        }
        Ok(())
    }
}

/// Observer that fills a [`DiagnosticsRecord`] and optionally keeps the states.
pub struct DiagnosticsObserver {
    pub record: DiagnosticsRecord,
    pub states: Vec<State>,
    keep_states: bool,
    norm: Option<(BesovParams, DyadicCutoffs)>,
}

impl DiagnosticsObserver {
    pub fn new(keep_states: bool) -> DiagnosticsObserver {
        DiagnosticsObserver {
            record: DiagnosticsRecord::default(),
            states: Vec::new(),
            keep_states,
            norm: None,
        }
    }

    pub fn with_norm(mut self, params: BesovParams, cutoffs: DyadicCutoffs) -> Self {
        self.norm = Some((params, cutoffs));
        self
    }
}

impl Observer for DiagnosticsObserver {
    fn name(&self) -> &str {
        "diagnostics"
    }

    fn observe(&mut self, _step: usize, state: &State) -> std::result::Result<(), String> {
        let norm = self.norm.as_ref().map(|(p, c)| (p, c));
        self.record.push(state, norm).map_err(|e| e.to_string())?;
        if self.keep_states {
            self.states.push(state.clone());
        }
        Ok(())
    }
}

/// Runs `simulate` with a diagnostics observer that keeps every snapshot.
pub fn simulate_with_diagnostics(
    initial: &State,
    config: &SolverConfig,
    norm: Option<(BesovParams, DyadicCutoffs)>,
) -> Result<(crate::dynamics::RunSummary, DiagnosticsObserver)> {
    let mut obs = DiagnosticsObserver::new(true);
    if let Some((p, c)) = norm {
        obs = obs.with_norm(p, c);
    }
    let summary = simulate(initial, config, &mut [&mut obs])?;
    Ok((summary, obs))
}

/// Label positions `q(t, x)` and Jacobians `q_x(t, x)` per recorded time.
#[derive(Clone, Debug, Serialize)]
pub struct CharacteristicMap {
    pub labels: Vec<f64>,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub jacobians: Vec<Vec<f64>>,
    /// Trapezoid integral of `G_x(t, q)` along each characteristic, accumulated
    /// at every step, independently of the Jacobian ODE.
    pub log_stretch: Vec<Vec<f64>>,
}

impl CharacteristicMap {
    pub fn new(labels: Vec<f64>, time: f64) -> CharacteristicMap {
        let n = labels.len();
        CharacteristicMap {
            positions: vec![labels.clone()],
            jacobians: vec![vec![1.0; n]],
            log_stretch: vec![vec![0.0; n]],
            times: vec![time],
            labels,
        }
    }

    /// Every `stride`-th grid node as a label.
    pub fn on_nodes(grid: &Arc<Grid>, stride: usize, time: f64) -> CharacteristicMap {
        let labels = (0..grid.n_points()).step_by(stride.max(1)).map(|i| grid.node(i)).collect();
        CharacteristicMap::new(labels, time)
    }

    pub fn current_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn min_jacobian(&self) -> f64 {
        self.jacobians
            .iter()
            .flat_map(|j| j.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Smallest gap `q_{i+1} - q_i` over recorded times (labels are sorted).
    pub fn min_label_gap(&self) -> f64 {
        self.positions
            .iter()
            .flat_map(|q| q.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `G` and `G_x` of a state's transport velocity, sampled at `q`.
fn velocity_at(op: &Popowicz, state: &State, q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = state
        .transport_velocity()
        .spectrum()?
        .truncate(op.dealias_fraction());
    Ok((g.evaluate_at(q), g.derivative().evaluate_at(q)))
}

/// Advances the state and the characteristics through one RK4 step with
/// stage velocities taken from the stage states. Returns the new state and
/// `(q, q_x, G_x(t+dt, q))`.
pub fn advance_characteristics(
    op: &Popowicz,
    state: &State,
    q: &[f64],
    qx: &[f64],
    dt: f64,
) -> Result<(State, Vec<f64>, Vec<f64>)> {
    let grid = op.grid();
    let eval = |u: &[f64], v: &[f64], q: &[f64], qx: &[f64]| -> Result<[Vec<f64>; 4]> {
        let s = State {
            u: Field::new(Arc::clone(grid), u.to_vec())?,
            v: Field::new(Arc::clone(grid), v.to_vec())?,
            time: 0.0,
        };
        let (ut, vt) = op.tendency(&s)?;
        let (g, gx) = velocity_at(op, &s, q)?;
        let qxt = gx.iter().zip(qx).map(|(a, b)| a * b).collect();
        Ok([ut.into_values(), vt.into_values(), g, qxt])
    };
    let y0 = [state.u.values(), state.v.values(), q, qx];
    let k1 = eval(y0[0], y0[1], y0[2], y0[3])?;
    let y = |k: &[Vec<f64>; 4], a: f64| -> [Vec<f64>; 4] {
        [
            axpy(y0[0], a, &k[0]),
            axpy(y0[1], a, &k[1]),
            axpy(y0[2], a, &k[2]),
            axpy(y0[3], a, &k[3]),
        ]
    };
    let s2 = y(&k1, 0.5 * dt);
    let k2 = eval(&s2[0], &s2[1], &s2[2], &s2[3])?;
    let s3 = y(&k2, 0.5 * dt);
    let k3 = eval(&s3[0], &s3[1], &s3[2], &s3[3])?;
    let s4 = y(&k3, dt);
    let k4 = eval(&s4[0], &s4[1], &s4[2], &s4[3])?;
    let out: Vec<Vec<f64>> = (0..4)
        .map(|c| rk4_combine(y0[c], dt, &k1[c], &k2[c], &k3[c], &k4[c]))
        .collect();
    let [u, v, q1, qx1]: [Vec<f64>; 4] = out.try_into().expect("four components");
    if let Some(i) = qx1.iter().position(|&j| !(j > 0.0)) {
        return Err(Error::Abort(format!(
            "characteristic {i} lost monotonicity (q_x = {})",
            qx1[i]
        )));
    }
    let next = State {
        u: Field::new(Arc::clone(grid), u)?,
        v: Field::new(Arc::clone(grid), v)?,
        time: state.time + dt,
    };
    next.validate()?;
    Ok((next, q1, qx1))
}

/// A run carrying characteristics alongside the Eulerian state.
#[derive(Clone, Debug)]
pub struct LagrangianRun {
    pub map: CharacteristicMap,
    /// States at the map's recorded times.
    pub path: Vec<State>,
}

pub fn track_characteristics(
    initial: &State,
    mut map: CharacteristicMap,
    config: &SolverConfig,
) -> Result<LagrangianRun> {
    config.validate()?;
    config.check_stability(initial)?;
    let op = Popowicz::new(initial.grid(), config.dealias_fraction)?;
    let steps = crate::dynamics::step_schedule(config.dt, config.t_end);
    let t0 = initial.time;
    let mut state = initial.clone();
    let mut q = map.positions[0].clone();
    let mut qx = map.jacobians[0].clone();
    let mut log_stretch = vec![0.0; q.len()];
    let mut gx_prev = velocity_at(&op, &state, &q)?.1;
    let mut path = vec![state.clone()];
    for step in 1..=steps {
        let t_next = (t0 + step as f64 * config.dt).min(t0 + config.t_end);
        let h = t_next - state.time;
        let (s, q1, qx1) = advance_characteristics(&op, &state, &q, &qx, h)?;
        state = State { time: t_next, ..s };
        q = q1;
        qx = qx1;
        let gx = velocity_at(&op, &state, &q)?.1;
        for i in 0..q.len() {
            log_stretch[i] += 0.5 * h * (gx[i] + gx_prev[i]);
        }
        gx_prev = gx;
        if step % config.snapshot_stride == 0 || step == steps {
            map.times.push(state.time);
            map.positions.push(q.clone());
            map.jacobians.push(qx.clone());
            map.log_stretch.push(log_stretch.clone());
            path.push(state.clone());
        }
    }
    Ok(LagrangianRun { map, path })
}

/// Largest relative gap between `q_x` and `exp(int G_x(t, q) dt)`.
pub fn jacobian_closed_form_deviation(map: &CharacteristicMap) -> f64 {
    let mut worst = 0.0f64;
    for (jac, ls) in map.jacobians.iter().zip(&map.log_stretch) {
        for (j, l) in jac.iter().zip(ls) {
            let closed = l.exp();
            worst = worst.max((j - closed).abs() / closed);
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct PushforwardReport {
    /// `max |m(t,q) q_x^a - m_0| / max|m_0|`.
    pub deviation_m: f64,
    pub deviation_n: f64,
}

/// Checks `m(t, q) q_x^{exp_m} = m_0` and `n(t, q) q_x^{exp_n} = n_0`; the
/// transport laws give exponents 3 and 2.
pub fn pushforward_invariants(run: &LagrangianRun, exp_m: i32, exp_n: i32) -> Result<PushforwardReport> {
    let map = &run.map;
    if map.times.len() != run.path.len() {
        return Err(Error::InvalidArgument("map and path are not aligned".into()));
    }
    let ms0 = momentum(&run.path[0])?;
    let m0 = ms0.m.spectrum()?.evaluate_at(&map.labels);
    let n0 = ms0.n.spectrum()?.evaluate_at(&map.labels);
    let scale_m = ms0.m.max_abs();
    let scale_n = ms0.n.max_abs();
    let mut dev_m = 0.0f64;
    let mut dev_n = 0.0f64;
    for (k, state) in run.path.iter().enumerate() {
        let ms = momentum(state)?;
        let q = &map.positions[k];
        let mq = ms.m.spectrum()?.evaluate_at(q);
        let nq = ms.n.spectrum()?.evaluate_at(q);
        for i in 0..q.len() {
            let j = map.jacobians[k][i];
            dev_m = dev_m.max((mq[i] * j.powi(exp_m) - m0[i]).abs());
            dev_n = dev_n.max((nq[i] * j.powi(exp_n) - n0[i]).abs());
        }
    }
    let rel = |d: f64, s: f64| if s > 0.0 { d / s } else { d };
    Ok(PushforwardReport {
        deviation_m: rel(dev_m, scale_m),
        deviation_n: rel(dev_n, scale_n),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignPattern {
    Nonnegative,
    Nonpositive,
    Mixed,
    Zero,
}

fn sign_of(f: &Field, tol: f64) -> SignPattern {
    let (lo, hi) = (f.min(), f.max());
    match (lo >= -tol, hi <= tol) {
        (true, true) => SignPattern::Zero,
        (true, false) => SignPattern::Nonnegative,
        (false, true) => SignPattern::Nonpositive,
        (false, false) => SignPattern::Mixed,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SignReport {
    pub initial_m: SignPattern,
    pub initial_n: SignPattern,
    /// Worst excursion against the initial sign, in units of `max|m_0|`.
    pub worst_violation: f64,
    pub tolerance: f64,
    /// For mixed data: both signs still present at the final time.
    pub both_signs_persist: bool,
}

impl SignReport {
    pub fn pass(&self) -> bool {
        self.worst_violation <= self.tolerance
    }
}

/// Relative tolerance for sign checks, in units of `max|m_0|`.
pub const SIGN_TOL: f64 = 1e-6;

/// Relative size below which an initial value counts as zero when classifying signs.
const ROUNDOFF_FLOOR: f64 = 1e-12;

pub fn sign_preservation_check(path: &[MomentumState]) -> Result<SignReport> {
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty momentum path".into()))?;
    let scale = first.m.max_abs().max(first.n.max_abs());
    // momenta recovered from velocities carry roundoff of either sign
    let floor = ROUNDOFF_FLOOR * scale;
    let initial_m = sign_of(&first.m, floor);
    let initial_n = sign_of(&first.n, floor);
    let excursion = |pattern: SignPattern, f: &Field| match pattern {
        SignPattern::Nonnegative => (-f.min()).max(0.0),
        SignPattern::Nonpositive => f.max().max(0.0),
        SignPattern::Zero => f.max_abs(),
        SignPattern::Mixed => 0.0,
    };
    let mut worst = 0.0f64;
    for ms in path {
        worst = worst.max(excursion(initial_m, &ms.m)).max(excursion(initial_n, &ms.n));
    }
    let last = path.last().unwrap();
    let mixed = |p: SignPattern, f: &Field| p != SignPattern::Mixed || (f.min() < 0.0 && f.max() > 0.0);
    Ok(SignReport {
        initial_m,
        initial_n,
        worst_violation: if scale > 0.0 { worst / scale } else { worst },
        tolerance: SIGN_TOL,
        both_signs_persist: mixed(initial_m, &last.m) && mixed(initial_n, &last.n),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    /// `max_t |I(t) - I(0)| / (||m_0||_1 + ||n_0||_1)`, `I = int (m + n)`.
    pub drift: f64,
    /// `max_t |d/dt int m + 2 int (2u_x + v_x) m|`, relative to
    /// `2 int |2u_x + v_x| |m|`.
    pub momentum_rate_residual: f64,
}

pub fn conservation_check(path: &[State]) -> Result<ConservationReport> {
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty path".into()))?;
    let op = Popowicz::new(first.grid(), crate::spectral::TWO_THIRDS)?;
    let ms0 = momentum(first)?;
    let mut drift = 0.0f64;
    let mut rate = 0.0f64;
    for s in path {
        let ms = momentum(s)?;
        drift = drift.max(crate::dynamics::relative_drift(&ms0, &ms));
        let (ut, _) = op.tendency(s)?;
        // d/dt int m = int (1 - d_xx) u_t = int u_t
        let measured = ut.integral();
        let gx = crate::spectral::derivative(&s.transport_velocity())?;
        let weight = gx.mul(&ms.m)?;
        let oracle = -2.0 * weight.integral();
        let scale = 2.0 * weight.l1_norm();
        let d = (measured - oracle).abs();
        rate = rate.max(if scale > 0.0 { d / scale } else { d });
    }
    Ok(ConservationReport {
        drift,
        momentum_rate_residual: rate,
    })
}

/// `C_0 = (1/2) ||m_0 + n_0||_{L^1}`.
pub fn l1_constant(ms0: &MomentumState) -> Result<f64> {
    Ok(0.5 * ms0.m.add(&ms0.n)?.l1_norm())
}

#[derive(Clone, Debug, Serialize)]
pub struct L1Report {
    pub c0: f64,
    /// Largest `||m(t)||_1 / (||m_0||_1 e^{rate_m C_0 t})`.
    pub worst_ratio_m: f64,
    pub worst_ratio_n: f64,
}

impl L1Report {
    pub fn pass(&self) -> bool {
        self.worst_ratio_m <= 1.0 + 1e-12 && self.worst_ratio_n <= 1.0 + 1e-12
    }
}

/// `||m(t)||_1 <= ||m_0||_1 e^{rate_m C_0 t}` and the same for `n`; the
/// Gronwall rates are 4 and 2.
pub fn l1_bound_check(record: &DiagnosticsRecord, c0: f64, rate_m: f64, rate_n: f64) -> L1Report {
    let ratio = |l1: &[f64], rate: f64| {
        let base = l1.first().copied().unwrap_or(0.0);
        let t0 = record.times.first().copied().unwrap_or(0.0);
        l1.iter()
            .zip(&record.times)
            .map(|(v, t)| {
                let bound = base * (rate * c0 * (t - t0)).exp();
                if bound > 0.0 {
                    v / bound
                } else if *v > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0f64, f64::max)
    };
    L1Report {
        c0,
        worst_ratio_m: ratio(&record.l1_m, rate_m),
        worst_ratio_n: ratio(&record.l1_n, rate_n),
    }
}

/// Largest `integrand(t) / (2||n_0||_1 e^{2C_0 t} + 2||m_0||_1 e^{4C_0 t})`.
pub fn integrand_bound_ratio(record: &DiagnosticsRecord, c0: f64) -> f64 {
    if record.is_empty() {
        return 0.0;
    }
    let (m0, n0, t0) = (record.l1_m[0], record.l1_n[0], record.times[0]);
    record
        .blowup_integrand
        .iter()
        .zip(&record.times)
        .map(|(f, t)| {
            let dt = t - t0;
            let bound = 2.0 * n0 * (2.0 * c0 * dt).exp() + 2.0 * m0 * (4.0 * c0 * dt).exp();
            if bound > 0.0 {
                f / bound
            } else if *f > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Running integral of the blow-up integrand, checked nondecreasing.
pub fn blowup_functional(record: &DiagnosticsRecord) -> Result<&[f64]> {
    if record.blowup_integral.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("blow-up integral decreased".into()));
    }
    Ok(&record.blowup_integral)
}

/// Smallest `C` with `A(t) <= A(0) exp(C int_0^t integrand)` on the record.
pub fn fit_growth_constant(record: &DiagnosticsRecord) -> f64 {
    let Some(&a0) = record.besov_sum.first() else {
        return 0.0;
    };
    record
        .besov_sum
        .iter()
        .zip(&record.blowup_integral)
        .filter(|(a, i)| **a > a0 && **i > 0.0)
        .map(|(a, i)| (a / a0).ln() / i)
        .fold(0.0, f64::max)
}

/// Largest `A(t) / (A(0) exp(C int_0^t integrand))`.
pub fn growth_bound_ratio(record: &DiagnosticsRecord, fitted_c: f64) -> f64 {
    let Some(&a0) = record.besov_sum.first() else {
        return 0.0;
    };
    record
        .besov_sum
        .iter()
        .zip(&record.blowup_integral)
        .map(|(a, i)| {
            let bound = a0 * (fitted_c * i).exp();
            if bound > 0.0 {
                a / bound
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// `max_i |f_i + f_{N-i}|`, oddness about the box center.
pub fn oddness_about_center(f: &Field) -> f64 {
    let v = f.values();
    let n = v.len();
    (0..n).map(|i| (v[i] + v[(n - i) % n]).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct OddReport {
    /// `max_t max |m(c+y) + m(c-y)|` (and `n`), relative to `max|m_0|`.
    pub oddness: f64,
    /// Worst violation of `m, n >= 0` right of center and `<= 0` left of it,
    /// relative to `max|m_0|`.
    pub sign_violation: f64,
    /// `max_t |J(t) - J(0)| / |J(0)|`, `J = int_{L/2}^{L} (m + n)`.
    pub half_line_drift: f64,
    /// `max_t |dJ/dt + (G_x(L/2)^2 - G_x(L)^2)/2|` relative to `G_x(L/2)^2/2`.
    pub half_line_rate_residual: f64,
    /// `max_t |u(t, L/2)|`.
    pub center_velocity: f64,
}

/// Tolerance for accepting initial data as odd.
pub const ODD_DATA_TOL: f64 = 1e-10;

pub fn odd_symmetry_check(path: &[State]) -> Result<OddReport> {
    let first = path
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty path".into()))?;
    let grid = first.grid();
    let n = grid.n_points();
    let (c, l) = (0.5 * grid.period(), grid.period());
    let ms0 = momentum(first)?;
    let scale = ms0.m.max_abs().max(ms0.n.max_abs());
    let rel = |d: f64| if scale > 0.0 { d / scale } else { d };
    let initial_odd = rel(oddness_about_center(&ms0.m).max(oddness_about_center(&ms0.n)));
    if initial_odd > ODD_DATA_TOL {
        return Err(Error::InvalidArgument(format!(
            "initial momentum is not odd about the center (defect {initial_odd:e})"
        )));
    }
    let op = Popowicz::new(grid, crate::spectral::TWO_THIRDS)?;
    let half = |f: &Field| -> Result<f64> { Ok(f.spectrum()?.integrate_between(c, l)) };
    let j0 = half(&ms0.m.add(&ms0.n)?)?;
    let mut report = OddReport {
        oddness: 0.0,
        sign_violation: 0.0,
        half_line_drift: 0.0,
        half_line_rate_residual: 0.0,
        center_velocity: 0.0,
    };
    for s in path {
        let ms = momentum(s)?;
        report.oddness = report
            .oddness
            .max(rel(oddness_about_center(&ms.m).max(oddness_about_center(&ms.n))));
        let mut viol = 0.0f64;
        for f in [&ms.m, &ms.n] {
            for (i, &val) in f.values().iter().enumerate() {
                if i > n / 2 {
                    viol = viol.max(-val);
                } else if i > 0 && i < n / 2 {
                    viol = viol.max(val);
                }
            }
        }
        report.sign_violation = report.sign_violation.max(rel(viol));
        let j = half(&ms.m.add(&ms.n)?)?;
        let d = (j - j0).abs();
        report.half_line_drift = report
            .half_line_drift
            .max(if j0.abs() > 0.0 { d / j0.abs() } else { d });

        let (ut, vt) = op.tendency(s)?;
        let mt = crate::spectral::helmholtz_forward(&ut)?;
        let nt = crate::spectral::helmholtz_forward(&vt)?;
        let measured = half(&mt.add(&nt)?)?;
        let gx = crate::spectral::derivative(&s.transport_velocity())?;
        let (gc, gl) = (gx.values()[n / 2], gx.values()[0]);
        let predicted = -0.5 * (gc * gc - gl * gl);
        let scale_rate = 0.5 * gc * gc;
        let r = (measured - predicted).abs();
        report.half_line_rate_residual = report
            .half_line_rate_residual
            .max(if scale_rate > 0.0 { r / scale_rate } else { r });
        report.center_velocity = report.center_velocity.max(s.u.values()[n / 2].abs());
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct DependenceReport {
    pub scales: Vec<f64>,
    /// `sup_t (||u^eps - u|| + ||v^eps - v||)` in the reporting norm.
    pub distances: Vec<f64>,
    /// Least-squares slope of `log D` against `log eps`.
    pub slope: f64,
    /// `max D(eps) / (eps ||(du, dv)||)`.
    pub lipschitz_factor: f64,
    /// Runs that aborted, by scale index.
    pub aborted: Vec<usize>,
}

fn record_states(initial: &State, config: &SolverConfig) -> Result<Option<Vec<State>>> {
    let mut obs = StateRecorder { states: Vec::new() };
    let summary = simulate(initial, config, &mut [&mut obs])?;
    Ok(if summary.abort.is_some() { None } else { Some(obs.states) })
}

struct StateRecorder {
    states: Vec<State>,
}

impl Observer for StateRecorder {
    fn name(&self) -> &str {
        "states"
    }

    fn observe(&mut self, _: usize, state: &State) -> std::result::Result<(), String> {
        self.states.push(state.clone());
        Ok(())
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Perturbs `(u_0, v_0)` by `eps (du, dv)` for each scale and measures the
/// distance to the unperturbed run; member runs execute in parallel.
pub fn continuous_dependence_experiment(
    base: &State,
    perturbation: (&Field, &Field),
    scales: &[f64],
    config: &SolverConfig,
    norm: &BesovParams,
    cutoffs: &DyadicCutoffs,
) -> Result<DependenceReport> {
    let (du, dv) = perturbation;
    let pnorm = decompose(du, cutoffs)?.besov_norm(norm) + decompose(dv, cutoffs)?.besov_norm(norm);
    let mut starts = vec![base.clone()];
    for &eps in scales {
        starts.push(State::new(base.u.axpy(eps, du)?, base.v.axpy(eps, dv)?, base.time)?);
    }
    let runs = starts
        .par_iter()
        .map(|s| record_states(s, config))
        .collect::<Result<Vec<_>>>()?;
    let reference = runs[0]
        .as_ref()
        .ok_or_else(|| Error::Abort("unperturbed run aborted".into()))?;
    let mut distances = Vec::new();
    let mut aborted = Vec::new();
    let mut kept = Vec::new();
    for (i, run) in runs[1..].iter().enumerate() {
        let Some(states) = run else {
            aborted.push(i);
            continue;
        };
        let mut d = 0.0f64;
        for (a, b) in states.iter().zip(reference) {
            let e = decompose(&a.u.sub(&b.u)?, cutoffs)?.besov_norm(norm)
                + decompose(&a.v.sub(&b.v)?, cutoffs)?.besov_norm(norm);
            d = d.max(e);
        }
        distances.push(d);
        kept.push(scales[i]);
    }
    let positive: Vec<(f64, f64)> = kept
        .iter()
        .zip(&distances)
        .filter(|(e, d)| **e > 0.0 && **d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    let slope = if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        fit_slope(&x, &y)
    } else {
        f64::NAN
    };
    let lipschitz_factor = kept
        .iter()
        .zip(&distances)
        .filter(|(e, _)| **e > 0.0 && pnorm > 0.0)
        .map(|(e, d)| d / (e * pnorm))
        .fold(0.0, f64::max);
    Ok(DependenceReport {
        scales: kept,
        distances,
        slope,
        lipschitz_factor,
        aborted,
    })
}

/// Whether a momentum spectrum is resolved: energy in the top third of modes
/// relative to the total.
pub fn tail_fraction(f: &Field) -> Result<f64> {
    let spec: Spectrum = f.spectrum()?;
    let n = f.grid().n_points();
    let cut = n / 3;
    let (mut tail, mut total) = (0.0, 0.0);
    for (i, c) in spec.coeffs().iter().enumerate() {
        let m = if i <= n / 2 { i } else { n - i };
        let e = c.norm_sqr();
        total += e;
        if m > cut {
            tail += e;
        }
    }
    Ok(if total > 0.0 { (tail / total).sqrt() } else { 0.0 })
}

/// Collects verdicts for a sign-definite run.
pub fn positive_run_verdicts(record: &DiagnosticsRecord, path: &[State], c0: f64) -> Result<Vec<Verdict>> {
    let cons = conservation_check(path)?;
    let ms: Vec<MomentumState> = path.iter().map(momentum).collect::<Result<_>>()?;
    let sign = sign_preservation_check(&ms)?;
    let l1 = l1_bound_check(record, c0, 4.0, 2.0);
    Ok(vec![
        Verdict::at_most("conservation", cons.drift, 1e-8),
        Verdict::at_most("momentum_rate_identity", cons.momentum_rate_residual, 1e-6),
        Verdict::at_most("sign", sign.worst_violation, sign.tolerance),
        Verdict::at_most("l1_bound", l1.worst_ratio_m.max(l1.worst_ratio_n), 1.0),
        Verdict::at_most("integrand_bound", integrand_bound_ratio(record, c0), 1.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::velocity;

    fn gaussian_momentum(grid: &Arc<Grid>, am: f64, an: f64) -> State {
        let l = grid.period();
        let ms = MomentumState {
            m: Field::from_fn(grid, |x| am * (-(x - 0.4 * l).powi(2)).exp()),
            n: Field::from_fn(grid, |x| an * (-(x - 0.6 * l).powi(2) / 2.0).exp()),
            time: 0.0,
        };
        velocity(&ms).unwrap()
    }

    #[test]
    fn characteristics_of_trivial_flows() {
        let g = Grid::new(64, 10.0).unwrap();
        let zero = State::zeros(&g);
        let map = CharacteristicMap::on_nodes(&g, 4, 0.0);
        let run = track_characteristics(&zero, map, &SolverConfig::new(0.05, 1.0).with_stride(5)).unwrap();
        let last = run.map.positions.last().unwrap();
        assert_eq!(last, &run.map.labels);
        assert!(run.map.jacobians.iter().flatten().all(|&j| j == 1.0));

        let (a, b) = (0.3, 0.4);
        let s = State::new(Field::constant(&g, a), Field::constant(&g, b), 0.0).unwrap();
        let map = CharacteristicMap::on_nodes(&g, 4, 0.0);
        let run = track_characteristics(&s, map, &SolverConfig::new(0.05, 1.0).with_stride(5)).unwrap();
        let speed = 2.0 * a + b;
        for (x, q) in run.map.labels.iter().zip(run.map.positions.last().unwrap()) {
            assert!((q - x - speed).abs() < 1e-12);
        }
        assert!(run.map.jacobians.iter().flatten().all(|&j| (j - 1.0).abs() < 1e-12));
    }

    #[test]
    fn jacobian_matches_exponential_formula_and_pushforward() {
        let g = Grid::new(512, 30.0).unwrap();
        let s = gaussian_momentum(&g, 0.6, 0.4);
        let map = CharacteristicMap::on_nodes(&g, 8, 0.0);
        let run = track_characteristics(&s, map, &SolverConfig::new(0.0005, 1.0).with_stride(200)).unwrap();
        assert!(run.map.min_jacobian() > 0.0);
        assert!(run.map.min_label_gap() > 0.0);
        let dev = jacobian_closed_form_deviation(&run.map);
        assert!(dev < 1e-8, "closed form {dev}");
        let push = pushforward_invariants(&run, 3, 2).unwrap();
        assert!(push.deviation_m < 1e-6 && push.deviation_n < 1e-6, "{push:?}");
        let wrong = pushforward_invariants(&run, 3, 3).unwrap();
        assert!(wrong.deviation_n > 1e3 * push.deviation_n.max(1e-9));
    }

    #[test]
    fn roundoff_does_not_make_positive_data_mixed() {
        let g = Grid::new(64, 10.0).unwrap();
        let bump = Field::from_fn(&g, |x| (-(x - 5.0).powi(2)).exp() - 1e-17);
        let ms = MomentumState {
            m: bump.clone(),
            n: bump,
            time: 0.0,
        };
        let report = sign_preservation_check(&[ms]).unwrap();
        assert_eq!(report.initial_m, SignPattern::Nonnegative);
        assert_eq!(report.initial_n, SignPattern::Nonnegative);
    }

    #[test]
    fn positive_run_keeps_sign_and_bounds() {
        let g = Grid::new(512, 30.0).unwrap();
        let s = gaussian_momentum(&g, 0.3, 0.2);
        let cfg = SolverConfig::new(0.01, 3.0).with_stride(10);
        let (summary, obs) = simulate_with_diagnostics(&s, &cfg, None).unwrap();
        assert!(summary.abort.is_none());
        let c0 = l1_constant(&momentum(&s).unwrap()).unwrap();
        for v in positive_run_verdicts(&obs.record, &obs.states, c0).unwrap() {
            assert!(v.pass, "{v:?}");
        }
        assert!(blowup_functional(&obs.record).is_ok());
    }

    #[test]
    fn zero_data_checks_are_trivial() {
        let g = Grid::new(64, 10.0).unwrap();
        let z = State::zeros(&g);
        let path = vec![z.clone(), z];
        let cons = conservation_check(&path).unwrap();
        assert_eq!(cons.drift, 0.0);
        let odd = odd_symmetry_check(&path).unwrap();
        assert_eq!(odd.oddness, 0.0);
        assert_eq!(odd.half_line_drift, 0.0);
        let ms: Vec<_> = path.iter().map(|s| momentum(s).unwrap()).collect();
        assert!(sign_preservation_check(&ms).unwrap().pass());
    }

    #[test]
    fn constant_state_integrand_is_linear() {
        let g = Grid::new(32, 10.0).unwrap();
        let s = State::new(Field::constant(&g, 0.2), Field::constant(&g, -0.1), 0.0).unwrap();
        let cfg = SolverConfig::new(0.05, 1.0).with_stride(4);
        let (_, obs) = simulate_with_diagnostics(&s, &cfg, None).unwrap();
        for (t, i) in obs.record.times.iter().zip(&obs.record.blowup_integral) {
            assert!((i - 0.3 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [1e-2f64, 1e-3, 1e-4].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((fit_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}

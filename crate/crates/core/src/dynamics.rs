//! Right-hand sides of the nonlocal Popowicz system and its time integrator.
//!
//! In velocity variables the system reads
//!
//! ```text
//! u_t + (2u + v) u_x = F,   F = p * (-3(2u_x + v_x) u + v_x u_xx - v_xx u_x)
//! v_t + (2u + v) v_x = H,   H = p * (-2(2u_x + v_x) v - 2 v_x u_xx - v_xx v_x)
//! ```
//!
//! with `p * f = (1 - d_xx)^{-1} f`. It is equivalent to the momentum form
//! `m_t + (2u+v) m_x + 3(2u_x+v_x) m = 0`, `n_t + (2u+v) n_x + 2(2u_x+v_x) n = 0`
//! with `m = u - u_xx`, `n = v - v_xx`.
//!
//! Quadratic products use the two-thirds rule: factors are truncated to the
//! retained band before multiplication and the product is truncated after,
//! so no aliased energy lands in a retained mode.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{check_fraction, Field, Grid, HelmholtzKernel, Spectrum, TWO_THIRDS};

/// Velocity pair `(u, v)` at a given time.
#[derive(Clone, Debug)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub time: f64,
}

impl State {
    pub fn new(u: Field, v: Field, time: f64) -> Result<State> {
        u.grid().ensure_same(v.grid())?;
        u.validate()?;
        v.validate()?;
        Ok(State { u, v, time })
    }

    pub fn zeros(grid: &Arc<Grid>) -> State {
        State {
            u: Field::zeros(grid),
            v: Field::zeros(grid),
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.u.grid().ensure_same(self.v.grid())?;
        self.u.validate()?;
        self.v.validate()
    }

    /// `2u + v`, the shared transport velocity.
    pub fn transport_velocity(&self) -> Field {
        self.u
            .zip_with(&self.v, |a, b| 2.0 * a + b)
            .expect("state fields share a grid")
    }

    /// Largest of `|u|_inf`, `|v|_inf` over the pair, used as a relative scale.
    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }
}

/// Momentum pair `(m, n) = ((1 - d_xx) u, (1 - d_xx) v)`.
#[derive(Clone, Debug)]
pub struct MomentumState {
    pub m: Field,
    pub n: Field,
    pub time: f64,
}

impl MomentumState {
    pub fn grid(&self) -> &Arc<Grid> {
        self.m.grid()
    }

    /// Quadrature of `m + n` over the box.
    pub fn total_momentum(&self) -> f64 {
        self.m.integral() + self.n.integral()
    }
}

pub fn momentum(state: &State) -> Result<MomentumState> {
    state.validate()?;
    let m = state.u.spectrum()?.apply_even(|k| 1.0 + k * k).into_field()?;
    let n = state.v.spectrum()?.apply_even(|k| 1.0 + k * k).into_field()?;
    Ok(MomentumState {
        m,
        n,
        time: state.time,
    })
}

pub fn velocity(ms: &MomentumState) -> Result<State> {
    ms.m.grid().ensure_same(ms.n.grid())?;
    let kernel = HelmholtzKernel::new(ms.m.grid());
    let u = crate::spectral::helmholtz_inverse(&ms.m, &kernel)?;
    let v = crate::spectral::helmholtz_inverse(&ms.n, &kernel)?;
    Ok(State {
        u,
        v,
        time: ms.time,
    })
}

/// Integration parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub safety_checks: bool,
}

fn default_dealias() -> f64 {
    TWO_THIRDS
}

fn default_stride() -> usize {
    10
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            dt,
            t_end,
            dealias_fraction: TWO_THIRDS,
            snapshot_stride: 10,
            safety_checks: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    pub fn with_safety_checks(mut self, on: bool) -> Self {
        self.safety_checks = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if self.t_end > 0.0 && self.dt >= self.t_end {
            return Err(Error::InvalidArgument(format!(
                "dt ({}) must be smaller than t_end ({})",
                self.dt, self.t_end
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidArgument("snapshot_stride must be >= 1".into()));
        }
        check_fraction(self.dealias_fraction)
    }

    /// Largest step allowed by `dt <= 0.5 dx / max(1, max|2u+v|)`.
    pub fn stability_limit(state: &State) -> f64 {
        let speed = state.transport_velocity().max_abs().max(1.0);
        0.5 * state.grid().dx() / speed
    }

    pub fn check_stability(&self, state: &State) -> Result<()> {
        let limit = SolverConfig::stability_limit(state);
        if self.dt > limit * (1.0 + 1e-12) {
            Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the advective bound {}",
                self.dt, limit
            )))
        } else {
            Ok(())
        }
    }
}

/// Physical-space samples of `u, u_x, u_xx, v, v_x, v_xx` from band-truncated spectra.
pub(crate) struct Jet {
    pub u: Vec<f64>,
    pub ux: Vec<f64>,
    pub uxx: Vec<f64>,
    pub v: Vec<f64>,
    pub vx: Vec<f64>,
    pub vxx: Vec<f64>,
}

/// The semi-discrete Popowicz operator on one grid.
#[derive(Clone, Debug)]
pub struct Popowicz {
    grid: Arc<Grid>,
    kernel: HelmholtzKernel,
    fraction: f64,
    // retained-band mask, and the same mask times the first and second
    // derivative symbols and the kernel symbol
    keep: Vec<f64>,
    first: Vec<Complex64>,
    second: Vec<f64>,
    smoothed: Vec<f64>,
}

impl Popowicz {
    pub fn new(grid: &Arc<Grid>, dealias_fraction: f64) -> Result<Popowicz> {
        check_fraction(dealias_fraction)?;
        let kernel = HelmholtzKernel::new(grid);
        let keep = Spectrum::from_coeffs(grid, vec![Complex64::new(1.0, 0.0); grid.n_points()])?
            .truncate(dealias_fraction)
            .coeffs()
            .iter()
            .map(|c| c.re)
            .collect::<Vec<f64>>();
        let nyq = grid.nyquist_index();
        let first = grid
            .wavenumbers()
            .iter()
            .zip(&keep)
            .enumerate()
            .map(|(i, (&k, &w))| if i == nyq { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k * w) })
            .collect();
        let second = grid.wavenumbers().iter().zip(&keep).map(|(&k, &w)| -k * k * w).collect();
        let smoothed = kernel.symbol().iter().zip(&keep).map(|(s, w)| s * w).collect();
        Ok(Popowicz {
            grid: Arc::clone(grid),
            kernel,
            fraction: dealias_fraction,
            keep,
            first,
            second,
            smoothed,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.fraction
    }

    pub fn kernel(&self) -> &HelmholtzKernel {
        &self.kernel
    }

    fn check_state(&self, state: &State) -> Result<()> {
        self.grid.ensure_same(state.grid())?;
        state.validate()
    }

    pub(crate) fn jet(&self, state: &State) -> Result<Jet> {
        self.jet_of(state.u.values(), state.v.values())
    }

    pub(crate) fn jet_of(&self, u: &[f64], v: &[f64]) -> Result<Jet> {
        let (cu, cv) = self.grid.forward_pair(u, v);
        let scaled = |table: &dyn Fn(usize) -> Complex64, c: &[Complex64]| -> Vec<Complex64> {
            c.iter().enumerate().map(|(i, &z)| z * table(i)).collect()
        };
        let keep = |i: usize| Complex64::new(self.keep[i], 0.0);
        let first = |i: usize| self.first[i];
        let second = |i: usize| Complex64::new(self.second[i], 0.0);
        let (u, v) = self.grid.inverse_pair(&scaled(&keep, &cu), &scaled(&keep, &cv));
        let (ux, vx) = self.grid.inverse_pair(&scaled(&first, &cu), &scaled(&first, &cv));
        let (uxx, vxx) = self.grid.inverse_pair(&scaled(&second, &cu), &scaled(&second, &cv));
        Ok(Jet {
            u,
            ux,
            uxx,
            v,
            vx,
            vxx,
        })
    }

    /// Truncate a product to the retained band, optionally apply the kernel,
    /// and return its spectrum.
    fn product_spectrum(&self, values: &[f64], convolve: bool) -> Spectrum {
        let mut spec = Spectrum::from_coeffs(&self.grid, self.grid.forward(values))
            .expect("length matches grid");
        spec.truncate_in_place(self.fraction);
        if convolve {
            self.kernel.apply_in_place(&mut spec);
        }
        spec
    }

    fn source_terms(jet: &Jet) -> (Vec<f64>, Vec<f64>) {
        let n = jet.u.len();
        let mut pf = Vec::with_capacity(n);
        let mut ph = Vec::with_capacity(n);
        for i in 0..n {
            let gx = 2.0 * jet.ux[i] + jet.vx[i];
            pf.push(-3.0 * gx * jet.u[i] + jet.vx[i] * jet.uxx[i] - jet.vxx[i] * jet.ux[i]);
            ph.push(-2.0 * gx * jet.v[i] - 2.0 * jet.vx[i] * jet.uxx[i] - jet.vxx[i] * jet.vx[i]);
        }
        (pf, ph)
    }

    fn nonfinite_check(values: &[f64], what: &str) -> Result<()> {
        match values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Abort(format!(
                "non-finite {what} at node {i} ({})",
                values[i]
            ))),
            None => Ok(()),
        }
    }

    /// `F = p * (-3(2u_x+v_x)u + v_x u_xx - v_xx u_x)`.
    pub fn rhs_f(&self, state: &State) -> Result<Field> {
        self.check_state(state)?;
        let jet = self.jet(state)?;
        let (pf, _) = Self::source_terms(&jet);
        Self::nonfinite_check(&pf, "F integrand")?;
        self.product_spectrum(&pf, true).into_field()
    }

    /// `H = p * (-2(2u_x+v_x)v - 2 v_x u_xx - v_xx v_x)`.
    pub fn rhs_h(&self, state: &State) -> Result<Field> {
        self.check_state(state)?;
        let jet = self.jet(state)?;
        let (_, ph) = Self::source_terms(&jet);
        Self::nonfinite_check(&ph, "H integrand")?;
        self.product_spectrum(&ph, true).into_field()
    }

    /// `(u_t, v_t) = (-(2u+v) u_x + F, -(2u+v) v_x + H)`.
    pub fn tendency(&self, state: &State) -> Result<(Field, Field)> {
        self.check_state(state)?;
        let jet = self.jet(state)?;
        let (ut, vt) = self.tendency_from_jet(&jet, &jet)?;
        Ok((
            Field::new(Arc::clone(&self.grid), ut)?,
            Field::new(Arc::clone(&self.grid), vt)?,
        ))
    }

    /// Linear-transport tendency: `target` is advected by `2u+v` of `coeff`,
    /// with sources `F`, `H` evaluated on `coeff`. With `coeff == target` this is
    /// the full nonlinear tendency.
    pub(crate) fn tendency_from_jet(&self, coeff: &Jet, target: &Jet) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = coeff.u.len();
        let (pf, ph) = Self::source_terms(coeff);
        let mut au = Vec::with_capacity(n);
        let mut av = Vec::with_capacity(n);
        for i in 0..n {
            let g = 2.0 * coeff.u[i] + coeff.v[i];
            au.push(-g * target.ux[i]);
            av.push(-g * target.vx[i]);
        }
        Self::nonfinite_check(&pf, "F integrand")?;
        Self::nonfinite_check(&ph, "H integrand")?;
        Self::nonfinite_check(&au, "advection of u")?;
        Self::nonfinite_check(&av, "advection of v")?;
        let (cau, cav) = self.grid.forward_pair(&au, &av);
        let (cpf, cph) = self.grid.forward_pair(&pf, &ph);
        let combine = |adv: &[Complex64], src: &[Complex64]| -> Vec<Complex64> {
            (0..n)
                .map(|i| adv[i] * self.keep[i] + src[i] * self.smoothed[i])
                .collect()
        };
        Ok(self.grid.inverse_pair(&combine(&cau, &cpf), &combine(&cav, &cph)))
    }

    /// Direct momentum-form tendency
    /// `(-(2u+v) m_x - 3(2u_x+v_x) m, -(2u+v) n_x - 2(2u_x+v_x) n)`.
    pub fn momentum_tendency(&self, state: &State) -> Result<(Field, Field)> {
        self.check_state(state)?;
        let su = state.u.spectrum_unchecked().truncate(self.fraction);
        let sv = state.v.spectrum_unchecked().truncate(self.fraction);
        let inv = |s: &Spectrum| self.grid.inverse(s.coeffs().to_vec());
        let u = inv(&su)?;
        let ux = inv(&su.derivative())?;
        let v = inv(&sv)?;
        let vx = inv(&sv.derivative())?;
        let sm = su.apply_even(|k| 1.0 + k * k);
        let sn = sv.apply_even(|k| 1.0 + k * k);
        let m = inv(&sm)?;
        let mx = inv(&sm.derivative())?;
        let nn = inv(&sn)?;
        let nx = inv(&sn.derivative())?;
        let len = u.len();
        let mut mt = Vec::with_capacity(len);
        let mut nt = Vec::with_capacity(len);
        for i in 0..len {
            let g = 2.0 * u[i] + v[i];
            let gx = 2.0 * ux[i] + vx[i];
            mt.push(-g * mx[i] - 3.0 * gx * m[i]);
            nt.push(-g * nx[i] - 2.0 * gx * nn[i]);
        }
        Ok((
            self.product_spectrum(&mt, false).into_field()?,
            self.product_spectrum(&nt, false).into_field()?,
        ))
    }

    /// Relative residual between `(1 - d_xx)` of the velocity-form tendency and
    /// the direct momentum-form tendency.
    pub fn momentum_form_residual(&self, state: &State) -> Result<f64> {
        let (ut, vt) = self.tendency(state)?;
        let (mt, nt) = self.momentum_tendency(state)?;
        let mt2 = crate::spectral::helmholtz_forward(&ut)?;
        let nt2 = crate::spectral::helmholtz_forward(&vt)?;
        let scale = mt.max_abs().max(nt.max_abs());
        let diff = mt.max_diff(&mt2)?.max(nt.max_diff(&nt2)?);
        Ok(if scale > 0.0 { diff / scale } else { diff })
    }

    /// One classical four-stage Runge-Kutta step of the nonlinear system.
    pub fn step_rk4(&self, state: &State, dt: f64) -> Result<State> {
        self.check_state(state)?;
        let grid = &self.grid;
        let eval = |u: &[f64], v: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let jet = self.jet_of(u, v)?;
            self.tendency_from_jet(&jet, &jet)
        };
        let u0 = state.u.values();
        let v0 = state.v.values();
        let (k1u, k1v) = eval(u0, v0)?;
        let (k2u, k2v) = eval(&axpy(u0, 0.5 * dt, &k1u), &axpy(v0, 0.5 * dt, &k1v))?;
        let (k3u, k3v) = eval(&axpy(u0, 0.5 * dt, &k2u), &axpy(v0, 0.5 * dt, &k2v))?;
        let (k4u, k4v) = eval(&axpy(u0, dt, &k3u), &axpy(v0, dt, &k3v))?;
        let u1 = rk4_combine(u0, dt, &k1u, &k2u, &k3u, &k4u);
        let v1 = rk4_combine(v0, dt, &k1v, &k2v, &k3v, &k4v);
        Self::nonfinite_check(&u1, "u after step")?;
        Self::nonfinite_check(&v1, "v after step")?;
        Ok(State {
            u: Field::new(Arc::clone(grid), u1)?,
            v: Field::new(Arc::clone(grid), v1)?,
            time: state.time + dt,
        })
    }
}

pub(crate) fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

pub(crate) fn rk4_combine(x: &[f64], dt: f64, k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]) -> Vec<f64> {
    let w = dt / 6.0;
    (0..x.len())
        .map(|i| x[i] + w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// `|u_x|_inf + |v_x|_inf + |u|_inf + |v|_inf`, the blow-up integrand.
pub fn blowup_integrand(state: &State) -> Result<f64> {
    state.validate()?;
    let grid = state.grid();
    let (cu, cv) = grid.forward_pair(state.u.values(), state.v.values());
    let nyq = grid.nyquist_index();
    let d = |c: &[Complex64]| -> Vec<Complex64> {
        c.iter()
            .zip(grid.wavenumbers())
            .enumerate()
            .map(|(i, (&z, &k))| if i == nyq { Complex64::new(0.0, 0.0) } else { z * Complex64::new(0.0, k) })
            .collect()
    };
    let (ux, vx) = grid.inverse_pair(&d(&cu), &d(&cv));
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(sup(&ux) + sup(&vx) + state.u.max_abs() + state.v.max_abs())
}

/// Callback invoked on snapshots of a running simulation.
pub trait Observer {
    fn name(&self) -> &str;
    fn observe(&mut self, step: usize, state: &State) -> std::result::Result<(), String>;
}

/// Why a run stopped before `t_end`.
#[derive(Clone, Debug, PartialEq)]
pub enum AbortReason {
    NonFinite {
        step: usize,
        time: f64,
        message: String,
        blowup_integral: f64,
    },
    Observer {
        name: String,
        message: String,
    },
    SafetyCheck {
        step: usize,
        time: f64,
        residual: f64,
    },
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::NonFinite {
                step,
                time,
                message,
                blowup_integral,
            } => write!(
                f,
                "non-finite values at step {step} (t = {time:.4}): {message}; blow-up integral so far {blowup_integral:e}"
            ),
            AbortReason::Observer { name, message } => {
                write!(f, "observer '{name}' failed: {message}")
            }
            AbortReason::SafetyCheck {
                step,
                time,
                residual,
            } => write!(
                f,
                "momentum-form consistency residual {residual:e} at step {step} (t = {time})"
            ),
        }
    }
}

/// Outcome of [`simulate`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_state: State,
    pub steps: usize,
    pub t_final: f64,
    pub abort: Option<AbortReason>,
    /// Relative drift of `int (m + n)` between the initial and final state.
    pub conserved_drift: f64,
    pub blowup_integral: f64,
}

/// JSON form of a run summary.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunSummaryRecord {
    pub steps: usize,
    pub t_final: f64,
    pub abort_reason: Option<String>,
    pub conserved_drift: f64,
}

impl RunSummary {
    pub fn record(&self) -> RunSummaryRecord {
        RunSummaryRecord {
            steps: self.steps,
            t_final: self.t_final,
            abort_reason: self.abort.as_ref().map(|a| a.to_string()),
            conserved_drift: self.conserved_drift,
        }
    }
}

/// Change of `int (m + n)` relative to `||m_0||_1 + ||n_0||_1`, which equals
/// `|int (m_0 + n_0)|` for sign-definite data and stays meaningful when the
/// integral itself vanishes.
pub fn relative_drift(initial: &MomentumState, current: &MomentumState) -> f64 {
    let diff = (current.total_momentum() - initial.total_momentum()).abs();
    let scale = initial.m.l1_norm() + initial.n.l1_norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Number of steps and the size of step `i` for a run to `t_end`.
pub fn step_schedule(dt: f64, t_end: f64) -> usize {
    if t_end <= 0.0 {
        0
    } else {
        (t_end / dt - 1e-9).ceil() as usize
    }
}

/// Integrates from `initial` to `config.t_end`, calling each observer on step 0,
/// every `snapshot_stride` steps and on the final step.
pub fn simulate(
    initial: &State,
    config: &SolverConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<RunSummary> {
    config.validate()?;
    initial.validate()?;
    config.check_stability(initial)?;
    let op = Popowicz::new(initial.grid(), config.dealias_fraction)?;
    let n_steps = step_schedule(config.dt, config.t_end);
    let t0 = initial.time;
    let m0 = momentum(initial)?;

    let mut state = initial.clone();
    let mut integrand_prev = blowup_integrand(&state)?;
    let mut blowup_integral = 0.0;
    let mut abort = None;
    let mut steps_done = 0;

    let notify = |step: usize, state: &State, observers: &mut [&mut dyn Observer]| -> Option<AbortReason> {
        for obs in observers.iter_mut() {
            if let Err(message) = obs.observe(step, state) {
                return Some(AbortReason::Observer {
                    name: obs.name().to_string(),
                    message,
                });
            }
        }
        None
    };

    if let Some(a) = notify(0, &state, observers) {
        abort = Some(a);
    }

    if abort.is_none() {
        for step in 1..=n_steps {
            let t_next = (t0 + step as f64 * config.dt).min(t0 + config.t_end);
            let h = t_next - state.time;
            let next = match op.step_rk4(&state, h) {
                Ok(s) => s,
                Err(e) => {
                    abort = Some(AbortReason::NonFinite {
                        step,
                        time: state.time,
                        message: match e {
                            Error::Abort(m) => m,
                            e => e.to_string(),
                        },
                        blowup_integral,
                    });
                    break;
                }
            };
            state = State {
                time: t_next,
                ..next
            };
            steps_done = step;
            let integrand = blowup_integrand(&state)?;
            blowup_integral += 0.5 * h * (integrand + integrand_prev);
            integrand_prev = integrand;

            let snapshot = step % config.snapshot_stride == 0 || step == n_steps;
            if snapshot {
                if config.safety_checks {
                    let residual = op.momentum_form_residual(&state)?;
                    if residual > 1e-8 {
                        abort = Some(AbortReason::SafetyCheck {
                            step,
                            time: state.time,
                            residual,
                        });
                        break;
                    }
                }
                if let Some(a) = notify(step, &state, observers) {
                    abort = Some(a);
                    break;
                }
            }
        }
    }

    let conserved_drift = relative_drift(&m0, &momentum(&state)?);
    Ok(RunSummary {
        t_final: state.time,
        final_state: state,
        steps: steps_done,
        abort,
        conserved_drift,
        blowup_integral,
    })
}

//! Scenario configuration: strict JSON parsing that reports every problem at
//! once, and construction of the initial state.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde_json::{json, Map, Value};

use popowicz::dynamics::{velocity, MomentumState, SolverConfig, State};
use popowicz::ensemble::{rng, BandLimited};
use popowicz::littlewood_paley::BesovParams;
use popowicz::spectral::{Field, Grid, TWO_THIRDS};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n_points: usize,
    pub period: f64,
}

impl GridSpec {
    pub fn build(&self) -> popowicz::Result<Arc<Grid>> {
        Grid::new(self.n_points, self.period)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub k: i64,
    pub amp: f64,
    pub phase: f64,
}

/// One channel of initial data.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Zero,
    /// `sign * amplitude * exp(-((x - center) / width)^2)`, periodically wrapped.
    GaussianMomentum {
        amplitude: f64,
        width: f64,
        center: f64,
        sign: Sign,
    },
    /// `c exp(-|x - center|)` smoothed by `mollify_passes` binomial (1/4, 1/2, 1/4)
    /// passes; velocity channels only.
    Peakon {
        c: f64,
        mollify_passes: usize,
        center: Option<f64>,
    },
    /// `amplitude * y exp(-y^2)`, `y = (x - L/2) / width`: odd about the box center,
    /// positive to its right.
    OddBump { amplitude: f64, width: f64 },
    /// `sum amp cos(2 pi k x / L + phase)`.
    FourierModes { modes: Vec<Mode> },
    /// Seeded band-limited random field; `u` and `v` draw from one stream.
    RandomModes {
        max_mode: usize,
        decay: f64,
        amplitude: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Velocity,
    Momentum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    pub space: Space,
    /// `u` or `m`.
    pub first: Profile,
    /// `v` or `n`.
    pub second: Profile,
}

/// Checks a scenario can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Conservation,
    MomentumRate,
    Sign,
    L1Bound,
    IntegrandBound,
    GrowthBound,
    BlowupMonitor,
    Pushforward,
    OddSymmetry,
    CrestSpeed,
    PeakonShape,
}

impl Check {
    pub const ALL: [Check; 11] = [
        Check::Conservation,
        Check::MomentumRate,
        Check::Sign,
        Check::L1Bound,
        Check::IntegrandBound,
        Check::GrowthBound,
        Check::BlowupMonitor,
        Check::Pushforward,
        Check::OddSymmetry,
        Check::CrestSpeed,
        Check::PeakonShape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Conservation => "conservation",
            Check::MomentumRate => "momentum_rate",
            Check::Sign => "sign",
            Check::L1Bound => "l1_bound",
            Check::IntegrandBound => "integrand_bound",
            Check::GrowthBound => "growth_bound",
            Check::BlowupMonitor => "blowup_monitor",
            Check::Pushforward => "pushforward",
            Check::OddSymmetry => "odd_symmetry",
            Check::CrestSpeed => "crest_speed",
            Check::PeakonShape => "peakon_shape",
        }
    }

    pub fn from_name(name: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub initial_data: InitialData,
    pub diagnostics: Vec<Check>,
    pub besov: BesovParams,
    pub seed: u64,
    /// Frozen constant of the Besov growth bound; required by `growth_bound`.
    pub growth_constant: Option<f64>,
    /// Every this many grid nodes carries a characteristic label.
    pub label_stride: usize,
    /// Step of the characteristic tracking pass; the solver step when absent.
    pub characteristics_dt: Option<f64>,
}

pub const DEFAULT_LABEL_STRIDE: usize = 4;

pub fn default_besov() -> BesovParams {
    BesovParams {
        s: 2.6,
        p: 2.0,
        r: 2.0,
    }
}

// ---------------------------------------------------------------------------
// strict reader

/// Error-collecting view of a JSON object.
pub(crate) struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

pub(crate) type Errors = Vec<String>;

impl<'a> Obj<'a> {
    pub(crate) fn new(value: &'a Value, path: &str, errs: &mut Errors) -> Option<Obj<'a>> {
        match value.as_object() {
            Some(map) => Some(Obj {
                path: path.to_string(),
                map,
            }),
            None => {
                errs.push(format!("{}: expected an object", display_path(path)));
                None
            }
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    /// Flags keys outside `allowed`, echoing them back.
    pub(crate) fn only(&self, allowed: &[&str], errs: &mut Errors) {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                errs.push(format!(
                    "unknown key '{key}' in {} (expected one of: {})",
                    display_path(&self.path),
                    allowed.join(", ")
                ));
            }
        }
    }

    pub(crate) fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    pub(crate) fn required(&self, key: &str, errs: &mut Errors) -> Option<&'a Value> {
        let v = self.map.get(key);
        if v.is_none() {
            errs.push(format!("missing required field '{}'", self.key_path(key)));
        }
        v
    }

    pub(crate) fn real(&self, key: &str, errs: &mut Errors) -> Option<f64> {
        let v = self.required(key, errs)?;
        as_real(v, &self.key_path(key), errs)
    }

    pub(crate) fn real_or(&self, key: &str, default: f64, errs: &mut Errors) -> Option<f64> {
        match self.map.get(key) {
            Some(v) => as_real(v, &self.key_path(key), errs),
            None => Some(default),
        }
    }

    pub(crate) fn count(&self, key: &str, errs: &mut Errors) -> Option<u64> {
        let v = self.required(key, errs)?;
        as_count(v, &self.key_path(key), errs)
    }

    pub(crate) fn count_or(&self, key: &str, default: u64, errs: &mut Errors) -> Option<u64> {
        match self.map.get(key) {
            Some(v) => as_count(v, &self.key_path(key), errs),
            None => Some(default),
        }
    }

    pub(crate) fn text(&self, key: &str, errs: &mut Errors) -> Option<&'a str> {
        let v = self.required(key, errs)?;
        let s = v.as_str();
        if s.is_none() {
            errs.push(format!("{}: expected a string", self.key_path(key)));
        }
        s
    }

    pub(crate) fn child(&self, key: &str, errs: &mut Errors) -> Option<Obj<'a>> {
        let v = self.required(key, errs)?;
        Obj::new(v, &self.key_path(key), errs)
    }

    pub(crate) fn besov(&self, key: &str, errs: &mut Errors) -> Option<BesovParams> {
        match self.map.get(key) {
            None => Some(default_besov()),
            Some(v) => parse_besov(v, &self.key_path(key), errs),
        }
    }
}

fn display_path(path: &str) -> &str {
    if path.is_empty() {
        "the top level"
    } else {
        path
    }
}

fn as_real(v: &Value, path: &str, errs: &mut Errors) -> Option<f64> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Some(x),
        _ => {
            errs.push(format!("{path}: expected a finite number, got {v}"));
            None
        }
    }
}

fn as_count(v: &Value, path: &str, errs: &mut Errors) -> Option<u64> {
    let c = v.as_u64();
    if c.is_none() {
        errs.push(format!("{path}: expected a non-negative integer, got {v}"));
    }
    c
}

fn exponent(v: &Value, path: &str, errs: &mut Errors) -> Option<f64> {
    if let Some(s) = v.as_str() {
        return match popowicz::littlewood_paley::parse_exponent(s) {
            Ok(x) => Some(x),
            Err(e) => {
                errs.push(format!("{path}: {e}"));
                None
            }
        };
    }
    as_real(v, path, errs)
}

pub(crate) fn parse_besov(v: &Value, path: &str, errs: &mut Errors) -> Option<BesovParams> {
    let obj = Obj::new(v, path, errs)?;
    obj.only(&["s", "p", "r"], errs);
    let s = obj.real("s", errs);
    let p = obj.required("p", errs).and_then(|v| exponent(v, &obj.key_path("p"), errs));
    let r = obj.required("r", errs).and_then(|v| exponent(v, &obj.key_path("r"), errs));
    let params = BesovParams {
        s: s?,
        p: p?,
        r: r?,
    };
    if let Err(e) = params.validate() {
        errs.push(format!("{path}: {e}"));
        return None;
    }
    Some(params)
}

pub(crate) fn parse_grid(obj: &Obj, errs: &mut Errors) -> Option<GridSpec> {
    let g = obj.child("grid", errs)?;
    g.only(&["n_points", "period"], errs);
    let n = g.count("n_points", errs);
    let period = g.real("period", errs);
    let (n, period) = (n? as usize, period?);
    if n < 8 || n % 2 != 0 {
        errs.push(format!("grid.n_points must be even and at least 8, got {n}"));
        return None;
    }
    if period <= 0.0 {
        errs.push(format!("grid.period must be positive, got {period}"));
        return None;
    }
    Some(GridSpec { n_points: n, period })
}

fn parse_solver(obj: &Obj, errs: &mut Errors) -> Option<SolverConfig> {
    let s = obj.child("solver", errs)?;
    s.only(
        &["dt", "t_end", "dealias_fraction", "snapshot_stride", "safety_checks"],
        errs,
    );
    let dt = s.real("dt", errs);
    let t_end = s.real("t_end", errs);
    let fraction = s.real_or("dealias_fraction", TWO_THIRDS, errs);
    let stride = s.count_or("snapshot_stride", 10, errs);
    let safety = match s.get("safety_checks") {
        None => Some(false),
        Some(Value::Bool(b)) => Some(*b),
        Some(v) => {
            errs.push(format!("solver.safety_checks: expected true or false, got {v}"));
            None
        }
    };
    let mut ok = true;
    if let Some(dt) = dt {
        if dt <= 0.0 {
            errs.push(format!("solver.dt must be positive, got {dt}"));
            ok = false;
        }
    }
    if let Some(t) = t_end {
        if t < 0.0 {
            errs.push(format!("solver.t_end must be non-negative, got {t}"));
            ok = false;
        }
    }
    if let (Some(dt), Some(t)) = (dt, t_end) {
        if t > 0.0 && dt >= t {
            errs.push(format!(
                "solver.dt ({dt}) must be smaller than solver.t_end ({t})"
            ));
            ok = false;
        }
    }
    if let Some(f) = fraction {
        if !(f > 0.0 && f <= 1.0) {
            errs.push(format!("solver.dealias_fraction must lie in (0, 1], got {f}"));
            ok = false;
        }
    }
    if stride == Some(0) {
        errs.push("solver.snapshot_stride must be at least 1".into());
        ok = false;
    }
    if !ok {
        return None;
    }
    Some(SolverConfig {
        dt: dt?,
        t_end: t_end?,
        dealias_fraction: fraction?,
        snapshot_stride: stride? as usize,
        safety_checks: safety?,
    })
}

pub(crate) fn parse_profile(v: &Value, path: &str, space: Space, errs: &mut Errors) -> Option<Profile> {
    let p = Obj::new(v, path, errs)?;
    let kind = p.text("kind", errs)?;
    let positive = |x: Option<f64>, what: &str, errs: &mut Errors| -> Option<f64> {
        let x = x?;
        if x <= 0.0 {
            errs.push(format!("{path}.{what} must be positive, got {x}"));
            return None;
        }
        Some(x)
    };
    match kind {
        "zero" => {
            p.only(&["kind"], errs);
            Some(Profile::Zero)
        }
        "gaussian_momentum" => {
            p.only(&["kind", "amplitude", "width", "center", "sign"], errs);
            let amplitude = p.real("amplitude", errs);
            let width = positive(p.real("width", errs), "width", errs);
            let center = p.real("center", errs);
            let sign = match p.get("sign").map(|s| s.as_str()) {
                None => Some(Sign::Positive),
                Some(Some("positive")) => Some(Sign::Positive),
                Some(Some("negative")) => Some(Sign::Negative),
                Some(_) => {
                    errs.push(format!("{path}.sign must be \"positive\" or \"negative\""));
                    None
                }
            };
            Some(Profile::GaussianMomentum {
                amplitude: amplitude?,
                width: width?,
                center: center?,
                sign: sign?,
            })
        }
        "peakon" => {
            p.only(&["kind", "c", "mollify_passes", "center"], errs);
            let c = p.real("c", errs);
            let passes = p.count("mollify_passes", errs);
            let center = match p.get("center") {
                None => Some(None),
                Some(v) => as_real(v, &format!("{path}.center"), errs).map(Some),
            };
            if space == Space::Momentum {
                errs.push(format!(
                    "{path}: a peakon is a velocity profile; use \"space\": \"velocity\""
                ));
                return None;
            }
            Some(Profile::Peakon {
                c: c?,
                mollify_passes: passes? as usize,
                center: center?,
            })
        }
        "odd_bump" => {
            p.only(&["kind", "amplitude", "width"], errs);
            let amplitude = p.real("amplitude", errs);
            let width = positive(p.real("width", errs), "width", errs);
            Some(Profile::OddBump {
                amplitude: amplitude?,
                width: width?,
            })
        }
        "fourier_modes" => {
            p.only(&["kind", "modes"], errs);
            let list = p.required("modes", errs)?;
            let Some(items) = list.as_array() else {
                errs.push(format!("{path}.modes: expected a list"));
                return None;
            };
            let mut modes = Vec::new();
            let mut ok = true;
            for (i, item) in items.iter().enumerate() {
                let mpath = format!("{path}.modes[{i}]");
                let Some(m) = Obj::new(item, &mpath, errs) else {
                    ok = false;
                    continue;
                };
                m.only(&["k", "amp", "phase"], errs);
                let k = m.required("k", errs).and_then(|v| {
                    let k = v.as_i64();
                    if k.is_none() {
                        errs.push(format!("{mpath}.k: expected an integer mode number"));
                    }
                    k
                });
                let amp = m.real("amp", errs);
                let phase = m.real_or("phase", 0.0, errs);
                match (k, amp, phase) {
                    (Some(k), Some(amp), Some(phase)) => modes.push(Mode { k, amp, phase }),
                    _ => ok = false,
                }
            }
            ok.then_some(Profile::FourierModes { modes })
        }
        "random_modes" => {
            p.only(&["kind", "max_mode", "decay", "amplitude"], errs);
            let max_mode = p.count("max_mode", errs);
            let decay = p.real("decay", errs);
            let amplitude = p.real("amplitude", errs);
            Some(Profile::RandomModes {
                max_mode: max_mode? as usize,
                decay: decay?,
                amplitude: amplitude?,
            })
        }
        other => {
            errs.push(format!(
                "{path}.kind: unknown profile '{other}' (expected zero, gaussian_momentum, peakon, odd_bump, fourier_modes, random_modes)"
            ));
            None
        }
    }
}

pub(crate) fn parse_initial(obj: &Obj, errs: &mut Errors) -> Option<InitialData> {
    let d = obj.child("initial_data", errs)?;
    let space = match d.text("space", errs)? {
        "velocity" => Space::Velocity,
        "momentum" => Space::Momentum,
        other => {
            errs.push(format!(
                "initial_data.space: expected \"velocity\" or \"momentum\", got \"{other}\""
            ));
            return None;
        }
    };
    let (a, b) = match space {
        Space::Velocity => ("u", "v"),
        Space::Momentum => ("m", "n"),
    };
    d.only(&["space", a, b], errs);
    let first = d
        .required(a, errs)
        .and_then(|v| parse_profile(v, &format!("initial_data.{a}"), space, errs));
    let second = d
        .required(b, errs)
        .and_then(|v| parse_profile(v, &format!("initial_data.{b}"), space, errs));
    Some(InitialData {
        space,
        first: first?,
        second: second?,
    })
}

pub(crate) fn check_profile_against_grid(p: &Profile, grid: &GridSpec, path: &str, errs: &mut Errors) {
    let limit = grid.n_points / 3;
    match p {
        Profile::FourierModes { modes } => {
            for m in modes {
                if m.k.unsigned_abs() as usize > limit {
                    errs.push(format!(
                        "{path}: mode {} is above the dealiased band (|k| <= {limit})",
                        m.k
                    ));
                }
            }
        }
        Profile::RandomModes { max_mode, .. } if *max_mode > limit => {
            errs.push(format!(
                "{path}.max_mode = {max_mode} is above the dealiased band (<= {limit})"
            ));
        }
        _ => {}
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> CliResult<ScenarioConfig> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(vec![format!("not valid JSON: {e}")]))?;
        Self::from_value(&value)
    }

    pub fn from_path(path: &Path) -> CliResult<ScenarioConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn from_value(value: &Value) -> CliResult<ScenarioConfig> {
        let mut errs = Vec::new();
        let cfg = Self::collect(value, &mut errs);
        match cfg {
            Some(cfg) if errs.is_empty() => Ok(cfg),
            _ => Err(CliError::Config(errs)),
        }
    }

    fn collect(value: &Value, errs: &mut Errors) -> Option<ScenarioConfig> {
        let top = Obj::new(value, "", errs)?;
        top.only(
            &[
                "name",
                "grid",
                "solver",
                "initial_data",
                "diagnostics",
                "besov",
                "seed",
                "growth_constant",
                "label_stride",
                "characteristics_dt",
            ],
            errs,
        );
        let name = top.text("name", errs).map(str::to_string);
        let grid = parse_grid(&top, errs);
        let solver = parse_solver(&top, errs);
        let initial = parse_initial(&top, errs);
        let diagnostics = match top.get("diagnostics") {
            None => Some(Vec::new()),
            Some(Value::Array(items)) => {
                let mut out = Vec::new();
                for (i, item) in items.iter().enumerate() {
                    match item.as_str().and_then(Check::from_name) {
                        Some(c) if !out.contains(&c) => out.push(c),
                        Some(_) => {}
                        None => errs.push(format!(
                            "diagnostics[{i}]: unknown check {item} (expected one of: {})",
                            Check::ALL.map(Check::name).join(", ")
                        )),
                    }
                }
                out.sort();
                Some(out)
            }
            Some(_) => {
                errs.push("diagnostics: expected a list of check names".into());
                None
            }
        };
        let besov = top.besov("besov", errs);
        let seed = top.count_or("seed", 0, errs);
        let growth_constant = match top.get("growth_constant") {
            None => Some(None),
            Some(v) => as_real(v, "growth_constant", errs).map(Some),
        };
        let label_stride = top.count_or("label_stride", DEFAULT_LABEL_STRIDE as u64, errs);
        if label_stride == Some(0) {
            errs.push("label_stride must be at least 1".into());
        }
        let characteristics_dt = match top.get("characteristics_dt") {
            None => Some(None),
            Some(v) => match as_real(v, "characteristics_dt", errs) {
                Some(dt) if dt > 0.0 => Some(Some(dt)),
                Some(dt) => {
                    errs.push(format!("characteristics_dt must be positive, got {dt}"));
                    None
                }
                None => None,
            },
        };

        if let (Some(g), Some(d)) = (&grid, &initial) {
            let (a, b) = match d.space {
                Space::Velocity => ("u", "v"),
                Space::Momentum => ("m", "n"),
            };
            check_profile_against_grid(&d.first, g, &format!("initial_data.{a}"), errs);
            check_profile_against_grid(&d.second, g, &format!("initial_data.{b}"), errs);
        }
        if let (Some(checks), Some(d)) = (&diagnostics, &initial) {
            let wants_crest = checks.contains(&Check::CrestSpeed) || checks.contains(&Check::PeakonShape);
            if wants_crest && d.peakon_speed().is_none() {
                errs.push(
                    "crest_speed and peakon_shape need a velocity-space peakon in exactly one channel and zero in the other".into(),
                );
            }
            if checks.contains(&Check::OddSymmetry) {
                let odd = |p: &Profile| matches!(p, Profile::OddBump { .. } | Profile::Zero);
                if !(odd(&d.first) && odd(&d.second)) {
                    errs.push("odd_symmetry needs odd_bump or zero profiles in both channels".into());
                }
            }
        }
        if let (Some(checks), Some(gc)) = (&diagnostics, &growth_constant) {
            if checks.contains(&Check::GrowthBound) && gc.is_none() {
                errs.push("growth_bound needs a frozen growth_constant".into());
            }
        }

        Some(ScenarioConfig {
            name: name?,
            grid: grid?,
            solver: solver?,
            initial_data: initial?,
            diagnostics: diagnostics?,
            besov: besov?,
            seed: seed?,
            growth_constant: growth_constant?,
            label_stride: label_stride? as usize,
            characteristics_dt: characteristics_dt?,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut top = json!({
            "name": self.name,
            "grid": grid_json(&self.grid),
            "solver": {
                "dt": self.solver.dt,
                "t_end": self.solver.t_end,
                "dealias_fraction": self.solver.dealias_fraction,
                "snapshot_stride": self.solver.snapshot_stride,
                "safety_checks": self.solver.safety_checks,
            },
            "initial_data": self.initial_data.to_json(),
            "diagnostics": self.diagnostics.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "besov": besov_json(&self.besov),
            "seed": self.seed,
            "label_stride": self.label_stride,
        });
        if let Some(c) = self.growth_constant {
            top["growth_constant"] = json!(c);
        }
        if let Some(dt) = self.characteristics_dt {
            top["characteristics_dt"] = json!(dt);
        }
        top
    }

    /// Solver settings for the characteristic pass: the finer step, with the
    /// snapshot stride scaled so snapshots land at the same times.
    pub fn characteristics_solver(&self) -> SolverConfig {
        let mut cfg = self.solver.clone();
        if let Some(dt) = self.characteristics_dt {
            let every = self.solver.dt * self.solver.snapshot_stride as f64;
            cfg.snapshot_stride = ((every / dt).round() as usize).max(1);
            cfg.dt = dt;
        }
        cfg
    }

    pub fn wants(&self, check: Check) -> bool {
        self.diagnostics.contains(&check)
    }

    pub fn initial_state(&self) -> CliResult<State> {
        let grid = self.grid.build()?;
        Ok(self.initial_data.build(&grid, self.seed)?)
    }
}

pub(crate) fn grid_json(g: &GridSpec) -> Value {
    json!({"n_points": g.n_points, "period": g.period})
}

pub(crate) fn besov_json(b: &BesovParams) -> Value {
    let e = |x: f64| if x.is_infinite() { json!("inf") } else { json!(x) };
    json!({"s": b.s, "p": e(b.p), "r": e(b.r)})
}

impl InitialData {
    pub fn to_json(&self) -> Value {
        let (space, a, b) = match self.space {
            Space::Velocity => ("velocity", "u", "v"),
            Space::Momentum => ("momentum", "m", "n"),
        };
        let mut obj = Map::new();
        obj.insert("space".into(), json!(space));
        obj.insert(a.into(), self.first.to_json());
        obj.insert(b.into(), self.second.to_json());
        Value::Object(obj)
    }

    /// Samples both channels; momentum data are converted to velocities.
    pub fn build(&self, grid: &Arc<Grid>, seed: u64) -> popowicz::Result<State> {
        // one stream for both channels, so a seed names the same pair as
        // `ensemble::pairs` with that seed
        let mut stream = rng(seed);
        let first = self.first.sample(grid, &mut stream);
        let second = self.second.sample(grid, &mut stream);
        match self.space {
            Space::Velocity => State::new(first, second, 0.0),
            Space::Momentum => velocity(&MomentumState {
                m: first,
                n: second,
                time: 0.0,
            }),
        }
    }

    /// Crest speed of a lone velocity peakon: `2c` in the `u` channel, `c` in `v`.
    pub fn peakon_speed(&self) -> Option<f64> {
        if self.space != Space::Velocity {
            return None;
        }
        match (&self.first, &self.second) {
            (Profile::Peakon { c, .. }, Profile::Zero) => Some(2.0 * c),
            (Profile::Zero, Profile::Peakon { c, .. }) => Some(*c),
            _ => None,
        }
    }
}

impl Profile {
    pub fn to_json(&self) -> Value {
        match self {
            Profile::Zero => json!({"kind": "zero"}),
            Profile::GaussianMomentum {
                amplitude,
                width,
                center,
                sign,
            } => json!({
                "kind": "gaussian_momentum",
                "amplitude": amplitude,
                "width": width,
                "center": center,
                "sign": match sign { Sign::Positive => "positive", Sign::Negative => "negative" },
            }),
            Profile::Peakon {
                c,
                mollify_passes,
                center,
            } => {
                let mut v = json!({"kind": "peakon", "c": c, "mollify_passes": mollify_passes});
                if let Some(x) = center {
                    v["center"] = json!(x);
                }
                v
            }
            Profile::OddBump { amplitude, width } => {
                json!({"kind": "odd_bump", "amplitude": amplitude, "width": width})
            }
            Profile::FourierModes { modes } => json!({
                "kind": "fourier_modes",
                "modes": modes
                    .iter()
                    .map(|m| json!({"k": m.k, "amp": m.amp, "phase": m.phase}))
                    .collect::<Vec<_>>(),
            }),
            Profile::RandomModes {
                max_mode,
                decay,
                amplitude,
            } => json!({
                "kind": "random_modes",
                "max_mode": max_mode,
                "decay": decay,
                "amplitude": amplitude,
            }),
        }
    }

    pub fn sample(&self, grid: &Arc<Grid>, stream: &mut impl Rng) -> Field {
        let n = grid.n_points();
        let l = grid.period();
        let dx = grid.dx();
        // signed distance to `center` on the periodic box, in [-L/2, L/2)
        let wrap = move |i: usize, center: f64| {
            let d = (i as f64 * dx - center).rem_euclid(l);
            if d >= 0.5 * l {
                d - l
            } else {
                d
            }
        };
        let values: Vec<f64> = match self {
            Profile::Zero => vec![0.0; n],
            Profile::GaussianMomentum {
                amplitude,
                width,
                center,
                sign,
            } => {
                let s = if *sign == Sign::Positive { 1.0 } else { -1.0 };
                (0..n)
                    .map(|i| s * amplitude * (-(wrap(i, *center) / width).powi(2)).exp())
                    .collect()
            }
            Profile::Peakon {
                c,
                mollify_passes,
                center,
            } => {
                let x0 = center.unwrap_or(0.25 * l);
                let mut v: Vec<f64> = (0..n).map(|i| c * (-wrap(i, x0).abs()).exp()).collect();
                binomial_smooth(&mut v, *mollify_passes);
                v
            }
            Profile::OddBump { amplitude, width } => (0..n)
                .map(|i| {
                    // exact antisymmetry between nodes i and N - i
                    let y = (i as f64 - (n / 2) as f64) * dx / width;
                    amplitude * y * (-y * y).exp()
                })
                .collect(),
            Profile::FourierModes { modes } => (0..n)
                .map(|i| {
                    let x = i as f64 * dx;
                    modes
                        .iter()
                        .map(|m| {
                            m.amp * (2.0 * std::f64::consts::PI * m.k as f64 * x / l + m.phase).cos()
                        })
                        .sum()
                })
                .collect(),
            Profile::RandomModes {
                max_mode,
                decay,
                amplitude,
            } => {
                return BandLimited::new(*max_mode, *decay, *amplitude).sample(grid, stream);
            }
        };
        Field::new(Arc::clone(grid), values).expect("one sample per node")
    }
}

/// Periodic (1/4, 1/2, 1/4) smoothing, applied `passes` times.
pub fn binomial_smooth(values: &mut [f64], passes: usize) {
    let n = values.len();
    let mut old = values.to_vec();
    for _ in 0..passes {
        old.copy_from_slice(values);
        for i in 0..n {
            values[i] = 0.25 * old[(i + n - 1) % n] + 0.5 * old[i] + 0.25 * old[(i + 1) % n];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "grid": {"n_points": 64, "period": 6.283185307179586},
        "solver": {"dt": 0.01, "t_end": 0.1},
        "initial_data": {"space": "velocity", "u": {"kind": "zero"}, "v": {"kind": "zero"}}
    }"#;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = ScenarioConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.solver.dealias_fraction, TWO_THIRDS);
        assert_eq!(cfg.solver.snapshot_stride, 10);
        assert_eq!(cfg.besov, default_besov());
        assert!(cfg.diagnostics.is_empty());
        let again = ScenarioConfig::from_value(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn finer_characteristic_step_keeps_snapshot_times() {
        let cfg = ScenarioConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.characteristics_solver(), cfg.solver);
        let text = MINIMAL.replace("\"t_end\": 0.1}", "\"t_end\": 0.1}, \"characteristics_dt\": 0.001");
        let cfg = ScenarioConfig::from_json_str(&text).unwrap();
        let fine = cfg.characteristics_solver();
        assert_eq!(fine.dt, 0.001);
        assert_eq!(fine.snapshot_stride, 100);
        let again = ScenarioConfig::from_value(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
        let bad = MINIMAL.replace("\"t_end\": 0.1}", "\"t_end\": 0.1}, \"characteristics_dt\": 0");
        assert!(ScenarioConfig::from_json_str(&bad).is_err());
    }

    #[test]
    fn dt_not_below_t_end_names_both_fields() {
        let text = MINIMAL.replace("\"t_end\": 0.1", "\"t_end\": 0.005");
        let err = ScenarioConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("solver.dt") && err.contains("solver.t_end"), "{err}");
    }

    #[test]
    fn unknown_key_is_echoed_and_all_errors_reported() {
        let text = MINIMAL
            .replace("\"dt\": 0.01", "\"dt\": 0.01, \"visocity\": 1")
            .replace("\"n_points\": 64", "\"n_points\": 63");
        let CliError::Config(errs) = ScenarioConfig::from_json_str(&text).unwrap_err() else {
            panic!("expected a config error");
        };
        assert!(errs.iter().any(|e| e.contains("'visocity'")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("n_points")), "{errs:?}");
    }

    #[test]
    fn physics_fields_have_no_defaults() {
        let text = r#"{"name": "x", "initial_data": {"space": "velocity", "u": {"kind": "zero"}, "v": {"kind": "zero"}}}"#;
        let CliError::Config(errs) = ScenarioConfig::from_json_str(text).unwrap_err() else {
            panic!();
        };
        assert!(errs.iter().any(|e| e.contains("'grid'")));
        assert!(errs.iter().any(|e| e.contains("'solver'")));
    }

    #[test]
    fn momentum_space_peakon_is_rejected() {
        let text = MINIMAL
            .replace("\"space\": \"velocity\", \"u\"", "\"space\": \"momentum\", \"m\"")
            .replace("\"v\": {\"kind\": \"zero\"}", "\"n\": {\"kind\": \"peakon\", \"c\": 1, \"mollify_passes\": 1}");
        let err = ScenarioConfig::from_json_str(&text).unwrap_err().to_string();
        assert!(err.contains("velocity profile"), "{err}");
    }

    #[test]
    fn odd_bump_is_exactly_odd() {
        let grid = Grid::new(128, 20.0).unwrap();
        let f = Profile::OddBump {
            amplitude: 1.0,
            width: 1.5,
        }
        .sample(&grid, &mut rng(0));
        let v = f.values();
        for i in 1..128 {
            assert_eq!(v[i], -v[128 - i]);
        }
    }

    #[test]
    fn smoothing_preserves_mass() {
        let mut v = vec![0.0; 16];
        v[3] = 1.0;
        binomial_smooth(&mut v, 5);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

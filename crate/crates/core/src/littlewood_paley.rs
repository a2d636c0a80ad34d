//! Discrete Littlewood-Paley decomposition, Besov norms and Bony's
//! paraproduct splitting on the periodic grid.
//!
//! The cutoffs are built from one smooth radial step `theta`, equal to 1 on
//! `|xi| <= 3/4` and 0 on `|xi| >= 4/3`, glued with `exp(-1/t)`:
//!
//! ```text
//! chi(xi) = theta(xi),    phi(xi) = theta(xi / 2) - theta(xi)
//! ```
//!
//! so `chi` lives in the ball `|xi| <= 4/3`, `phi` in the annulus
//! `3/4 <= |xi| <= 8/3`, and `chi + sum_{j<=J} phi(2^-j .)` telescopes to
//! `theta(2^-(J+1) .)`. Frequencies are angular wavenumbers `k`.

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid, Spectrum, TWO_THIRDS};

const BALL_INNER: f64 = 0.75;
const BALL_OUTER: f64 = 4.0 / 3.0;

fn glue(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth radial step: 1 on `|xi| <= 3/4`, 0 on `|xi| >= 4/3`.
fn theta(xi: f64) -> f64 {
    let r = xi.abs();
    if r <= BALL_INNER {
        1.0
    } else if r >= BALL_OUTER {
        0.0
    } else {
        let t = (r - BALL_INNER) / (BALL_OUTER - BALL_INNER);
        let a = glue(1.0 - t);
        a / (a + glue(t))
    }
}

/// Low-frequency profile, supported in `|xi| <= 4/3`.
pub fn chi(xi: f64) -> f64 {
    theta(xi)
}

/// Annulus profile, supported in `3/4 <= |xi| <= 8/3`.
pub fn phi(xi: f64) -> f64 {
    theta(xi / 2.0) - theta(xi)
}

/// The pair `(chi, phi)` tabulated per spectral mode of a grid.
#[derive(Clone, Debug)]
pub struct DyadicCutoffs {
    grid: Arc<Grid>,
    j_max: i32,
    /// `windows[0]` is `chi`, `windows[j + 1]` is `phi(2^-j .)`.
    windows: Vec<Vec<f64>>,
}

/// Builds the cutoff tables with `j_max = floor(log2(3 k_max / 8))`, so the top
/// annulus fits below Nyquist.
pub fn build_cutoffs(grid: &Arc<Grid>) -> Result<DyadicCutoffs> {
    let j_max = (grid.k_max() * 3.0 / 8.0).log2().floor();
    if !(j_max >= 1.0) {
        return Err(Error::InvalidGrid(format!(
            "grid too coarse for a dyadic decomposition (k_max = {})",
            grid.k_max()
        )));
    }
    let j_max = j_max as i32;
    let ks = grid.wavenumbers();
    let mut windows = Vec::with_capacity(j_max as usize + 2);
    windows.push(ks.iter().map(|&k| chi(k)).collect());
    for j in 0..=j_max {
        let scale = 2f64.powi(-j);
        windows.push(ks.iter().map(|&k| phi(scale * k)).collect());
    }
    Ok(DyadicCutoffs {
        grid: Arc::clone(grid),
        j_max,
        windows,
    })
}

impl DyadicCutoffs {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    /// Block indices `-1..=j_max`.
    pub fn indices(&self) -> impl Iterator<Item = i32> {
        -1..=self.j_max
    }

    /// Window of block `j` per FFT slot; `j = -1` is `chi`.
    pub fn window(&self, j: i32) -> Option<&[f64]> {
        if j < -1 || j > self.j_max {
            None
        } else {
            Some(&self.windows[(j + 1) as usize])
        }
    }

    /// Symbol of `S_j = sum_{j' <= j-1} Delta_j'`.
    pub fn low_pass_symbol(&self, j: i32) -> Vec<f64> {
        let n = self.grid.n_points();
        let mut sym = vec![0.0; n];
        for jj in -1..j.min(self.j_max + 1) {
            for (s, w) in sym.iter_mut().zip(self.window(jj).unwrap()) {
                *s += w;
            }
        }
        sym
    }

    /// Largest `|xi|` on which the tabulated windows still sum to one.
    pub fn resolved_band(&self) -> f64 {
        BALL_INNER * 2f64.powi(self.j_max + 1)
    }
}

fn apply_window(spec: &Spectrum, window: &[f64]) -> Result<Field> {
    let coeffs = spec
        .coeffs()
        .iter()
        .zip(window)
        .map(|(c, w)| c * *w)
        .collect();
    Spectrum::from_coeffs(spec.grid(), coeffs)?.into_field()
}

/// The blocks `Delta_j f` for `j = -1..=j_max`.
#[derive(Clone, Debug)]
pub struct LPDecomposition {
    grid: Arc<Grid>,
    blocks: Vec<Field>,
    /// Max-norm of `f - sum_j Delta_j f`; nonzero only when `f` carries energy
    /// above the resolved band.
    pub truncation_residual: f64,
}

impl LPDecomposition {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn j_max(&self) -> i32 {
        self.blocks.len() as i32 - 2
    }

    pub fn block(&self, j: i32) -> Option<&Field> {
        if j < -1 {
            None
        } else {
            self.blocks.get((j + 1) as usize)
        }
    }

    /// `(j, Delta_j f)` pairs in increasing `j`.
    pub fn iter(&self) -> impl Iterator<Item = (i32, &Field)> {
        self.blocks.iter().enumerate().map(|(i, b)| (i as i32 - 1, b))
    }

    pub fn reconstruct(&self) -> Field {
        let n = self.grid.n_points();
        let mut acc = vec![0.0; n];
        for b in &self.blocks {
            for (a, v) in acc.iter_mut().zip(b.values()) {
                *a += v;
            }
        }
        Field::new(Arc::clone(&self.grid), acc).expect("length matches")
    }

    /// `L^p` norm of each block.
    pub fn block_norms(&self, p: f64) -> Vec<f64> {
        self.blocks.iter().map(|b| b.lp_norm(p)).collect()
    }

    pub fn besov_norm(&self, params: &BesovParams) -> f64 {
        let weighted: Vec<f64> = self
            .iter()
            .map(|(j, b)| 2f64.powf(j as f64 * params.s) * b.lp_norm(params.p))
            .collect();
        lr_norm(&weighted, params.r)
    }
}

fn lr_norm(seq: &[f64], r: f64) -> f64 {
    if r.is_infinite() {
        seq.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else if r == 1.0 {
        seq.iter().map(|v| v.abs()).sum()
    } else if r == 2.0 {
        seq.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        seq.iter().map(|v| v.abs().powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

pub fn decompose(f: &Field, cutoffs: &DyadicCutoffs) -> Result<LPDecomposition> {
    f.grid().ensure_same(cutoffs.grid())?;
    let spec = f.spectrum()?;
    let blocks = cutoffs
        .indices()
        .map(|j| apply_window(&spec, cutoffs.window(j).unwrap()))
        .collect::<Result<Vec<_>>>()?;
    let mut decomposition = LPDecomposition {
        grid: Arc::clone(f.grid()),
        blocks,
        truncation_residual: 0.0,
    };
    decomposition.truncation_residual = decomposition.reconstruct().max_diff(f)?;
    Ok(decomposition)
}

/// `S_j f = sum_{j' <= j-1} Delta_j' f`, for `j >= 0`.
pub fn low_freq_truncate(f: &Field, j: i32, cutoffs: &DyadicCutoffs) -> Result<Field> {
    if j < 0 {
        return Err(Error::InvalidArgument(format!(
            "low-frequency cut-off index must be >= 0, got {j}"
        )));
    }
    f.grid().ensure_same(cutoffs.grid())?;
    apply_window(&f.spectrum()?, &cutoffs.low_pass_symbol(j))
}

/// Regularity and integrability indices `(s, p, r)` of a Besov norm;
/// `f64::INFINITY` encodes an infinite exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovParams {
    pub s: f64,
    #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
    pub p: f64,
    #[serde(serialize_with = "ser_exponent", deserialize_with = "de_exponent")]
    pub r: f64,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, r: f64) -> Result<BesovParams> {
        let params = BesovParams { s, p, r };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.s.is_finite() {
            return Err(Error::InvalidArgument(format!("s must be finite, got {}", self.s)));
        }
        for (name, e) in [("p", self.p), ("r", self.r)] {
            if !(e >= 1.0) || e.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [1, inf], got {e}"
                )));
            }
        }
        Ok(())
    }

    /// Same `(p, r)` at regularity `s + ds`.
    pub fn shifted(&self, ds: f64) -> BesovParams {
        BesovParams {
            s: self.s + ds,
            ..*self
        }
    }

    /// `s > max(2, 1/p + 3/2)` or `(s = 2, 2 <= p <= inf, 1 <= r <= 2)`.
    pub fn in_wellposed_range(&self) -> bool {
        let inv_p = if self.p.is_infinite() { 0.0 } else { 1.0 / self.p };
        self.s > 2f64.max(inv_p + 1.5) || (self.s == 2.0 && self.p >= 2.0 && self.r <= 2.0)
    }
}

/// Parses an exponent given as a number or `inf`.
pub fn parse_exponent(text: &str) -> Result<f64> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid exponent '{text}'")))
}

fn ser_exponent<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_exponent<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(x),
        Raw::Text(t) => parse_exponent(&t).map_err(serde::de::Error::custom),
    }
}

pub fn besov_norm(f: &Field, params: &BesovParams, cutoffs: &DyadicCutoffs) -> Result<f64> {
    params.validate()?;
    Ok(decompose(f, cutoffs)?.besov_norm(params))
}

fn dealiased(values: Vec<f64>, grid: &Arc<Grid>) -> Result<Field> {
    let mut spec = Spectrum::from_coeffs(grid, grid.forward(&values))?;
    spec.truncate_in_place(TWO_THIRDS);
    spec.into_field()
}

/// Pointwise product truncated to the two-thirds band.
pub fn dealiased_product(u: &Field, v: &Field) -> Result<Field> {
    dealiased(u.mul(v)?.into_values(), u.grid())
}

/// `T_u v`, `T_v u` and `R(u, v)` from one pair of decompositions.
#[derive(Clone, Debug)]
pub struct BonyTerms {
    pub t_uv: Field,
    pub t_vu: Field,
    pub remainder: Field,
}

fn paraproduct_of(du: &LPDecomposition, dv: &LPDecomposition) -> Vec<f64> {
    // sum_j S_{j-1}u * Delta_j v; S_{j-1}u is empty for j <= 0.
    let n = du.grid.n_points();
    let mut low = vec![0.0; n];
    let mut acc = vec![0.0; n];
    for j in 1..=dv.j_max() {
        for (l, b) in low.iter_mut().zip(du.block(j - 2).unwrap().values()) {
            *l += b;
        }
        let dj = dv.block(j).unwrap().values();
        for i in 0..n {
            acc[i] += low[i] * dj[i];
        }
    }
    acc
}

fn remainder_of(du: &LPDecomposition, dv: &LPDecomposition) -> Vec<f64> {
    let n = du.grid.n_points();
    let mut acc = vec![0.0; n];
    let jm = du.j_max();
    for j in -1..=jm {
        let vj = dv.block(j).unwrap().values();
        for jp in (j - 1).max(-1)..=(j + 1).min(jm) {
            let uj = du.block(jp).unwrap().values();
            for i in 0..n {
                acc[i] += uj[i] * vj[i];
            }
        }
    }
    acc
}

pub fn bony_decomposition(u: &Field, v: &Field, cutoffs: &DyadicCutoffs) -> Result<BonyTerms> {
    u.grid().ensure_same(v.grid())?;
    let du = decompose(u, cutoffs)?;
    let dv = decompose(v, cutoffs)?;
    Ok(BonyTerms {
        t_uv: dealiased(paraproduct_of(&du, &dv), u.grid())?,
        t_vu: dealiased(paraproduct_of(&dv, &du), u.grid())?,
        remainder: dealiased(remainder_of(&du, &dv), u.grid())?,
    })
}

/// Paraproduct `T_u v = sum_j S_{j-1} u Delta_j v`.
pub fn paraproduct(u: &Field, v: &Field, cutoffs: &DyadicCutoffs) -> Result<Field> {
    u.grid().ensure_same(v.grid())?;
    let du = decompose(u, cutoffs)?;
    let dv = decompose(v, cutoffs)?;
    dealiased(paraproduct_of(&du, &dv), u.grid())
}

/// Remainder `R(u, v) = sum_{|j'-j| <= 1} Delta_j' u Delta_j v`.
pub fn remainder(u: &Field, v: &Field, cutoffs: &DyadicCutoffs) -> Result<Field> {
    u.grid().ensure_same(v.grid())?;
    let du = decompose(u, cutoffs)?;
    let dv = decompose(v, cutoffs)?;
    dealiased(remainder_of(&du, &dv), u.grid())
}

/// `|uv|_{B^{s-3}} / (|u|_{B^{s-2}} |v|_{B^{s-2}})`, the quantity bounded by the
/// product estimate used for the Picard differences.
pub fn product_estimate_ratio(
    u: &Field,
    v: &Field,
    params: &BesovParams,
    cutoffs: &DyadicCutoffs,
) -> Result<f64> {
    params.validate()?;
    if !params.in_wellposed_range() {
        return Err(Error::InvalidArgument(format!(
            "(s, p, r) = ({}, {}, {}) outside the admissible range",
            params.s, params.p, params.r
        )));
    }
    let low = params.shifted(-2.0);
    let denom = besov_norm(u, &low, cutoffs)? * besov_norm(v, &low, cutoffs)?;
    if denom == 0.0 {
        return Err(Error::Undefined("zero denominator in product ratio".into()));
    }
    let uv = dealiased_product(u, v)?;
    Ok(besov_norm(&uv, &params.shifted(-3.0), cutoffs)? / denom)
}

/// `R_j = velocity * d_x(Delta_j f) - Delta_j(velocity * d_x f)`.
///
/// Products are plain pointwise products so that constant velocities commute
/// exactly with the block multiplier.
pub fn commutator(velocity: &Field, f: &Field, j: i32, cutoffs: &DyadicCutoffs) -> Result<Field> {
    velocity.grid().ensure_same(f.grid())?;
    f.grid().ensure_same(cutoffs.grid())?;
    let window = cutoffs
        .window(j)
        .ok_or_else(|| Error::InvalidArgument(format!("block index {j} out of range")))?;
    let spec = f.spectrum()?;
    let dj_fx = apply_window(&spec.derivative(), window)?;
    let fx = spec.derivative().into_field()?;
    let prod = velocity.mul(&fx)?;
    let dj_prod = apply_window(&prod.spectrum()?, window)?;
    velocity.mul(&dj_fx)?.sub(&dj_prod)
}

/// Per-block ratios `2^{js} |R_j|_{L^p}` over the commutator bound
/// `|d_x velocity|_inf |f|_{B^s_{p,r}} + |d_x velocity|_{B^{s-1}_{inf,r}} |d_x f|_{L^p}`.
pub fn commutator_bound_ratios(
    velocity: &Field,
    f: &Field,
    params: &BesovParams,
    cutoffs: &DyadicCutoffs,
) -> Result<Vec<(i32, f64)>> {
    params.validate()?;
    let vx = crate::spectral::derivative(velocity)?;
    let fx = crate::spectral::derivative(f)?;
    let inf_params = BesovParams {
        s: params.s - 1.0,
        p: f64::INFINITY,
        r: params.r,
    };
    let bound = vx.max_abs() * besov_norm(f, params, cutoffs)?
        + besov_norm(&vx, &inf_params, cutoffs)? * fx.lp_norm(params.p);
    if bound == 0.0 {
        return Err(Error::Undefined("commutator bound vanishes".into()));
    }
    cutoffs
        .indices()
        .map(|j| {
            let rj = commutator(velocity, f, j, cutoffs)?;
            Ok((j, 2f64.powf(j as f64 * params.s) * rj.lp_norm(params.p) / bound))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn setup(n: usize) -> (Arc<Grid>, DyadicCutoffs) {
        let g = Grid::new(n, 2.0 * PI).unwrap();
        let c = build_cutoffs(&g).unwrap();
        (g, c)
    }

    #[test]
    fn profile_values() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(phi(0.5), 0.0);
        assert_eq!(chi(1.5), 0.0);
        assert_eq!(phi(3.0), 0.0);
        for i in 0..=400 {
            let xi = i as f64 * 0.01;
            assert!((0.0..=1.0).contains(&chi(xi)));
            assert!((0.0..=1.0).contains(&phi(xi)));
        }
    }

    #[test]
    fn j_max_and_coarse_grid() {
        let (_, c) = setup(512);
        // k_max = 256, 3/8 * 256 = 96
        assert_eq!(c.j_max(), 6);
        let tiny = Grid::new(8, 2.0 * PI).unwrap();
        assert!(build_cutoffs(&tiny).is_err());
    }

    #[test]
    fn constant_lives_in_lowest_block() {
        let (g, c) = setup(64);
        let d = decompose(&Field::constant(&g, 2.0), &c).unwrap();
        assert!(d.block(-1).unwrap().max_diff(&Field::constant(&g, 2.0)).unwrap() < 1e-14);
        for j in 0..=d.j_max() {
            assert!(d.block(j).unwrap().max_abs() < 1e-14);
        }
        let z = decompose(&Field::zeros(&g), &c).unwrap();
        assert!(z.iter().all(|(_, b)| b.max_abs() == 0.0));
    }

    #[test]
    fn cos4x_occupies_blocks_one_and_two() {
        let (g, c) = setup(64);
        let f = Field::from_fn(&g, |x| (4.0 * x).cos());
        let d = decompose(&f, &c).unwrap();
        for (j, b) in d.iter() {
            if j == 1 || j == 2 {
                assert!(b.max_abs() > 1e-3, "block {j} should be active");
            } else {
                assert!(b.max_abs() < 1e-14, "block {j} should vanish");
            }
        }
        let sum = d.block(1).unwrap().add(d.block(2).unwrap()).unwrap();
        assert!(sum.max_diff(&f).unwrap() < 1e-14);
    }

    #[test]
    fn low_frequency_truncation() {
        let (g, c) = setup(64);
        let f = Field::from_fn(&g, |x| (4.0 * x).cos() + 0.3 * x.sin());
        assert!(low_freq_truncate(&f, -1, &c).is_err());
        let s0 = low_freq_truncate(&f, 0, &c).unwrap();
        let d = decompose(&f, &c).unwrap();
        assert!(s0.max_diff(d.block(-1).unwrap()).unwrap() < 1e-15);
        let s1 = low_freq_truncate(&f, 1, &c).unwrap();
        let s2 = low_freq_truncate(&f, 2, &c).unwrap();
        let delta1 = s2.sub(&s1).unwrap();
        assert!(delta1.max_diff(d.block(1).unwrap()).unwrap() < 1e-14);
        let s_all = low_freq_truncate(&f, 5, &c).unwrap();
        assert!(s_all.max_diff(&f).unwrap() < 1e-10);
    }

    #[test]
    fn besov_dyadic_scaling() {
        let (g, c) = setup(512);
        let params = BesovParams::new(1.3, 2.0, 2.0).unwrap();
        for k in [4.0, 8.0, 16.0] {
            let a = besov_norm(&Field::from_fn(&g, |x| (k * x).cos()), &params, &c).unwrap();
            let b = besov_norm(&Field::from_fn(&g, |x| (2.0 * k * x).cos()), &params, &c).unwrap();
            let ratio = b / a;
            let target = 2f64.powf(params.s);
            assert!((ratio / target - 1.0).abs() < 0.15, "k = {k}: {ratio} vs {target}");
        }
        assert_eq!(besov_norm(&Field::zeros(&g), &params, &c).unwrap(), 0.0);
    }

    #[test]
    fn exponents_parse() {
        assert_eq!(parse_exponent("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_exponent("2.5").unwrap(), 2.5);
        assert!(parse_exponent("abc").is_err());
        assert!(BesovParams::new(1.0, 0.5, 1.0).is_err());
        let p: BesovParams = serde_json::from_str(r#"{"s": 2.6, "p": "inf", "r": 2}"#).unwrap();
        assert!(p.p.is_infinite());
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"s":2.6,"p":"inf","r":2.0}"#);
    }

    #[test]
    fn remainder_vanishes_for_separated_bands() {
        let (g, c) = setup(512);
        // mode 1 sits in blocks -1/0 only; mode 48 in blocks 5/6 only
        let u = Field::from_fn(&g, |x| x.cos());
        let v = Field::from_fn(&g, |x| (48.0 * x).sin());
        let du = decompose(&u, &c).unwrap();
        assert!(du.block(1).unwrap().max_abs() < 1e-14);
        let r = remainder(&u, &v, &c).unwrap();
        assert!(r.max_abs() < 1e-13);
        assert!(paraproduct(&Field::zeros(&g), &v, &c).unwrap().max_abs() == 0.0);
        assert!(paraproduct(&u, &Field::zeros(&g), &c).unwrap().max_abs() == 0.0);
        assert!(remainder(&Field::zeros(&g), &v, &c).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn commutator_with_constant_velocity_vanishes() {
        let (g, c) = setup(128);
        let f = Field::from_fn(&g, |x| (3.0 * x).sin() + (x.cos()).exp());
        let vel = Field::constant(&g, 1.7);
        for j in c.indices() {
            assert!(commutator(&vel, &f, j, &c).unwrap().max_abs() < 1e-10);
            assert_eq!(commutator(&vel, &Field::zeros(&g), j, &c).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn product_ratio_undefined_for_zero() {
        let (g, c) = setup(128);
        let p = BesovParams::new(2.6, 2.0, 2.0).unwrap();
        let z = Field::zeros(&g);
        assert!(matches!(
            product_estimate_ratio(&z, &z, &p, &c),
            Err(Error::Undefined(_))
        ));
        let bad = BesovParams::new(1.0, 2.0, 2.0).unwrap();
        assert!(product_estimate_ratio(&z, &z, &bad, &c).is_err());
    }

    #[test]
    fn product_ratio_decays_for_single_modes() {
        let (g, c) = setup(1024);
        let p = BesovParams::new(2.6, 2.0, 2.0).unwrap();
        let ratios: Vec<f64> = [4.0, 16.0, 64.0]
            .iter()
            .map(|&k| {
                let f = Field::from_fn(&g, |x| (k * x).cos());
                product_estimate_ratio(&f, &f, &p, &c).unwrap()
            })
            .collect();
        assert!(ratios[0] > ratios[1] && ratios[1] > ratios[2], "{ratios:?}");
    }
}

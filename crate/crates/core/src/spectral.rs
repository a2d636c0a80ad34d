//! Periodic grid, sampled fields and their Fourier views.
//!
//! Every operator in the crate is a Fourier multiplier applied on a uniform
//! periodic grid. Coefficients are normalized so that `c[k]` is the Fourier
//! coefficient of mode `k`: `f(x_i) = sum_k c[k] exp(i k x_i)`.
//!
//! The Helmholtz kernel `p(x) = exp(-|x|)/2` is only ever used through its
//! symbol `1/(1+k^2)`; on the periodic box this is the exact convolution with
//! the periodized kernel.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Relative size of the imaginary residue tolerated after an inverse transform.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-10;

/// Default dealiasing fraction (the two-thirds rule).
pub const TWO_THIRDS: f64 = 2.0 / 3.0;

/// Uniform periodic 1-D grid with nodes `x_i = i * period / n_points`.
pub struct Grid {
    n: usize,
    period: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n)
            .field("period", &self.period)
            .finish()
    }
}

impl Grid {
    pub fn new(n_points: usize, period: f64) -> Result<Arc<Grid>> {
        if n_points < 8 || n_points % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_points must be even and >= 8, got {n_points}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n_points);
        let inverse = planner.plan_fft_inverse(n_points);
        let base = 2.0 * std::f64::consts::PI / period;
        let wavenumbers = (0..n_points)
            .map(|i| base * signed_mode(i, n_points) as f64)
            .collect();
        Ok(Arc::new(Grid {
            n: n_points,
            period,
            wavenumbers,
            forward,
            inverse,
        }))
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dx(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Nyquist wavenumber `pi * n / period`.
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.period
    }

    /// Angular wavenumber for each FFT slot; the Nyquist slot carries `+k_max`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Signed mode number of FFT slot `i`.
    pub fn mode_number(&self, i: usize) -> isize {
        signed_mode(i, self.n)
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.period == other.period
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left_n: self.n,
                left_period: self.period,
                right_n: other.n,
                right_period: other.period,
            })
        }
    }

    /// Normalized forward transform of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.n);
        let scale = 1.0 / self.n as f64;
        let mut buf: Vec<Complex64> = values
            .iter()
            .map(|&x| Complex64::new(x * scale, 0.0))
            .collect();
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// Inverse transform back to real samples. Fails if the result carries an
    /// imaginary part above [`IMAGINARY_RESIDUE_TOL`] relative to the coefficient mass (floored at one).
    pub fn inverse(&self, mut coeffs: Vec<Complex64>) -> Result<Vec<f64>> {
        debug_assert_eq!(coeffs.len(), self.n);
        // Bound on any output sample, floored at unit size: spectra that were
        // filtered down to roundoff carry roundoff-sized asymmetry.
        let scale = coeffs.iter().map(|c| c.l1_norm()).sum::<f64>().max(1.0);
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut coeffs, &mut scratch);
        let max_im = coeffs.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
        if max_im > IMAGINARY_RESIDUE_TOL * scale {
            return Err(Error::ImaginaryResidue {
                residue: max_im / scale,
            });
        }
        Ok(coeffs.into_iter().map(|c| c.re).collect())
    }

    /// Forward transforms of two real sequences from one complex FFT. An
    /// identically zero input maps to an exactly zero spectrum, so invariant
    /// single-component subspaces stay invariant to the last bit.
    pub(crate) fn forward_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = self.n;
        let zero = || vec![Complex64::new(0.0, 0.0); n];
        if is_zero(a) {
            return (zero(), self.forward(b));
        }
        if is_zero(b) {
            return (self.forward(a), zero());
        }
        let scale = 1.0 / n as f64;
        let mut z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x * scale, y * scale))
            .collect();
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut z, &mut scratch);
        let mut ca = Vec::with_capacity(n);
        let mut cb = Vec::with_capacity(n);
        for k in 0..n {
            let zk = z[k];
            let zm = z[(n - k) % n].conj();
            ca.push(0.5 * (zk + zm));
            cb.push(Complex64::new(0.0, -0.5) * (zk - zm));
        }
        (ca, cb)
    }

    /// Inverse transforms of two Hermitian spectra from one complex FFT. The
    /// imaginary residue is not checked; callers pass spectra built from real
    /// data by symmetric multipliers.
    pub(crate) fn inverse_pair(&self, ca: &[Complex64], cb: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let czero = |c: &[Complex64]| c.iter().all(|z| z.re == 0.0 && z.im == 0.0);
        if czero(ca) || czero(cb) {
            let real = |c: &[Complex64]| -> Vec<f64> {
                if czero(c) {
                    vec![0.0; self.n]
                } else {
                    let mut z = c.to_vec();
                    let mut scratch =
                        vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
                    self.inverse.process_with_scratch(&mut z, &mut scratch);
                    z.into_iter().map(|c| c.re).collect()
                }
            };
            return (real(ca), real(cb));
        }
        let i = Complex64::new(0.0, 1.0);
        let mut z: Vec<Complex64> = ca.iter().zip(cb).map(|(&a, &b)| a + i * b).collect();
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut z, &mut scratch);
        z.into_iter().map(|c| (c.re, c.im)).unzip()
    }
}

fn is_zero(values: &[f64]) -> bool {
    values.iter().all(|&x| x == 0.0)
}

fn signed_mode(i: usize, n: usize) -> isize {
    if i <= n / 2 {
        i as isize
    } else {
        i as isize - n as isize
    }
}

/// Real samples on a grid, one per node.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![c; grid.n_points()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        let values = (0..grid.n_points()).map(|i| f(grid.node(i))).collect();
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Rejects NaN and infinities.
    pub fn validate(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        self.validate()?;
        Ok(self.spectrum_unchecked())
    }

    pub(crate) fn spectrum_unchecked(&self) -> Spectrum {
        Spectrum {
            grid: Arc::clone(&self.grid),
            coeffs: self.grid.forward(&self.values),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rectangle-rule quadrature over one period (spectrally exact for
    /// band-limited integrands).
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    pub fn l1_norm(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Grid-quadrature L^p norm; `p = f64::INFINITY` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            self.max_abs()
        } else if p == 1.0 {
            self.l1_norm()
        } else if p == 2.0 {
            self.l2_norm()
        } else {
            let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
            (self.grid.dx() * s).powf(1.0 / p)
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product without any dealiasing.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Field) -> Result<Field> {
        self.zip_with(other, |x, y| x + a * y)
    }

    /// Largest pointwise difference.
    pub fn max_diff(&self, other: &Field) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Normalized Fourier coefficients of a field.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Spectrum> {
        if coeffs.len() != grid.n_points() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.n_points(),
                coeffs.len()
            )));
        }
        Ok(Spectrum {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Spectrum {
        Spectrum {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn to_field(&self) -> Result<Field> {
        let values = self.grid.inverse(self.coeffs.clone())?;
        Field::new(Arc::clone(&self.grid), values)
    }

    pub fn into_field(self) -> Result<Field> {
        let values = self.grid.inverse(self.coeffs)?;
        Field::new(self.grid, values)
    }

    /// Multiply by a real symbol even in `k`.
    pub fn apply_even(&self, symbol: impl Fn(f64) -> f64) -> Spectrum {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .map(|(&c, &k)| c * symbol(k))
            .collect();
        Spectrum {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// Multiply by `i * symbol(k)` with `symbol` odd in `k`. The Nyquist slot is
    /// zeroed because an odd symbol cannot be represented there for real data.
    pub fn apply_odd(&self, symbol: impl Fn(f64) -> f64) -> Spectrum {
        let nyq = self.grid.nyquist_index();
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.grid.wavenumbers())
            .enumerate()
            .map(|(i, (&c, &k))| {
                if i == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    c * Complex64::new(0.0, symbol(k))
                }
            })
            .collect();
        Spectrum {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    pub fn derivative(&self) -> Spectrum {
        self.apply_odd(|k| k)
    }

    pub fn second_derivative(&self) -> Spectrum {
        self.apply_even(|k| -k * k)
    }

    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Spectrum {
            grid: Arc::clone(&self.grid),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, a: f64) -> Spectrum {
        Spectrum {
            grid: Arc::clone(&self.grid),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// Zero every mode with `|k| > fraction * k_max`.
    pub fn truncate(&self, fraction: f64) -> Spectrum {
        let mut out = self.clone();
        out.truncate_in_place(fraction);
        out
    }

    pub fn truncate_in_place(&mut self, fraction: f64) {
        let limit = fraction * self.grid.nyquist_index() as f64 + 1e-9;
        let n = self.grid.n_points();
        for (i, c) in self.coeffs.iter_mut().enumerate() {
            if (signed_mode(i, n).unsigned_abs() as f64) > limit {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `sqrt(period * sum |c_k|^2)`, equal to the grid L^2 norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.period() * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    fn highest_active_mode(&self) -> usize {
        let n = self.grid.n_points();
        let nyq = n / 2;
        (1..=nyq)
            .rev()
            .find(|&m| self.coeffs[m].norm() != 0.0 || (m < nyq && self.coeffs[n - m].norm() != 0.0))
            .unwrap_or(0)
    }

    /// Trigonometric interpolant evaluated at arbitrary positions.
    pub fn evaluate_at(&self, xs: &[f64]) -> Vec<f64> {
        let n = self.grid.n_points();
        let nyq = n / 2;
        let top = self.highest_active_mode();
        let k1 = 2.0 * std::f64::consts::PI / self.grid.period();
        let c0 = self.coeffs[0].re;
        xs.iter()
            .map(|&x| {
                let base = Complex64::from_polar(1.0, k1 * x);
                let mut z = Complex64::new(1.0, 0.0);
                let mut acc = c0;
                for m in 1..=top {
                    z *= base;
                    if m == nyq {
                        acc += self.coeffs[m].re * z.re;
                    } else {
                        acc += 2.0 * (self.coeffs[m] * z).re;
                    }
                }
                acc
            })
            .collect()
    }

    /// Exact integral of the trigonometric interpolant over `[a, b]`.
    pub fn integrate_between(&self, a: f64, b: f64) -> f64 {
        let n = self.grid.n_points();
        let nyq = n / 2;
        let k1 = 2.0 * std::f64::consts::PI / self.grid.period();
        let mut acc = self.coeffs[0].re * (b - a);
        for m in 1..=nyq {
            let k = k1 * m as f64;
            if m == nyq {
                acc += self.coeffs[m].re * ((k * b).sin() - (k * a).sin()) / k;
            } else {
                // 2 Re[c (e^{ikb} - e^{ika}) / (ik)]
                let diff = Complex64::from_polar(1.0, k * b) - Complex64::from_polar(1.0, k * a);
                acc += 2.0 * (self.coeffs[m] * diff / Complex64::new(0.0, k)).re;
            }
        }
        acc
    }
}

/// Fourier symbol `1/(1+k^2)` of the Helmholtz inverse `(1 - d_xx)^{-1}`,
/// tabulated on a grid.
#[derive(Clone, Debug)]
pub struct HelmholtzKernel {
    grid: Arc<Grid>,
    symbol: Vec<f64>,
}

impl HelmholtzKernel {
    pub fn new(grid: &Arc<Grid>) -> HelmholtzKernel {
        let symbol = grid
            .wavenumbers()
            .iter()
            .map(|k| 1.0 / (1.0 + k * k))
            .collect();
        HelmholtzKernel {
            grid: Arc::clone(grid),
            symbol,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Multiply a spectrum by the kernel symbol in place.
    pub fn apply_in_place(&self, spec: &mut Spectrum) {
        for (c, s) in spec.coeffs.iter_mut().zip(&self.symbol) {
            *c *= *s;
        }
    }
}

/// Spectral derivative `d/dx f`.
pub fn derivative(f: &Field) -> Result<Field> {
    f.spectrum()?.derivative().into_field()
}

/// `p * f = (1 - d_xx)^{-1} f`.
pub fn helmholtz_inverse(f: &Field, kernel: &HelmholtzKernel) -> Result<Field> {
    f.grid().ensure_same(kernel.grid())?;
    let mut spec = f.spectrum()?;
    kernel.apply_in_place(&mut spec);
    spec.into_field()
}

/// `(1 - d_xx) f`.
pub fn helmholtz_forward(f: &Field) -> Result<Field> {
    f.spectrum()?.apply_even(|k| 1.0 + k * k).into_field()
}

/// `p_x * f`, symbol `i k / (1 + k^2)`.
pub fn kernel_derivative_convolve(f: &Field, kernel: &HelmholtzKernel) -> Result<Field> {
    f.grid().ensure_same(kernel.grid())?;
    f.spectrum()?
        .apply_odd(|k| k / (1.0 + k * k))
        .into_field()
}

/// Zero every mode with `|k| > fraction * k_max`.
pub fn dealias(f: &Field, fraction: f64) -> Result<Field> {
    check_fraction(fraction)?;
    let mut spec = f.spectrum()?;
    spec.truncate_in_place(fraction);
    spec.into_field()
}

pub(crate) fn check_fraction(fraction: f64) -> Result<()> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "dealias fraction must lie in (0, 1], got {fraction}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(6, 1.0).is_err());
        assert!(Grid::new(9, 1.0).is_err());
        assert!(Grid::new(16, 0.0).is_err());
        assert!(Grid::new(16, f64::NAN).is_err());
        let g = Grid::new(16, 2.0).unwrap();
        assert!(g.k_max().is_finite() && g.k_max() > 0.0);
    }

    #[test]
    fn derivative_of_sine() {
        let g = grid(64);
        let f = Field::from_fn(&g, f64::sin);
        let d = derivative(&f).unwrap();
        let exact = Field::from_fn(&g, f64::cos);
        assert!(d.max_diff(&exact).unwrap() <= 1e-12);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let g = grid(32);
        let d = derivative(&Field::constant(&g, 3.7)).unwrap();
        assert!(d.max_abs() <= 1e-14);
    }

    #[test]
    fn derivative_two_modes() {
        let g = grid(64);
        let f = Field::from_fn(&g, |x| (3.0 * x).sin() + 0.5 * (7.0 * x).cos());
        let exact = Field::from_fn(&g, |x| 3.0 * (3.0 * x).cos() - 3.5 * (7.0 * x).sin());
        assert!(derivative(&f).unwrap().max_diff(&exact).unwrap() <= 1e-11);
    }

    #[test]
    fn derivative_rejects_non_finite() {
        let g = grid(16);
        let mut f = Field::zeros(&g);
        f.values_mut()[3] = f64::NAN;
        assert!(matches!(derivative(&f), Err(Error::NonFinite { index: 3, .. })));
    }

    #[test]
    fn helmholtz_inverse_single_modes() {
        let g = grid(32);
        let k = HelmholtzKernel::new(&g);
        let s = helmholtz_inverse(&Field::from_fn(&g, f64::sin), &k).unwrap();
        assert!(s.max_diff(&Field::from_fn(&g, |x| x.sin() / 2.0)).unwrap() < 1e-14);
        let c = helmholtz_inverse(&Field::constant(&g, 2.5), &k).unwrap();
        assert!(c.max_diff(&Field::constant(&g, 2.5)).unwrap() < 1e-14);
        let c2 = helmholtz_inverse(&Field::from_fn(&g, |x| (2.0 * x).cos()), &k).unwrap();
        assert!(
            c2.max_diff(&Field::from_fn(&g, |x| (2.0 * x).cos() / 5.0))
                .unwrap()
                < 1e-14
        );
    }

    #[test]
    fn kernel_symbol_properties() {
        let g = Grid::new(64, 13.0).unwrap();
        let k = HelmholtzKernel::new(&g);
        assert_eq!(k.symbol()[0], 1.0);
        for i in 1..32 {
            assert_eq!(k.symbol()[i], k.symbol()[64 - i]);
            assert!(k.symbol()[i] > 0.0 && k.symbol()[i] <= 1.0);
        }
    }

    #[test]
    fn helmholtz_grid_mismatch() {
        let g1 = grid(32);
        let g2 = grid(64);
        let k = HelmholtzKernel::new(&g2);
        assert!(matches!(
            helmholtz_inverse(&Field::zeros(&g1), &k),
            Err(Error::GridMismatch { .. })
        ));
        assert!(kernel_derivative_convolve(&Field::zeros(&g1), &k).is_err());
    }

    #[test]
    fn helmholtz_forward_examples() {
        let g = grid(32);
        let f = helmholtz_forward(&Field::from_fn(&g, f64::sin)).unwrap();
        assert!(f.max_diff(&Field::from_fn(&g, |x| 2.0 * x.sin())).unwrap() < 1e-13);
        assert!(helmholtz_forward(&Field::zeros(&g)).unwrap().max_abs() == 0.0);
    }

    /// Second-order central differences converge to the spectral result.
    #[test]
    fn helmholtz_forward_matches_finite_differences() {
        let f = |x: f64| x.cos().exp();
        let mut errors = Vec::new();
        for n in [64usize, 128, 256] {
            let g = grid(n);
            let spectral = helmholtz_forward(&Field::from_fn(&g, f)).unwrap();
            let h = g.dx();
            let fd: Vec<f64> = (0..n)
                .map(|i| {
                    let x = g.node(i);
                    f(x) - (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
                })
                .collect();
            let err = spectral
                .values()
                .iter()
                .zip(&fd)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn kernel_derivative_examples() {
        let g = grid(32);
        let k = HelmholtzKernel::new(&g);
        let c = kernel_derivative_convolve(&Field::constant(&g, 1.3), &k).unwrap();
        assert!(c.max_abs() < 1e-15);
        let s = kernel_derivative_convolve(&Field::from_fn(&g, f64::sin), &k).unwrap();
        assert!(s.max_diff(&Field::from_fn(&g, |x| x.cos() / 2.0)).unwrap() < 1e-14);
    }

    #[test]
    fn kernel_derivative_bounded_by_kernel_for_nonnegative_data() {
        let g = Grid::new(256, 40.0).unwrap();
        let k = HelmholtzKernel::new(&g);
        let f = Field::from_fn(&g, |x| (-(x - 17.0).powi(2)).exp() + 0.3 * (-(x - 25.0).powi(2) / 4.0).exp());
        let px = kernel_derivative_convolve(&f, &k).unwrap();
        let p = helmholtz_inverse(&f, &k).unwrap();
        assert!(px.max_abs() <= p.max_abs() + 1e-9);
    }

    #[test]
    fn dealias_examples() {
        let g = grid(48);
        let f = Field::from_fn(&g, |x| (3.0 * x).sin() + (5.0 * x).cos());
        let d = dealias(&f, TWO_THIRDS).unwrap();
        assert!(d.max_diff(&f).unwrap() < 1e-14);
        let nyq = Field::from_fn(&g, |x| (24.0 * x).cos());
        assert!(dealias(&nyq, TWO_THIRDS).unwrap().max_abs() < 1e-14);
        assert!(dealias(&f, 0.0).is_err());
        assert!(dealias(&f, 1.5).is_err());
    }

    #[test]
    fn interpolation_reproduces_band_limited_function() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x| (3.0 * x).sin() + 0.25 * (5.0 * x).cos() + 1.0);
        let s = f.spectrum().unwrap();
        let xs = [0.1, 1.234, 4.5, 6.0];
        let vals = s.evaluate_at(&xs);
        for (x, v) in xs.iter().zip(vals) {
            let e = (3.0 * x).sin() + 0.25 * (5.0 * x).cos() + 1.0;
            assert!((v - e).abs() < 1e-13);
        }
        let integral = s.integrate_between(0.3, 2.1);
        let exact = (-(3.0f64 * 2.1).cos() + (3.0f64 * 0.3).cos()) / 3.0
            + 0.25 * ((5.0f64 * 2.1).sin() - (5.0f64 * 0.3).sin()) / 5.0
            + 1.8;
        assert!((integral - exact).abs() < 1e-13);
    }
}

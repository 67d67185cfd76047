//! Periodic Fourier grids, real fields in spectral form, and multiplier operators.
//!
//! Coefficients follow the unitary convention on the line: for a field `u`
//! sampled at `x_m = m L / n`, the coefficient of wavenumber `k_j = 2 pi j / L`
//! is `L / (n sqrt(2 pi)) * FFT(u)_j`. With this scaling the Riemann sum
//! `sum |u_hat|^2 dk`, `dk = 2 pi / L`, equals `integral |u|^2 dx` exactly, and
//! the coefficient of a product is `1/sqrt(2 pi)` times the convolution sum
//! `sum_l f_hat(k - l) g_hat(l) dk`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// `sqrt(2 pi)`.
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward transform, `sum_m u_m e^{-2 pi i j m / n}`.
pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Unnormalized inverse transform, `sum_j c_j e^{2 pi i j m / n}`.
pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

/// Periodic grid of `n` points on `[0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    n: usize,
    length: f64,
    wavenumbers: Vec<f64>,
    dealias_cutoff: f64,
}

/// Builds a grid with `n` modes on a box of length `length`.
pub fn make_grid(n: usize, length: f64) -> Result<Arc<SpectralGrid>> {
    SpectralGrid::new(n, length).map(Arc::new)
}

impl SpectralGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n must be even and at least 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "length must be positive, got {length}"
            )));
        }
        let dk = 2.0 * PI / length;
        let wavenumbers = (0..n).map(|j| signed_index(j, n) as f64 * dk).collect();
        Ok(Self {
            n,
            length,
            wavenumbers,
            dealias_cutoff: (2.0 / 3.0) * PI * n as f64 / length,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Wavenumber spacing `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Nyquist wavenumber `pi n / L`.
    pub fn k_max(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn dealias_cutoff(&self) -> f64 {
        self.dealias_cutoff
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Signed mode number of storage slot `j`.
    pub fn mode_of(&self, j: usize) -> i64 {
        signed_index(j, self.n)
    }

    /// Storage slot of signed mode `m`.
    pub fn index_of(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n).map(|m| m as f64 * dx).collect()
    }

    /// Same box and resolution.
    pub fn compatible(&self, other: &SpectralGrid) -> bool {
        self.n == other.n && self.length == other.length
    }
}

pub(crate) fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Fourier coefficients of a (normally real) function on a [`SpectralGrid`].
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("n", &self.grid.n)
            .field("length", &self.grid.length)
            .field("l2", &self.l2_norm())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn from_coeffs(grid: &Arc<SpectralGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.n,
                coeffs.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    /// Transforms real samples at the grid points.
    pub fn from_physical(grid: &Arc<SpectralGrid>, values: &[f64]) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.n,
                values.len()
            )));
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_forward(&mut buf);
        let scale = grid.length / (grid.n as f64 * SQRT_2PI);
        for c in &mut buf {
            *c *= scale;
        }
        Ok(Self {
            grid: Arc::clone(grid),
            coeffs: buf,
        })
    }

    /// Samples `f` at the grid points and transforms.
    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.points().into_iter().map(f).collect();
        Self::from_physical(grid, &values).expect("sample count matches grid")
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of signed mode `m`.
    pub fn mode(&self, m: i64) -> Complex64 {
        self.coeffs[self.grid.index_of(m)]
    }

    pub fn same_grid(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.compatible(&other.grid)
    }

    fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Complex samples at the grid points.
    pub fn to_physical_complex(&self) -> Vec<Complex64> {
        let mut buf = self.coeffs.clone();
        fft_inverse(&mut buf);
        let scale = SQRT_2PI / self.grid.length;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Real part of the samples at the grid points.
    pub fn to_physical(&self) -> Vec<f64> {
        self.to_physical_complex().into_iter().map(|c| c.re).collect()
    }

    /// Samples on a grid refined by `factor` through zero padding.
    pub fn to_physical_padded(&self, factor: usize) -> Vec<Complex64> {
        let mut buf = pad_coeffs(&self.coeffs, factor);
        fft_inverse(&mut buf);
        let scale = SQRT_2PI / self.grid.length;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Largest violation of `u_hat(-k) = conj(u_hat(k))`, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = self.coeffs[0].im.abs();
        worst = worst.max(self.coeffs[n / 2].im.abs());
        for j in 1..n / 2 {
            worst = worst.max((self.coeffs[n - j] - self.coeffs[j].conj()).norm());
        }
        worst / scale
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Projects onto real functions; the Nyquist coefficient is made real.
    pub fn enforce_real(&mut self) {
        let n = self.grid.n;
        self.coeffs[0].im = 0.0;
        self.coeffs[n / 2].im = 0.0;
        for j in 1..n / 2 {
            let avg = 0.5 * (self.coeffs[j] + self.coeffs[n - j].conj());
            self.coeffs[j] = avg;
            self.coeffs[n - j] = avg.conj();
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    pub fn scale_mut(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> Result<Self> {
        self.check_grid(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x + y * a)
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        })
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Multiplies each coefficient by `f(k)`.
    pub fn map_symbol(&self, f: impl Fn(f64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&self.grid.wavenumbers)
            .map(|(c, &k)| c * f(k))
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// Zeroes coefficients whose wavenumber fails `keep`.
    pub fn masked(&self, keep: impl Fn(f64) -> bool) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&self.grid.wavenumbers)
            .map(|(&c, &k)| if keep(k) { c } else { Complex64::new(0.0, 0.0) })
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// `sqrt(sum (1 + k^2)^s |u_hat|^2 dk)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        sobolev_norm(self, s)
    }

    pub fn l2_norm(&self) -> f64 {
        sobolev_norm(self, 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(self)
    }

    /// `integral u v dx` for real fields, via Plancherel.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check_grid(other)?;
        let dk = self.grid.dk();
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum::<f64>()
            * dk)
    }

    /// `sum w(k) |u_hat(k)| dk`.
    pub fn weighted_l1(&self, w: impl Fn(f64) -> f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.grid.wavenumbers)
            .map(|(c, &k)| w(k) * c.norm())
            .sum::<f64>()
            * self.grid.dk()
    }

    /// `(sum |u_hat|^r dk)^(1/r)` of the coefficients.
    pub fn coeff_lr_norm(&self, r: f64) -> f64 {
        (self.coeffs.iter().map(|c| c.norm().powf(r)).sum::<f64>() * self.grid.dk()).powf(1.0 / r)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Copies `coeffs` into a buffer `factor` times longer, splitting the Nyquist
/// coefficient evenly between `+k_N` and `-k_N`.
fn pad_coeffs(coeffs: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = coeffs.len();
    let big = n * factor;
    let mut buf = vec![Complex64::new(0.0, 0.0); big];
    if factor == 1 {
        buf.copy_from_slice(coeffs);
        return buf;
    }
    for j in 0..n / 2 {
        buf[j] = coeffs[j];
    }
    for j in n / 2 + 1..n {
        buf[big - (n - j)] = coeffs[j];
    }
    let half = 0.5 * coeffs[n / 2];
    buf[n / 2] = half;
    buf[big - n / 2] = half;
    buf
}

/// Realness class of a multiplier symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    EvenReal,
    OddReal,
    OddImaginary,
    None,
}

impl Parity {
    /// Whether the multiplier maps real functions to real functions.
    pub fn preserves_realness(self) -> bool {
        matches!(self, Parity::EvenReal | Parity::OddImaginary)
    }

    fn is_odd(self) -> bool {
        matches!(self, Parity::OddReal | Parity::OddImaginary)
    }

    fn compose(self, other: Parity) -> Parity {
        use Parity::*;
        match (self, other) {
            (None, _) | (_, None) => None,
            (EvenReal, p) | (p, EvenReal) => p,
            (OddImaginary, OddImaginary) | (OddReal, OddReal) => EvenReal,
            (OddImaginary, OddReal) | (OddReal, OddImaginary) => None,
        }
    }
}

type SymbolFn = dyn Fn(f64) -> Complex64 + Send + Sync;

/// A Fourier multiplier `u_hat(k) -> m(k) u_hat(k)`.
#[derive(Clone)]
pub struct MultiplierSymbol {
    eval: Arc<SymbolFn>,
    parity: Parity,
    name: String,
}

impl fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol")
            .field("name", &self.name)
            .field("parity", &self.parity)
            .finish()
    }
}

/// `sgn(k) sqrt(k tanh k)`.
pub fn omega_symbol(k: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k.signum() * (k * k.tanh()).sqrt()
    }
}

/// `i sgn(k) sqrt(|k|)`.
pub fn lambda_symbol(k: f64) -> Complex64 {
    if k == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, k.signum() * k.abs().sqrt())
    }
}

/// Piecewise linear weight dipping from 1 to `eps` at the origin.
pub fn vartheta_symbol(k: f64, eps: f64, delta: f64) -> Result<f64> {
    check_vartheta_params(eps, delta)?;
    Ok(vartheta_unchecked(k, eps, delta))
}

pub(crate) fn check_vartheta_params(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn vartheta_unchecked(k: f64, eps: f64, delta: f64) -> f64 {
    let a = k.abs();
    if a > delta {
        1.0
    } else {
        eps + (1.0 - eps) * a / delta
    }
}

impl MultiplierSymbol {
    pub fn new(
        name: impl Into<String>,
        parity: Parity,
        eval: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            parity,
            name: name.into(),
        }
    }

    pub fn eval(&self, k: f64) -> Complex64 {
        (self.eval)(k)
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn identity() -> Self {
        Self::new("identity", Parity::EvenReal, |_| Complex64::new(1.0, 0.0))
    }

    /// The real symbol `omega(k)` itself.
    pub fn omega() -> Self {
        Self::new("omega", Parity::OddReal, |k| Complex64::new(omega_symbol(k), 0.0))
    }

    /// `Omega`, symbol `i omega(k)`.
    pub fn big_omega() -> Self {
        Self::new("Omega", Parity::OddImaginary, |k| {
            Complex64::new(0.0, omega_symbol(k))
        })
    }

    /// Inverse of `Omega` off the zero mode, with the zero mode removed.
    pub fn big_omega_inverse() -> Self {
        Self::new("Omega^-1", Parity::OddImaginary, |k| {
            if k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / omega_symbol(k))
            }
        })
    }

    /// `Omega^2`, symbol `-k tanh k`.
    pub fn big_omega_squared() -> Self {
        Self::new("Omega^2", Parity::EvenReal, |k| Complex64::new(-k * k.tanh(), 0.0))
    }

    pub fn lambda() -> Self {
        Self::new("Lambda", Parity::OddImaginary, lambda_symbol)
    }

    /// `Lambda^2`, symbol `-|k|`.
    pub fn lambda_squared() -> Self {
        Self::new("Lambda^2", Parity::EvenReal, |k| Complex64::new(-k.abs(), 0.0))
    }

    /// `d^order/dx^order`, symbol `(ik)^order`.
    pub fn derivative(order: u32) -> Self {
        let parity = if order % 2 == 0 {
            Parity::EvenReal
        } else {
            Parity::OddImaginary
        };
        Self::new(format!("d^{order}"), parity, move |k| {
            Complex64::new(0.0, k).powu(order)
        })
    }

    pub fn vartheta(eps: f64, delta: f64) -> Result<Self> {
        check_vartheta_params(eps, delta)?;
        Ok(Self::new("vartheta", Parity::EvenReal, move |k| {
            Complex64::new(vartheta_unchecked(k, eps, delta), 0.0)
        }))
    }

    pub fn vartheta_inverse(eps: f64, delta: f64) -> Result<Self> {
        check_vartheta_params(eps, delta)?;
        Ok(Self::new("vartheta^-1", Parity::EvenReal, move |k| {
            Complex64::new(1.0 / vartheta_unchecked(k, eps, delta), 0.0)
        }))
    }

    /// Symbol of the composition `self ∘ other`.
    pub fn then(&self, other: &MultiplierSymbol) -> Self {
        let a = Arc::clone(&self.eval);
        let b = Arc::clone(&other.eval);
        Self {
            eval: Arc::new(move |k| a(k) * b(k)),
            parity: self.parity.compose(other.parity),
            name: format!("{}*{}", other.name, self.name),
        }
    }

    /// Evaluates the symbol on every wavenumber of `grid`.
    pub fn tabulate(&self, grid: &Arc<SpectralGrid>) -> TabulatedMultiplier {
        let mut values: Vec<Complex64> = grid.wavenumbers.iter().map(|&k| self.eval(k)).collect();
        if self.parity.is_odd() {
            values[grid.nyquist_index()] = Complex64::new(0.0, 0.0);
        }
        TabulatedMultiplier {
            grid: Arc::clone(grid),
            values,
            parity: self.parity,
        }
    }
}

/// A multiplier evaluated once on a fixed grid.
#[derive(Debug, Clone)]
pub struct TabulatedMultiplier {
    grid: Arc<SpectralGrid>,
    values: Vec<Complex64>,
    parity: Parity,
}

impl TabulatedMultiplier {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn apply(&self, f: &SpectralField) -> Result<SpectralField> {
        if !self.grid.compatible(&f.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self.apply_unchecked(f))
    }

    pub(crate) fn apply_unchecked(&self, f: &SpectralField) -> SpectralField {
        let coeffs = f.coeffs.iter().zip(&self.values).map(|(c, m)| c * m).collect();
        SpectralField {
            grid: Arc::clone(&f.grid),
            coeffs,
        }
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }
}

/// Multiplies the coefficients of `f` by `m(k)`.
///
/// Odd symbols annihilate the Nyquist coefficient, which has no partner mode.
pub fn apply_multiplier(f: &SpectralField, m: &MultiplierSymbol) -> SpectralField {
    let nyq = f.grid.nyquist_index();
    let odd = m.parity.is_odd();
    let coeffs = f
        .coeffs
        .iter()
        .zip(&f.grid.wavenumbers)
        .enumerate()
        .map(|(j, (c, &k))| {
            if odd && j == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                c * m.eval(k)
            }
        })
        .collect();
    let out = SpectralField {
        grid: Arc::clone(&f.grid),
        coeffs,
    };
    debug_assert!(
        !m.parity.preserves_realness() || !f.is_real(1e-12) || out.is_real(1e-10),
        "multiplier {} broke Hermitian symmetry",
        m.name
    );
    out
}

/// Riemann-sum Sobolev norm with weight `(1 + k^2)^s`.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> f64 {
    let dk = f.grid.dk();
    let sum: f64 = f
        .coeffs
        .iter()
        .zip(&f.grid.wavenumbers)
        .map(|(c, &k)| {
            let w = if s == 0.0 { 1.0 } else { (1.0 + k * k).powf(s) };
            w * c.norm_sqr()
        })
        .sum();
    (sum * dk).sqrt()
}

/// Maximum of `|u|` on a grid oversampled four times.
pub fn sup_norm(f: &SpectralField) -> f64 {
    f.to_physical_padded(4)
        .iter()
        .map(|c| c.re.abs())
        .fold(0.0, f64::max)
}

/// Zeroes every coefficient with `|k|` above the two-thirds cutoff.
pub fn dealias(f: &SpectralField) -> SpectralField {
    let cut = f.grid.dealias_cutoff;
    f.masked(|k| k.abs() <= cut)
}

/// Product of two fields projected onto the modes `|j| < n/2`, computed
/// without aliasing on a doubled grid. The Nyquist slot is left empty.
pub fn product_exact(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_grid(g)?;
    let n = f.grid.n;
    let big = 2 * n;
    let mut a = pad_coeffs(&f.coeffs, 2);
    let mut b = pad_coeffs(&g.coeffs, 2);
    fft_inverse(&mut a);
    fft_inverse(&mut b);
    let phys = SQRT_2PI / f.grid.length;
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y * (phys * phys);
    }
    fft_forward(&mut a);
    let back = f.grid.length / (big as f64 * SQRT_2PI);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n / 2 {
        coeffs[j] = a[j] * back;
    }
    for j in n / 2 + 1..n {
        coeffs[j] = a[big - (n - j)] * back;
    }
    Ok(SpectralField {
        grid: Arc::clone(&f.grid),
        coeffs,
    })
}

/// Two-thirds-rule product: both factors and the result are truncated at the
/// dealiasing cutoff and the product is formed on the grid itself.
pub fn product_dealiased(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_grid(g)?;
    let a = dealias(f).to_physical_complex();
    let b = dealias(g).to_physical_complex();
    let prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let mut buf = prod;
    fft_forward(&mut buf);
    let scale = f.grid.length / (f.grid.n as f64 * SQRT_2PI);
    for c in &mut buf {
        *c *= scale;
    }
    let out = SpectralField {
        grid: Arc::clone(&f.grid),
        coeffs: buf,
    };
    Ok(dealias(&out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize, l: f64) -> Arc<SpectralGrid> {
        make_grid(n, l).unwrap()
    }

    #[test]
    fn grid_wavenumbers_follow_dft_order() {
        let g = grid(8, 2.0 * PI);
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (k, e) in g.wavenumbers().iter().zip(expect) {
            assert_relative_eq!(*k, e, epsilon = 1e-14);
        }
        assert_relative_eq!(grid(8, PI).dk(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(grid(16, 2.0 * PI).dealias_cutoff(), 16.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(make_grid(7, 1.0).is_err());
        assert!(make_grid(6, 1.0).is_err());
        assert!(make_grid(8, 0.0).is_err());
        assert!(make_grid(8, -1.0).is_err());
    }

    #[test]
    fn omega_values() {
        assert_eq!(omega_symbol(0.0), 0.0);
        assert_relative_eq!(omega_symbol(1.0), 0.872_693_620_897_829_69, epsilon = 1e-15);
        assert_eq!(omega_symbol(-1.0), -omega_symbol(1.0));
        assert!((omega_symbol(100.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn lambda_and_vartheta_values() {
        assert_eq!(lambda_symbol(0.0), Complex64::new(0.0, 0.0));
        assert_eq!(lambda_symbol(4.0), Complex64::new(0.0, 2.0));
        assert_eq!(lambda_symbol(-4.0), Complex64::new(0.0, -2.0));
        assert_relative_eq!(vartheta_symbol(0.0, 0.1, 0.5).unwrap(), 0.1);
        assert_relative_eq!(vartheta_symbol(0.5, 0.1, 0.5).unwrap(), 1.0);
        assert_relative_eq!(vartheta_symbol(2.0, 0.1, 0.5).unwrap(), 1.0);
        assert!(vartheta_symbol(0.0, 1.0, 0.5).is_err());
        assert!(vartheta_symbol(0.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn omega_twice_on_single_mode() {
        let g = grid(32, 2.0 * PI);
        let f = SpectralField::from_fn(&g, |x| (3.0 * x).cos());
        let w = MultiplierSymbol::big_omega();
        let out = apply_multiplier(&apply_multiplier(&f, &w), &w);
        let factor = -3.0 * 3f64.tanh();
        for (o, c) in out.coeffs().iter().zip(f.coeffs()) {
            assert!((o - c * factor).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_leaves_field_unchanged() {
        let g = grid(32, 10.0);
        let f = SpectralField::from_fn(&g, |x| (-(x - 5.0).powi(2)).exp());
        let out = apply_multiplier(&f, &MultiplierSymbol::identity());
        assert_eq!(out.coeffs(), f.coeffs());
    }

    #[test]
    fn sobolev_norm_of_mode_pair() {
        let l = 7.0;
        let g = grid(16, l);
        let mut f = SpectralField::zeros(&g);
        f.coeffs_mut()[1] = Complex64::new(1.0, 0.0);
        f.coeffs_mut()[15] = Complex64::new(1.0, 0.0);
        let base = (2.0 * 2.0 * PI / l).sqrt();
        assert_relative_eq!(f.sobolev_norm(0.0), base, epsilon = 1e-14);
        assert_eq!(SpectralField::zeros(&g).sobolev_norm(3.0), 0.0);

        let g2 = grid(16, 2.0 * PI);
        let mut h = SpectralField::zeros(&g2);
        h.coeffs_mut()[1] = Complex64::new(1.0, 0.0);
        h.coeffs_mut()[15] = Complex64::new(1.0, 0.0);
        assert_relative_eq!(
            h.sobolev_norm(2.0).powi(2),
            4.0 * h.sobolev_norm(0.0).powi(2),
            epsilon = 1e-13
        );
    }

    #[test]
    fn sup_norm_examples() {
        let g = grid(16, 2.0 * PI);
        let f = SpectralField::from_fn(&g, f64::cos);
        assert!((f.sup_norm() - 1.0).abs() < 1e-12);
        assert_eq!(SpectralField::zeros(&g).sup_norm(), 0.0);

        let h = SpectralField::from_fn(&g, |x| x.cos() + (2.0 * x).cos());
        let dense = (0..100_000)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / 100_000.0;
                (x.cos() + (2.0 * x).cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!((h.sup_norm() - dense).abs() < 1e-9);
        assert!((h.sup_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dealias_examples() {
        let g = grid(32, 2.0 * PI);
        let mut low = SpectralField::zeros(&g);
        for m in -10..=10i64 {
            low.coeffs_mut()[g.index_of(m)] = Complex64::new(1.0 / (1 + m.abs()) as f64, 0.0);
        }
        assert_eq!(dealias(&low).coeffs(), low.coeffs());
        let high = SpectralField::from_fn(&g, |x| (14.0 * x).cos());
        assert!(dealias(&high).l2_norm() < 1e-14);
    }

    #[test]
    fn dealiased_product_matches_refined_product() {
        let g = grid(64, 2.0 * PI);
        let fine = grid(128, 2.0 * PI);
        let f = |x: f64| (5.0 * x).cos() + 0.3 * (9.0 * x).sin();
        let h = |x: f64| (7.0 * x).sin() - 0.2 * (12.0 * x).cos();
        let p = product_dealiased(&SpectralField::from_fn(&g, f), &SpectralField::from_fn(&g, h))
            .unwrap();
        let reference = SpectralField::from_fn(&fine, |x| f(x) * h(x));
        let cut = g.dealias_cutoff();
        for (j, c) in p.coeffs().iter().enumerate() {
            let m = g.mode_of(j);
            let expect = if (m as f64).abs() <= cut {
                reference.mode(m)
            } else {
                Complex64::new(0.0, 0.0)
            };
            assert!((c - expect).norm() < 1e-12, "mode {m}");
        }
    }

    #[test]
    fn exact_product_is_alias_free() {
        let g = grid(32, 2.0 * PI);
        let fine = grid(128, 2.0 * PI);
        let f = |x: f64| (11.0 * x).cos();
        let h = |x: f64| (13.0 * x).cos() + (2.0 * x).sin();
        let p = product_exact(&SpectralField::from_fn(&g, f), &SpectralField::from_fn(&g, h))
            .unwrap();
        let reference = SpectralField::from_fn(&fine, |x| f(x) * h(x));
        for j in 0..32 {
            let m = g.mode_of(j);
            if m == -16 {
                continue;
            }
            assert!((p.mode(m) - reference.mode(m)).norm() < 1e-12, "mode {m}");
        }
    }

    #[test]
    fn round_trip_and_plancherel() {
        let g = grid(128, 30.0);
        let f = SpectralField::from_fn(&g, |x| (-(x - 15.0).powi(2) / 4.0).exp() * (2.0 * x).cos());
        let back = SpectralField::from_physical(&g, &f.to_physical()).unwrap();
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert!((a - b).norm() < 1e-12);
        }
        let phys: f64 = f.to_physical().iter().map(|v| v * v).sum::<f64>() * g.dx();
        assert_relative_eq!(phys.sqrt(), f.l2_norm(), max_relative = 1e-12);
    }

    #[test]
    fn tabulated_multiplier_rejects_foreign_grid() {
        let a = grid(16, 1.0);
        let b = grid(32, 1.0);
        let t = MultiplierSymbol::big_omega().tabulate(&a);
        assert!(t.apply(&SpectralField::zeros(&b)).is_err());
        assert!(t.apply(&SpectralField::zeros(&a)).is_ok());
    }
}

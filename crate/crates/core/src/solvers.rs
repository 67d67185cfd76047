//! Time stepping for the model system and for the envelope equation.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{
    fft_forward, fft_inverse, omega_symbol, product_dealiased, SpectralField, SpectralGrid,
    SQRT_2PI,
};
use crate::wavetrain::CarrierData;

/// Real fields `(u, v)` at time `t`.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub u: SpectralField,
    pub v: SpectralField,
    pub t: f64,
}

/// Diagonal variables `F1 = (u + v)/sqrt 2`, `F2 = (u - v)/sqrt 2`.
#[derive(Debug, Clone)]
pub struct DiagState {
    pub f1: SpectralField,
    pub f2: SpectralField,
    pub t: f64,
}

impl ModelState {
    pub fn new(u: SpectralField, v: SpectralField, t: f64) -> Result<Self> {
        if !u.same_grid(&v) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, v, t })
    }

    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        Self {
            u: SpectralField::zeros(grid),
            v: SpectralField::zeros(grid),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.u.grid()
    }

    /// `sqrt(||u||^2 + ||v||^2)` in L^2.
    pub fn l2_norm(&self) -> f64 {
        self.u.l2_norm().hypot(self.v.l2_norm())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

fn rotate(a: &SpectralField, b: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    let sum = a.add(b)?.scaled(FRAC_1_SQRT_2);
    let diff = a.sub(b)?.scaled(FRAC_1_SQRT_2);
    Ok((sum, diff))
}

pub fn diagonalize(s: &ModelState) -> Result<DiagState> {
    let (f1, f2) = rotate(&s.u, &s.v)?;
    Ok(DiagState { f1, f2, t: s.t })
}

pub fn undiagonalize(d: &DiagState) -> Result<ModelState> {
    let (u, v) = rotate(&d.f1, &d.f2)?;
    Ok(ModelState { u, v, t: d.t })
}

/// Frequencies used by the linear flow; the Nyquist slot has no partner mode
/// and is held fixed.
fn grid_frequencies(grid: &SpectralGrid) -> Vec<f64> {
    let mut w: Vec<f64> = grid.wavenumbers().iter().map(|&k| omega_symbol(k)).collect();
    w[grid.nyquist_index()] = 0.0;
    w
}

/// Exact linear propagation `F1 -> e^{i omega dt} F1`, `F2 -> e^{-i omega dt} F2`.
pub fn linear_flow(d: &DiagState, dt: f64) -> DiagState {
    let w = grid_frequencies(d.f1.grid());
    let mut f1 = d.f1.clone();
    let mut f2 = d.f2.clone();
    for ((a, b), &wk) in f1.coeffs_mut().iter_mut().zip(f2.coeffs_mut()).zip(&w) {
        let rot = Complex64::from_polar(1.0, wk * dt);
        *a *= rot;
        *b *= rot.conj();
    }
    DiagState { f1, f2, t: d.t + dt }
}

/// Stability limit `0.5 / max(1, omega(k_max))`.
pub fn dt_max(grid: &SpectralGrid) -> f64 {
    0.5 / omega_symbol(grid.k_max()).max(1.0)
}

/// Strang-split stepper for the model system with precomputed tables.
#[derive(Debug, Clone)]
pub struct ModelStepper {
    grid: Arc<SpectralGrid>,
    dt: f64,
    half_cos: Vec<f64>,
    half_isin: Vec<Complex64>,
    omega: Vec<Complex64>,
    nonlinear: bool,
}

impl ModelStepper {
    pub fn new(grid: &Arc<SpectralGrid>, dt: f64, nonlinear: bool) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let limit = dt_max(grid);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, dt_max: limit });
        }
        let w = grid_frequencies(grid);
        Ok(Self {
            grid: Arc::clone(grid),
            dt,
            half_cos: w.iter().map(|wk| (0.5 * wk * dt).cos()).collect(),
            half_isin: w
                .iter()
                .map(|wk| Complex64::new(0.0, (0.5 * wk * dt).sin()))
                .collect(),
            omega: w.iter().map(|&wk| Complex64::new(0.0, wk)).collect(),
            nonlinear,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn half_linear(&self, s: &mut ModelState) {
        let (u, v) = (s.u.coeffs_mut(), s.v.coeffs_mut());
        for j in 0..u.len() {
            let (a, b) = (u[j], v[j]);
            u[j] = a * self.half_cos[j] + b * self.half_isin[j];
            v[j] = a * self.half_isin[j] + b * self.half_cos[j];
        }
    }

    /// Advances `s` by one step in place.
    pub fn step(&self, s: &mut ModelState) -> Result<()> {
        if !self.grid.compatible(s.grid()) {
            return Err(Error::GridMismatch);
        }
        self.half_linear(s);
        if self.nonlinear {
            let sq = product_dealiased(&s.u, &s.u)?;
            for ((vj, q), w) in s.v.coeffs_mut().iter_mut().zip(sq.coeffs()).zip(&self.omega) {
                *vj += q * w * self.dt;
            }
        }
        self.half_linear(s);
        s.t += self.dt;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: "model step",
                t: s.t,
            });
        }
        Ok(())
    }
}

/// One Strang step of size `dt` for the full system.
pub fn step_model(s: &ModelState, dt: f64) -> Result<ModelState> {
    let stepper = ModelStepper::new(s.grid(), dt, true)?;
    let mut out = s.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Integrates to `t_end` with fixed steps, calling `observe` on the initial
/// state, every `stride` steps, and on the final state at exactly `t_end`.
pub fn run_model_observed(
    init: &ModelState,
    t_end: f64,
    dt: f64,
    stride: usize,
    nonlinear: bool,
    mut observe: impl FnMut(&ModelState) -> Result<()>,
) -> Result<ModelState> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be positive, got {t_end}")));
    }
    let stride = stride.max(1);
    let stepper = ModelStepper::new(init.grid(), dt, nonlinear)?;
    let full = ((t_end / dt) * (1.0 - 1e-12)).floor() as usize;
    let rest = t_end - full as f64 * dt;
    let mut state = init.clone();
    state.t = 0.0;
    observe(&state)?;
    for i in 1..=full {
        stepper.step(&mut state)?;
        if i % stride == 0 && (rest > 0.0 || i < full) {
            observe(&state)?;
        }
    }
    if rest > 0.0 {
        ModelStepper::new(init.grid(), rest, nonlinear)?.step(&mut state)?;
    }
    state.t = t_end;
    observe(&state)?;
    Ok(state)
}

/// Collects the trajectory produced by [`run_model_observed`].
pub fn run_model(
    init: &ModelState,
    t_end: f64,
    dt: f64,
    observer_stride: usize,
) -> Result<Vec<ModelState>> {
    let mut out = Vec::new();
    run_model_observed(init, t_end, dt, observer_stride, true, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Envelope samples `A(X_m)` on a periodic slow grid at slow time `t`.
#[derive(Debug, Clone)]
pub struct NlsState {
    pub grid: Arc<SpectralGrid>,
    pub a: Vec<Complex64>,
    pub t: f64,
}

impl NlsState {
    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid: Arc::clone(grid),
            a: grid.points().into_iter().map(f).collect(),
            t: 0.0,
        }
    }

    /// `integral |A|^2 dX`.
    pub fn mass(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Unitary Fourier coefficients in the slow variable.
    pub fn spectrum(&self) -> Vec<Complex64> {
        to_spectrum(&self.grid, &self.a)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn to_spectrum(grid: &SpectralGrid, values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    fft_forward(&mut buf);
    let s = grid.length() / (grid.n() as f64 * SQRT_2PI);
    for c in &mut buf {
        *c *= s;
    }
    buf
}

pub(crate) fn from_spectrum(grid: &SpectralGrid, coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    fft_inverse(&mut buf);
    let s = SQRT_2PI / grid.length();
    for c in &mut buf {
        *c *= s;
    }
    buf
}

/// Right-hand side `i nu1 A_XX + i nu2 |A|^2 A`, with `A_XX` taken spectrally.
pub fn nls_rhs(grid: &SpectralGrid, a: &[Complex64], nu1: f64, nu2: f64) -> Vec<Complex64> {
    let mut spec = to_spectrum(grid, a);
    for (c, &k) in spec.iter_mut().zip(grid.wavenumbers()) {
        *c *= -k * k;
    }
    let axx = from_spectrum(grid, &spec);
    let i = Complex64::new(0.0, 1.0);
    a.iter()
        .zip(&axx)
        .map(|(&z, &d)| i * (nu1 * d + nu2 * z.norm_sqr() * z))
        .collect()
}

/// Split-step stepper for `A_T = i nu1 A_XX + i nu2 |A|^2 A`.
#[derive(Debug, Clone)]
pub struct NlsStepper {
    grid: Arc<SpectralGrid>,
    dt: f64,
    nu2: f64,
    linear: Vec<Complex64>,
}

impl NlsStepper {
    pub fn new(grid: &Arc<SpectralGrid>, dt: f64, nu1: f64, nu2: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dT must be positive, got {dt}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            dt,
            nu2,
            linear: grid
                .wavenumbers()
                .iter()
                .map(|&k| Complex64::from_polar(1.0, -nu1 * k * k * dt))
                .collect(),
        })
    }

    fn half_cubic(&self, a: &mut [Complex64]) {
        let h = 0.5 * self.nu2 * self.dt;
        for z in a {
            *z *= Complex64::from_polar(1.0, h * z.norm_sqr());
        }
    }

    pub fn step(&self, s: &mut NlsState) -> Result<()> {
        if !self.grid.compatible(&s.grid) {
            return Err(Error::GridMismatch);
        }
        self.half_cubic(&mut s.a);
        fft_forward(&mut s.a);
        for (z, m) in s.a.iter_mut().zip(&self.linear) {
            *z *= m;
        }
        fft_inverse(&mut s.a);
        let inv = 1.0 / s.a.len() as f64;
        for z in &mut s.a {
            *z *= inv;
        }
        self.half_cubic(&mut s.a);
        s.t += self.dt;
        if !s.is_finite() {
            return Err(Error::NonFinite {
                context: "envelope step",
                t: s.t,
            });
        }
        Ok(())
    }
}

/// One Strang step of the envelope equation with the carrier's coefficients.
pub fn step_nls(a: &NlsState, dt: f64, c: &CarrierData) -> Result<NlsState> {
    let stepper = NlsStepper::new(&a.grid, dt, c.nu1, c.nu2)?;
    let mut out = a.clone();
    stepper.step(&mut out)?;
    Ok(out)
}

/// Integrates the envelope equation from `a` to slow time `t_end`, in steps no
/// larger than `max_dt`.
pub fn run_nls(a: &NlsState, t_end: f64, max_dt: f64, nu1: f64, nu2: f64) -> Result<NlsState> {
    let span = t_end - a.t;
    if span < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "cannot integrate backwards from {} to {t_end}",
            a.t
        )));
    }
    let mut out = a.clone();
    if span == 0.0 {
        return Ok(out);
    }
    let steps = (span / max_dt).ceil().max(1.0) as usize;
    let stepper = NlsStepper::new(&a.grid, span / steps as f64, nu1, nu2)?;
    for _ in 0..steps {
        stepper.step(&mut out)?;
    }
    out.t = t_end;
    Ok(out)
}

//! Wave-packet ansatz built from an envelope, its second-order corrections,
//! the residual it leaves in the model system, and the `G = G^c + eps G^s` split.
//!
//! Conventions. The packet rides the branch selected by [`PhiChoice`] with sign
//! `sigma`; phase `theta = k0 x + sigma omega0 t`, slow variables
//! `X = eps (x + sigma cg t)`, `T = eps^2 t`, and the envelope solves
//! `A_T = sigma (i nu1 A_XX + i nu2 |A|^2 A)`. Real fields are formed as
//! `A e^{i theta} + c.c.`. The slow grid has length `eps L`, so slow mode `m`
//! lands on fast mode `j2 j0 + m` for harmonic `j2`, where `k0 = j0 2 pi / L`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::solvers::{nls_rhs, to_spectrum, NlsState, NlsStepper};
use crate::spectral::{product_exact, MultiplierSymbol, SpectralField, SpectralGrid};
use crate::wavetrain::{CarrierData, PhiChoice};

/// Envelope, carrier and correction data defining `eps Psi`.
#[derive(Debug, Clone)]
pub struct AnsatzBundle {
    pub carrier: CarrierData,
    pub eps: f64,
    pub delta: f64,
    pub phi_choice: PhiChoice,
    pub grid: Arc<SpectralGrid>,
    pub a_state: NlsState,
    /// Slow profiles keyed by `(j2, order)`; the contribution to `eps Psi_1`
    /// is `eps^order P e^{i j2 theta}` plus its conjugate for `j2 > 0`.
    pub correction_amps: BTreeMap<(i32, u32), Vec<Complex64>>,
    pub cutoff_enabled: bool,
    /// Largest slow step used when advancing the envelope.
    pub nls_max_dt: f64,
    j0: i64,
    corrected: bool,
}

/// Norms of the residual at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub t: f64,
    pub res_h2: f64,
    pub res_weighted: f64,
    pub res_sup: f64,
}

/// Carrier index `j0` with `k0 = 2 pi j0 / L`, if `L` is commensurate.
pub fn carrier_index(k0: f64, length: f64) -> Option<i64> {
    let j = k0 * length / (2.0 * std::f64::consts::PI);
    let r = j.round();
    ((j - r).abs() <= 1e-9 * j.max(1.0) && r >= 1.0).then_some(r as i64)
}

/// One harmonic of the ansatz with its slow time derivatives.
struct Term {
    j2: i64,
    order: i32,
    p: Vec<Complex64>,
    p_t: Vec<Complex64>,
    p_tt: Vec<Complex64>,
}

impl AnsatzBundle {
    /// Bundle for the leading-order packet with envelope `a0` at `t = 0`.
    pub fn new(
        carrier: CarrierData,
        eps: f64,
        delta: f64,
        phi_choice: PhiChoice,
        grid: &Arc<SpectralGrid>,
        a0: NlsState,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(delta > 0.0 && delta < carrier.k0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, k0/3), got {delta}"
            )));
        }
        let j0 = carrier_index(carrier.k0, grid.length()).ok_or_else(|| {
            Error::InvalidGrid(format!(
                "k0 L / 2 pi must be an integer (k0 = {}, L = {})",
                carrier.k0,
                grid.length()
            ))
        })?;
        let slow_len = eps * grid.length();
        if (a0.grid.length() - slow_len).abs() > 1e-10 * slow_len {
            return Err(Error::InvalidGrid(format!(
                "slow grid length {} must equal eps L = {slow_len}",
                a0.grid.length()
            )));
        }
        if a0.t != 0.0 {
            return Err(Error::Unsynchronized {
                expected: 0.0,
                actual: a0.t,
            });
        }
        let reach = 2 * j0 + a0.grid.n() as i64 / 2;
        if reach >= grid.n() as i64 / 2 {
            return Err(Error::InvalidGrid(format!(
                "fast grid with n = {} cannot hold the second harmonic band (needs |mode| up to {reach})",
                grid.n()
            )));
        }
        Ok(Self {
            carrier,
            eps,
            delta,
            phi_choice,
            grid: Arc::clone(grid),
            a_state: a0,
            correction_amps: BTreeMap::new(),
            cutoff_enabled: false,
            nls_max_dt: 1e-3,
            j0,
            corrected: false,
        })
    }

    pub fn with_cutoff(mut self, on: bool) -> Self {
        self.cutoff_enabled = on;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.phi_choice.sigma()
    }

    pub fn carrier_index(&self) -> i64 {
        self.j0
    }

    pub fn has_corrections(&self) -> bool {
        self.corrected
    }

    /// Fast time matching the envelope's slow time.
    pub fn time(&self) -> f64 {
        self.a_state.t / (self.eps * self.eps)
    }

    fn nu(&self) -> (f64, f64) {
        let s = self.sigma();
        (s * self.carrier.nu1, s * self.carrier.nu2)
    }

    /// Advances the envelope so that it is synchronized with fast time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        let target = self.eps * self.eps * t;
        let span = target - self.a_state.t;
        if span < -1e-12 * target.abs().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "cannot move the envelope back from T = {} to {target}",
                self.a_state.t
            )));
        }
        if span > 0.0 {
            let (nu1, nu2) = self.nu();
            let steps = (span / self.nls_max_dt).ceil().max(1.0) as usize;
            let stepper = NlsStepper::new(&self.a_state.grid, span / steps as f64, nu1, nu2)?;
            for _ in 0..steps {
                stepper.step(&mut self.a_state)?;
            }
        }
        self.a_state.t = target;
        if self.corrected {
            self.fill_corrections();
        }
        Ok(())
    }

    fn check_sync(&self, t: f64) -> Result<()> {
        let expected = self.eps * self.eps * t;
        if (self.a_state.t - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::Unsynchronized {
                expected,
                actual: self.a_state.t,
            });
        }
        Ok(())
    }

    fn fill_corrections(&mut self) {
        let a = &self.a_state.a;
        let a2 = self.carrier.a2;
        let b = self.carrier.mean_flow;
        self.correction_amps.clear();
        self.correction_amps.insert((1, 1), a.clone());
        self.correction_amps
            .insert((2, 2), a.iter().map(|z| a2 * z * z).collect());
        self.correction_amps.insert(
            (0, 2),
            a.iter().map(|z| Complex64::new(b * z.norm_sqr(), 0.0)).collect(),
        );
    }

    fn envelope_derivatives(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let (nu1, nu2) = self.nu();
        let g = &self.a_state.grid;
        let a = &self.a_state.a;
        let a_t = nls_rhs(g, a, nu1, nu2);
        let lin = nls_rhs(g, &a_t, nu1, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let a_tt = a
            .iter()
            .zip(&a_t)
            .zip(&lin)
            .map(|((&z, &zt), &l)| l + i * nu2 * (2.0 * z.norm_sqr() * zt + z * z * zt.conj()))
            .collect();
        (a_t, a_tt)
    }

    fn terms(&self, leading_only: bool) -> Vec<Term> {
        let a = self.a_state.a.clone();
        let (a_t, a_tt) = self.envelope_derivatives();
        let mut out = Vec::with_capacity(3);
        if self.corrected && !leading_only {
            let a2 = self.carrier.a2;
            let b = self.carrier.mean_flow;
            let sq: Vec<Complex64> = a.iter().map(|z| a2 * z * z).collect();
            let sq_t = a.iter().zip(&a_t).map(|(z, zt)| 2.0 * a2 * z * zt).collect();
            let sq_tt = a
                .iter()
                .zip(&a_t)
                .zip(&a_tt)
                .map(|((z, zt), ztt)| 2.0 * a2 * (zt * zt + z * ztt))
                .collect();
            let mf = a.iter().map(|z| Complex64::new(b * z.norm_sqr(), 0.0)).collect();
            let mf_t = a
                .iter()
                .zip(&a_t)
                .map(|(z, zt)| Complex64::new(2.0 * b * (z.conj() * zt).re, 0.0))
                .collect();
            let mf_tt = a
                .iter()
                .zip(&a_t)
                .zip(&a_tt)
                .map(|((z, zt), ztt)| {
                    Complex64::new(2.0 * b * (zt.norm_sqr() + (z.conj() * ztt).re), 0.0)
                })
                .collect();
            out.push(Term { j2: 2, order: 2, p: sq, p_t: sq_t, p_tt: sq_tt });
            out.push(Term { j2: 0, order: 2, p: mf, p_t: mf_t, p_tt: mf_tt });
        }
        out.insert(0, Term { j2: 1, order: 1, p: a, p_t: a_t, p_tt: a_tt });
        out
    }

    /// Adds `sum_terms eps^(order + shift) d_t^deriv (P e^{i j2 theta})` into `out`.
    fn assemble(
        &self,
        t: f64,
        terms: &[Term],
        deriv: u8,
        order_shift: i32,
        cutoff: bool,
    ) -> SpectralField {
        let n = self.grid.n() as i64;
        let slow = &self.a_state.grid;
        let ns = slow.n();
        let eps = self.eps;
        let sigma = self.sigma();
        let cg = self.carrier.cg;
        let w0 = self.carrier.omega0;
        let dk = self.grid.dk();
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.n()];
        for term in terms {
            let weight = eps.powi(term.order + order_shift) / eps;
            let spec_p = to_spectrum(slow, &term.p);
            let spec_t = if deriv >= 1 { to_spectrum(slow, &term.p_t) } else { Vec::new() };
            let spec_tt = if deriv >= 2 { to_spectrum(slow, &term.p_tt) } else { Vec::new() };
            let carrier_phase = Complex64::from_polar(1.0, term.j2 as f64 * sigma * w0 * t);
            for js in 0..ns {
                if js == ns / 2 {
                    continue;
                }
                let m = slow.mode_of(js);
                let km = m as f64 * dk;
                if cutoff && km.abs() >= self.delta {
                    continue;
                }
                let shift = Complex64::from_polar(1.0, km * sigma * cg * t) * carrier_phase;
                let d = Complex64::new(0.0, sigma * (term.j2 as f64 * w0 + cg * km));
                let c = match deriv {
                    0 => spec_p[js],
                    1 => d * spec_p[js] + eps * eps * spec_t[js],
                    _ => {
                        d * d * spec_p[js]
                            + 2.0 * d * eps * eps * spec_t[js]
                            + eps.powi(4) * spec_tt[js]
                    }
                } * shift
                    * weight;
                let q = term.j2 * self.j0 + m;
                out[q.rem_euclid(n) as usize] += c;
                if term.j2 > 0 {
                    out[(-q).rem_euclid(n) as usize] += c.conj();
                }
            }
        }
        SpectralField::from_coeffs(&self.grid, out).expect("length matches grid")
    }

    /// `(eps Psi_1, eps Psi_2)` and their time derivatives up to `max_deriv`.
    fn fields(&self, t: f64, max_deriv: u8) -> Result<Vec<(SpectralField, SpectralField)>> {
        self.check_sync(t)?;
        let terms = self.terms(false);
        let cut = self.cutoff_enabled;
        let top = if self.corrected { max_deriv + 1 } else { max_deriv };
        let us: Vec<SpectralField> = (0..=top).map(|d| self.assemble(t, &terms, d, 0, cut)).collect();
        let mut out = Vec::with_capacity(max_deriv as usize + 1);
        if self.corrected {
            let inv = MultiplierSymbol::big_omega_inverse().tabulate(&self.grid);
            for d in 0..=max_deriv as usize {
                out.push((us[d].clone(), inv.apply(&us[d + 1])?));
            }
        } else {
            let s = self.sigma();
            for u in us.into_iter().take(max_deriv as usize + 1) {
                let v = u.scaled(s);
                out.push((u, v));
            }
        }
        Ok(out)
    }

    /// Full ansatz `eps Psi` at time `t`.
    pub fn psi(&self, t: f64) -> Result<(SpectralField, SpectralField)> {
        Ok(self.fields(t, 0)?.remove(0))
    }

    /// Leading packet `Psi^c` without the factor `eps`, cut to the bands at `+-k0`.
    pub fn leading_cut(&self, t: f64) -> Result<SpectralField> {
        self.check_sync(t)?;
        let terms = self.terms(true);
        Ok(self.assemble(t, &terms, 0, -1, true))
    }

    /// Residual `Res(eps Psi)` of the model system at time `t`.
    pub fn residual_fields(&self, t: f64) -> Result<(SpectralField, SpectralField)> {
        let f = self.fields(t, 1)?;
        let (u, v) = &f[0];
        let (u_t, v_t) = &f[1];
        let om = MultiplierSymbol::big_omega().tabulate(&self.grid);
        let sq = product_exact(u, u)?;
        let r1 = om.apply(v)?.sub(u_t)?;
        let r2 = om.apply(u)?.add(&om.apply(&sq)?)?.sub(v_t)?;
        Ok((r1, r2))
    }
}

/// Leading-order packet `eps Psi_NLS = eps (A e^{i theta} + c.c.) (1, sigma)`.
pub fn build_psi_nls(b: &AnsatzBundle, t: f64) -> Result<(SpectralField, SpectralField)> {
    b.check_sync(t)?;
    let terms = b.terms(true);
    let u = b.assemble(t, &terms, 0, 0, false);
    let v = u.scaled(b.sigma());
    Ok((u, v))
}

/// Zeroes coefficients with `|k - center| >= halfwidth`.
pub fn fourier_cutoff(f: &SpectralField, center: f64, halfwidth: f64) -> SpectralField {
    f.masked(|k| (k - center).abs() < halfwidth)
}

/// Returns a bundle carrying the second harmonic `a2 A^2` and mean flow `b |A|^2`.
pub fn build_corrections(b: &AnsatzBundle) -> Result<AnsatzBundle> {
    if !b.carrier.nu2.is_finite() {
        return Err(Error::InvalidParameter("cubic coefficient is not finite".into()));
    }
    let mut out = b.clone();
    out.corrected = true;
    out.fill_corrections();
    Ok(out)
}

/// Norms of `Res(eps Psi)` and of `vartheta^{-1} Res(eps Psi)`.
pub fn residual(b: &AnsatzBundle, t: f64) -> Result<ResidualReport> {
    let (r1, r2) = b.residual_fields(t)?;
    let winv = MultiplierSymbol::vartheta_inverse(b.eps, b.delta)?.tabulate(&b.grid);
    let w1 = winv.apply(&r1)?;
    let w2 = winv.apply(&r2)?;
    Ok(ResidualReport {
        t,
        res_h2: r1.sobolev_norm(2.0).hypot(r2.sobolev_norm(2.0)),
        res_weighted: w1.sobolev_norm(2.0).hypot(w2.sobolev_norm(2.0)),
        res_sup: r1.sup_norm().max(r2.sup_norm()),
    })
}

/// H^2 norm of the residual restricted to `|k -+ k0| < halfwidth`.
pub fn first_harmonic_residual(b: &AnsatzBundle, t: f64, halfwidth: f64) -> Result<f64> {
    let (r1, r2) = b.residual_fields(t)?;
    let k0 = b.carrier.k0;
    let keep = |k: f64| (k.abs() - k0).abs() < halfwidth;
    Ok(r1.masked(keep).sobolev_norm(2.0).hypot(r2.masked(keep).sobolev_norm(2.0)))
}

/// Diagonal variables of the packet: `G^c` from the cut leading part and
/// `G^s = (G - G^c) / eps` where `G = S Psi`.
pub fn split_gc_gs(
    b: &AnsatzBundle,
    t: f64,
) -> Result<((SpectralField, SpectralField), (SpectralField, SpectralField))> {
    let lead = b.leading_cut(t)?;
    let s = b.sigma();
    let gc1 = lead.scaled((1.0 + s) * FRAC_1_SQRT_2);
    let gc2 = lead.scaled((1.0 - s) * FRAC_1_SQRT_2);
    let k0 = b.carrier.k0;
    for (j, &k) in b.grid.wavenumbers().iter().enumerate() {
        if (k.abs() - k0).abs() >= b.delta
            && (gc1.coeffs()[j].norm() != 0.0 || gc2.coeffs()[j].norm() != 0.0)
        {
            return Err(Error::SupportViolation(format!(
                "G^c has content at k = {k} outside |k -+ k0| < {}",
                b.delta
            )));
        }
    }
    let (u, v) = b.psi(t)?;
    let inv = 1.0 / b.eps;
    let g1 = u.add(&v)?.scaled(FRAC_1_SQRT_2 * inv);
    let g2 = u.sub(&v)?.scaled(FRAC_1_SQRT_2 * inv);
    let gs1 = g1.sub(&gc1)?.scaled(inv);
    let gs2 = g2.sub(&gc2)?.scaled(inv);
    Ok(((gc1, gc2), (gs1, gs2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn bundle(eps: f64, amp: f64, phi: PhiChoice) -> AnsatzBundle {
        let c = CarrierData::new(1.0).unwrap();
        let l = 2.0 * PI * (60.0 / eps / (2.0 * PI)).round();
        let g = make_grid(1024, l).unwrap();
        let slow = make_grid(256, eps * l).unwrap();
        let xc = 0.5 * eps * l;
        let a0 = NlsState::from_fn(&slow, |x| Complex64::new(amp * (-(x - xc).powi(2) / 9.0).exp(), 0.0));
        AnsatzBundle::new(c, eps, 0.3, phi, &g, a0).unwrap()
    }

    #[test]
    fn zero_envelope_gives_zero_fields() {
        let b = build_corrections(&bundle(0.1, 0.0, PhiChoice::Plus)).unwrap();
        let (u, v) = b.psi(0.0).unwrap();
        assert_eq!(u.l2_norm() + v.l2_norm(), 0.0);
        let r = residual(&b, 0.0).unwrap();
        assert_eq!(r.res_h2 + r.res_weighted + r.res_sup, 0.0);
        for p in b.correction_amps.values() {
            assert!(p.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn leading_packet_profile_at_t0() {
        let eps = 0.1;
        let b = bundle(eps, 0.5, PhiChoice::Plus);
        let (u, _) = build_psi_nls(&b, 0.0).unwrap();
        let l = b.grid.length();
        let x = b.grid.points();
        let phys = u.to_physical();
        for (xi, ui) in x.iter().zip(&phys) {
            let env = 0.5 * (-(eps * xi - 0.5 * eps * l).powi(2) / 9.0).exp();
            assert!((ui - 2.0 * eps * env * xi.cos()).abs() < 1e-10);
        }
        assert!((u.sup_norm() - 2.0 * eps * 0.5).abs() < 1e-3);
        let (u, v) = build_psi_nls(&bundle(eps, 0.5, PhiChoice::Minus), 0.0).unwrap();
        assert!(u.add(&v).unwrap().l2_norm() < 1e-15);
    }

    #[test]
    fn psi_is_real_and_cutoff_is_banded() {
        let mut b = build_corrections(&bundle(0.1, 0.5, PhiChoice::Plus)).unwrap().with_cutoff(true);
        b.advance_to(20.0).unwrap();
        let (u, v) = b.psi(20.0).unwrap();
        assert!(u.is_real(1e-12) && v.is_real(1e-12));
        for (j, &k) in b.grid.wavenumbers().iter().enumerate() {
            let inside = [0.0, 1.0, 2.0].iter().any(|c| (k.abs() - c).abs() < b.delta);
            if !inside {
                assert_eq!(u.coeffs()[j].norm(), 0.0, "k = {k}");
            }
        }
        assert!(matches!(b.psi(10.0), Err(Error::Unsynchronized { .. })));
    }

    #[test]
    fn cutoff_examples() {
        let g = make_grid(64, 2.0 * PI).unwrap();
        let f = SpectralField::from_fn(&g, |x| (3.0 * x).cos());
        assert_eq!(fourier_cutoff(&f, 3.0, 0.5).mode(3), f.mode(3));
        let h = SpectralField::from_fn(&g, |x| (6.0 * x).cos());
        assert!(fourier_cutoff(&h, 3.0, 0.5).l2_norm() < 1e-15);
        let once = fourier_cutoff(&f, 2.5, 1.0);
        assert_eq!(fourier_cutoff(&once, 2.5, 1.0).coeffs(), once.coeffs());
    }

    #[test]
    fn second_harmonic_scales_quadratically() {
        let b1 = build_corrections(&bundle(0.1, 0.2, PhiChoice::Plus)).unwrap();
        let b2 = build_corrections(&bundle(0.1, 0.6, PhiChoice::Plus)).unwrap();
        let p1 = &b1.correction_amps[&(2, 2)];
        let p2 = &b2.correction_amps[&(2, 2)];
        for (x, y) in p1.iter().zip(p2) {
            assert!((y - 9.0 * x).norm() < 1e-14);
        }
    }

    #[test]
    fn time_derivative_matches_finite_difference() {
        let eps = 0.1;
        let b = build_corrections(&bundle(eps, 0.5, PhiChoice::Plus)).unwrap();
        let t0 = 3.0;
        let h = 1e-3;
        let eval = |t: f64| {
            let mut c = b.clone();
            c.nls_max_dt = 1e-6;
            c.advance_to(t).unwrap();
            c
        };
        let mid = eval(t0);
        let f = mid.fields(t0, 1).unwrap();
        let up = eval(t0 + h).psi(t0 + h).unwrap();
        let dn = eval(t0 - h).psi(t0 - h).unwrap();
        let fd = up.0.sub(&dn.0).unwrap().scaled(0.5 / h);
        let err = fd.sub(&f[1].0).unwrap().l2_norm() / f[1].0.l2_norm();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn gc_is_supported_in_bands() {
        let b = build_corrections(&bundle(0.1, 0.5, PhiChoice::Plus)).unwrap();
        let ((gc1, gc2), _) = split_gc_gs(&b, 0.0).unwrap();
        assert_eq!(gc2.l2_norm(), 0.0);
        for (j, &k) in b.grid.wavenumbers().iter().enumerate() {
            if (k.abs() - 1.0).abs() >= b.delta {
                assert_eq!(gc1.coeffs()[j].norm(), 0.0);
            }
        }
    }
}

//! Error variables and the modified energy `E = E0 + E1 + E2`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::Serialize;

use crate::ansatz::{split_gc_gs, AnsatzBundle};
use crate::error::{Error, Result};
use crate::solvers::ModelState;
use crate::spectral::{
    check_vartheta_params, product_exact, vartheta_unchecked, MultiplierSymbol, SpectralField,
    SQRT_2PI,
};
use crate::wavetrain::{omega_prime, phase, Branch, PhaseIndex};

/// Scaled error `R` with `(u, v) = eps Psi + eps^beta vartheta R`.
#[derive(Debug, Clone)]
pub struct ErrorState {
    pub r1: SpectralField,
    pub r2: SpectralField,
    pub beta: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Energy diagnostics at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub e_total: f64,
    /// `||R||_L2^2 + ||d_x^2 R||_L2^2`, the H^2 norm that `E0` is built on.
    pub h2_sq: f64,
    /// `sum (1 + k^2)^2 |R_hat|^2 dk`.
    pub h2_sq_sobolev: f64,
    pub defect: f64,
    pub gronwall_ratio: f64,
    /// Largest `|omega_j(k) / phi|` met while forming `E2`.
    pub kernel_sup: f64,
}

impl ErrorState {
    pub fn new(r1: SpectralField, r2: SpectralField, beta: f64, eps: f64, delta: f64) -> Result<Self> {
        if !r1.same_grid(&r2) {
            return Err(Error::GridMismatch);
        }
        check_vartheta_params(eps, delta)?;
        Ok(Self {
            r1,
            r2,
            beta,
            eps,
            delta,
        })
    }

    /// Diagonal variables `F = S R`.
    pub fn diagonal(&self) -> Result<(SpectralField, SpectralField)> {
        Ok((
            self.r1.add(&self.r2)?.scaled(FRAC_1_SQRT_2),
            self.r1.sub(&self.r2)?.scaled(FRAC_1_SQRT_2),
        ))
    }
}

/// `R = vartheta^{-1} ((u, v) - eps Psi) / eps^beta`.
pub fn extract_error(model: &ModelState, b: &AnsatzBundle, beta: f64) -> Result<ErrorState> {
    let (pu, pv) = b.psi(model.t)?;
    let winv = MultiplierSymbol::vartheta_inverse(b.eps, b.delta)?.tabulate(&b.grid);
    let scale = b.eps.powf(-beta);
    let r1 = winv.apply(&model.u.sub(&pu)?)?.scaled(scale);
    let r2 = winv.apply(&model.v.sub(&pv)?)?.scaled(scale);
    ErrorState::new(r1, r2, beta, b.eps, b.delta)
}

fn weighted_sq(f: &SpectralField, w: impl Fn(f64) -> f64) -> f64 {
    f.coeffs()
        .iter()
        .zip(f.grid().wavenumbers())
        .map(|(c, &k)| w(k) * c.norm_sqr())
        .sum::<f64>()
        * f.grid().dk()
}

/// `integral R1^2 + R2^2 + (R1'')^2 + (R2'')^2 dx`.
pub fn energy_e0(e: &ErrorState) -> f64 {
    let w = |k: f64| 1.0 + k.powi(4);
    weighted_sq(&e.r1, w) + weighted_sq(&e.r2, w)
}

/// `integral (2 eps Psi_1 + 2 eps^beta vartheta R1) (R1'')^2 dx`.
pub fn energy_e1(e: &ErrorState, b: &AnsatzBundle, t: f64) -> Result<f64> {
    let (u, _) = b.psi(t)?;
    let th = MultiplierSymbol::vartheta(e.eps, e.delta)?.tabulate(e.r1.grid());
    let weight = u
        .scaled(2.0)
        .axpy(2.0 * e.eps.powf(e.beta), &th.apply(&e.r1)?)?;
    let d2 = MultiplierSymbol::derivative(2).tabulate(e.r1.grid()).apply(&e.r1)?;
    let sq = product_exact(&d2, &d2)?;
    weight.inner(&sq)
}

/// Limit of `omega_j(k) / phi^j_{mn}(k, l)` as `k -> 0` at fixed `l != 0`.
fn kernel_limit_at_zero(idx: PhaseIndex, l: f64) -> f64 {
    if idx.m != idx.n {
        return 0.0;
    }
    let sj = idx.j.sign();
    let wp = omega_prime(l.abs()).unwrap_or(1.0);
    sj / (idx.m.sign() * wp - sj)
}

/// `omega_j(k) / phi^j_{mn}(k, l)`, with the removable point `k = 0` filled in.
pub fn resonance_kernel(idx: PhaseIndex, k: f64, l: f64) -> Result<f64> {
    if k == 0.0 {
        return Ok(kernel_limit_at_zero(idx, l));
    }
    let p = phase(idx, k, l);
    if p.abs() < 1e-10 {
        return Err(Error::KernelDenominator {
            k,
            l,
            value: p,
            branches: idx.label(),
        });
    }
    Ok(idx.j.omega(k) / p)
}

/// `B_j(G^c, F)` on `|k| < delta`, together with the largest kernel magnitude met.
pub fn bilinear_b(
    j: Branch,
    gc: (&SpectralField, &SpectralField),
    f: (&SpectralField, &SpectralField),
    eps: f64,
    delta: f64,
) -> Result<(SpectralField, f64)> {
    check_vartheta_params(eps, delta)?;
    let grid = gc.0.grid();
    if !(gc.0.same_grid(gc.1) && gc.0.same_grid(f.0) && gc.0.same_grid(f.1)) {
        return Err(Error::GridMismatch);
    }
    let n = grid.n() as i64;
    let dk = grid.dk();
    let gcs = [gc.0, gc.1];
    let fs = [f.0, f.1];
    let supports: Vec<Vec<(i64, Complex64)>> = gcs
        .iter()
        .map(|g| {
            g.coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() != 0.0)
                .map(|(i, &c)| (grid.mode_of(i), c))
                .collect()
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n()];
    let mut kernel_sup: f64 = 0.0;
    let prefactor = FRAC_1_SQRT_2 / SQRT_2PI * dk;
    let kmax_mode = (delta / dk).ceil() as i64;
    for mk in -kmax_mode..=kmax_mode {
        let k = mk as f64 * dk;
        if k.abs() >= delta || mk.abs() >= n / 2 {
            continue;
        }
        let th_k = vartheta_unchecked(k, eps, delta);
        let mut acc = Complex64::new(0.0, 0.0);
        for (mi, m) in Branch::BOTH.into_iter().enumerate() {
            for &(mp, gval) in &supports[mi] {
                let ml = mk - mp;
                if ml.abs() >= n / 2 {
                    continue;
                }
                let l = ml as f64 * dk;
                let ratio = vartheta_unchecked(l, eps, delta) / th_k;
                let slot = ml.rem_euclid(n) as usize;
                for (ni, nb) in Branch::BOTH.into_iter().enumerate() {
                    let fv = fs[ni].coeffs()[slot];
                    if fv.norm() == 0.0 {
                        continue;
                    }
                    let kern = resonance_kernel(PhaseIndex { j, m, n: nb }, k, l)?;
                    kernel_sup = kernel_sup.max(kern.abs());
                    acc += kern * ratio * gval * fv;
                }
            }
        }
        out[mk.rem_euclid(n) as usize] = acc * prefactor;
    }
    Ok((SpectralField::from_coeffs(grid, out)?, kernel_sup))
}

/// `E2` from explicit `G^c` and `F`, returning `(E2, kernel sup)`.
pub fn energy_e2_from(
    gc: (&SpectralField, &SpectralField),
    f: (&SpectralField, &SpectralField),
    eps: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    let dk = f.0.grid().dk();
    let mut total = 0.0;
    let mut sup: f64 = 0.0;
    for (j, fj) in Branch::BOTH.into_iter().zip([f.0, f.1]) {
        let (bj, s) = bilinear_b(j, gc, f, eps, delta)?;
        sup = sup.max(s);
        for ((fc, bc), &k) in fj.coeffs().iter().zip(bj.coeffs()).zip(fj.grid().wavenumbers()) {
            if k.abs() < delta {
                total += (2.0 * eps * (fc.conj() * bc).re + 2.0 * eps * eps * bc.norm_sqr()) * dk;
            }
        }
    }
    Ok((total, sup))
}

/// `E2 = sum_j integral_{|k|<delta} 2 eps Re(conj(F_j) B_j) + 2 eps^2 |B_j|^2 dk`.
pub fn energy_e2(e: &ErrorState, b: &AnsatzBundle, t: f64) -> Result<f64> {
    Ok(energy_e2_parts(e, b, t)?.0)
}

fn energy_e2_parts(e: &ErrorState, b: &AnsatzBundle, t: f64) -> Result<(f64, f64)> {
    let ((gc1, gc2), _) = split_gc_gs(b, t)?;
    let (f1, f2) = e.diagonal()?;
    energy_e2_from((&gc1, &gc2), (&f1, &f2), e.eps, e.delta)
}

/// All energy terms and the equivalence defect; `gronwall_ratio` is left at 0.
pub fn energy_total(e: &ErrorState, b: &AnsatzBundle, t: f64) -> Result<EnergyReport> {
    let e0 = energy_e0(e);
    let e1 = energy_e1(e, b, t)?;
    let (e2, kernel_sup) = energy_e2_parts(e, b, t)?;
    let e_total = e0 + e1 + e2;
    let h2_sq = e0;
    let h2_sq_sobolev = e.r1.sobolev_norm(2.0).powi(2) + e.r2.sobolev_norm(2.0).powi(2);
    let defect = if h2_sq > 0.0 {
        (e_total - h2_sq).abs() / h2_sq
    } else {
        0.0
    };
    Ok(EnergyReport {
        t,
        e0,
        e1,
        e2,
        e_total,
        h2_sq,
        h2_sq_sobolev,
        defect,
        gronwall_ratio: 0.0,
        kernel_sup,
    })
}

fn gronwall_ratios(reports: &[EnergyReport], eps: f64) -> Result<Vec<f64>> {
    if reports.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: reports.len(),
        });
    }
    let mut out = Vec::with_capacity(reports.len() - 1);
    for (i, w) in reports.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::NonMonotoneTime(i + 1));
        }
        let e = w[0].e_total;
        let rate = (w[1].e_total - e) / dt;
        out.push(rate / (eps * eps * (1.0 + e) + eps.powi(3) * e * e));
    }
    Ok(out)
}

/// Largest `(dE/dt) / (eps^2 (1 + E) + eps^3 E^2)` over consecutive samples.
pub fn gronwall_monitor(reports: &[EnergyReport], eps: f64) -> Result<f64> {
    Ok(gronwall_ratios(reports, eps)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Stores the ratio over `[t_{i-1}, t_i]` in sample `i`; sample 0 gets 0.
pub fn annotate_gronwall(reports: &mut [EnergyReport], eps: f64) -> Result<()> {
    let r = gronwall_ratios(reports, eps)?;
    reports[0].gronwall_ratio = 0.0;
    for (rep, v) in reports[1..].iter_mut().zip(r) {
        rep.gronwall_ratio = v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn e0_of_cosine() {
        let g = make_grid(32, 2.0 * PI).unwrap();
        let r1 = SpectralField::from_fn(&g, f64::cos);
        let e = ErrorState::new(r1, SpectralField::zeros(&g), 3.0, 0.1, 0.3).unwrap();
        assert!((energy_e0(&e) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn e0_matches_physical_integral() {
        let g = make_grid(128, 20.0).unwrap();
        let f = |x: f64| (-(x - 10.0).powi(2)).exp() * (3.0 * x).sin();
        let r1 = SpectralField::from_fn(&g, f);
        let r2 = SpectralField::from_fn(&g, |x| 0.5 * f(x + 1.0));
        let e = ErrorState::new(r1.clone(), r2.clone(), 3.0, 0.1, 0.3).unwrap();
        let d2 = MultiplierSymbol::derivative(2);
        let phys = |h: &SpectralField| h.to_physical().iter().map(|v| v * v).sum::<f64>() * g.dx();
        let direct = phys(&r1)
            + phys(&r2)
            + phys(&crate::spectral::apply_multiplier(&r1, &d2))
            + phys(&crate::spectral::apply_multiplier(&r2, &d2));
        assert!((energy_e0(&e) - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn kernel_limit_is_continuous() {
        for idx in PhaseIndex::all() {
            for l in [-1.1, -0.9, 0.95, 1.2] {
                let lim = resonance_kernel(idx, 0.0, l).unwrap();
                let near = resonance_kernel(idx, 1e-6, l).unwrap();
                assert!((lim - near).abs() < 1e-4, "{} at l = {l}: {lim} vs {near}", idx.label());
            }
        }
    }

    #[test]
    fn gronwall_examples() {
        let rep = |t: f64, e: f64| EnergyReport {
            t,
            e0: e,
            e1: 0.0,
            e2: 0.0,
            e_total: e,
            h2_sq: e,
            h2_sq_sobolev: e,
            defect: 0.0,
            gronwall_ratio: 0.0,
            kernel_sup: 0.0,
        };
        let flat = [rep(0.0, 1.0), rep(1.0, 1.0), rep(2.0, 1.0)];
        assert_eq!(gronwall_monitor(&flat, 0.1).unwrap(), 0.0);
        let bad = [rep(0.0, 1.0), rep(0.0, 1.0)];
        assert!(matches!(gronwall_monitor(&bad, 0.1), Err(Error::NonMonotoneTime(1))));
        assert!(gronwall_monitor(&flat[..1], 0.1).is_err());
        let grow = [rep(0.0, 0.0), rep(1.0, 0.01)];
        assert!((gronwall_monitor(&grow, 0.1).unwrap() - 1.0).abs() < 1e-12);
    }
}

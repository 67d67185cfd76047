use std::sync::Arc;

use packetlab::energy::bilinear_b;
use packetlab::harness::fit_scaling;
use packetlab::resonance::{kernel_certify, partition, Envelope, KernelId, PlaneGrid, Region};
use packetlab::solvers::{diagonalize, linear_flow, undiagonalize, ModelState};
use packetlab::wavetrain::phase;
use packetlab::{
    apply_multiplier, make_grid, vartheta_symbol, Branch, MultiplierSymbol, PhaseIndex,
    SpectralField, SpectralGrid,
};
use proptest::prelude::*;

fn field(grid: &Arc<SpectralGrid>, values: &[f64]) -> SpectralField {
    SpectralField::from_physical(grid, values).unwrap()
}

fn inner(a: &SpectralField, b: &SpectralField) -> f64 {
    let dx = a.grid().dx();
    a.to_physical().iter().zip(b.to_physical()).map(|(x, y)| x * y * dx).sum()
}

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn phase_index() -> impl Strategy<Value = PhaseIndex> {
    (1u8..=2, 1u8..=2, 1u8..=2).prop_map(|(j, m, n)| PhaseIndex::new(j, m, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_and_plancherel(u in samples(64), length in 1.0f64..200.0) {
        let g = make_grid(64, length).unwrap();
        let f = field(&g, &u);
        let back = f.to_physical();
        for (a, b) in u.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let physical: f64 = u.iter().map(|x| x * x).sum::<f64>() * g.dx();
        let spectral = f.l2_norm().powi(2);
        prop_assert!((physical - spectral).abs() <= 1e-10 * physical.max(1.0));
    }

    #[test]
    fn real_symbols_keep_fields_real(u in samples(48)) {
        let g = make_grid(48, 30.0).unwrap();
        let f = field(&g, &u);
        for m in [
            MultiplierSymbol::big_omega(),
            MultiplierSymbol::lambda(),
            MultiplierSymbol::big_omega_squared(),
            MultiplierSymbol::derivative(3),
        ] {
            prop_assert!(apply_multiplier(&f, &m).is_real(1e-12));
        }
    }

    #[test]
    fn omega_is_antisymmetric(u in samples(64), v in samples(64)) {
        let g = make_grid(64, 25.0).unwrap();
        let (f, h) = (field(&g, &u), field(&g, &v));
        let om = MultiplierSymbol::big_omega();
        let lhs = inner(&apply_multiplier(&f, &om), &h);
        let rhs = inner(&f, &apply_multiplier(&h, &om));
        prop_assert!((lhs + rhs).abs() < 1e-10);
    }

    #[test]
    fn omega_twice_is_omega_squared(u in samples(32)) {
        let g = make_grid(32, 12.0).unwrap();
        // Odd symbols drop the unpaired Nyquist mode, so compare without it.
        let nyquist = g.k_max();
        let f = field(&g, &u).masked(|k| k.abs() < nyquist);
        let om = MultiplierSymbol::big_omega();
        let twice = apply_multiplier(&apply_multiplier(&f, &om), &om);
        let direct = apply_multiplier(&f, &MultiplierSymbol::big_omega_squared());
        prop_assert!(twice.sub(&direct).unwrap().l2_norm() < 1e-12 * (1.0 + direct.l2_norm()));
    }

    #[test]
    fn linear_flow_is_unitary(u in samples(64), v in samples(64), dt in 0.0f64..5.0) {
        let g = make_grid(64, 40.0).unwrap();
        let s = ModelState::new(field(&g, &u), field(&g, &v), 0.0).unwrap();
        let d = diagonalize(&s).unwrap();
        let moved = undiagonalize(&linear_flow(&d, dt)).unwrap();
        prop_assert!((moved.l2_norm() - s.l2_norm()).abs() < 1e-12 * (1.0 + s.l2_norm()));
        let back = undiagonalize(&d).unwrap();
        prop_assert!(back.u.sub(&s.u).unwrap().l2_norm() < 1e-12 * (1.0 + s.l2_norm()));
    }

    #[test]
    fn vartheta_stays_between_eps_and_one(k in -10.0f64..10.0, eps in 0.001f64..0.5, delta in 0.05f64..1.0) {
        let t = vartheta_symbol(k, eps, delta).unwrap();
        prop_assert!(t >= eps - 1e-15 && t <= 1.0 + 1e-15);
        prop_assert_eq!(t, vartheta_symbol(-k, eps, delta).unwrap());
    }

    #[test]
    fn phase_is_odd(idx in phase_index(), k in -5.0f64..5.0, l in -5.0f64..5.0) {
        prop_assert!((phase(idx, -k, -l) + phase(idx, k, l)).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_power(p in 0.5f64..4.0, c in 0.01f64..100.0) {
        let pts: Vec<(f64, f64)> = [0.2f64, 0.1, 0.05, 0.025].iter().map(|&e| (e, c * e.powf(p))).collect();
        let fit = fit_scaling(&pts).unwrap();
        prop_assert!((fit.slope - p).abs() < 1e-10);
        prop_assert!(fit.max_log_residual < 1e-10);
    }

    #[test]
    fn partition_covers_grid_once(k0 in 0.5f64..2.0, frac in 0.05f64..0.33) {
        let grid = PlaneGrid::around(k0, 61);
        let p = partition(k0, frac * k0, &grid).unwrap();
        prop_assert!(p.check_invariants().is_ok());
        let total: usize = [Region::V, Region::W, Region::Z, Region::Outside].iter().map(|&r| p.count(r)).sum();
        prop_assert_eq!(total, 61 * 61);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn bilinear_b_is_linear_in_f(a in -3.0f64..3.0, u in samples(64), v in samples(64)) {
        let g = make_grid(64, 20.0 * std::f64::consts::PI).unwrap();
        let carrier = |x: f64| (-(x - 31.4).powi(2) / 40.0).exp() * x.cos();
        let band = |k: f64| (k.abs() - 1.0).abs() < 0.3;
        let gc = SpectralField::from_fn(&g, carrier).masked(band);
        let gs = SpectralField::from_fn(&g, |x| 0.5 * carrier(x)).masked(band);
        let (f1, f2) = (field(&g, &u), field(&g, &v));
        let zero = SpectralField::zeros(&g);
        let combo = f1.axpy(a, &f2).unwrap();
        let b = |f: &SpectralField| bilinear_b(Branch::Plus, (&gc, &gs), (f, &zero), 0.1, 0.3).unwrap().0;
        let lhs = b(&combo);
        let rhs = b(&f1).axpy(a, &b(&f2)).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-10 * (1.0 + lhs.l2_norm()));
    }

    #[test]
    fn certificates_are_deterministic(kernel in 0usize..6, region in 0usize..3) {
        let region = [Region::V, Region::W, Region::Z][region];
        let envelope = if region == Region::Z { Envelope::AbsK } else { Envelope::Constant };
        let grid = PlaneGrid::around(1.0, 61);
        let run = || kernel_certify(KernelId::ALL[kernel], region, envelope, false, 1.0, 0.3, 0.1, &grid).unwrap();
        let (a, b) = (run(), run());
        prop_assert_eq!(a.measured_sup.to_bits(), b.measured_sup.to_bits());
        prop_assert_eq!(a.refined_sup.to_bits(), b.refined_sup.to_bits());
        prop_assert_eq!(a.worst_point, b.worst_point);
    }
}

#[test]
fn omega_on_single_mode_matches_dispersion() {
    let g = make_grid(64, 2.0 * std::f64::consts::PI).unwrap();
    let f = SpectralField::from_fn(&g, |x| (3.0 * x).cos());
    let out = apply_multiplier(&f, &MultiplierSymbol::big_omega());
    let w = (3.0f64 * 3.0f64.tanh()).sqrt();
    let expected = SpectralField::from_fn(&g, |x| -w * (3.0 * x).sin());
    assert!(out.sub(&expected).unwrap().sup_norm() < 1e-12);
}

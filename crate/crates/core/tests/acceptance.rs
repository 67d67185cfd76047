//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any of them fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use packetlab::estimates::{run_suite, SuiteSettings};
use packetlab::harness::{
    energy_equivalence, fit_scaling, run_convergence_sweep, run_residual_study, ExperimentConfig,
};
use packetlab::resonance::{
    partition, standard_certificates, time_resonances, KernelId, PlaneGrid, Region,
};
use packetlab::solvers::{ModelState, ModelStepper, NlsState, NlsStepper};
use packetlab::{make_grid, PhaseIndex, SpectralField, SpectralGrid, SweepReport};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn failed(e: impl std::fmt::Display) -> Verdict {
    verdict(false, format!("error: {e}"))
}

fn scaling(report: &SweepReport) -> Verdict {
    let Some(fit) = report.fit else {
        return verdict(false, "no fit".into());
    };
    let flags = report.rows.iter().all(|r| r.slope_flag);
    let rows: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{}:{:.4e}", r.eps, r.sup_error))
        .collect();
    verdict(
        fit.slope >= 1.4 && fit.max_log_residual <= 0.15 && flags,
        format!(
            "slope {:.3}, max log residual {:.4}, doubling flags {} [{}]",
            fit.slope,
            fit.max_log_residual,
            if flags { "ok" } else { "FAILED" },
            rows.join(" ")
        ),
    )
}

fn residual_gap(cfg: &ExperimentConfig) -> Verdict {
    match run_residual_study(cfg) {
        Ok(s) => verdict(
            s.gap >= 0.9,
            format!(
                "naive order {:.3}, corrected order {:.3}, gap {:.3}",
                s.naive.slope, s.corrected.slope, s.gap
            ),
        ),
        Err(e) => failed(e),
    }
}

fn equivalence(cfg: &ExperimentConfig) -> Verdict {
    let mut defects = Vec::new();
    for eps in [0.1, 0.05, 0.02] {
        match energy_equivalence(cfg, eps, 100, cfg.seed) {
            Ok(r) => defects.push(r.max_defect),
            Err(e) => return failed(e),
        }
    }
    let trend = defects.windows(2).all(|w| w[1] <= w[0]);
    let last = defects[2];
    verdict(
        last <= 0.25 && trend,
        format!(
            "max defect {:.4} at eps=0.02, trend {:.4} -> {:.4} -> {:.4}",
            last, defects[0], defects[1], defects[2]
        ),
    )
}

fn gronwall(report: &SweepReport) -> Verdict {
    let (Some(spread), Some(c)) = (report.energy_spread(), report.gronwall_constant()) else {
        return verdict(false, "energy not tracked".into());
    };
    let below = report
        .energy
        .iter()
        .flat_map(|(_, reps)| reps.iter())
        .all(|r| r.gronwall_ratio.is_finite() && r.gronwall_ratio <= c);
    verdict(
        spread < 2.0 && c.is_finite() && below,
        format!("sup E spread {spread:.3}, gronwall constant {c:.4e}"),
    )
}

fn appendix_suite() -> Verdict {
    let start = Instant::now();
    let results = match run_suite(&SuiteSettings::default()) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let bad: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let quotient = results
        .iter()
        .find(|r| r.name.starts_with("quotient"))
        .map(|r| r.measured_ratio)
        .unwrap_or(f64::NAN);
    verdict(
        bad.is_empty() && elapsed <= 120.0,
        format!(
            "{} checks, quotient max {:.4}, {:.1}s{}",
            results.len(),
            quotient,
            elapsed,
            if bad.is_empty() { String::new() } else { format!(", failing: {}", bad.join(", ")) }
        ),
    )
}

fn resonance() -> Verdict {
    let (k0, delta, eps) = (1.0, 0.3, 0.1);
    let grid = PlaneGrid::around(k0, 401);
    let part = match partition(k0, delta, &grid) {
        Ok(p) => p,
        Err(e) => return failed(e),
    };
    if let Err(e) = part.check_invariants() {
        return failed(e);
    }
    // The exported file must carry exactly one label per grid point.
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return failed(e),
    };
    let path = dir.path().join("partition.csv");
    if let Err(e) = part.write_csv(&path) {
        return failed(e);
    }
    let text = std::fs::read_to_string(&path).unwrap_or_default();
    let mut lines = text.lines();
    let header_ok = lines.next() == Some("k,l,label");
    let labels: Vec<&str> = lines.filter_map(|l| l.rsplit(',').next()).collect();
    let export_ok = header_ok
        && labels.len() == grid.points * grid.points
        && labels.iter().zip(&part.labels).all(|(s, r)| *s == r.to_string());

    let mut off_line = 0;
    for idx in PhaseIndex::all() {
        match time_resonances(idx, 1e-3, &grid) {
            Ok(set) => off_line += set.off_line_clusters,
            Err(e) => return failed(e),
        }
    }

    let certs = match standard_certificates(k0, delta, eps, &grid) {
        Ok(c) => c,
        Err(e) => return failed(e),
    };
    let is_raw_z_a1 =
        |c: &&packetlab::KernelCertificate| c.kernel == KernelId::A1 && c.region == Region::Z && !c.normal_form_corrected;
    let required: Vec<_> = certs.iter().filter(|c| !is_raw_z_a1(c)).collect();
    let certified = required.iter().filter(|c| c.pass).count();
    let raw = certs.iter().find(is_raw_z_a1);
    let raw_note = raw
        .map(|c| format!("raw a1 on Z sup {:.3e} -> {:.3e}", c.measured_sup, c.refined_sup))
        .unwrap_or_default();
    verdict(
        export_ok && off_line == 0 && certified == required.len(),
        format!(
            "invariants ok, export {}, off-line clusters {}, certificates {}/{} ({})",
            if export_ok { "ok" } else { "MISMATCH" },
            off_line,
            certified,
            required.len(),
            raw_note
        ),
    )
}

fn smooth_state(grid: &Arc<SpectralGrid>, amp: f64) -> ModelState {
    let l = grid.length();
    let c = l / 2.0;
    let u = SpectralField::from_fn(grid, |x| amp * (-(x - c).powi(2) / 4.0).exp() * (x - c).cos());
    let v = SpectralField::from_fn(grid, |x| 0.5 * amp * (-(x - c).powi(2) / 9.0).exp());
    ModelState::new(u, v, 0.0).expect("same grid")
}

fn integrate(init: &ModelState, dt: f64, steps: usize, nonlinear: bool) -> packetlab::Result<ModelState> {
    let stepper = ModelStepper::new(init.grid(), dt, nonlinear)?;
    let mut s = init.clone();
    for _ in 0..steps {
        stepper.step(&mut s)?;
    }
    Ok(s)
}

fn distance(a: &ModelState, b: &ModelState) -> f64 {
    let du = a.u.sub(&b.u).map(|f| f.l2_norm()).unwrap_or(f64::NAN);
    let dv = a.v.sub(&b.v).map(|f| f.l2_norm()).unwrap_or(f64::NAN);
    du.hypot(dv)
}

fn solver_sanity() -> Verdict {
    let run = || -> packetlab::Result<(f64, f64, f64)> {
        let grid = make_grid(256, 40.0 * std::f64::consts::PI)?;
        let init = smooth_state(&grid, 1.0);
        let end = integrate(&init, 0.05, 10_000, false)?;
        let drift = (end.l2_norm() - init.l2_norm()).abs() / init.l2_norm();

        let slow = make_grid(64, 2.0 * std::f64::consts::PI)?;
        let (a, kappa, nu1, nu2) = (0.7, 3.0, -0.125, 0.35);
        let mut s = NlsState::from_fn(&slow, |x| Complex64::from_polar(a, kappa * x));
        let stepper = NlsStepper::new(&slow, 1e-3, nu1, nu2)?;
        for _ in 0..1000 {
            stepper.step(&mut s)?;
        }
        let freq = -nu1 * kappa * kappa + nu2 * a * a;
        let xs = slow.points();
        let plane = s
            .a
            .iter()
            .zip(&xs)
            .map(|(z, &x)| (z - Complex64::from_polar(a, kappa * x + freq)).norm())
            .fold(0.0, f64::max);

        let grid = make_grid(128, 16.0 * std::f64::consts::PI)?;
        let init = smooth_state(&grid, 0.5);
        let t_end = 2.0;
        let reference = integrate(&init, t_end / 6400.0, 6400, true)?;
        let errs: Vec<f64> = [20usize, 40, 80]
            .iter()
            .map(|&m| integrate(&init, t_end / m as f64, m, true).map(|s| distance(&s, &reference)))
            .collect::<packetlab::Result<_>>()?;
        let fit = fit_scaling(&[(t_end / 20.0, errs[0]), (t_end / 40.0, errs[1]), (t_end / 80.0, errs[2])])?;
        Ok((drift, plane, fit.slope))
    };
    match run() {
        Ok((drift, plane, order)) => verdict(
            drift <= 1e-10 && plane <= 1e-8 && order >= 1.9,
            format!("L2 drift {drift:.2e}, plane-wave error {plane:.2e}, splitting order {order:.3}"),
        ),
        Err(e) => failed(e),
    }
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::default();
    let sweep = run_convergence_sweep(&cfg);
    let verdicts = [
        ("approximation scaling", match &sweep {
            Ok(r) => scaling(r),
            Err(e) => failed(e),
        }),
        ("residual order gap", residual_gap(&cfg)),
        ("energy equivalence", equivalence(&cfg)),
        ("gronwall boundedness", match &sweep {
            Ok(r) => gronwall(r),
            Err(e) => failed(e),
        }),
        ("estimate suite", appendix_suite()),
        ("resonance partition", resonance()),
        ("solver sanity", solver_sanity()),
    ];
    let mut ok = true;
    for (i, (name, v)) in verdicts.iter().enumerate() {
        ok &= v.pass;
        println!(
            "criterion {} ({}): {} - {}",
            i + 1,
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

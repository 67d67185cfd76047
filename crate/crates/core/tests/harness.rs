use packetlab::estimates::gc_lr_exponent;
use packetlab::harness::{
    emit_sweep, fit_scaling, perturbation_check, run_convergence_sweep, run_single, write_json,
    write_sweep_csv, ExperimentConfig, ProfileKind, RunOptions, Summary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.eps_list = vec![0.2, 0.15, 0.1];
    cfg.t0 = 0.1;
    cfg.time.samples = 20;
    cfg.doubling_check = false;
    cfg
}

#[test]
fn linear_sweep_converges_at_second_order() {
    let mut cfg = ExperimentConfig::default();
    cfg.nonlinear = false;
    cfg.track_energy = false;
    let report = run_convergence_sweep(&cfg).unwrap();
    assert!(report.rows.iter().all(|r| r.slope_flag), "{:?}", report.rows);
    let fit = report.fit.unwrap();
    assert!(fit.slope >= 1.9, "slope {}", fit.slope);
}

#[test]
fn rows_are_sorted_and_slope_finite() {
    let mut cfg = quick_config();
    cfg.eps_list = vec![0.2, 0.12, 0.1];
    let report = run_convergence_sweep(&cfg).unwrap();
    let eps: Vec<f64> = report.rows.iter().map(|r| r.eps).collect();
    assert_eq!(eps, vec![0.1, 0.12, 0.2]);
    assert!(report.fit.unwrap().slope.is_finite());
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = quick_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let report = run_convergence_sweep(&cfg).unwrap();
        let mut summary = Summary::new(&cfg);
        emit_sweep(&report, d.path(), &mut summary).unwrap();
        write_json(&d.path().join("summary.json"), &summary).unwrap();
    }
    for name in ["sweep.csv", "energy.csv", "summary.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "eps,sup_error,slope_flag,n,L,dt\n");
}

#[test]
fn summary_round_trips_through_json() {
    let cfg = quick_config();
    let mut summary = Summary::new(&cfg);
    summary.checks.insert("resolution".into(), true);
    summary.values.insert("gronwall_constant".into(), 12.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.json");
    write_json(&path, &summary).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["checks"]["resolution"], serde_json::Value::Bool(true));
    assert_eq!(v["values"]["gronwall_constant"].as_f64(), Some(12.5));
    let back: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn zero_envelope_gives_zero_error() {
    let mut cfg = quick_config();
    cfg.profile.h6_norm = 0.0;
    let out = run_single(&cfg, 0.15, RunOptions::default()).unwrap();
    assert_eq!(out.sup_error, 0.0);
}

#[test]
fn small_perturbations_stay_close() {
    let mut cfg = ExperimentConfig::default();
    cfg.track_energy = false;
    let check = perturbation_check(&cfg, 0.15).unwrap();
    assert!(check.pass, "{check:?}");
    assert!(check.perturbed <= 2.0 * check.unperturbed);
}

#[test]
fn config_file_rejects_unknown_keys() {
    assert!(ExperimentConfig::from_toml_str("k0 = 1.0\nbogus = 3").is_err());
    let cfg = ExperimentConfig::from_toml_str("eps_list = [0.2, 0.1]\n[profile]\nkind = \"sech\"\nwidth = 2.0\nh6_norm = 1.0\n").unwrap();
    assert_eq!(cfg.profile.kind, ProfileKind::Sech);
    assert_eq!(cfg.eps_list, vec![0.2, 0.1]);
}

#[test]
fn gc_scaling_exponent_is_profile_independent() {
    let eps = [0.1, 0.05, 0.02];
    for kind in [ProfileKind::Gaussian, ProfileKind::Sech] {
        let mut cfg = ExperimentConfig::default();
        cfg.profile.kind = kind;
        for r in [3.0, 4.0] {
            let p = gc_lr_exponent(&cfg, &eps, r).unwrap();
            assert!((p - (1.0 - r) / r).abs() < 0.05, "{kind:?} r={r}: {p}");
        }
    }
}

#[test]
fn fit_tolerates_one_percent_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<(f64, f64)> = (0..12)
        .map(|i| {
            let x = 0.02 * 1.3f64.powi(i);
            (x, x.powf(1.5) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
        })
        .collect();
    let fit = fit_scaling(&pts).unwrap();
    assert!((fit.slope - 1.5).abs() < 0.02, "slope {}", fit.slope);
}

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let cfg = ExperimentConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

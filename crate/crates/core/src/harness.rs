//! Experiment configuration, convergence sweeps, residual studies, energy
//! traces, log-log fits and CSV/JSON output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_corrections, build_psi_nls, residual, AnsatzBundle};
use crate::energy::{annotate_gronwall, energy_total, extract_error, EnergyReport, ErrorState};
use crate::error::{Error, Result};
use crate::estimates::PacketField;
use crate::solvers::{dt_max, run_model_observed, ModelState, NlsState};
use crate::spectral::{make_grid, SpectralField, SpectralGrid};
use crate::wavetrain::{CarrierData, PhiChoice};

/// Envelope family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Gaussian,
    Sech,
}

/// Initial envelope `A(X, 0)`, real, centred on the slow domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub kind: ProfileKind,
    /// Width in the slow variable.
    pub width: f64,
    /// Target `||A||_{H^6}`; the amplitude is chosen to match it.
    pub h6_norm: f64,
}

impl Default for Profile {
    fn default() -> Self {
        Self {
            kind: ProfileKind::Gaussian,
            width: 3.0,
            h6_norm: 1.0,
        }
    }
}

impl Profile {
    /// Shape with unit amplitude at offset `y` from the centre.
    pub fn shape(&self, y: f64) -> f64 {
        let s = y / self.width;
        match self.kind {
            ProfileKind::Gaussian => (-s * s).exp(),
            ProfileKind::Sech => 1.0 / s.cosh(),
        }
    }

    /// Samples the profile on `slow`, scaled to the target `H^6` norm.
    pub fn sample(&self, slow: &Arc<SpectralGrid>) -> NlsState {
        let xc = 0.5 * slow.length();
        let unit = SpectralField::from_fn(slow, |x| self.shape(x - xc));
        let norm = unit.sobolev_norm(6.0);
        let amp = if norm > 0.0 { self.h6_norm / norm } else { 0.0 };
        NlsState::from_fn(slow, |x| Complex64::new(amp * self.shape(x - xc), 0.0))
    }
}

/// How the periodic box and the number of modes follow from `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridPolicy {
    /// `eps L >= min_slow_length`.
    pub min_slow_length: f64,
    /// `eps L >= width_factor * profile width`.
    pub width_factor: f64,
    /// `n >= modes_factor * L / pi`, rounded up to a power of two.
    pub modes_factor: f64,
    pub slow_points: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            min_slow_length: 40.0,
            width_factor: 20.0,
            modes_factor: 6.0,
            slow_points: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimePolicy {
    /// Observation times per run, not counting `t = 0`.
    pub samples: usize,
    /// Upper bound on the step beside the stability limit.
    pub max_dt: f64,
}

impl Default for TimePolicy {
    fn default() -> Self {
        Self {
            samples: 200,
            max_dt: 0.05,
        }
    }
}

/// Sampling of the `(k, l)` plane for the resonance map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonancePolicy {
    /// Points per axis on `[-3 k0, 3 k0]`.
    pub points: usize,
    /// `|phi|` threshold for the zero set.
    pub tol: f64,
    /// `eps` of the weight used by the kernel certificates.
    pub eps: f64,
}

impl Default for ResonancePolicy {
    fn default() -> Self {
        Self {
            points: 401,
            tol: 1e-3,
            eps: 0.1,
        }
    }
}

/// Everything an experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub k0: f64,
    pub eps_list: Vec<f64>,
    /// Residual study epsilons.
    pub residual_eps: Vec<f64>,
    pub delta: f64,
    pub beta: f64,
    pub t0: f64,
    pub phi_choice: PhiChoice,
    pub profile: Profile,
    pub grid: GridPolicy,
    pub time: TimePolicy,
    pub resonance: ResonancePolicy,
    /// Model quadratic term and NLS cubic term; off gives the linear problem.
    pub nonlinear: bool,
    /// Rerun each sweep point with `2n` modes and `dt / 2`.
    pub doubling_check: bool,
    /// Track the modified energy during sweep runs.
    pub track_energy: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k0: 1.0,
            eps_list: vec![0.15, 0.1, 0.07, 0.05],
            residual_eps: vec![0.2, 0.14, 0.1, 0.07],
            delta: 0.3,
            beta: 3.0,
            t0: 0.5,
            phi_choice: PhiChoice::Plus,
            profile: Profile::default(),
            grid: GridPolicy::default(),
            time: TimePolicy::default(),
            resonance: ResonancePolicy::default(),
            nonlinear: true,
            doubling_check: true,
            track_energy: true,
            output_dir: PathBuf::from("packetlab-out"),
            seed: 20_240_601,
        }
    }
}

fn check_eps_list(name: &str, list: &[f64]) -> Result<()> {
    if list.is_empty() {
        return Err(Error::Config(format!("{name} is empty")));
    }
    for &e in list {
        if !(e > 0.0 && e <= 0.25) {
            return Err(Error::Config(format!("{name} entry {e} is outside (0, 0.25]")));
        }
    }
    if list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config(format!("{name} must be strictly decreasing")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check_eps_list("eps_list", &self.eps_list)?;
        check_eps_list("residual_eps", &self.residual_eps)?;
        if !(self.k0 > 0.0) {
            return Err(Error::Config(format!("k0 must be positive, got {}", self.k0)));
        }
        if !(self.delta > 0.0 && self.delta < self.k0 / 3.0) {
            return Err(Error::Config(format!("delta must lie in (0, k0/3), got {}", self.delta)));
        }
        if !(2.0..=3.5).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [2, 3.5], got {}", self.beta)));
        }
        if !(self.t0 > 0.0) {
            return Err(Error::Config(format!("t0 must be positive, got {}", self.t0)));
        }
        if !(self.profile.width > 0.0 && self.profile.h6_norm >= 0.0) {
            return Err(Error::Config("profile width must be positive and h6_norm nonnegative".into()));
        }
        let g = &self.grid;
        if !(g.min_slow_length > 0.0 && g.width_factor > 0.0 && g.modes_factor > 0.0) {
            return Err(Error::Config("grid policy factors must be positive".into()));
        }
        if g.slow_points < 16 || !g.slow_points.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid.slow_points must be a power of two >= 16, got {}",
                g.slow_points
            )));
        }
        let r = &self.resonance;
        if r.points < 11 || r.points % 2 == 0 || !(r.tol > 0.0) || !(r.eps > 0.0 && r.eps < 1.0) {
            return Err(Error::Config(
                "resonance.points must be odd and >= 11, tol positive, eps in (0, 1)".into(),
            ));
        }
        if self.time.samples == 0 || !(self.time.max_dt > 0.0) {
            return Err(Error::Config("time.samples and time.max_dt must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    /// Carrier coefficients, with the quadratic effects removed in the linear case.
    pub fn carrier(&self) -> Result<CarrierData> {
        let mut c = CarrierData::new(self.k0)?;
        if !self.nonlinear {
            c.nu2 = 0.0;
            c.a2 = 0.0;
            c.mean_flow = 0.0;
        }
        Ok(c)
    }

    /// Box length for `eps`: a multiple of `4 pi / k0`, so the carrier phase
    /// at the box centre is 1, with `eps L` at least the policy minimum.
    pub fn box_length(&self, eps: f64) -> f64 {
        let slow = self.grid.min_slow_length.max(self.grid.width_factor * self.profile.width);
        let period = 4.0 * PI / self.k0;
        period * (slow / eps / period).ceil()
    }

    pub fn modes(&self, length: f64) -> usize {
        let need = self.grid.modes_factor * length / PI;
        let mut n = 64;
        while (n as f64) < need {
            n *= 2;
        }
        n
    }
}

/// Leading-order bundle for `eps` with `refine` extra doublings of `n`.
pub fn setup_bundle(cfg: &ExperimentConfig, eps: f64, refine: u32) -> Result<AnsatzBundle> {
    let length = cfg.box_length(eps);
    let n = cfg.modes(length) << refine;
    let grid = make_grid(n, length)?;
    let slow = make_grid(cfg.grid.slow_points, eps * length)?;
    let a0 = cfg.profile.sample(&slow);
    AnsatzBundle::new(cfg.carrier()?, eps, cfg.delta, cfg.phi_choice, &grid, a0)
}

/// One integration of the model against the packet.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub eps: f64,
    /// `sup_t max(||u - eps Psi_1||_sup, ||v - eps Psi_2||_sup)`.
    pub sup_error: f64,
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub energy: Vec<EnergyReport>,
}

/// Options for [`run_single`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Extra doublings of `n`; `dt` is halved once per doubling.
    pub refine: u32,
    pub track_energy: bool,
    /// Adds a seeded perturbation with `||(f, g)||_{H^2} = eps^2`.
    pub perturbation_seed: Option<u64>,
}

/// Integrates the model from the corrected packet to `t0 / eps^2`, measuring
/// the sup-norm distance to `eps Psi_NLS` at every observation.
pub fn run_single(cfg: &ExperimentConfig, eps: f64, opts: RunOptions) -> Result<RunOutcome> {
    let lead = setup_bundle(cfg, eps, opts.refine)?;
    let corrected = build_corrections(&lead)?;
    let grid = Arc::clone(&lead.grid);
    let (mut u0, mut v0) = corrected.psi(0.0)?;
    if let Some(seed) = opts.perturbation_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = PacketField::random(&mut rng, 4, 3.0 * cfg.k0, (0.3, 1.0)).sample(&grid);
        let g = PacketField::random(&mut rng, 4, 3.0 * cfg.k0, (0.3, 1.0)).sample(&grid);
        let size = f.sobolev_norm(2.0).hypot(g.sobolev_norm(2.0));
        let s = eps * eps / size;
        u0 = u0.axpy(s, &f)?;
        v0 = v0.axpy(s, &g)?;
    }
    let init = ModelState::new(u0, v0, 0.0)?;

    let t_end = cfg.t0 / (eps * eps);
    let samples = cfg.time.samples;
    let cap = dt_max(&grid).min(cfg.time.max_dt) / f64::from(1u32 << opts.refine);
    let stride = ((t_end / samples as f64) / cap).ceil().max(1.0) as usize;
    let dt = t_end / (samples * stride) as f64;

    let mut b_lead = lead.clone();
    let mut b_corr = corrected.clone();
    let mut sup_error: f64 = 0.0;
    let mut energy = Vec::new();
    run_model_observed(&init, t_end, dt, stride, cfg.nonlinear, |s| {
        b_lead.advance_to(s.t)?;
        let (pu, pv) = build_psi_nls(&b_lead, s.t)?;
        let err = s.u.sub(&pu)?.sup_norm().max(s.v.sub(&pv)?.sup_norm());
        if !err.is_finite() {
            return Err(Error::NonFinite {
                context: "sup error",
                t: s.t,
            });
        }
        sup_error = sup_error.max(err);
        if opts.track_energy {
            b_corr.advance_to(s.t)?;
            let e = extract_error(s, &b_corr, cfg.beta)?;
            energy.push(energy_total(&e, &b_corr, s.t)?);
        }
        Ok(())
    })?;
    if opts.track_energy {
        annotate_gronwall(&mut energy, eps)?;
    }
    Ok(RunOutcome {
        eps,
        sup_error,
        n: grid.n(),
        length: grid.length(),
        dt,
        energy,
    })
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest `|ln y - (slope ln x + intercept)|`.
    pub max_log_residual: f64,
}

pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::NonPositiveData { x, y });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all x values coincide".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_log_residual = logs
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ScalingFit {
        slope,
        intercept,
        max_log_residual,
    })
}

/// One `sweep.csv` row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub sup_error: f64,
    /// Doubling check passed: the error moved by less than 5% with `2n`, `dt/2`.
    pub slope_flag: bool,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub dt: f64,
    #[serde(skip)]
    pub refined_error: Option<f64>,
    #[serde(skip)]
    pub sup_energy: Option<f64>,
    #[serde(skip)]
    pub gronwall_max: Option<f64>,
    #[serde(skip)]
    pub max_defect: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    /// Sorted by increasing `eps`.
    pub rows: Vec<SweepRow>,
    /// Fit over rows whose doubling flag passed; `None` with fewer than three.
    pub fit: Option<ScalingFit>,
    #[serde(skip)]
    pub energy: Vec<(f64, Vec<EnergyReport>)>,
}

impl SweepReport {
    /// Largest ratio of `sup_t E` between neighbouring epsilons.
    pub fn energy_spread(&self) -> Option<f64> {
        let s: Vec<f64> = self.rows.iter().filter_map(|r| r.sup_energy).collect();
        if s.len() != self.rows.len() || s.len() < 2 {
            return None;
        }
        Some(
            s.windows(2)
                .map(|w| w[0].max(w[1]) / w[0].min(w[1]))
                .fold(1.0, f64::max),
        )
    }

    /// The constant the Gronwall ratio stays below over every run and sample.
    pub fn gronwall_constant(&self) -> Option<f64> {
        self.rows
            .iter()
            .map(|r| r.gronwall_max)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

fn sweep_row(cfg: &ExperimentConfig, eps: f64) -> Result<(SweepRow, Vec<EnergyReport>)> {
    let base = run_single(
        cfg,
        eps,
        RunOptions {
            track_energy: cfg.track_energy,
            ..RunOptions::default()
        },
    )?;
    let refined_error = if cfg.doubling_check {
        Some(
            run_single(
                cfg,
                eps,
                RunOptions {
                    refine: 1,
                    ..RunOptions::default()
                },
            )?
            .sup_error,
        )
    } else {
        None
    };
    let slope_flag = match refined_error {
        Some(r) => (base.sup_error - r).abs() <= 0.05 * r.max(base.sup_error),
        None => true,
    };
    let (sup_energy, gronwall_max, max_defect) = if base.energy.is_empty() {
        (None, None, None)
    } else {
        let e = &base.energy;
        (
            Some(e.iter().map(|r| r.e_total).fold(f64::NEG_INFINITY, f64::max)),
            Some(e[1..].iter().map(|r| r.gronwall_ratio).fold(f64::NEG_INFINITY, f64::max)),
            Some(e.iter().map(|r| r.defect).fold(0.0, f64::max)),
        )
    };
    Ok((
        SweepRow {
            eps,
            sup_error: base.sup_error,
            slope_flag,
            n: base.n,
            length: base.length,
            dt: base.dt,
            refined_error,
            sup_energy,
            gronwall_max,
            max_defect,
        },
        base.energy,
    ))
}

/// Runs every epsilon of the configuration in parallel and fits the
/// log-log slope of the sup error over the rows that pass the doubling check.
pub fn run_convergence_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut results: Vec<(SweepRow, Vec<EnergyReport>)> = cfg
        .eps_list
        .par_iter()
        .map(|&eps| sweep_row(cfg, eps))
        .collect::<Result<_>>()?;
    results.sort_by(|a, b| a.0.eps.total_cmp(&b.0.eps));
    let pts: Vec<(f64, f64)> = results
        .iter()
        .filter(|(r, _)| r.slope_flag)
        .map(|(r, _)| (r.eps, r.sup_error))
        .collect();
    let fit = if pts.len() >= 3 && pts.iter().all(|p| p.1 > 0.0) {
        Some(fit_scaling(&pts)?)
    } else {
        None
    };
    let energy = results.iter().map(|(r, e)| (r.eps, e.clone())).collect();
    Ok(SweepReport {
        rows: results.into_iter().map(|(r, _)| r).collect(),
        fit,
        energy,
    })
}

/// Energy series of one run.
pub fn run_energy_trace(cfg: &ExperimentConfig, eps: f64) -> Result<Vec<EnergyReport>> {
    cfg.validate()?;
    Ok(run_single(
        cfg,
        eps,
        RunOptions {
            track_energy: true,
            ..RunOptions::default()
        },
    )?
    .energy)
}

/// Sup errors with and without an `eps^2` perturbation of the initial data.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationCheck {
    pub eps: f64,
    pub unperturbed: f64,
    pub perturbed: f64,
    pub pass: bool,
}

pub fn perturbation_check(cfg: &ExperimentConfig, eps: f64) -> Result<PerturbationCheck> {
    let base = run_single(cfg, eps, RunOptions::default())?.sup_error;
    let pert = run_single(
        cfg,
        eps,
        RunOptions {
            perturbation_seed: Some(cfg.seed),
            ..RunOptions::default()
        },
    )?
    .sup_error;
    Ok(PerturbationCheck {
        eps,
        unperturbed: base,
        perturbed: pert,
        pass: pert <= 2.0 * base,
    })
}

/// One `residual.csv` row, all norms at `t = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualRow {
    pub eps: f64,
    pub res_h2_naive: f64,
    pub res_h2_corrected: f64,
    pub res_weighted: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualStudy {
    pub rows: Vec<ResidualRow>,
    pub naive: ScalingFit,
    pub corrected: ScalingFit,
    pub weighted: ScalingFit,
    /// Corrected order minus naive order.
    pub gap: f64,
    pub pass: bool,
}

pub fn run_residual_study(cfg: &ExperimentConfig) -> Result<ResidualStudy> {
    cfg.validate()?;
    let mut rows: Vec<ResidualRow> = cfg
        .residual_eps
        .par_iter()
        .map(|&eps| {
            let lead = setup_bundle(cfg, eps, 0)?;
            let corr = build_corrections(&lead)?;
            let naive = residual(&lead, 0.0)?;
            let full = residual(&corr, 0.0)?;
            Ok(ResidualRow {
                eps,
                res_h2_naive: naive.res_h2,
                res_h2_corrected: full.res_h2,
                res_weighted: full.res_weighted,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let fit = |f: fn(&ResidualRow) -> f64| {
        fit_scaling(&rows.iter().map(|r| (r.eps, f(r))).collect::<Vec<_>>())
    };
    let naive = fit(|r| r.res_h2_naive)?;
    let corrected = fit(|r| r.res_h2_corrected)?;
    let weighted = fit(|r| r.res_weighted)?;
    let gap = corrected.slope - naive.slope;
    Ok(ResidualStudy {
        rows,
        naive,
        corrected,
        weighted,
        gap,
        pass: gap >= 0.9,
    })
}

/// Relative gap between `E` and `||R||_{H^2}^2` over random error fields.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub max_defect: f64,
    pub mean_defect: f64,
    pub seed: u64,
}

/// Draws `trials` seeded error fields with `||R||_{H^2} = 1` and measures
/// `|E - ||R||^2| / ||R||^2` against the packet of `cfg` at `t = 0`.
pub fn energy_equivalence(
    cfg: &ExperimentConfig,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let b = build_corrections(&setup_bundle(cfg, eps, 0)?)?;
    let grid = Arc::clone(&b.grid);
    let defects: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let r1 = PacketField::random(&mut rng, 6, 3.0 * cfg.k0, (0.05, 0.5)).sample(&grid);
            let r2 = PacketField::random(&mut rng, 6, 3.0 * cfg.k0, (0.05, 0.5)).sample(&grid);
            let e = ErrorState::new(r1, r2, cfg.beta, eps, cfg.delta)?;
            let scale = crate::energy::energy_e0(&e).sqrt();
            let e = ErrorState::new(
                e.r1.scaled(1.0 / scale),
                e.r2.scaled(1.0 / scale),
                cfg.beta,
                eps,
                cfg.delta,
            )?;
            Ok(energy_total(&e, &b, 0.0)?.defect)
        })
        .collect::<Result<_>>()?;
    Ok(EquivalenceReport {
        eps,
        delta: cfg.delta,
        trials,
        max_defect: defects.iter().copied().fold(0.0, f64::max),
        mean_defect: defects.iter().sum::<f64>() / trials.max(1) as f64,
        seed,
    })
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, &["eps", "sup_error", "slope_flag", "n", "L", "dt"], rows)
}

pub fn write_residual_csv(path: &Path, rows: &[ResidualRow]) -> Result<()> {
    write_rows(
        path,
        &["eps", "res_h2_naive", "res_h2_corrected", "res_weighted"],
        rows,
    )
}

/// Energy series of every run, one row per sample, prefixed with `eps`.
pub fn write_energy_csv(path: &Path, series: &[(f64, Vec<EnergyReport>)]) -> Result<()> {
    let rows: Vec<_> = series
        .iter()
        .flat_map(|(eps, s)| {
            s.iter().map(move |r| {
                (
                    *eps, r.t, r.e0, r.e1, r.e2, r.e_total, r.h2_sq, r.h2_sq_sobolev, r.defect,
                    r.gronwall_ratio, r.kernel_sup,
                )
            })
        })
        .collect();
    write_rows(
        path,
        &[
            "eps", "t", "e0", "e1", "e2", "e_total", "h2_sq", "h2_sq_sobolev", "defect",
            "gronwall_ratio", "kernel_sup",
        ],
        &rows,
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Configuration echo, fits and named pass/fail flags.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub fits: BTreeMap<String, ScalingFit>,
    pub values: BTreeMap<String, f64>,
    pub checks: BTreeMap<String, bool>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            fits: BTreeMap::new(),
            values: BTreeMap::new(),
            checks: BTreeMap::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.values().all(|&b| b)
    }
}

/// Writes `sweep.csv`, `energy.csv` and the sweep part of `summary`.
pub fn emit_sweep(report: &SweepReport, dir: &Path, summary: &mut Summary) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_sweep_csv(&dir.join("sweep.csv"), &report.rows)?;
    if report.energy.iter().any(|(_, s)| !s.is_empty()) {
        write_energy_csv(&dir.join("energy.csv"), &report.energy)?;
    }
    if let Some(fit) = report.fit {
        summary.fits.insert("sweep".into(), fit);
    }
    summary
        .checks
        .insert("resolution".into(), report.rows.iter().all(|r| r.slope_flag));
    if let Some(s) = report.energy_spread() {
        summary.values.insert("energy_spread".into(), s);
    }
    if let Some(c) = report.gronwall_constant() {
        summary.values.insert("gronwall_constant".into(), c);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let sq: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 5.0].iter().map(|&x| (x, x * x)).collect();
        let f = fit_scaling(&sq).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        let c: Vec<(f64, f64)> = [0.1, 0.2, 0.4].iter().map(|&x| (x, 7.0)).collect();
        assert!(fit_scaling(&c).unwrap().slope.abs() < 1e-12);
        assert!(matches!(
            fit_scaling(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]),
            Err(Error::NonPositiveData { .. })
        ));
        assert!(matches!(fit_scaling(&[(1.0, 1.0), (2.0, 2.0)]), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(ExperimentConfig::from_toml_str("beta = 4.0").is_err());
        assert!(ExperimentConfig::from_toml_str("eps_list = [0.1, 0.2, 0.05]").is_err());
        assert!(ExperimentConfig::from_toml_str("eps_list = [0.3, 0.2]").is_err());
        assert!(ExperimentConfig::from_toml_str("delta = 0.5").is_err());
        assert!(matches!(
            ExperimentConfig::from_toml_str("colour = 3"),
            Err(Error::Config(_))
        ));
        let c = ExperimentConfig::from_toml_str("k0 = 1.0\n[profile]\nkind = \"sech\"\nwidth = 2.0\nh6_norm = 0.5\n")
            .unwrap();
        assert_eq!(c.profile.kind, ProfileKind::Sech);
    }

    #[test]
    fn box_is_commensurate() {
        let c = ExperimentConfig {
            k0: 1.5,
            ..ExperimentConfig::default()
        };
        for eps in [0.15, 0.1, 0.02] {
            let l = c.box_length(eps);
            let j = c.k0 * l / (4.0 * PI);
            assert!((j - j.round()).abs() < 1e-9);
            assert!(eps * l >= 60.0 - 1e-9);
            assert!(c.modes(l) as f64 >= 6.0 * l / PI);
        }
    }

    #[test]
    fn zero_envelope_has_zero_error() {
        let cfg = ExperimentConfig {
            eps_list: vec![0.2],
            t0: 0.05,
            profile: Profile {
                h6_norm: 0.0,
                ..Profile::default()
            },
            ..ExperimentConfig::default()
        };
        let r = run_single(
            &cfg,
            0.2,
            RunOptions {
                track_energy: true,
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.sup_error, 0.0);
        assert!(r.energy.iter().all(|e| e.e_total == 0.0));
    }
}

//! Time resonances of the three-wave phase, the V/W/Z partition of the
//! `(k, l)` plane, and sampled bounds on the kernels divided by the phase.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::vartheta_unchecked;
use crate::wavetrain::{phase, PhaseIndex};

/// Uniform sample grid on `[k_lo, k_hi] x [l_lo, l_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneGrid {
    pub k_lo: f64,
    pub k_hi: f64,
    pub l_lo: f64,
    pub l_hi: f64,
    /// Samples per axis, endpoints included.
    pub points: usize,
}

impl PlaneGrid {
    /// Square `[-3 k0, 3 k0]^2`.
    pub fn around(k0: f64, points: usize) -> Self {
        Self {
            k_lo: -3.0 * k0,
            k_hi: 3.0 * k0,
            l_lo: -3.0 * k0,
            l_hi: 3.0 * k0,
            points,
        }
    }

    /// Same square with the spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points - 1,
            ..*self
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.k_hi - self.k_lo) / (self.points - 1) as f64
    }

    pub fn k(&self, i: usize) -> f64 {
        self.k_lo + (self.k_hi - self.k_lo) * i as f64 / (self.points - 1) as f64
    }

    pub fn l(&self, i: usize) -> f64 {
        self.l_lo + (self.l_hi - self.l_lo) * i as f64 / (self.points - 1) as f64
    }
}

/// Sampled near-zeros of a phase function.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSet {
    pub branches: String,
    pub tol: f64,
    pub points: Vec<(f64, f64)>,
    /// Largest distance from a sampled zero to `{k=0} U {l=0} U {k=l}`.
    pub max_line_distance: f64,
    /// Largest `|(k, l)|` among zeros farther than two spacings from every
    /// line. The phase is cubic at the origin, so the tube there is wider.
    pub core_radius: f64,
    /// Connected components (8-neighbour) of the zero mask that never come
    /// within two spacings of a line.
    pub off_line_clusters: usize,
    pub spacing: f64,
}

fn line_distance(k: f64, l: f64) -> f64 {
    k.abs()
        .min(l.abs())
        .min((k - l).abs() * std::f64::consts::FRAC_1_SQRT_2)
}

/// Samples with `|phi| < tol`, their distance to the three resonance lines,
/// and the clusters of the zero mask that stay away from those lines.
pub fn time_resonances(idx: PhaseIndex, tol: f64, grid: &PlaneGrid) -> Result<ResonanceSet> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let n = grid.points;
    let mask: Vec<bool> = (0..n * n)
        .into_par_iter()
        .map(|p| phase(idx, grid.k(p / n), grid.l(p % n)).abs() < tol)
        .collect();
    let near = 2.0 * grid.spacing();
    let mut points = Vec::new();
    let mut max_line_distance: f64 = 0.0;
    let mut core_radius: f64 = 0.0;
    for p in (0..n * n).filter(|&p| mask[p]) {
        let (k, l) = (grid.k(p / n), grid.l(p % n));
        let d = line_distance(k, l);
        max_line_distance = max_line_distance.max(d);
        if d > near {
            core_radius = core_radius.max(k.hypot(l));
        }
        points.push((k, l));
    }

    let mut seen = vec![false; n * n];
    let mut off_line_clusters = 0;
    let mut stack = Vec::new();
    for start in 0..n * n {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut touches = false;
        while let Some(p) = stack.pop() {
            let (i, j) = (p / n, p % n);
            touches |= line_distance(grid.k(i), grid.l(j)) <= near;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                        continue;
                    }
                    let q = a as usize * n + b as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if !touches {
            off_line_clusters += 1;
        }
    }

    Ok(ResonanceSet {
        branches: idx.label(),
        tol,
        points,
        max_line_distance,
        core_radius,
        off_line_clusters,
        spacing: grid.spacing(),
    })
}

/// Region of the `(k, l)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    V,
    W,
    Z,
    Outside,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::V => "V",
            Region::W => "W",
            Region::Z => "Z",
            Region::Outside => "outside",
        })
    }
}

/// Label of `(k, l)` given the support `||k - l| - k0| < delta`.
pub fn classify(k: f64, l: f64, k0: f64, delta: f64) -> Region {
    if ((k - l).abs() - k0).abs() >= delta {
        Region::Outside
    } else if l.abs() < delta {
        Region::W
    } else if k.abs() < delta {
        Region::Z
    } else {
        Region::V
    }
}

/// Labels on a sample grid, stored with `l` varying fastest.
#[derive(Debug, Clone, Serialize)]
pub struct RegionPartition {
    pub k0: f64,
    pub delta: f64,
    pub grid: PlaneGrid,
    pub labels: Vec<Region>,
}

/// Labels every sample of `grid`.
pub fn partition(k0: f64, delta: f64, grid: &PlaneGrid) -> Result<RegionPartition> {
    if !(k0 > 0.0) {
        return Err(Error::InvalidParameter(format!("k0 must be positive, got {k0}")));
    }
    if !(delta > 0.0 && delta < k0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must lie in (0, k0/3) so that W and Z cannot overlap"
        )));
    }
    let mut labels = Vec::with_capacity(grid.points * grid.points);
    for i in 0..grid.points {
        let k = grid.k(i);
        for j in 0..grid.points {
            labels.push(classify(k, grid.l(j), k0, delta));
        }
    }
    let p = RegionPartition {
        k0,
        delta,
        grid: *grid,
        labels,
    };
    p.check_invariants()?;
    Ok(p)
}

impl RegionPartition {
    pub fn label(&self, i: usize, j: usize) -> Region {
        self.labels[i * self.grid.points + j]
    }

    /// Checks disjointness, cover of the support, and the W/Z conditions.
    pub fn check_invariants(&self) -> Result<()> {
        for i in 0..self.grid.points {
            let k = self.grid.k(i);
            for j in 0..self.grid.points {
                let l = self.grid.l(j);
                let in_support = ((k - l).abs() - self.k0).abs() < self.delta;
                let in_w = in_support && l.abs() < self.delta;
                let in_z = in_support && k.abs() < self.delta;
                if in_w && in_z {
                    return Err(Error::SupportViolation(format!(
                        "({k}, {l}) lies in both W and Z"
                    )));
                }
                let ok = match self.label(i, j) {
                    Region::Outside => !in_support,
                    Region::W => in_w,
                    Region::Z => in_z,
                    Region::V => in_support && !in_w && !in_z,
                };
                if !ok {
                    return Err(Error::SupportViolation(format!(
                        "label {} is wrong at ({k}, {l})",
                        self.label(i, j)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&x| x == r).count()
    }

    /// Writes `k,l,label` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::Serialize {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["k", "l", "label"]).map_err(err)?;
        for i in 0..self.grid.points {
            let k = self.grid.k(i);
            for j in 0..self.grid.points {
                w.serialize((k, self.grid.l(j), self.label(i, j).to_string()))
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// The six kernels of the order-`eps` terms of `d/dt E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum KernelId {
    /// `i omega_j(k) vartheta(l)/vartheta(k)`
    A1,
    /// `(1/2) k^2 i omega_m(k - l) l^2`
    A2,
    /// `i omega_j(k) k^2 (k - l)^2 vartheta(l)/vartheta(k)`
    A3,
    /// `2 i omega_j(k) k^2 (k - l) l vartheta(l)/vartheta(k)`
    A4,
    /// `i omega_j(k) k^2 l^2 vartheta(l)/vartheta(k)`
    A5,
    /// `-i omega_j(k) k^2 l^2`
    A6,
}

impl KernelId {
    pub const ALL: [KernelId; 6] = [
        KernelId::A1,
        KernelId::A2,
        KernelId::A3,
        KernelId::A4,
        KernelId::A5,
        KernelId::A6,
    ];

    /// Whether the kernel carries the weight ratio `vartheta(l)/vartheta(k)`.
    pub fn weighted(self) -> bool {
        matches!(self, KernelId::A1 | KernelId::A3 | KernelId::A4 | KernelId::A5)
    }

    /// Kernel without the weight ratio.
    pub fn bare(self, idx: PhaseIndex, k: f64, l: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let wj = idx.j.omega(k);
        let k2 = k * k;
        match self {
            KernelId::A1 => i * wj,
            KernelId::A2 => 0.5 * k2 * i * idx.m.omega(k - l) * l * l,
            KernelId::A3 => i * wj * k2 * (k - l) * (k - l),
            KernelId::A4 => 2.0 * i * wj * k2 * (k - l) * l,
            KernelId::A5 => i * wj * k2 * l * l,
            KernelId::A6 => -i * wj * k2 * l * l,
        }
    }
}

/// Bound shape claimed for `|kernel / phi|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Envelope {
    Constant,
    AbsK,
    AbsK2,
    AbsL,
}

impl Envelope {
    fn eval(self, k: f64, l: f64) -> f64 {
        match self {
            Envelope::Constant => 1.0,
            Envelope::AbsK => k.abs(),
            Envelope::AbsK2 => k * k,
            Envelope::AbsL => l.abs(),
        }
    }
}

/// Weight factor applied to a kernel on each region: on W the weight
/// `vartheta(l)` is replaced by `vartheta(l) - eps`, which vanishes at `l = 0`.
fn region_factor(kernel: KernelId, region: Region, k: f64, l: f64, eps: f64, delta: f64) -> f64 {
    if !kernel.weighted() {
        return 1.0;
    }
    let th_l = vartheta_unchecked(l, eps, delta);
    let th_k = vartheta_unchecked(k, eps, delta);
    match region {
        Region::W => (th_l - eps) / th_k,
        _ => th_l / th_k,
    }
}

/// Sampled bound on one kernel over one region.
#[derive(Debug, Clone, Serialize)]
pub struct KernelCertificate {
    pub kernel: KernelId,
    pub region: Region,
    pub envelope: Envelope,
    /// The first-order weighted term cancelled by the `E2` correction is
    /// removed before measuring.
    pub normal_form_corrected: bool,
    pub measured_sup: f64,
    pub refined_sup: f64,
    pub worst_point: (f64, f64),
    pub worst_branches: String,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    k: f64,
    l: f64,
    idx: Option<PhaseIndex>,
    count: usize,
}

impl Worst {
    fn empty() -> Self {
        Self {
            value: 0.0,
            k: 0.0,
            l: 0.0,
            idx: None,
            count: 0,
        }
    }

    /// Order-independent merge: larger value wins, ties broken by position.
    fn merge(self, o: Worst) -> Worst {
        let count = self.count + o.count;
        let pick_o = o.value > self.value
            || (o.value == self.value && (o.k, o.l) < (self.k, self.l) && o.idx.is_some());
        let mut w = if pick_o { o } else { self };
        w.count = count;
        w
    }
}

struct CertSpec {
    kernel: KernelId,
    region: Region,
    envelope: Envelope,
    corrected: bool,
    k0: f64,
    delta: f64,
    eps: f64,
}

fn quotient(spec: &CertSpec, idx: PhaseIndex, k: f64, l: f64) -> Option<f64> {
    let num = if spec.corrected {
        Complex64::new(0.0, 0.0)
    } else {
        spec.kernel.bare(idx, k, l) * region_factor(spec.kernel, spec.region, k, l, spec.eps, spec.delta)
    };
    let p = phase(idx, k, l);
    let env = spec.envelope.eval(k, l);
    if p.abs() < 1e-12 && num.norm() < 1e-12 {
        return None;
    }
    if env == 0.0 && num.norm() < 1e-12 {
        return None;
    }
    Some(num.norm() / (p.abs() * env))
}

fn measure(spec: &CertSpec, grid: &PlaneGrid) -> Worst {
    (0..grid.points)
        .into_par_iter()
        .map(|i| {
            let k = grid.k(i);
            let mut w = Worst::empty();
            for j in 0..grid.points {
                let l = grid.l(j);
                if classify(k, l, spec.k0, spec.delta) != spec.region {
                    continue;
                }
                for idx in PhaseIndex::all() {
                    if let Some(q) = quotient(spec, idx, k, l) {
                        w = w.merge(Worst {
                            value: q,
                            k,
                            l,
                            idx: Some(idx),
                            count: 1,
                        });
                    }
                }
            }
            w
        })
        .reduce(Worst::empty, Worst::merge)
}

/// Measures `sup |kernel * weight / phi| / envelope` over `region` on `grid`
/// and on its refinement; passes when finite and stable to 5%.
#[allow(clippy::too_many_arguments)]
pub fn kernel_certify(
    kernel: KernelId,
    region: Region,
    envelope: Envelope,
    normal_form_corrected: bool,
    k0: f64,
    delta: f64,
    eps: f64,
    grid: &PlaneGrid,
) -> Result<KernelCertificate> {
    if region == Region::Outside {
        return Err(Error::InvalidParameter("cannot certify outside the support".into()));
    }
    if !(delta > 0.0 && delta < k0 / 3.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, k0/3)")));
    }
    let spec = CertSpec {
        kernel,
        region,
        envelope,
        corrected: normal_form_corrected,
        k0,
        delta,
        eps,
    };
    let coarse = measure(&spec, grid);
    if coarse.count == 0 {
        return Err(Error::InvalidParameter(format!("region {region} has no samples")));
    }
    let fine = measure(&spec, &grid.refined());
    let stable = if coarse.value == 0.0 && fine.value == 0.0 {
        true
    } else {
        (fine.value - coarse.value).abs() <= 0.05 * coarse.value.max(fine.value)
    };
    Ok(KernelCertificate {
        kernel,
        region,
        envelope,
        normal_form_corrected,
        measured_sup: coarse.value,
        refined_sup: fine.value,
        worst_point: (fine.k, fine.l),
        worst_branches: fine.idx.map(|i| i.label()).unwrap_or_default(),
        samples: fine.count,
        pass: coarse.value.is_finite() && fine.value.is_finite() && stable,
    })
}

/// Fitted exponent `p` in `|kernel / phi| ~ |k|^p` as `k -> 0` at fixed `l`.
pub fn local_order(kernel: KernelId, idx: PhaseIndex, l: f64) -> f64 {
    let ks = [1e-3, 5e-4, 2.5e-4, 1.25e-4];
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .map(|&k| {
            let q = kernel.bare(idx, k, l).norm() / phase(idx, k, l).abs();
            (k.ln(), q.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Certificates used by the acceptance suite: all six kernels on V and W with
/// constant envelopes and on Z with envelope `|k|`; the first kernel on Z is
/// certified after its normal-form cancellation, and the raw version is
/// reported alongside.
pub fn standard_certificates(
    k0: f64,
    delta: f64,
    eps: f64,
    grid: &PlaneGrid,
) -> Result<Vec<KernelCertificate>> {
    let mut out = Vec::new();
    for region in [Region::V, Region::W] {
        for kernel in KernelId::ALL {
            out.push(kernel_certify(kernel, region, Envelope::Constant, false, k0, delta, eps, grid)?);
        }
    }
    for kernel in KernelId::ALL {
        let corrected = kernel == KernelId::A1;
        out.push(kernel_certify(kernel, Region::Z, Envelope::AbsK, corrected, k0, delta, eps, grid)?);
    }
    out.push(kernel_certify(KernelId::A1, Region::Z, Envelope::AbsK, false, k0, delta, eps, grid)?);
    Ok(out)
}

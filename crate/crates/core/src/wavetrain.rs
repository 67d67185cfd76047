//! Dispersion relation, envelope coefficients, and the three-wave phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::omega_symbol;

/// `W(k) = k tanh k = omega(k)^2`.
pub fn w_symbol(k: f64) -> f64 {
    k * k.tanh()
}

fn w_prime(k: f64) -> f64 {
    let s = 1.0 / k.cosh();
    k.tanh() + k * s * s
}

fn w_second(k: f64) -> f64 {
    let s = 1.0 / k.cosh();
    2.0 * s * s * (1.0 - k * k.tanh())
}

fn require_positive(k0: f64) -> Result<()> {
    if k0 > 0.0 && k0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "carrier wavenumber must be positive, got {k0}"
        )))
    }
}

/// `omega'(k)` for `k > 0`.
pub fn omega_prime(k: f64) -> Result<f64> {
    require_positive(k)?;
    Ok(w_prime(k) / (2.0 * omega_symbol(k)))
}

/// `omega''(k)` for `k > 0`.
pub fn omega_second(k: f64) -> Result<f64> {
    require_positive(k)?;
    let w = omega_symbol(k);
    let wp = w_prime(k);
    Ok(w_second(k) / (2.0 * w) - wp * wp / (4.0 * w * w * w))
}

/// Group velocity `omega'(k0)`.
pub fn group_velocity(k0: f64) -> Result<f64> {
    omega_prime(k0)
}

/// Dispersion coefficient `nu1 = -omega''(k0) / 2`.
pub fn nls_linear_coeff(k0: f64) -> Result<f64> {
    Ok(-0.5 * omega_second(k0)?)
}

/// Amplitude `a2` of the second harmonic `a2 A^2 e^{2i theta}`.
pub fn second_harmonic_coeff(k0: f64) -> Result<f64> {
    require_positive(k0)?;
    let w2 = w_symbol(2.0 * k0);
    let denom = w2 - 4.0 * w_symbol(k0);
    if denom.abs() < 1e-8 {
        return Err(Error::DegenerateDenominator {
            what: "second harmonic",
            value: denom,
        });
    }
    Ok(-w2 / denom)
}

/// Factor `b` of the mean-flow profile `b |A|^2`.
pub fn mean_flow_coeff(k0: f64) -> Result<f64> {
    let cg = group_velocity(k0)?;
    let denom = cg * cg - 1.0;
    if denom.abs() < 1e-8 {
        return Err(Error::DegenerateDenominator {
            what: "mean flow",
            value: denom,
        });
    }
    Ok(2.0 / denom)
}

/// Cubic coefficient `nu2 = omega0 (a2 + b)` from the solvability condition at
/// the first harmonic, with `b` the mean-flow factor.
pub fn nls_cubic_coeff(k0: f64) -> Result<f64> {
    Ok(omega_symbol(k0) * (second_harmonic_coeff(k0)? + mean_flow_coeff(k0)?))
}

/// Carrier wavenumber and derived envelope coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierData {
    pub k0: f64,
    pub omega0: f64,
    pub cg: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Second-harmonic factor `a2`.
    pub a2: f64,
    /// Mean-flow factor `b`.
    pub mean_flow: f64,
}

impl CarrierData {
    pub fn new(k0: f64) -> Result<Self> {
        Ok(Self {
            k0,
            omega0: omega_symbol(k0),
            cg: group_velocity(k0)?,
            nu1: nls_linear_coeff(k0)?,
            nu2: nls_cubic_coeff(k0)?,
            a2: second_harmonic_coeff(k0)?,
            mean_flow: mean_flow_coeff(k0)?,
        })
    }

    /// Same carrier with a different cubic coefficient.
    pub fn with_nu2(mut self, nu2: f64) -> Self {
        self.nu2 = nu2;
        self
    }
}

/// One of the two branches `Omega_1 = +Omega`, `Omega_2 = -Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Branch::Plus),
            2 => Ok(Branch::Minus),
            _ => Err(Error::InvalidParameter(format!("branch index must be 1 or 2, got {i}"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Branch::Plus => 1,
            Branch::Minus => 2,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    /// `omega_j(k) = sign_j * omega(k)`.
    pub fn omega(self, k: f64) -> f64 {
        self.sign() * omega_symbol(k)
    }

    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];
}

/// Branch triple `(j, m, n)` of a phase function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseIndex {
    pub j: Branch,
    pub m: Branch,
    pub n: Branch,
}

impl PhaseIndex {
    pub fn new(j: u8, m: u8, n: u8) -> Result<Self> {
        Ok(Self {
            j: Branch::from_index(j)?,
            m: Branch::from_index(m)?,
            n: Branch::from_index(n)?,
        })
    }

    /// All eight triples.
    pub fn all() -> impl Iterator<Item = PhaseIndex> {
        Branch::BOTH.into_iter().flat_map(|j| {
            Branch::BOTH
                .into_iter()
                .flat_map(move |m| Branch::BOTH.into_iter().map(move |n| PhaseIndex { j, m, n }))
        })
    }

    pub fn label(&self) -> String {
        format!("{}{}{}", self.j.index(), self.m.index(), self.n.index())
    }
}

/// `-omega_j(k) + omega_m(k - l) + omega_n(l)`.
pub fn phase(idx: PhaseIndex, k: f64, l: f64) -> f64 {
    -idx.j.omega(k) + idx.m.omega(k - l) + idx.n.omega(l)
}

/// Which branch carries the packet: `(1, 1)` or `(1, -1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhiChoice {
    #[default]
    Plus,
    Minus,
}

impl PhiChoice {
    /// Second component of the polarization vector.
    pub fn sigma(self) -> f64 {
        match self {
            PhiChoice::Plus => 1.0,
            PhiChoice::Minus => -1.0,
        }
    }
}

//! Pseudospectral laboratory for the NLS approximation of a water-wave model
//! system `u_t = Omega v`, `v_t = Omega u + Omega(u^2)` with
//! `omega(k) = sgn(k) sqrt(k tanh k)`.

pub mod ansatz;
pub mod energy;
pub mod error;
pub mod estimates;
pub mod harness;
pub mod resonance;
pub mod solvers;
pub mod spectral;
pub mod wavetrain;

pub use error::{Error, Result};
pub use spectral::{
    apply_multiplier, dealias, make_grid, omega_symbol, lambda_symbol, sobolev_norm, sup_norm,
    vartheta_symbol, MultiplierSymbol, Parity, SpectralField, SpectralGrid,
};
pub use wavetrain::{Branch, CarrierData, PhaseIndex, PhiChoice};

pub use ansatz::AnsatzBundle;
pub use energy::{EnergyReport, ErrorState};
pub use estimates::EstimateCheckResult;
pub use harness::{ExperimentConfig, ScalingFit, SweepReport};
pub use resonance::{KernelCertificate, Region, RegionPartition};
pub use solvers::{ModelState, NlsState};

//! Energies, identity residuals, decay fits, Datko constants and spectra.

mod energy;
mod fit;
mod identities;
mod spectral;

pub use energy::{dissipation_form, energy, energy_report, gram_inner, sigma, EnergyReport, EnergySample, Energies};
pub use fit::{datko_check, fit_decay_rate, linear_fit, loglog_slope, DATKO_TAIL_LIMIT, DatkoEntry, DatkoReport, DatkoStatus, DecayFit};
pub use identities::{identity_residual, Identity, IdentityResidual, MultiplierForms};
pub use spectral::{
    characteristic_roots_1d, match_multisets, resolvent_norm, spectrum, Spectrum, SpectrumMethod, SpectrumOptions,
};

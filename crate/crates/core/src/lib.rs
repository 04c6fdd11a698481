//! Numerical laboratory for the two-dimensional Euler–Poisson ion system.
//!
//! The crate is organised bottom-up:
//!
//! * [`dispersion`]: the radial dispersion profile, its derivatives, the
//!   degenerate radius `γ₀`, the group-velocity reflection `π` and the
//!   space-resonance roots.
//! * [`resonance`]: quadratic and cubic resonance functions with sampling
//!   verifiers and a Lipschitz grid certificate.
//! * [`paley`]: Littlewood–Paley cutoffs, dyadic localizations and the
//!   weighted `Z` and energy norms.
//! * [`semigroup`]: the linear propagator `e^{itΛ(D)}` and decay probes.
//! * [`elliptic`]: the Boltzmann–Poisson solve `Δφ = e^φ − 1 − ñ`.
//! * [`solver`]: integrating-factor RK4 time stepping of the full system.
//!
//! [`field`] and [`fieldio`] hold the periodic-grid plumbing shared by the
//! numerical modules, [`par`] the chunked rayon helpers.

pub mod dispersion;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod fieldio;
pub mod paley;
pub mod par;
pub mod resonance;
pub mod semigroup;
pub mod solver;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use field::{Grid, SpectralField};

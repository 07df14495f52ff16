//! Exact dynamics of Ising models with arbitrary couplings under local
//! Raman and Rayleigh decoherence.
//!
//! Three independent backends compute the same observables:
//!
//! * [`closed_form`]: the trajectory-averaged analytic solution for an
//!   x-polarized start, built from the envelope functions Φ and Ψ;
//! * [`trajectories`]: quantum-trajectory Monte Carlo with exact
//!   single-trajectory formulas, valid for any product initial state;
//! * [`lindblad`]: dense density-matrix integration for up to 12 spins.
//!
//! [`collective`] turns one- and two-spin moments from any backend into
//! Bloch vectors, quadrature variances and squeezing parameters.

pub mod closed_form;
pub mod collective;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod ode;
pub mod par;
pub mod series;
pub mod trajectories;

pub use closed_form::{ClosedForm, Ladder, Treatment};
pub use collective::{SpinMoments, Squeezing, MinSqueezing};
pub use error::{Error, Result};
pub use model::{
    CouplingMatrix, DecoherenceRates, DerivedRates, InitialProductState, LatticeGeometry,
};
pub use par::Parallelism;
pub use series::{ObservableSeries, SeriesValues, Spacing, TimeGrid};
pub use trajectories::{JumpRecord, McConfig, TrajectoryEstimate, TrajectorySimulator};

/// Crate version, recorded in output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

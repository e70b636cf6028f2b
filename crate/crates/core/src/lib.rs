//! Alternating-shear anomalous dissipation laboratory.
//!
//! The crate builds a multi-scale alternating shear flow on the two-torus,
//! transports a passive scalar through it with an exact-advection split-step
//! spectral scheme, lifts the pair to a 2+½-dimensional forced Navier–Stokes
//! solution, and measures the norms and dissipation rates that decide whether
//! energy is lost in the vanishing viscosity limit.
//!
//! Module map:
//!
//! * [`cascade`] – parameter hierarchy, scale/time/viscosity sequences.
//! * [`shearflow`] – the synthesized shear schedule and its truncations.
//! * [`scalarsolver`] – the advection–diffusion solver and the forced heat calibration.
//! * [`nslift`] – the lifted velocity, force, residual and 3D dissipation.
//! * [`norms`] – Hölder, Bochner, force and gap estimators.
//! * [`experiments`] – configuration, experiment drivers and report output.

pub mod cascade;
pub mod error;
pub mod experiments;
pub mod io;
pub mod jet;
pub mod nslift;
pub mod norms;
pub mod quadrature;
pub mod scalarsolver;
pub mod shearflow;
pub mod spectral;
pub mod sum;

pub use cascade::{CascadeParams, ConditionReport, LogScale, ScaleSequences};
pub use error::{AdlabError, Result};
pub use experiments::{DissipationReport, ExperimentConfig, ExperimentTag};
pub use nslift::{LiftedForce, LiftedSolution};
pub use norms::{NormKind, NormReport};
pub use scalarsolver::{DtPolicy, ScalarField, Trajectory};
pub use shearflow::{Direction, ShearSchedule, ShearStage, TruncatedField};

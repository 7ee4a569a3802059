//! Optimal control of a Burgers-type PDE through parameterizing-manifold
//! reduced models.
//!
//! The crate is organized bottom-up:
//! - [`spectral`]: eigenvalues, sine transforms, modal projections, norms.
//! - [`pde`]: semi-implicit full-model integrator and steady states.
//! - [`pm`]: parameterizing manifolds and their defect.
//! - [`reduced`]: reduced vector fields and costates, selectable by name.
//! - [`ocp`]: two-point boundary-value solver and control synthesis.
//! - [`diagnostics`]: error estimates and reporting quantities.
//! - [`scenario`]: presets, configuration files and sweeps.

pub mod banded;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod ocp;
pub mod pde;
pub mod pm;
pub mod reduced;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};

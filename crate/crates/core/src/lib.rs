//! Spectral Wasserstein transport.
//!
//! Transport costs that measure a coupling by a norm `γ` of its displacement
//! covariance `∫ (y−x)(y−x)ᵀ dπ` instead of by a sum of pointwise costs. With
//! Schatten norms the family runs from the classical quadratic Wasserstein
//! distance (`p = 1`) to the operator-norm geometry (`p = ∞`) whose particle
//! gradient flow is the Muon update.
//!
//! * [`psd_norms`]: norms on the PSD cone, dual balls, active matrices.
//! * [`measures`]: discrete and Gaussian measures, couplings.
//! * [`static_solver`]: exact couplings for discrete measures.
//! * [`gaussian_bures`]: the covariance cost between Gaussians.
//! * [`flows`]: Schatten selectors, MMD particle flows, Gaussian affine flows.
//! * [`geometry`]: executable checks of geodesic, metric and convexity properties.

pub mod error;
pub mod experiments;
pub mod flows;
pub mod gaussian_bures;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod par;
pub mod psd_norms;
pub mod static_solver;

pub use error::{Error, Result};
pub use measures::{Coupling, DiscreteMeasure, GaussianMeasure};
pub use psd_norms::{NormSpec, PsdMatrix, SymMatrix};

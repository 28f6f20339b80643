//! Diffusion across discontinuous-coefficient interfaces.
//!
//! The crate collects closed-form transition densities of skew Brownian
//! motion and of skew diffusions, exact and Euler-type path samplers,
//! Monte Carlo and analytic path functionals, a finite-volume solver for
//! the interface parabolic problem, Taylor–Aris homogenization for layered
//! media and diffusion on river-network trees.
//!
//! Diffusion coefficients follow the convention `u_t = (1/2) D u_xx`, so a
//! homogeneous medium moves like `sqrt(D) B(t)`.

pub mod densities;
pub mod error;
pub mod functionals;
pub mod homogenize;
pub mod media;
pub mod network;
pub mod paths;
pub mod pde;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
pub mod verify;

pub use densities::Side;
pub use error::{Error, Result};
pub use media::{InterfaceMedium, LineProfile, MultiMedium, ScaleSpeed};
pub use network::{NetworkPosition, RiverNetwork};
pub use stats::MeanEstimate;

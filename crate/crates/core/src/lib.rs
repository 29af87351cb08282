//! Fast, spectrally accurate quasi-equilibrium (Bingham) moment closure on
//! the unit circle and unit sphere.
//!
//! The closure maps a second-order orientation moment tensor `M` to the
//! fourth-order moment tensor `Q` of the maximum-entropy (Bingham)
//! distribution with the same second moments. Offline builders produce
//! Legendre coefficient tables for the scalar moment maps; the runtime
//! evaluators diagonalize `M`, look the tables up, assemble `Q` in the
//! diagonal frame and rotate back.
//!
//! Modules:
//! - [`specfun`]: scaled modified Bessel functions and the confluent
//!   hypergeometric function 1F1.
//! - [`quadrature`]: Gauss-Legendre rules and Legendre series fitting and
//!   evaluation (1D and 2D).
//! - [`tensor`]: symmetric 2x2/3x3 eigendecomposition, fourth-order tensor
//!   rotation and the moment containers.
//! - [`circle`]: the closure on the unit circle.
//! - [`uniaxial`]: the closure on the unit sphere for parameter tensors
//!   with a repeated eigenvalue pair.
//! - [`biaxial`]: the general closure on the unit sphere.
//! - [`tables`]: versioned table persistence with integrity checks.
//! - [`dynamics`]: a demo consumer integrating the closed second-moment
//!   evolution equation.

pub mod biaxial;
pub mod circle;
pub mod dd;
pub mod dynamics;
pub mod error;
pub mod quadrature;
pub mod specfun;
pub mod tables;
pub mod tensor;
pub mod uniaxial;

pub use error::{Error, Result};

/// Builder provenance recorded alongside every closure table.
#[derive(Clone, Debug, PartialEq)]
pub struct BuildInfo {
    /// Order of the Gauss grid the Legendre fit was sampled on.
    pub fit_quad_n: usize,
    /// Order of the moment-integral quadrature (biaxial only).
    pub moment_quad_n: Option<usize>,
    /// Newton stopping tolerance on the moment mismatch.
    pub newton_tol: f64,
    /// Largest Newton iteration count over all fit nodes.
    pub max_newton_iters: usize,
}


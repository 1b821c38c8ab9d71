//! Numerical homogenization of periodic magnetoelastic composites with rigid
//! magnetic inclusions.
//!
//! The composite occupies a periodic cell `Q = (0,1)^3` containing one or more
//! rigid inclusions (voxelized analytic shapes, well separated from the cell
//! boundary). Outside the inclusions the material is a soft magnetoelastic
//! solid described by an energy density `f(z, G, B)` that is quadratic-growth
//! in the symmetrized displacement gradient `sym G` and the magnetic induction
//! `B`; on the inclusions only rigid displacements are admissible and the
//! energy is purely magnetic.
//!
//! The central quantity is the effective (homogenized) energy density
//!
//! ```text
//! f_hom(G, B) = inf over k, phi, beta of  ∫_Q f(kz, G + ∇phi(z), B + beta(z)) dz
//! ```
//!
//! with `phi` a displacement fluctuation vanishing on the cell boundary,
//! `beta` a periodic, zero-mean, divergence-free induction fluctuation, and
//! the rigid compatibility constraint `sym(G + ∇phi) = 0` on the inclusions.
//!
//! Crate layout:
//!
//! * [`geometry`] — inclusion shapes, voxel masks, connected components, and
//!   the `epsilon`-cell tiling index of a macroscopic box.
//! * [`linalg`] — small dense helpers: `sym`/`skw` splits and the Mandel
//!   (orthonormal Voigt) representation of elasticity tensors.
//! * [`material`] — the built-in energy laws (linear magnetoelastic,
//!   magnetostrictive coupling, dissipation-potential based), evaluation with
//!   rigid-branch dispatch, finite-strain field transforms, and the
//!   growth/Lipschitz assumption audit.
//! * [`fenchel`] — numerically safeguarded Fenchel conjugates with coercivity
//!   driven search radii, the potential/co-potential transforms, and audits of
//!   the conjugate growth and Lipschitz bounds.
//! * [`fields`] — periodic grid fields, FFT spectral workspace, divergence,
//!   Leray (divergence-free) projection, negative-order dual norms, and
//!   second-order gradients for zero-trace fields.
//! * [`cell`] — the discrete cell problem: exact elimination of rigid degrees
//!   of freedom, conjugate-gradient and L-BFGS minimization, the multi-cell
//!   energy `f_hom`, and finite-difference gradient verification.
//! * [`surface`] — energy surface tabulation, growth/coercivity and Lipschitz
//!   audits of tabulated surfaces, and the finite-`epsilon` consistency ladder
//!   (`gamma_check`).
//! * [`config`] / [`run`] — JSON run configuration and the thin CLI driver
//!   used by the `fhom` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod cell;
pub mod config;
pub mod error;
pub mod fenchel;
pub mod fields;
pub mod geometry;
pub mod linalg;
pub mod material;
pub mod run;
pub mod surface;

pub use error::{Error, Result};

//! Green functions, Poisson kernels, boundary measures and Plancherel-type
//! spectral expansions for Schrödinger operators `H = A + V` (and their
//! edge-weighted generalizations) on trees of bounded degree.
//!
//! The crate is organized around:
//!
//! - [`tree`]: rooted-tree combinatorics — vertex addresses, arcs, rays,
//!   boundary cylinders, confluence — plus the model type itself;
//! - [`model`]: ingestion and validation of JSON model documents;
//! - [`green`]: the ζ recursion, diagonal and pairwise Green functions,
//!   restricted (branch-removed) Green functions, the spectral density kernel
//!   Ψ, and a residual suite for the exact algebraic identities;
//! - [`poisson`]: the Poisson kernel `P_{γ,ξ}(v)` indexed by boundary rays,
//!   with its product formula, edge recursion, stabilized-limit form and
//!   eigenfunction property;
//! - [`measure`]: finitely additive measures on the cylinder algebra —
//!   the complex measure attached to an eigenfunction, the nonnegative
//!   spectral measure `ν_E`, reconstruction integrals;
//! - [`fourier`]: energy-window quadrature realizing the spectral expansion
//!   `F(H)(v,w) = ∫ F(E) Ψ_{E,v}(w) dE`, the boundary Fourier transform and
//!   the inversion/Plancherel/trace identities;
//! - [`oracle`]: brute-force dense truncations (direct resolvent solves and
//!   full symmetric eigendecompositions) used as ground truth in tests.

pub mod error;
pub mod fourier;
pub mod green;
pub mod measure;
pub mod model;
pub mod oracle;
pub mod poisson;
pub mod quad;
pub mod tree;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use fourier::{
    apply_function, fourier_coeff, kernel_entry, plancherel_check, trace_functional, EnergyWindow,
    FiniteVector, KernelOperator, PlancherelReport, TestFunction, TwoRouteEntry,
};
pub use green::{
    compute_zeta_field, green_pair, green_restricted, identity_suite, psi, psi_with_field,
    zeta_homogeneous, IdentityReport, SpectralParameter, ZetaField,
};
pub use measure::{
    nu_e_cylinder, nu_e_measure, nu_from_eigenfunction, psi_via_boundary, reconstruct,
    CylinderMeasure, MeasureKind,
};
pub use model::{load_model, load_model_bytes, load_model_str};
pub use oracle::DenseTruncation;
pub use poisson::{
    eigen_check, poisson_eval, poisson_limit_check, poisson_step, PoissonEvaluation,
};
pub use tree::{Cylinder, DirectedEdge, HomogeneousTail, RayAddress, TreeModel, VertexId};

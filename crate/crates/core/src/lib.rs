//! Anisotropic spectral VMS stabilization for 2D advection-diffusion problems.
//!
//! The library assembles stabilized P1 finite-element discretizations of
//! steady advection-diffusion equations on triangular meshes. The
//! stabilization coefficient is built from the explicit eigen-pairs of the
//! advection-diffusion operator on right isosceles triangles: a dimensionless
//! double sum `psi(Pe1, Pe2)` over eigenmodes gives `tau = 8 h^2 psi / mu`,
//! where `Pe1`, `Pe2` are the directional grid Peclet numbers of the element.
//! `psi` can be tabulated once over a `(Pe1, Pe2)` grid and bilinearly
//! interpolated during assembly, which is how production solves are expected
//! to run. Classical coefficients (the generalized 1D optimum and Codina's
//! orthogonal sub-scales formula) are provided for comparison, together with
//! benchmark drivers that exercise all of them end to end.

pub mod analysis;
pub mod bench;
pub mod coeff_table;
pub mod fem;
pub mod geometry;
pub mod par;
pub mod spectral;
pub mod stabilization;

pub use coeff_table::StabTable;
pub use fem::{LinearSystem, SolutionField, VelocityField};
pub use geometry::{ElementMetrics, Mesh, Orientation};
pub use stabilization::{PecletPair, Truncation};

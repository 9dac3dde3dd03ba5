//! Optimal artificial boundary conditions for the field of a localized charge in a
//! random conducting medium on the lattice `Z³`.
//!
//! The medium is only known on a finite box. Massive correctors computed on nested
//! boxes give a homogenized tensor, dipole and quadrupole moments of the source, and
//! a two-scale expansion that supplies Dirichlet data on the boundary of the
//! computational box `Q_L`.
//!
//! Module map:
//!
//! * [`lattice`] boxes, fields, forward gradient and backward divergence
//! * [`media`] restriction-consistent random conductances
//! * [`solver`] Jacobi-preconditioned CG for `(1/T)u - div(a grad u) = div(g) + h`
//! * [`correctors`] first-order, flux and second-order massive correctors
//! * [`kernels`] anisotropic Green function, harmonic polynomials, multipoles
//! * [`pipeline`] the full boundary construction and the three comparison schemes
//! * [`experiments`] sources, convergence and growth studies, slope fits
//! * [`io`] binary field format and key=value manifests

pub mod correctors;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernels;
pub mod lattice;
pub mod media;
pub mod pipeline;
pub mod solver;

mod par;

pub use error::{Error, Result};
pub use lattice::{BoxSpec, EdgeVectorField, Point, VertexField};

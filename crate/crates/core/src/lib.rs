//! Curvilinear mesh generation from boundary samples.
//!
//! A vector-valued deformation map is recovered from boundary data sites with a
//! C⁴ Matérn radial basis function interpolant, the whole node set is pushed
//! through it and tessellated, and element quality is then improved by shrinking
//! the evaluation-time shape parameter vertex by vertex.
//!
//! The modules follow the pipeline:
//!
//! * [`kernel`]: Matérn kernel, interpolation matrices, condition-targeted shape parameter.
//! * [`interpolation`]: fitting and uniform / pointwise evaluation.
//! * [`geometry`]: canonical domains, node generation, deformation maps.
//! * [`mesh`]: Delaunay tessellation, stencils, quality and validity.
//! * [`smoothing`]: the shape-parameter smoothing loop and a Laplace baseline.
//! * [`io`]: VTK, CSV and configuration files.
//! * [`experiment`] and [`bench`]: orchestration used by the `meshmorph` binary.

pub mod bench;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod interpolation;
pub mod io;
pub mod kernel;
pub mod mesh;
pub mod points;
pub mod smoothing;

pub use error::{Error, Result};
pub use points::Points;

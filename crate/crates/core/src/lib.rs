//! Numerical laboratory for the ordered two-phase Bernoulli free boundary
//! problem: minimise
//!
//! ```text
//! F(u, v) = ∫ |∇u|² + |∇v|² + Λ_u |{u > 0}| + Λ_v |{v > 0}|
//! ```
//!
//! over pairs `u >= v >= 0` with Dirichlet data, then extract the two free
//! boundaries and measure their regularity.

pub mod diagnose;
pub mod energy;
pub mod error;
pub mod flatness;
pub mod free_boundary;
pub mod frequency;
pub mod grid;
pub mod gridio;
pub mod pair;
pub mod presets;
pub mod solver;
pub mod thin_limits;

pub use energy::{energy, first_variation, project_cone, project_pair, EnergyReport, SmoothingSpec};
pub use error::{Error, Result};
pub use grid::{blowup_rescale, gradient, laplacian, Domain, GridSpec, ScalarField, Vec2, VectorField};
pub use pair::{reference_plane_pair, FieldPair, Params};

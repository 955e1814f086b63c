//! Numerical toolkit for semi-flat mirror pairs over tropical manifolds.
//!
//! Starting from a tropical atlas with a convex multi-valued potential, a
//! constant section of rational affine subspaces and a field `Y` on the base
//! locus `B(V)`, the crate builds both sides of the correspondence:
//!
//! * the torus bundle `L(V, Y)` in `X(B) = TB / Λ` with its symplectic and
//!   holomorphic-volume data ([`lift`]);
//! * the complex submanifold `C(V)` in `W(B) = T*B / Λ*` with the connection
//!   `D^Y = d + i Σ Y_j dỹ_j` ([`mirror`]);
//!
//! and checks that Lagrangian ⇔ integrable and special Lagrangian ⇔ deformed
//! Hermitian Yang–Mills hold node by node ([`verify`]). [`solver`] solves the
//! phase equation `arg det[W(u) | Z] = θ₀` for a potential `f` with `Y = ∇f`.

pub mod angle;
pub mod atlas;
pub mod exterior;
pub mod field;
pub mod intmat;
pub mod lift;
pub mod locus;
pub mod mirror;
pub mod potential;
pub mod section;
pub mod solver;
pub mod verify;

pub use atlas::{Atlas, BoxDomain, Chart, TransitionMap};
pub use field::{FieldSpec, TangentFieldY};
pub use locus::{BaseLocusPatch, ParamGrid};
pub use potential::{parse_expr, Expression, Jet3};
pub use section::{ConstantSection, DualFrame, RationalAffineSubspace};

//! Attractors of general, possibly non-contractive, iterated function systems.
//!
//! The crate computes attractors two ways, by deterministic Hutchinson
//! iteration (and its topological upper limit) and by the chaos game under
//! any selection process whose conditional probabilities stay above a floor,
//! and compares the two with a Hausdorff-metric kernel. Ground spaces are
//! Euclidean space, the unit circle and the real projective plane; the
//! [`superfractal`] module lifts everything to the hyperspace of compact sets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod deterministic;
pub mod error;
pub mod hausdorff;
pub mod ifs;
pub mod io;
pub mod presets;
pub mod render;
pub mod scene;
pub mod spaces;
pub mod superfractal;
pub mod verify;

pub use error::{Error, Result};
pub use hausdorff::{hausdorff_distance, DistanceResult, Mode, NnIndex};
pub use ifs::{apply_map, hutchinson_step, iterate, FiniteSet, IfsSpec, MapSpec};
pub use spaces::{Space, SpacePoint, SpaceTag};

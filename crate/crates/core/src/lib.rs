//! Controllability and observability volumes of discrete-time linear systems
//! whose closed-loop responses are restricted by actuation delay, finite
//! communication speed and locality.
//!
//! The main entry points are [`volume::constrained_controllability`], which
//! computes the constrained volume in closed form, and
//! [`rank::rank_condition`], a cheaper certificate that the constraints leave
//! the volume unchanged.

pub mod cli;
pub mod constraints;
pub mod document;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rank;
pub mod volume;

pub use constraints::{pattern_from, ConstraintSpec, SupportPattern};
pub use error::{Error, Result};
pub use linalg::{Mat, Tolerance, Vector};
pub use model::{build_chain_bench, build_swing_grid, LinearSystem, SwingGridSpec};
pub use rank::{rank_condition, RankCertifier, RankReport};
pub use volume::{constrained_controllability, constrained_observability, VolumeReport, VolumeSolver, VolumeStatus};

//! Exterior derivatives of Lie-group-valued maps and verification of
//! group-valued Koopman eigenfunctions of smooth flows.
//!
//! Modules, bottom-up:
//!
//! - [`lie`]: matrix Lie groups and the trivialization `TG ≅ G × g`.
//! - [`manifold`]: charts, vector fields and the RK4 flow.
//! - [`differential`]: `dz` and its rank.
//! - [`koopman`]: eigenfunction and rescaling checks.
//! - [`lift`]: local lifts through `exp`.
//! - [`harness`]: the system catalog and command dispatch.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod differential;
pub mod error;
pub mod harness;
pub mod koopman;
pub mod lie;
pub mod lift;
pub mod manifold;
pub mod numeric;

pub use error::{Error, Result};

//! Parameter sweeps over glued surfaces: branch tracking, diagnostic inner
//! products, rate fits and verdicts on the asymptotic claims.

// NaN-rejecting parameter checks read as `!(x > 0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod branches;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod record;
pub mod sweep;
pub mod verify;

pub use error::{LabError, Result};

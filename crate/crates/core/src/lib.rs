//! Spectral geometry of surfaces with a collapsing flat cylinder or cross cap
//! glued to a background surface.
//!
//! The crate is generic over the floating point type through [`Real`]; the
//! `*64` aliases at the bottom fix the scalar to `f64`, which is what the
//! experiments use.

// NaN-rejecting parameter checks read as `!(x > 0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dense;
pub mod error;
pub mod fem;
pub mod green;
pub mod mesh;

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{Error, Result};

/// Scalar type used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for [`Real::lit`].
#[inline]
pub fn c<T: Real>(x: f64) -> T {
    T::lit(x)
}

pub type ModelPiece64 = analytic::ModelPiece<f64>;
pub type HWindow64 = analytic::HWindow<f64>;
pub type BackgroundSpectrum64 = analytic::BackgroundSpectrum<f64>;
pub type Prediction64 = analytic::Prediction<f64>;
pub type ChartMesh64 = mesh::ChartMesh<f64>;
pub type GluedMesh64 = mesh::GluedMesh<f64>;
pub type AttachmentSpec64 = mesh::AttachmentSpec<f64>;
pub type MeshParams64 = mesh::MeshParams<f64>;

pub type CsrMatrix64 = fem::CsrMatrix<f64>;
pub type EigenPair64 = fem::EigenPair<f64>;
pub type Spectrum64 = fem::Spectrum<f64>;
pub type RotatedBasis64 = green::RotatedBasis<f64>;
pub type KernelField64 = green::KernelField<f64>;
pub type Quasimode64 = green::Quasimode<f64>;
pub type TailBoundReport64 = green::TailBoundReport<f64>;

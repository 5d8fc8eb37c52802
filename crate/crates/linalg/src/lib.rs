//! Dense and structured linear-algebra primitives for image monitoring:
//! image/vector interconversion, convolution-induced linear operators,
//! symmetric eigendecomposition, sparse precision assembly and
//! log-determinant strategies.
//!
//! All numeric code is generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the crate-root aliases fix the default `f64` used
//! throughout the detection stack.

use nalgebra::RealField;
use num_traits::FromPrimitive;

mod conv;
mod eigen;
mod error;
mod filter;
mod image;
mod logdet;
mod numeric;
mod precision;

pub use conv::{build_dense_operator, conv_apply, conv_apply_transpose};
pub use eigen::{symmetric_eigendecomposition, EigenBasis};
pub use error::LinalgError;
pub use filter::{ConvFilter, FilterKind, LinearLayer};
pub use image::ImageFrame;
pub use logdet::{log_abs_det_dense, log_det, LogDetStrategy};
pub use numeric::{log_sum_exp, log_sum_exp_pair};
pub use precision::{assemble_precision, SparseSym};

/// Scalar type over which all primitives are generic.
pub trait Scalar: RealField + FromPrimitive + Copy {
    /// Lossy conversion from an `f64` constant.
    fn from_config(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Default-precision aliases used by the detection stack.
pub type ImageFrame64 = ImageFrame<f64>;
pub type ConvFilter64 = ConvFilter<f64>;
pub type LinearLayer64 = LinearLayer<f64>;
pub type EigenBasis64 = EigenBasis<f64>;

/// Single-precision aliases.
pub type ImageFrame32 = ImageFrame<f32>;
pub type ConvFilter32 = ConvFilter<f32>;

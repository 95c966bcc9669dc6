//! Element types accepted by the dense tensor kernels.
//!
//! The kernels are written once against [`Scalar`], which layers a few
//! conversions on top of the LAPACK-capable scalar tower (`f32`, `f64`,
//! `Complex<f32>`, `Complex<f64>`). The physics engines use `Complex<f64>`
//! exclusively; see the aliases at the crate root.

use ndarray::LinalgScalar;
use ndarray_linalg::Lapack;
use num_complex::Complex;
use num_traits::{Float, ToPrimitive, Zero};

/// A field element the tensor kernels can contract, decompose and serialize.
pub trait Scalar:
    ndarray_linalg::Scalar<Real = <Self as Scalar>::RealField>
    + Lapack
    + LinalgScalar
    + Send
    + Sync
{
    /// Underlying real precision.
    type RealField: Float + ToPrimitive + Lapack + LinalgScalar + Send + Sync;

    /// Whether the type carries an imaginary part.
    const IS_COMPLEX: bool;

    /// Builds a value from `f64` parts. Returns `None` for a real type
    /// asked to hold a non-zero imaginary part.
    fn from_parts(re: f64, im: f64) -> Option<Self>;

    /// `(re, im)` widened to `f64`.
    fn to_parts(&self) -> (f64, f64);

    fn from_f64(x: f64) -> Self {
        Self::from_parts(x, 0.0).expect("real value always representable")
    }

    fn is_finite_value(&self) -> bool {
        let (re, im) = self.to_parts();
        re.is_finite() && im.is_finite()
    }
}

macro_rules! impl_real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type RealField = $t;
            const IS_COMPLEX: bool = false;

            fn from_parts(re: f64, im: f64) -> Option<Self> {
                if im.is_zero() {
                    Some(re as $t)
                } else {
                    None
                }
            }

            fn to_parts(&self) -> (f64, f64) {
                (self.to_f64().unwrap_or(f64::NAN), 0.0)
            }
        }
    };
}

macro_rules! impl_complex_scalar {
    ($t:ty) => {
        impl Scalar for Complex<$t> {
            type RealField = $t;
            const IS_COMPLEX: bool = true;

            fn from_parts(re: f64, im: f64) -> Option<Self> {
                Some(Complex::new(re as $t, im as $t))
            }

            fn to_parts(&self) -> (f64, f64) {
                (self.re as f64, self.im as f64)
            }
        }
    };
}

impl_real_scalar!(f32);
impl_real_scalar!(f64);
impl_complex_scalar!(f32);
impl_complex_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn real_types_reject_imaginary_parts() {
        assert!(<f64 as Scalar>::from_parts(1.0, 0.5).is_none());
        assert_eq!(<f32 as Scalar>::from_parts(2.0, 0.0), Some(2.0f32));
    }

    #[test]
    fn complex_parts_round_trip() {
        let z = Complex64::from_parts(1.5, -0.25).unwrap();
        assert_eq!(z.to_parts(), (1.5, -0.25));
        assert!(!Complex64::new(f64::NAN, 0.0).is_finite_value());
    }
}

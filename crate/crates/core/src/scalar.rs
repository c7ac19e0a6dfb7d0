use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the tabular operators are generic over.
///
/// Implemented for `f32` and `f64`. Environment generators and the closed-form
/// bound calculators work in `f64`; tables and models can be cast to any
/// `Scalar` with [`crate::TabularMdp::cast`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Float-to-float conversion cannot fail.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("float conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float conversion")
    }

    /// Tolerance for "sums to one" checks at this precision.
    fn stochastic_tolerance(len: usize) -> Self {
        let floor = Self::lit(1e-12);
        let scaled = Self::epsilon() * Self::lit(4.0 * (len.max(1) as f64));
        if scaled > floor {
            scaled
        } else {
            floor
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

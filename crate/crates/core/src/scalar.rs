//! Scalar abstraction shared by the linear-algebra core.
//!
//! Everything that only needs field arithmetic, square roots, exponentials and
//! logarithms is written against [`Scalar`], so the receiver algebra and the
//! entropy code run in `f32` as well as `f64`. Quadrature, optimization and
//! I/O stay in `f64`.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating point type usable by the core (`f32` or `f64`).
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("representable count")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Machine epsilon of the type, used to scale default tolerances.
    fn eps() -> Self {
        Self::default_epsilon()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `e^{i theta}`.
pub(crate) fn cis<T: Scalar>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Reduce an angle into `[0, 2pi)`, snapping values that land within a few
/// ulps of `2pi` back to zero.
pub fn wrap_phase<T: Scalar>(theta: T) -> T {
    let tau = T::two_pi();
    let mut r = theta % tau;
    if r < T::zero() {
        r += tau;
    }
    if r >= tau - T::lit(64.0) * T::eps() * tau {
        r = T::zero();
    }
    r
}

/// Signed distance between two angles, in `[-pi, pi]`.
pub fn phase_difference<T: Scalar>(a: T, b: T) -> T {
    let d = wrap_phase(a - b);
    if d > T::pi() {
        d - T::two_pi()
    } else {
        d
    }
}

//! Scalar abstraction for the numeric core.
//!
//! Every solver in this crate is generic over [`Scalar`] so the same code
//! runs in `f32` or `f64`. Concrete aliases for the main types live at the
//! crate root; the CLI instantiates everything with `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point scalar the numeric core is generic over.
///
/// The associated tolerances scale with the precision of the type: the f64
/// values are the contract the experiment pipeline is validated against, the
/// f32 values are the tightest that single precision can actually hold.
pub trait Scalar: Float + Sum + Debug + Display + Send + Sync + 'static {
    /// Accepted row-sum defect when validating transition matrices.
    const STOCHASTIC_TOL: Self;
    /// Accepted total-mass defect when validating probability vectors.
    const DIST_TOL: Self;
    /// Default residual target for stationary-distribution iteration.
    const STATIONARY_TOL: Self;

    /// Conversion from `f64`, used for literals and RNG draws.
    fn of(x: f64) -> Self;

    /// Conversion to `f64`, used for reporting and serialization.
    fn to_f64(self) -> f64;
}

macro_rules! impl_scalar {
    ($t:ty, $stochastic:expr, $dist:expr, $stationary:expr) => {
        impl Scalar for $t {
            const STOCHASTIC_TOL: Self = $stochastic;
            const DIST_TOL: Self = $dist;
            const STATIONARY_TOL: Self = $stationary;

            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f64, 1e-12, 1e-10, 1e-10);
impl_scalar!(f32, 1e-5, 1e-4, 1e-6);

//! Dense-network math kernel.

mod adam;
pub mod checkpoint;
mod gaussian;
pub mod gradcheck;
mod loss;
mod mat;
mod mlp;

pub use adam::AdamState;
pub use gaussian::{gaussian_log_prob, gaussian_sample, kl_to_standard_normal, DiagGaussian, LOG_STD_MAX, LOG_STD_MIN};
pub(crate) use gaussian::{log_prob_1d, GaussianBatch};
pub use loss::{expectile_grad, expectile_loss};
pub use mat::Mat;
pub use mlp::{soft_update, Activation, ForwardCache, Grads, Head, Layer, Mlp};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type networks are generic over. Training uses [`crate::Float`];
/// gradient checks always run in `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dot product with eight independent accumulators. The summation order is
/// fixed, so results are reproducible while still vectorizing.
#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = F::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<F: Real>(y: &mut [F], alpha: F, x: &[F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

//! Minimal dense numeric substrate for the agent: n-dimensional tensors,
//! the handful of layers the network needs with analytic backward passes,
//! Adam, global gradient-norm clipping, and categorical utilities.
//!
//! Everything is generic over [`Scalar`] so training runs in `f32` while
//! gradient-check tests instantiate the identical code in `f64`.
//! Convolution is cross-correlation (no kernel flip) with zero padding and
//! floor output sizing, `out = (in + 2*pad - k) / stride + 1`.

mod adam;
mod categorical;
mod layers;
mod store;
mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use categorical::Categorical;
pub use layers::{
    channel_concat, channel_concat_backward, conv2d_backward, conv2d_forward, global_avg_pool,
    global_avg_pool_backward, linear_backward, linear_forward, relu, relu_backward, residual_add,
    sigmoid, sigmoid_backward, softmax, softmax_backward,
};
pub use store::{GradBuffer, ParamId, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
}

/// Floating scalar the substrate is generic over. `f32` for training,
/// `f64` for gradient checks.
pub trait Scalar:
    Copy
    + PartialOrd
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn minimum(self, other: Self) -> Self;
    fn is_finite(self) -> bool;

    /// Row-major general matrix multiply
    /// `C[m x n] = alpha * A[m x k] * B[k x n] + beta * C` with explicit
    /// strides, dispatched to `matrixmultiply`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn maximum(self, other: Self) -> Self {
                if self > other { self } else { other }
            }
            #[inline]
            fn minimum(self, other: Self) -> Self {
                if self < other { self } else { other }
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }

            #[inline]
            unsafe fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: *const Self,
                rsa: isize,
                csa: isize,
                b: *const Self,
                rsb: isize,
                csb: isize,
                beta: Self,
                c: *mut Self,
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 || k == 0 {
                    return;
                }
                unsafe { $gemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc) }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Gaussian draw via Box-Muller on two uniform variates; used for weight
/// initialization so the init path does not depend on distribution crates.
pub fn gaussian<R: rand::Rng>(rng: &mut R) -> f64 {
    let mut u1: f64 = rng.random();
    while u1 <= f64::MIN_POSITIVE {
        u1 = rng.random();
    }
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Scalar element type of a [`Tensor`](crate::Tensor).
///
/// Implemented for `f32` (training) and `f64` (gradient verification).
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    /// `c = alpha * a * b + beta * c` over strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must be
    /// in bounds for the respective pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
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

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `exp`, possibly via a branch-free approximation that vectorizes.
    #[inline]
    fn fast_exp(self) -> Self {
        self.exp()
    }
}

impl Float for f32 {
    const NAME: &'static str = "f32";

    /// Range reduction to `2^n * e^r` with `|r| <= ln2 / 2` and a degree-6
    /// polynomial; within 2 ulp of `f32::exp`. Inputs below the smallest
    /// normal result return 0; NaN propagates.
    #[inline]
    fn fast_exp(self) -> f32 {
        const LO: f32 = -87.33;
        const HI: f32 = 88.72;
        // `max`/`min` discard NaN, so `x` is always finite.
        let x = self.max(LO).min(HI);
        // Round to nearest through the 1.5 * 2^23 shifter; `round` is a libm call
        // without SSE4.1. The shifted value's low mantissa bits hold `n`, so the
        // exponent comes out with wrapping integer ops that stay vectorizable.
        const SHIFTER: f32 = 12_582_912.0;
        let shifted = x * std::f32::consts::LOG2_E + SHIFTER;
        let n = shifted - SHIFTER;
        let r = x - n * 0.693_359_4 + n * 2.121_944_4e-4;
        let r2 = r * r;
        let p = ((((1.987_569_1e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r
            + 0.166_666_65)
            * r
            + 0.5;
        let y = p * r2 + r + 1.0;
        // `n` lies in [-126, 128] because `x` is clamped, so `n + 127` fits the exponent field.
        let biased = shifted.to_bits().wrapping_sub(SHIFTER.to_bits()).wrapping_add(127);
        let v = y * f32::from_bits(biased << 23);
        let v = if self > HI { f32::INFINITY } else { v };
        let v = if self.is_nan() { self } else { v };
        if self < LO {
            0.0
        } else {
            v
        }
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Float for f64 {
    const NAME: &'static str = "f64";

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

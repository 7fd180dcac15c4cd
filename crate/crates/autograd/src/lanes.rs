//! Reductions with independent accumulators so that they vectorize under
//! strict floating-point semantics.

use crate::Float;

const LANES: usize = 8;

pub(crate) fn sum<S: Float>(x: &[S]) -> S {
    let mut acc = [S::zero(); LANES];
    let chunks = x.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a += v;
        }
    }
    let mut s = acc.iter().copied().fold(S::zero(), |a, b| a + b);
    for &v in tail {
        s += v;
    }
    s
}

pub(crate) fn dot<S: Float>(x: &[S], y: &[S]) -> S {
    let mut acc = [S::zero(); LANES];
    let n = x.len().min(y.len());
    let body = n - n % LANES;
    for (cx, cy) in x[..body].chunks_exact(LANES).zip(y[..body].chunks_exact(LANES)) {
        for i in 0..LANES {
            acc[i] += cx[i] * cy[i];
        }
    }
    let mut s = acc.iter().copied().fold(S::zero(), |a, b| a + b);
    for i in body..n {
        s += x[i] * y[i];
    }
    s
}

/// Maximum; NaN entries are ignored unless every entry is NaN.
pub(crate) fn max<S: Float>(x: &[S]) -> S {
    let mut acc = [S::neg_infinity(); LANES];
    let chunks = x.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for (a, &v) in acc.iter_mut().zip(c) {
            *a = if v > *a { v } else { *a };
        }
    }
    let mut m = acc.iter().copied().fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    for &v in tail {
        m = if v > m { v } else { m };
    }
    m
}

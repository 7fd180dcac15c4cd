//! 2-D convolution and its transpose via im2col/col2im and gemm.

use crate::error::{invalid, Result};
use crate::gemm::{gemm, View};
use crate::{Float, Tensor, Var};

/// Geometry of a square-kernel convolution from a `(c, h, w)` plane to
/// `(out_h, out_w)` output positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

pub fn conv_out_size(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (size + 2 * pad).checked_sub(kernel).map(|v| v / stride + 1)
}

/// Unfolds `src[c, h, w]` into `cols[c*k*k, out_h*out_w]`.
pub fn im2col<S: Float>(src: &[S], g: &ConvGeometry, cols: &mut [S]) {
    let k = g.kernel;
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &src[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(S::zero());
                        continue;
                    }
                    let srow = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            S::zero()
                        } else {
                            srow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dst[c, h, w]`.
pub fn col2im<S: Float>(cols: &[S], g: &ConvGeometry, dst: &mut [S]) {
    let k = g.kernel;
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut dst[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let prow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            prow[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

fn add_channel_bias<S: Float>(out: &mut [S], bias: &[S], plane: usize) {
    for (ch, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        for v in ch {
            *v += b;
        }
    }
}

fn channel_sums<S: Float>(g: &[S], channels: usize, plane: usize) -> Vec<S> {
    let mut acc = vec![S::zero(); channels];
    for (i, ch) in g.chunks(plane).enumerate() {
        acc[i % channels] += ch.iter().copied().sum::<S>();
    }
    acc
}

impl<S: Float> Var<S> {
    /// `x[n, c, h, w] ⋆ w[o, c, k, k] (+ b[o])`.
    pub fn conv2d(&self, weight: &Var<S>, bias: Option<&Var<S>>, stride: usize, pad: usize) -> Result<Var<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] || stride == 0 {
            return invalid("conv2d", format!("input {xs:?}, weight {ws:?}, stride {stride}"));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[0], ws[2]);
        if bias.is_some_and(|b| b.shape() != [o]) {
            return invalid("conv2d", "bias length differs from output channels");
        }
        let (Some(out_h), Some(out_w)) = (conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)) else {
            return invalid("conv2d", format!("kernel {k} larger than padded input {h}x{w}"));
        };
        let geo = ConvGeometry { channels: c, h, w, kernel: k, stride, pad, out_h, out_w };
        let (rows, ncols) = (geo.col_rows(), geo.col_cols());
        let in_plane = c * h * w;
        let out_plane = o * ncols;
        let mut out = vec![S::zero(); n * out_plane];
        let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![S::zero(); rows * ncols] };
        let xd = self.value.data();
        let wd = weight.value.data();
        for b in 0..n {
            let x_b = &xd[b * in_plane..(b + 1) * in_plane];
            let src: &[S] = if geo.is_pointwise() {
                x_b
            } else {
                im2col(x_b, &geo, &mut cols);
                &cols
            };
            gemm(o, rows, ncols, S::one(), wd, View::rm(0, rows), src, View::rm(0, ncols), S::zero(), &mut out[b * out_plane..], View::rm(0, ncols));
        }
        if let Some(bv) = bias {
            add_channel_bias(&mut out, bv.value().data(), ncols);
        }
        let out = Tensor::new(vec![n, o, out_h, out_w], out)?;
        let x = self.value_rc();
        let wv = weight.value_rc();
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Ok(self.graph.record(out, &parents, move |g, needs| {
            let gd = g.data();
            let xd = x.data();
            let wd = wv.data();
            let mut gx = needs[0].then(|| vec![S::zero(); n * in_plane]);
            let mut gw = needs[1].then(|| vec![S::zero(); o * rows]);
            let mut cols = vec![S::zero(); rows * ncols];
            for b in 0..n {
                let g_b = &gd[b * out_plane..(b + 1) * out_plane];
                if let Some(gw) = gw.as_mut() {
                    let x_b = &xd[b * in_plane..(b + 1) * in_plane];
                    let src: &[S] = if geo.is_pointwise() {
                        x_b
                    } else {
                        im2col(x_b, &geo, &mut cols);
                        &cols
                    };
                    gemm(o, ncols, rows, S::one(), g_b, View::rm(0, ncols), src, View::rm(0, ncols).t(), S::one(), gw, View::rm(0, rows));
                }
                if let Some(gx) = gx.as_mut() {
                    let gx_b = &mut gx[b * in_plane..(b + 1) * in_plane];
                    if geo.is_pointwise() {
                        gemm(rows, o, ncols, S::one(), wd, View::rm(0, rows).t(), g_b, View::rm(0, ncols), S::zero(), gx_b, View::rm(0, ncols));
                    } else {
                        gemm(rows, o, ncols, S::one(), wd, View::rm(0, rows).t(), g_b, View::rm(0, ncols), S::zero(), &mut cols, View::rm(0, ncols));
                        col2im(&cols, &geo, gx_b);
                    }
                }
            }
            let mut grads = vec![
                gx.map(|d| Tensor::new(vec![n, c, h, w], d).expect("shape")),
                gw.map(|d| Tensor::new(vec![o, c, k, k], d).expect("shape")),
            ];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| Tensor::new(vec![o], channel_sums(gd, o, ncols)).expect("shape")));
            }
            grads
        }))
    }

    /// Transposed convolution `x[n, i, h, w]` with `w[i, o, k, k]`; output size
    /// `(h - 1) * stride - 2 * pad + k + out_pad`.
    pub fn conv_transpose2d(
        &self,
        weight: &Var<S>,
        bias: Option<&Var<S>>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Var<S>> {
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != xs[1] || ws[2] != ws[3] || stride == 0 || out_pad >= stride {
            return invalid("conv_transpose2d", format!("input {xs:?}, weight {ws:?}, stride {stride}, out_pad {out_pad}"));
        }
        let (n, ci, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[1], ws[2]);
        if bias.is_some_and(|b| b.shape() != [o]) {
            return invalid("conv_transpose2d", "bias length differs from output channels");
        }
        let full = |s: usize| ((s - 1) * stride + k + out_pad).checked_sub(2 * pad);
        let (Some(out_h), Some(out_w)) = (full(h), full(w)) else {
            return invalid("conv_transpose2d", "padding exceeds output extent");
        };
        // The transposed conv is the adjoint of a conv from (o, out_h, out_w) to (h, w).
        let geo = ConvGeometry { channels: o, h: out_h, w: out_w, kernel: k, stride, pad, out_h: h, out_w: w };
        let (rows, ncols) = (geo.col_rows(), geo.col_cols());
        let in_plane = ci * h * w;
        let out_plane = o * out_h * out_w;
        let mut out = vec![S::zero(); n * out_plane];
        let mut cols = vec![S::zero(); rows * ncols];
        let xd = self.value.data();
        let wd = weight.value.data();
        for b in 0..n {
            gemm(rows, ci, ncols, S::one(), wd, View::rm(0, rows).t(), &xd[b * in_plane..], View::rm(0, ncols), S::zero(), &mut cols, View::rm(0, ncols));
            col2im(&cols, &geo, &mut out[b * out_plane..(b + 1) * out_plane]);
        }
        if let Some(bv) = bias {
            add_channel_bias(&mut out, bv.value().data(), out_h * out_w);
        }
        let out = Tensor::new(vec![n, o, out_h, out_w], out)?;
        let x = self.value_rc();
        let wv = weight.value_rc();
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Ok(self.graph.record(out, &parents, move |g, needs| {
            let gd = g.data();
            let xd = x.data();
            let wd = wv.data();
            let mut gx = needs[0].then(|| vec![S::zero(); n * in_plane]);
            let mut gw = needs[1].then(|| vec![S::zero(); ci * rows]);
            let mut cols = vec![S::zero(); rows * ncols];
            for b in 0..n {
                im2col(&gd[b * out_plane..(b + 1) * out_plane], &geo, &mut cols);
                if let Some(gx) = gx.as_mut() {
                    gemm(ci, rows, ncols, S::one(), wd, View::rm(0, rows), &cols, View::rm(0, ncols), S::zero(), &mut gx[b * in_plane..], View::rm(0, ncols));
                }
                if let Some(gw) = gw.as_mut() {
                    gemm(ci, ncols, rows, S::one(), &xd[b * in_plane..], View::rm(0, ncols), &cols, View::rm(0, ncols).t(), S::one(), gw, View::rm(0, rows));
                }
            }
            let mut grads = vec![
                gx.map(|d| Tensor::new(vec![n, ci, h, w], d).expect("shape")),
                gw.map(|d| Tensor::new(vec![ci, o, k, k], d).expect("shape")),
            ];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| Tensor::new(vec![o], channel_sums(gd, o, out_h * out_w)).expect("shape")));
            }
            grads
        }))
    }
}

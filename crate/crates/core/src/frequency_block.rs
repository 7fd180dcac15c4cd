//! Fourier-domain temporal mixing and the temporal modeling layer.

use std::rc::Rc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use sftformer_autograd::{Float, Graph, Param, Tensor, Var};

use crate::error::{Error, Result};
use crate::nn::{join, zero_param, Conv2d, Init, LayerNorm, Linear, Module};

/// Number of real-FFT bins for a length-`t` signal.
pub fn rfft_bins(t: usize) -> usize {
    t / 2 + 1
}

/// Applies a length-`t` complex FFT to every channel column of `[b, t, d]`
/// data. `inverse` selects the `e^{+i}` kernel; no scaling is applied.
fn fft_columns(data: &[Complex<f64>], b: usize, t: usize, d: usize, inverse: bool) -> Vec<Complex<f64>> {
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(t) } else { planner.plan_fft_forward(t) };
    let mut out = vec![Complex::default(); data.len()];
    let mut col = vec![Complex::default(); t];
    for bi in 0..b {
        for c in 0..d {
            for (ti, v) in col.iter_mut().enumerate() {
                *v = data[(bi * t + ti) * d + c];
            }
            plan.process(&mut col);
            for (ti, v) in col.iter().enumerate() {
                out[(bi * t + ti) * d + c] = *v;
            }
        }
    }
    out
}

/// Hermitian weight of bin `k` in a length-`t` real inverse transform.
fn bin_weight(k: usize, t: usize) -> f64 {
    if k == 0 || 2 * k == t {
        1.0
    } else {
        2.0
    }
}

/// Orthonormal real FFT along axis 1: `[b, t, d] -> [b, 2, t/2+1, d]` holding
/// real parts then imaginary parts.
pub fn rfft_time<S: Float>(u: &Var<S>) -> Result<Var<S>> {
    let s = u.shape();
    if s.len() != 3 {
        return Err(Error::Config(format!("rfft_time expects [b, t, d], got {s:?}")));
    }
    let (b, t, d) = (s[0], s[1], s[2]);
    let k = rfft_bins(t);
    let scale = 1.0 / (t as f64).sqrt();
    let input: Vec<Complex<f64>> = u.value().data().iter().map(|v| Complex::new(v.f64(), 0.0)).collect();
    let spec = fft_columns(&input, b, t, d, false);
    let mut out = vec![S::zero(); b * 2 * k * d];
    for bi in 0..b {
        for m in 0..k {
            for c in 0..d {
                let z = spec[(bi * t + m) * d + c] * scale;
                out[((bi * 2) * k + m) * d + c] = S::of(z.re);
                out[((bi * 2 + 1) * k + m) * d + c] = S::of(z.im);
            }
        }
    }
    let value = Tensor::new(vec![b, 2, k, d], out)?;
    Ok(u.graph().record(value, &[u], move |g, _| {
        // Adjoint: gu[t] = scale * Re(sum_m G[m] e^{+2 pi i m t / T}).
        let gd = g.data();
        let mut full = vec![Complex::default(); b * t * d];
        for bi in 0..b {
            for m in 0..k {
                for c in 0..d {
                    full[(bi * t + m) * d + c] = Complex::new(
                        gd[((bi * 2) * k + m) * d + c].f64(),
                        gd[((bi * 2 + 1) * k + m) * d + c].f64(),
                    );
                }
            }
        }
        let back = fft_columns(&full, b, t, d, true);
        let gu = back.iter().map(|z| S::of(z.re * scale)).collect();
        vec![Some(Tensor::new(vec![b, t, d], gu).expect("shape"))]
    }))
}

/// Orthonormal inverse real FFT: `[b, 2, t/2+1, d] -> [b, t, d]`. Imaginary
/// parts of the DC and Nyquist bins do not contribute.
pub fn irfft_time<S: Float>(y: &Var<S>, t: usize) -> Result<Var<S>> {
    let s = y.shape();
    let k = rfft_bins(t);
    if s.len() != 4 || s[1] != 2 || s[2] != k {
        return Err(Error::Config(format!("irfft_time of length {t} expects [b, 2, {k}, d], got {s:?}")));
    }
    let (b, d) = (s[0], s[3]);
    let scale = 1.0 / (t as f64).sqrt();
    let yd = y.value().data();
    let mut full = vec![Complex::default(); b * t * d];
    for bi in 0..b {
        for m in 0..k {
            for c in 0..d {
                let z = Complex::new(
                    yd[((bi * 2) * k + m) * d + c].f64(),
                    yd[((bi * 2 + 1) * k + m) * d + c].f64(),
                );
                full[(bi * t + m) * d + c] = z;
                if m > 0 && 2 * m != t {
                    full[(bi * t + t - m) * d + c] = z.conj();
                }
            }
        }
    }
    let out: Vec<S> = fft_columns(&full, b, t, d, true)
        .iter()
        .map(|z| S::of(z.re * scale))
        .collect();
    let value = Tensor::new(vec![b, t, d], out)?;
    Ok(y.graph().record(value, &[y], move |g, _| {
        let input: Vec<Complex<f64>> = g.data().iter().map(|v| Complex::new(v.f64(), 0.0)).collect();
        let spec = fft_columns(&input, b, t, d, false);
        let mut gy = vec![S::zero(); b * 2 * k * d];
        for bi in 0..b {
            for m in 0..k {
                let w = scale * bin_weight(m, t);
                let edge = m == 0 || 2 * m == t;
                for c in 0..d {
                    let z = spec[(bi * t + m) * d + c];
                    gy[((bi * 2) * k + m) * d + c] = S::of(w * z.re);
                    gy[((bi * 2 + 1) * k + m) * d + c] = S::of(if edge { 0.0 } else { w * z.im });
                }
            }
        }
        vec![Some(Tensor::new(vec![b, 2, k, d], gy).expect("shape"))]
    }))
}

/// Complex per-mode channel mixing `Y[m] = Q[m] R[m]` for `m < modes`, zero
/// above. `q` is `[b, 2, k, d]`; `r_re`, `r_im` are `[modes, d, d]`.
pub fn mode_mix<S: Float>(q: &Var<S>, r_re: &Var<S>, r_im: &Var<S>) -> Result<Var<S>> {
    let s = q.shape();
    let rs = r_re.shape();
    if s.len() != 4 || s[1] != 2 || rs.len() != 3 || rs[1] != s[3] || rs[2] != s[3] || rs[0] > s[2] || r_im.shape() != rs {
        return Err(Error::Config(format!(
            "mode_mix of spectrum {s:?} with kernels {rs:?} / {:?}",
            r_im.shape()
        )));
    }
    let (b, k, d, modes) = (s[0], s[2], s[3], rs[0]);
    let (qv, rr, ri) = (q.value_rc(), r_re.value_rc(), r_im.value_rc());
    let mut out = vec![S::zero(); b * 2 * k * d];
    {
        let (qd, rrd, rid) = (qv.data(), rr.data(), ri.data());
        for bi in 0..b {
            for m in 0..modes {
                let qre = &qd[((bi * 2) * k + m) * d..][..d];
                let qim = &qd[((bi * 2 + 1) * k + m) * d..][..d];
                let mut yre = vec![S::zero(); d];
                let mut yim = vec![S::zero(); d];
                for i in 0..d {
                    let a = &rrd[(m * d + i) * d..][..d];
                    let c = &rid[(m * d + i) * d..][..d];
                    for o in 0..d {
                        yre[o] += qre[i] * a[o] - qim[i] * c[o];
                        yim[o] += qre[i] * c[o] + qim[i] * a[o];
                    }
                }
                out[((bi * 2) * k + m) * d..][..d].copy_from_slice(&yre);
                out[((bi * 2 + 1) * k + m) * d..][..d].copy_from_slice(&yim);
            }
        }
    }
    let value = Tensor::new(vec![b, 2, k, d], out)?;
    Ok(q.graph().record(value, &[q, r_re, r_im], move |g, needs| {
        let gd = g.data();
        let (qd, rrd, rid) = (qv.data(), rr.data(), ri.data());
        let mut gq = vec![S::zero(); b * 2 * k * d];
        let mut grr = vec![S::zero(); modes * d * d];
        let mut gri = vec![S::zero(); modes * d * d];
        for bi in 0..b {
            for m in 0..modes {
                let gre = &gd[((bi * 2) * k + m) * d..][..d];
                let gim = &gd[((bi * 2 + 1) * k + m) * d..][..d];
                let qre = &qd[((bi * 2) * k + m) * d..][..d];
                let qim = &qd[((bi * 2 + 1) * k + m) * d..][..d];
                for i in 0..d {
                    let row = (m * d + i) * d;
                    let (a, c) = (&rrd[row..row + d], &rid[row..row + d]);
                    let (mut sre, mut sim) = (S::zero(), S::zero());
                    for o in 0..d {
                        sre += gre[o] * a[o] + gim[o] * c[o];
                        sim += gim[o] * a[o] - gre[o] * c[o];
                        grr[row + o] += gre[o] * qre[i] + gim[o] * qim[i];
                        gri[row + o] += gim[o] * qre[i] - gre[o] * qim[i];
                    }
                    gq[((bi * 2) * k + m) * d + i] = sre;
                    gq[((bi * 2 + 1) * k + m) * d + i] = sim;
                }
            }
        }
        vec![
            needs[0].then(|| Tensor::new(vec![b, 2, k, d], gq).expect("shape")),
            needs[1].then(|| Tensor::new(vec![modes, d, d], grr).expect("shape")),
            needs[2].then(|| Tensor::new(vec![modes, d, d], gri).expect("shape")),
        ]
    }))
}

/// Project to `d_feb` channels, mix retained Fourier modes along time with a
/// learned complex kernel, transform back, and project to `P`.
#[derive(Clone)]
pub struct FrequencyBlock<S> {
    pub proj_in: Linear<S>,
    pub r_re: Param<S>,
    pub r_im: Param<S>,
    pub proj_out: Linear<S>,
}

impl<S: Float> FrequencyBlock<S> {
    pub fn new(init: &mut Init, p: usize, d_feb: usize, modes: usize) -> Self {
        let std = 1.0 / d_feb as f64;
        Self {
            proj_in: Linear::new(init, p, d_feb, false),
            r_re: init.normal(&[modes, d_feb, d_feb], std),
            r_im: init.normal(&[modes, d_feb, d_feb], std),
            proj_out: Linear::new(init, d_feb, p, false),
        }
    }

    pub fn modes(&self) -> usize {
        self.r_re.shape()[0]
    }

    /// `[b, t, P] -> [b, t, P]`.
    pub fn forward(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let s = z.shape();
        if s.len() != 3 || s[1] < 2 {
            return Err(Error::Domain(format!("frequency block needs [b, t >= 2, P], got {s:?}")));
        }
        let t = s[1];
        if self.modes() > rfft_bins(t) {
            return Err(Error::Config(format!("{} modes exceed {} bins for t={t}", self.modes(), rfft_bins(t))));
        }
        let u = self.proj_in.forward(g, z)?;
        let q = rfft_time(&u)?;
        let y = mode_mix(&q, &g.param(&self.r_re), &g.param(&self.r_im))?;
        let v = irfft_time(&y, t)?;
        Ok(self.proj_out.forward(g, &v)?)
    }
}

impl<S: Float> Module<S> for FrequencyBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.proj_in.visit(&join(prefix, "proj_in"), f);
        f(&join(prefix, "r_re"), &self.r_re);
        f(&join(prefix, "r_im"), &self.r_im);
        self.proj_out.visit(&join(prefix, "proj_out"), f);
    }
}

/// Temporal modeling: squeeze channels to a per-frame map, model time with
/// full self-attention and the frequency block, then copy across channels.
#[derive(Clone)]
pub struct TemporalLayer<S> {
    pub squeeze: Conv2d<S>,
    pub norm_in: LayerNorm<S>,
    pub qkv: Linear<S>,
    pub proj: Linear<S>,
    pub norm_attn: LayerNorm<S>,
    pub feb: FrequencyBlock<S>,
    pub norm_feb: LayerNorm<S>,
    pub heads: usize,
}

impl<S: Float> TemporalLayer<S> {
    pub fn new(init: &mut Init, channels: usize, p: usize, heads: usize, d_feb: usize, modes: usize) -> Self {
        Self {
            squeeze: Conv2d::new(init, channels, 1, 1, 1, 0, true),
            norm_in: LayerNorm::new(init, p),
            qkv: Linear::new(init, p, 3 * p, true),
            proj: Linear::new(init, p, p, true),
            norm_attn: LayerNorm::new(init, p),
            feb: FrequencyBlock::new(init, p, d_feb, modes),
            norm_feb: LayerNorm::new(init, p),
            heads,
        }
    }

    /// Per-frame embedding `[b, t, c, h, w] -> [b, t, h*w]`.
    pub fn embed(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let s = z.shape().to_vec();
        let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let x = z.reshape(vec![b * t, c, h, w])?;
        let y = self.squeeze.forward(g, &x)?.reshape(vec![b, t, h * w])?;
        Ok(self.norm_in.forward(g, &y)?)
    }

    /// `[b, t, c, h, w] -> [b, t, c, h, w]` with identical channels.
    pub fn forward(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let s = z.shape().to_vec();
        if s.len() != 5 {
            return Err(Error::Config(format!("temporal layer expects [b, t, c, h, w], got {s:?}")));
        }
        let (b, t, c, h, w) = (s[0], s[1], s[2], s[3], s[4]);
        let p = h * w;
        let zt = self.embed(g, z)?;
        let attn = self.qkv.forward(g, &zt)?.attention(self.heads, None, None)?;
        let a = self.norm_attn.forward(g, &self.proj.forward(g, &attn)?)?.add(&zt)?;
        let f = self.norm_feb.forward(g, &self.feb.forward(g, &zt)?)?.add(&zt)?;
        let sum = a.add(&f)?;
        let mut idx = Vec::with_capacity(b * t * c * p);
        for bt in 0..b * t {
            for _ in 0..c {
                idx.extend(bt * p..(bt + 1) * p);
            }
        }
        Ok(sum.gather(Rc::new(idx), s.clone())?)
    }

    /// Makes the layer output exactly zero: the squeeze conv and the input
    /// norm offset make `z_t = 0`, and zeroed affine maps on both residual
    /// norms remove the attention and frequency paths.
    pub fn silence(&self) {
        zero_param(&self.squeeze.weight);
        if let Some(bias) = &self.squeeze.bias {
            zero_param(bias);
        }
        zero_param(&self.norm_in.beta);
        for norm in [&self.norm_attn, &self.norm_feb] {
            zero_param(&norm.gamma);
            zero_param(&norm.beta);
        }
    }
}

impl<S: Float> Module<S> for TemporalLayer<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.squeeze.visit(&join(prefix, "squeeze"), f);
        self.norm_in.visit(&join(prefix, "norm_in"), f);
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        self.norm_attn.visit(&join(prefix, "norm_attn"), f);
        self.feb.visit(&join(prefix, "feb"), f);
        self.norm_feb.visit(&join(prefix, "norm_feb"), f);
    }
}

//! Window partitioning, (shifted-)window multi-head self-attention, and the
//! two-sublayer transformer block built from them.

use std::rc::Rc;

use sftformer_autograd::{Float, Graph, Param, Tensor, Var};

use crate::error::{config, Result};
use crate::nn::{join, zero_param, Init, LayerNorm, Linear, Module};

/// Source index in a `[b, h, w, d]` grid for every element of its window
/// layout `[b * nw, ws * ws, d]`, after rolling the grid by `-shift`.
fn partition_index(b: usize, h: usize, w: usize, d: usize, ws: usize, shift: usize) -> Vec<usize> {
    let (nwh, nww) = (h / ws, w / ws);
    let mut idx = Vec::with_capacity(b * h * w * d);
    for bi in 0..b {
        for wy in 0..nwh {
            for wx in 0..nww {
                for iy in 0..ws {
                    let y = (wy * ws + iy + shift) % h;
                    for ix in 0..ws {
                        let x = (wx * ws + ix + shift) % w;
                        let base = ((bi * h + y) * w + x) * d;
                        idx.extend(base..base + d);
                    }
                }
            }
        }
    }
    idx
}

fn invert(idx: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; idx.len()];
    for (dst, &src) in idx.iter().enumerate() {
        inv[src] = dst;
    }
    inv
}

fn check_grid(shape: &[usize], ws: usize) -> Result<(usize, usize, usize, usize)> {
    if shape.len() != 4 {
        return config(format!("token grid must be [b, h, w, d], got {shape:?}"));
    }
    let (b, h, w, d) = (shape[0], shape[1], shape[2], shape[3]);
    if ws == 0 || h % ws != 0 || w % ws != 0 {
        return config(format!("grid {h}x{w} is not divisible by window_size {ws}"));
    }
    Ok((b, h, w, d))
}

/// Regroups `[b, h, w, d]` into `[b * (h/ws) * (w/ws), ws * ws, d]`.
pub fn window_partition<S: Float>(grid: &Tensor<S>, ws: usize) -> Result<Tensor<S>> {
    let (b, h, w, d) = check_grid(grid.shape(), ws)?;
    let idx = partition_index(b, h, w, d, ws, 0);
    let src = grid.data();
    let data = idx.iter().map(|&i| src[i]).collect();
    Ok(Tensor::new(vec![b * (h / ws) * (w / ws), ws * ws, d], data)?)
}

/// Inverse of [`window_partition`].
pub fn window_reverse<S: Float>(windows: &Tensor<S>, ws: usize, b: usize, h: usize, w: usize) -> Result<Tensor<S>> {
    let s = windows.shape();
    check_grid(&[b, h, w, 1], ws)?;
    if s.len() != 3 || s[0] != b * (h / ws) * (w / ws) || s[1] != ws * ws {
        return config(format!("windows {s:?} do not tile a {b}x{h}x{w} grid with window {ws}"));
    }
    let d = s[2];
    let idx = partition_index(b, h, w, d, ws, 0);
    let mut out = vec![S::zero(); windows.len()];
    for (&dst, &v) in idx.iter().zip(windows.data()) {
        out[dst] = v;
    }
    Ok(Tensor::new(vec![b, h, w, d], out)?)
}

/// Region label of every position of the rolled `h x w` grid.
pub fn shift_regions(h: usize, w: usize, ws: usize, shift: usize) -> Vec<usize> {
    let band = |v: usize, n: usize| {
        if v < n - ws {
            0
        } else if v < n - shift {
            1
        } else {
            2
        }
    };
    (0..h * w).map(|i| band(i / w, h) * 3 + band(i % w, w)).collect()
}

/// Additive mask `[nw, n, n]`: 0 where both tokens share a region, `-inf` otherwise.
pub fn shift_mask<S: Float>(h: usize, w: usize, ws: usize, shift: usize) -> Tensor<S> {
    let regions = shift_regions(h, w, ws, shift);
    let n = ws * ws;
    let (nwh, nww) = (h / ws, w / ws);
    let mut mask = Vec::with_capacity(nwh * nww * n * n);
    for wy in 0..nwh {
        for wx in 0..nww {
            let ids: Vec<usize> = (0..n)
                .map(|t| regions[(wy * ws + t / ws) * w + wx * ws + t % ws])
                .collect();
            for &a in &ids {
                for &b in &ids {
                    mask.push(if a == b { S::zero() } else { S::neg_infinity() });
                }
            }
        }
    }
    Tensor::new(vec![nwh * nww, n, n], mask).expect("mask length")
}

/// Flattened `[heads, n, n]` lookup into a `[(2ws-1)^2, heads]` bias table.
fn relative_position_index(ws: usize, heads: usize) -> Vec<usize> {
    let n = ws * ws;
    let span = 2 * ws - 1;
    let mut idx = Vec::with_capacity(heads * n * n);
    for h in 0..heads {
        for i in 0..n {
            for j in 0..n {
                let dy = i / ws + ws - 1 - j / ws;
                let dx = i % ws + ws - 1 - j % ws;
                idx.push((dy * span + dx) * heads + h);
            }
        }
    }
    idx
}

#[derive(Clone)]
pub struct WindowAttention<S> {
    pub qkv: Linear<S>,
    pub proj: Linear<S>,
    /// `[(2ws-1)^2, heads]`, absent when relative-position bias is disabled.
    pub bias_table: Option<Param<S>>,
    pub heads: usize,
    pub window_size: usize,
    bias_index: Rc<Vec<usize>>,
}

impl<S: Float> WindowAttention<S> {
    pub fn new(init: &mut Init, dim: usize, heads: usize, window_size: usize, relative_bias: bool) -> Self {
        let span = 2 * window_size - 1;
        Self {
            qkv: Linear::new(init, dim, 3 * dim, true),
            proj: Linear::new(init, dim, dim, true),
            bias_table: relative_bias.then(|| init.trunc_normal(&[span * span, heads], 0.02)),
            heads,
            window_size,
            bias_index: Rc::new(relative_position_index(window_size, heads)),
        }
    }

    /// Attention within each window of `[nw_total, ws * ws, d]`; `mask` is
    /// `[nw, n, n]` applied to window `i` as `mask[i % nw]`.
    pub fn forward(&self, g: &Graph<S>, windows: &Var<S>, mask: Option<Rc<Tensor<S>>>) -> Result<Var<S>> {
        let n = self.window_size * self.window_size;
        let bias = match &self.bias_table {
            Some(t) => Some(g.param(t).gather(Rc::clone(&self.bias_index), vec![self.heads, n, n])?),
            None => None,
        };
        let qkv = self.qkv.forward(g, windows)?;
        let attn = qkv.attention(self.heads, bias.as_ref(), mask)?;
        Ok(self.proj.forward(g, &attn)?)
    }
}

impl<S: Float> Module<S> for WindowAttention<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.qkv.visit(&join(prefix, "qkv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        if let Some(t) = &self.bias_table {
            f(&join(prefix, "bias_table"), t);
        }
    }
}

#[derive(Clone)]
pub struct Mlp<S> {
    pub fc1: Linear<S>,
    pub fc2: Linear<S>,
}

impl<S: Float> Mlp<S> {
    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        let hdn = self.fc1.forward(g, x)?.gelu();
        Ok(self.fc2.forward(g, &hdn)?)
    }
}

impl<S: Float> Module<S> for Mlp<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
}

/// One pre-norm attention + MLP pair.
#[derive(Clone)]
pub struct SwinSublayer<S> {
    pub norm1: LayerNorm<S>,
    pub attn: WindowAttention<S>,
    pub norm2: LayerNorm<S>,
    pub mlp: Mlp<S>,
}

impl<S: Float> SwinSublayer<S> {
    fn forward(&self, g: &Graph<S>, x: &Var<S>, shift: usize) -> Result<Var<S>> {
        let (b, h, w, d) = check_grid(x.shape(), self.attn.window_size)?;
        let ws = self.attn.window_size;
        let nw = b * (h / ws) * (w / ws);
        let fwd = partition_index(b, h, w, d, ws, shift);
        let rev = Rc::new(invert(&fwd));
        let mask = (shift > 0).then(|| Rc::new(shift_mask(h, w, ws, shift)));
        let windows = self.norm1.forward(g, x)?.gather(Rc::new(fwd), vec![nw, ws * ws, d])?;
        let attended = self.attn.forward(g, &windows, mask)?;
        let x = x.add(&attended.gather(rev, vec![b, h, w, d])?)?;
        let m = self.mlp.forward(g, &self.norm2.forward(g, &x)?)?;
        Ok(x.add(&m)?)
    }
}

impl<S: Float> Module<S> for SwinSublayer<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.norm1.visit(&join(prefix, "norm1"), f);
        self.attn.visit(&join(prefix, "attn"), f);
        self.norm2.visit(&join(prefix, "norm2"), f);
        self.mlp.visit(&join(prefix, "mlp"), f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwinConfig {
    pub dim: usize,
    pub heads: usize,
    pub window_size: usize,
    pub mlp_ratio: usize,
    pub relative_bias: bool,
}

/// Window attention sublayer followed by a shifted-window sublayer.
#[derive(Clone)]
pub struct SwinBlock<S> {
    pub layers: [SwinSublayer<S>; 2],
    pub window_size: usize,
}

impl<S: Float> SwinBlock<S> {
    pub fn new(init: &mut Init, cfg: SwinConfig) -> Result<Self> {
        if cfg.heads == 0 || cfg.dim % cfg.heads != 0 {
            return config(format!("dim {} is not divisible by {} heads", cfg.dim, cfg.heads));
        }
        let mut sub = || SwinSublayer {
            norm1: LayerNorm::new(init, cfg.dim),
            attn: WindowAttention::new(init, cfg.dim, cfg.heads, cfg.window_size, cfg.relative_bias),
            norm2: LayerNorm::new(init, cfg.dim),
            mlp: Mlp {
                fc1: Linear::new(init, cfg.dim, cfg.mlp_ratio * cfg.dim, true),
                fc2: Linear::new(init, cfg.mlp_ratio * cfg.dim, cfg.dim, true),
            },
        };
        let first = sub();
        let second = sub();
        Ok(Self {
            layers: [first, second],
            window_size: cfg.window_size,
        })
    }

    /// Shift of the second sublayer for an `h x w` grid; no shift when a
    /// single window already covers the grid.
    pub fn shift_for(&self, h: usize, w: usize) -> usize {
        if h <= self.window_size && w <= self.window_size {
            0
        } else {
            self.window_size / 2
        }
    }

    /// `[b, h, w, d] -> [b, h, w, d]`.
    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        let (_, h, w, _) = check_grid(x.shape(), self.window_size)?;
        let x = self.layers[0].forward(g, x, 0)?;
        self.layers[1].forward(g, &x, self.shift_for(h, w))
    }

    /// Zeroes the output projections and second MLP layers, making the block
    /// the identity map.
    pub fn silence(&self) {
        for l in &self.layers {
            for lin in [&l.attn.proj, &l.mlp.fc2] {
                zero_param(&lin.weight);
                if let Some(b) = &lin.bias {
                    zero_param(b);
                }
            }
        }
    }
}

impl<S: Float> Module<S> for SwinBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.layers[0].visit(&join(prefix, "w_msa"), f);
        self.layers[1].visit(&join(prefix, "sw_msa"), f);
    }
}

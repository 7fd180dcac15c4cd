//! Fused multi-head scaled dot-product attention.

use std::rc::Rc;

use crate::error::{invalid, Result};
use crate::gemm::{gemm, View};
use crate::lanes;
use crate::{Float, Tensor, Var};

fn softmax_rows<S: Float>(m: &mut [S], n: usize) {
    for row in m.chunks_mut(n) {
        let max = lanes::max(row);
        for v in row.iter_mut() {
            *v = (*v - max).fast_exp();
        }
        let inv = S::one() / lanes::sum(row);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

impl<S: Float> Var<S> {
    /// Self-attention over packed projections.
    ///
    /// `self` is `[b, n, 3 * d]` holding `[q | k | v]` per token, each split
    /// into `heads` contiguous slices of width `d / heads`. `bias` is an
    /// optional `[heads, n, n]` logit offset; `mask` is an optional constant
    /// `[m, n, n]` offset applied to batch entry `i` as `mask[i % m]` (use
    /// `-inf` to block pairs). Returns `[b, n, d]` with heads concatenated.
    pub fn attention(&self, heads: usize, bias: Option<&Var<S>>, mask: Option<Rc<Tensor<S>>>) -> Result<Var<S>> {
        let s = self.shape();
        if s.len() != 3 || heads == 0 || s[2] % (3 * heads) != 0 {
            return invalid("attention", format!("packed qkv {s:?} with {heads} heads"));
        }
        let (bsz, n, d3) = (s[0], s[1], s[2]);
        let d = d3 / 3;
        let dh = d / heads;
        if let Some(bv) = bias {
            if bv.shape() != [heads, n, n] {
                return invalid("attention", format!("bias {:?}, expected [{heads}, {n}, {n}]", bv.shape()));
            }
        }
        if let Some(m) = &mask {
            let ms = m.shape();
            if ms.len() != 3 || ms[1] != n || ms[2] != n || ms[0] == 0 || bsz % ms[0] != 0 {
                return invalid("attention", format!("mask {ms:?} for batch {bsz} of {n} tokens"));
            }
        }
        let scale = S::of(1.0 / (dh as f64).sqrt());
        let nn = n * n;
        let qkv = self.value.data();
        let mut probs = vec![S::zero(); bsz * heads * nn];
        let mut out = vec![S::zero(); bsz * n * d];
        for b in 0..bsz {
            let base = b * n * d3;
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * nn..(b * heads + h + 1) * nn];
                let q = View::strided(base + h * dh, d3, 1);
                let k = View::strided(base + d + h * dh, d3, 1);
                gemm(n, dh, n, scale, qkv, q, qkv, k.t(), S::zero(), p, View::rm(0, n));
                if let Some(bv) = bias {
                    for (pv, &bb) in p.iter_mut().zip(&bv.value().data()[h * nn..(h + 1) * nn]) {
                        *pv += bb;
                    }
                }
                if let Some(m) = &mask {
                    let mi = b % m.shape()[0];
                    for (pv, &mv) in p.iter_mut().zip(&m.data()[mi * nn..(mi + 1) * nn]) {
                        *pv += mv;
                    }
                }
                softmax_rows(p, n);
                let v = View::strided(base + 2 * d + h * dh, d3, 1);
                gemm(n, n, dh, S::one(), p, View::rm(0, n), qkv, v, S::zero(), &mut out, View::strided(b * n * d + h * dh, d, 1));
            }
        }
        let out = Tensor::new(vec![bsz, n, d], out)?;
        let qkv_v = self.value_rc();
        let mut parents = vec![self];
        if let Some(bv) = bias {
            parents.push(bv);
        }
        Ok(self.graph.record(out, &parents, move |g, needs| {
            let gd = g.data();
            let qkv = qkv_v.data();
            let mut gqkv = vec![S::zero(); bsz * n * d3];
            let want_bias = needs.len() == 2 && needs[1];
            let mut gbias = want_bias.then(|| vec![S::zero(); heads * nn]);
            let mut dp = vec![S::zero(); nn];
            for b in 0..bsz {
                let base = b * n * d3;
                for h in 0..heads {
                    let p = &probs[(b * heads + h) * nn..(b * heads + h + 1) * nn];
                    let go = View::strided(b * n * d + h * dh, d, 1);
                    let q = View::strided(base + h * dh, d3, 1);
                    let k = View::strided(base + d + h * dh, d3, 1);
                    let v = View::strided(base + 2 * d + h * dh, d3, 1);
                    // dV = Pᵀ dO
                    gemm(n, n, dh, S::one(), p, View::rm(0, n).t(), gd, go, S::zero(), &mut gqkv, v);
                    // dP = dO Vᵀ
                    gemm(n, dh, n, S::one(), gd, go, qkv, v.t(), S::zero(), &mut dp, View::rm(0, n));
                    for (drow, prow) in dp.chunks_mut(n).zip(p.chunks(n)) {
                        let dot = lanes::dot(drow, prow);
                        for (dv, &pv) in drow.iter_mut().zip(prow) {
                            *dv = pv * (*dv - dot);
                        }
                    }
                    if let Some(gb) = gbias.as_mut() {
                        for (a, &v) in gb[h * nn..(h + 1) * nn].iter_mut().zip(&dp) {
                            *a += v;
                        }
                    }
                    // dQ = scale · dS K, dK = scale · dSᵀ Q
                    gemm(n, n, dh, scale, &dp, View::rm(0, n), qkv, k, S::zero(), &mut gqkv, q);
                    gemm(n, n, dh, scale, &dp, View::rm(0, n).t(), qkv, q, S::zero(), &mut gqkv, k);
                }
            }
            let mut grads = vec![Some(Tensor::new(vec![bsz, n, d3], gqkv).expect("shape"))];
            if needs.len() == 2 {
                grads.push(gbias.map(|v| Tensor::new(vec![heads, n, n], v).expect("shape")));
            }
            grads
        }))
    }
}

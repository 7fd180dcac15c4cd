#![allow(dead_code)]
//! Oracles shared by the integration tests and the acceptance harness. They
//! are written from first principles and share no code with the library.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sftformer::frequency_block::FrequencyBlock;
use sftformer::nn::{Init, Module};
use sftformer::windowed_attention::SwinBlock;
use sftformer_autograd::{Float, Tensor};

pub fn scramble<S: Float, M: Module<S>>(m: &M, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, p) in m.named_params() {
        p.set_value(Tensor::from_fn(p.shape(), |_| S::of(rng.random_range(-scale..scale))))
            .unwrap();
    }
}

// ---- metrics ----

pub fn oracle_csi(tp: f64, fp: f64, fn_: f64) -> Option<f64> {
    let d = tp + fn_ + fp;
    if d == 0.0 {
        None
    } else {
        Some(tp / d)
    }
}

pub fn oracle_gss(tp: f64, fp: f64, fn_: f64, tn: f64) -> Option<f64> {
    let n = tp + fp + fn_ + tn;
    if n == 0.0 {
        return None;
    }
    let e_tp = (tp + fp) * (tp + fn_) / n;
    let e_tn = (fn_ + tn) * (fp + tn) / n;
    let d = tp + fn_ + fp + tn - e_tp - e_tn;
    if d == 0.0 {
        None
    } else {
        Some(((tp - e_tp) + (tn - e_tn)) / d)
    }
}

pub fn oracle_hss(tp: f64, fp: f64, fn_: f64, tn: f64) -> Option<f64> {
    let d = (tp + fn_) * (fn_ + tn) + (tp + fp) * (fp + tn);
    if d == 0.0 {
        None
    } else {
        Some(2.0 * (tp * tn - fn_ * fp) / d)
    }
}

pub fn loop_counts(pred: &[f32], truth: &[f32], h: usize, w: usize, tau: f64) -> [u64; 4] {
    let mut c = [0u64; 4];
    for i in 0..h {
        for j in 0..w {
            let p = pred[i * w + j] as f64 >= tau;
            let t = truth[i * w + j] as f64 >= tau;
            let k = if p && t {
                0
            } else if p {
                1
            } else if t {
                2
            } else {
                3
            };
            c[k] += 1;
        }
    }
    c
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

// ---- dense attention ----

pub fn get(m: &impl Module<f32>, name: &str) -> Vec<f64> {
    let p = m.named_params().into_iter().find(|(n, _)| n == name).unwrap().1;
    p.value().to_f64_vec()
}

pub fn layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    x.iter()
        .zip(g.iter().zip(b))
        .map(|(v, (g, b))| (v - mean) / (var + 1e-5).sqrt() * g + b)
        .collect()
}

pub fn linear(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let out = b.len();
    (0..out)
        .map(|o| b[o] + x.iter().enumerate().map(|(i, v)| v * w[i * out + o]).sum::<f64>())
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Global pre-norm transformer layer over all `n` tokens of dimension `d`.
pub fn dense_layer(tokens: &mut [Vec<f64>], m: &SwinBlock<f32>, prefix: &str, heads: usize) {
    let p = |s: &str| get(m, &format!("{prefix}.{s}"));
    let d = tokens[0].len();
    let dh = d / heads;
    let normed: Vec<Vec<f64>> = tokens.iter().map(|t| layer_norm(t, &p("norm1.gamma"), &p("norm1.beta"))).collect();
    let qkv: Vec<Vec<f64>> = normed
        .iter()
        .map(|t| linear(t, &p("attn.qkv.weight"), &p("attn.qkv.bias")))
        .collect();
    let n = tokens.len();
    let mut att = vec![vec![0.0; d]; n];
    for h in 0..heads {
        for i in 0..n {
            let q = &qkv[i][h * dh..(h + 1) * dh];
            let logits: Vec<f64> = (0..n)
                .map(|j| {
                    let k = &qkv[j][d + h * dh..d + (h + 1) * dh];
                    q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() / (dh as f64).sqrt()
                })
                .collect();
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..n {
                for c in 0..dh {
                    att[i][h * dh + c] += e[j] / z * qkv[j][2 * d + h * dh + c];
                }
            }
        }
    }
    for (t, a) in tokens.iter_mut().zip(&att) {
        let o = linear(a, &p("attn.proj.weight"), &p("attn.proj.bias"));
        t.iter_mut().zip(o).for_each(|(x, y)| *x += y);
        let h1: Vec<f64> = linear(&layer_norm(t, &p("norm2.gamma"), &p("norm2.beta")), &p("mlp.fc1.weight"), &p("mlp.fc1.bias"))
            .into_iter()
            .map(gelu)
            .collect();
        let o = linear(&h1, &p("mlp.fc2.weight"), &p("mlp.fc2.bias"));
        t.iter_mut().zip(o).for_each(|(x, y)| *x += y);
    }
}

// ---- frequency block ----

pub fn eye(n: usize) -> Tensor<f64> {
    Tensor::from_fn(vec![n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
}

pub fn identity_feb(d: usize, t: usize) -> FrequencyBlock<f64> {
    let feb = FrequencyBlock::new(&mut Init::new(0), d, d, t / 2 + 1);
    feb.proj_in.weight.set_value(eye(d)).unwrap();
    feb.proj_out.weight.set_value(eye(d)).unwrap();
    let modes = t / 2 + 1;
    let mut re = Tensor::zeros(vec![modes, d, d]);
    for m in 0..modes {
        for i in 0..d {
            re.data_mut()[(m * d + i) * d + i] = 1.0;
        }
    }
    feb.r_re.set_value(re).unwrap();
    feb.r_im.set_value(Tensor::zeros(vec![modes, d, d])).unwrap();
    feb
}

/// Explicit DFT matrices, complex matmuls, and inverse DFT.
pub fn dft_oracle(feb: &FrequencyBlock<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let (b, t, p) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let win = feb.proj_in.weight.value();
    let d = win.shape()[1];
    let wout = feb.proj_out.weight.value();
    let (rr, ri) = (feb.r_re.value(), feb.r_im.value());
    let modes = rr.shape()[0];
    let k = t / 2 + 1;
    let norm = 1.0 / (t as f64).sqrt();
    let mut out = Vec::new();
    for bi in 0..b {
        let u: Vec<Vec<f64>> = (0..t)
            .map(|ti| {
                (0..d)
                    .map(|c| (0..p).map(|i| x.data()[(bi * t + ti) * p + i] * win.data()[i * d + c]).sum())
                    .collect()
            })
            .collect();
        let q: Vec<Vec<Complex64>> = (0..k)
            .map(|m| {
                (0..d)
                    .map(|c| {
                        (0..t)
                            .map(|ti| Complex64::from_polar(norm * u[ti][c], -2.0 * PI * (m * ti) as f64 / t as f64))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let mut full = vec![vec![Complex64::new(0.0, 0.0); d]; t];
        for m in 0..modes {
            for o in 0..d {
                let y: Complex64 = (0..d)
                    .map(|i| q[m][i] * Complex64::new(rr.data()[(m * d + i) * d + o], ri.data()[(m * d + i) * d + o]))
                    .sum();
                full[m][o] = y;
                if m > 0 && 2 * m != t {
                    full[t - m][o] = y.conj();
                }
            }
        }
        for m in [0, t / 2] {
            if m < modes && (m == 0 || 2 * m == t) {
                for o in 0..d {
                    full[m][o].im = 0.0;
                }
            }
        }
        for ti in 0..t {
            let v: Vec<f64> = (0..d)
                .map(|c| {
                    let s: Complex64 = (0..t)
                        .map(|m| full[m][c] * Complex64::from_polar(norm, 2.0 * PI * (m * ti) as f64 / t as f64))
                        .sum();
                    s.re
                })
                .collect();
            for j in 0..p {
                out.push((0..d).map(|c| v[c] * wout.data()[c * p + j]).sum());
            }
        }
    }
    out
}

//! Parameterized layers and the parameter-visiting convention used by
//! checkpoints, optimizers, and gradient checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sftformer_autograd::{Float, Graph, Param, Result, Tensor, Var};

/// Visits every parameter owned by a module under a dotted name.
///
/// Parameters aliased from another module are not visited by the borrower.
pub trait Module<S: Float> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>));

    fn named_params(&self) -> Vec<(String, Param<S>)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, p| out.push((n.to_string(), p.clone())));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.numel());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Seeded parameter initializer.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform<S: Float>(&mut self, shape: &[usize], bound: f64) -> Param<S> {
        let rng = &mut self.rng;
        Param::new(Tensor::from_fn(shape.to_vec(), |_| {
            S::of(if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
        }))
    }

    pub fn normal<S: Float>(&mut self, shape: &[usize], std: f64) -> Param<S> {
        let dist = Normal::new(0.0, std).expect("std is finite and nonnegative");
        let rng = &mut self.rng;
        Param::new(Tensor::from_fn(shape.to_vec(), |_| S::of(dist.sample(rng))))
    }

    /// Normal truncated to two standard deviations by resampling.
    pub fn trunc_normal<S: Float>(&mut self, shape: &[usize], std: f64) -> Param<S> {
        let dist = Normal::new(0.0, std).expect("std is finite and nonnegative");
        let rng = &mut self.rng;
        Param::new(Tensor::from_fn(shape.to_vec(), |_| loop {
            let v: f64 = dist.sample(rng);
            if v.abs() <= 2.0 * std {
                break S::of(v);
            }
        }))
    }

    pub fn zeros<S: Float>(&mut self, shape: &[usize]) -> Param<S> {
        Param::new(Tensor::zeros(shape.to_vec()))
    }

    pub fn ones<S: Float>(&mut self, shape: &[usize]) -> Param<S> {
        Param::new(Tensor::full(shape.to_vec(), S::one()))
    }
}

fn visit_opt<S: Float>(p: &Option<Param<S>>, prefix: &str, name: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
    if let Some(p) = p {
        f(&join(prefix, name), p);
    }
}

fn bind<S: Float>(g: &Graph<S>, p: &Option<Param<S>>) -> Option<Var<S>> {
    p.as_ref().map(|p| g.param(p))
}

/// `y = x w + b` over the last axis; `w` is `[in, out]`.
#[derive(Clone)]
pub struct Linear<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
}

impl<S: Float> Linear<S> {
    /// Truncated-normal weights (std 0.02) and zero bias.
    pub fn new(init: &mut Init, d_in: usize, d_out: usize, bias: bool) -> Self {
        Self {
            weight: init.trunc_normal(&[d_in, d_out], 0.02),
            bias: bias.then(|| init.zeros(&[d_out])),
        }
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        x.linear(&g.param(&self.weight), bind(g, &self.bias).as_ref())
    }
}

impl<S: Float> Module<S> for Linear<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        visit_opt(&self.bias, prefix, "bias", f);
    }
}

/// Square-kernel convolution, weight `[out, in, k, k]`.
#[derive(Clone)]
pub struct Conv2d<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    pub stride: usize,
    pub pad: usize,
}

impl<S: Float> Conv2d<S> {
    /// Uniform `±1/sqrt(fan_in)` weights and bias.
    pub fn new(init: &mut Init, c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize, bias: bool) -> Self {
        let bound = 1.0 / ((c_in * kernel * kernel) as f64).sqrt();
        Self {
            weight: init.uniform(&[c_out, c_in, kernel, kernel], bound),
            bias: bias.then(|| init.uniform(&[c_out], bound)),
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        x.conv2d(&g.param(&self.weight), bind(g, &self.bias).as_ref(), self.stride, self.pad)
    }
}

impl<S: Float> Module<S> for Conv2d<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        visit_opt(&self.bias, prefix, "bias", f);
    }
}

/// Transposed convolution, weight `[in, out, k, k]`.
#[derive(Clone)]
pub struct ConvTranspose2d<S> {
    pub weight: Param<S>,
    pub bias: Option<Param<S>>,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl<S: Float> ConvTranspose2d<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
        bias: bool,
    ) -> Self {
        let bound = 1.0 / ((c_out * kernel * kernel) as f64).sqrt();
        Self {
            weight: init.uniform(&[c_in, c_out, kernel, kernel], bound),
            bias: bias.then(|| init.uniform(&[c_out], bound)),
            stride,
            pad,
            out_pad,
        }
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        x.conv_transpose2d(
            &g.param(&self.weight),
            bind(g, &self.bias).as_ref(),
            self.stride,
            self.pad,
            self.out_pad,
        )
    }
}

impl<S: Float> Module<S> for ConvTranspose2d<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "weight"), &self.weight);
        visit_opt(&self.bias, prefix, "bias", f);
    }
}

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone)]
pub struct LayerNorm<S> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
}

impl<S: Float> LayerNorm<S> {
    pub fn new(init: &mut Init, d: usize) -> Self {
        Self {
            gamma: init.ones(&[d]),
            beta: init.zeros(&[d]),
        }
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        x.layer_norm(&g.param(&self.gamma), &g.param(&self.beta), NORM_EPS)
    }
}

impl<S: Float> Module<S> for LayerNorm<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }
}

#[derive(Clone)]
pub struct GroupNorm<S> {
    pub groups: usize,
    pub gamma: Param<S>,
    pub beta: Param<S>,
}

impl<S: Float> GroupNorm<S> {
    pub fn new(init: &mut Init, groups: usize, channels: usize) -> Self {
        Self {
            groups,
            gamma: init.ones(&[channels]),
            beta: init.zeros(&[channels]),
        }
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        x.group_norm(self.groups, &g.param(&self.gamma), &g.param(&self.beta), NORM_EPS)
    }
}

impl<S: Float> Module<S> for GroupNorm<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }
}

/// Sets every value of `p` to zero.
pub fn zero_param<S: Float>(p: &Param<S>) {
    p.update(|t| t.data_mut().iter_mut().for_each(|v| *v = S::zero()));
}

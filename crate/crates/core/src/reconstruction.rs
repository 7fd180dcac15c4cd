//! Odd-frame reconstruction from even-frame features and mined motion patterns.

use sftformer_autograd::{Float, Graph, Param, Var};

use crate::config::ModelConfig;
use crate::error::{config, Result};
use crate::nn::{join, Conv2d, Init, Linear, Module};
use crate::sft_block::SftBlock;
use crate::windowed_attention::{SwinBlock, SwinConfig};

fn frames(t: usize, odd: bool) -> Vec<usize> {
    (0..t / 2).map(|i| 2 * i + usize::from(odd)).collect()
}

/// `D[i] = H[2i+1] - H[2i]` along the time axis of `[b, t, c, h, w]`.
pub fn motion_init<S: Float>(h: &Var<S>) -> Result<Var<S>> {
    let t = h.shape().get(1).copied().unwrap_or(0);
    if h.shape().len() != 5 || t % 2 != 0 || t == 0 {
        return config(format!("motion pattern needs an even frame count, got shape {:?}", h.shape()));
    }
    Ok(h.index_select(1, &frames(t, true))?.sub(&h.index_select(1, &frames(t, false))?)?)
}

/// Motion mining: a branch-owned lift to `2c`, the spatial attention blocks
/// of the first `n - 1` SFT-Blocks (aliased), one independent block, and a
/// branch-owned projection back to `c`.
#[derive(Clone)]
pub struct MotionMining<S> {
    pub lift: Conv2d<S>,
    pub shared: Vec<SwinBlock<S>>,
    pub own: SwinBlock<S>,
    pub project: Linear<S>,
}

impl<S: Float> MotionMining<S> {
    pub fn new(init: &mut Init, cfg: &ModelConfig, blocks: &[SftBlock<S>]) -> Result<Self> {
        let c = cfg.channels;
        let shared = blocks[..blocks.len().saturating_sub(1)]
            .iter()
            .map(|b| b.s_layer.clone())
            .collect();
        Ok(Self {
            lift: Conv2d::new(init, c, 2 * c, 1, 1, 0, true),
            shared,
            own: SwinBlock::new(
                init,
                SwinConfig {
                    dim: 2 * c,
                    heads: cfg.heads,
                    window_size: cfg.window_size,
                    mlp_ratio: cfg.mlp_ratio,
                    relative_bias: cfg.relative_position_bias,
                },
            )?,
            project: Linear::new(init, 2 * c, c, true),
        })
    }

    /// `[b, t/2, c, h, w] -> [b, t/2, c, h, w]`, motion frames independent.
    pub fn forward(&self, g: &Graph<S>, d: &Var<S>) -> Result<Var<S>> {
        let [b, n, c, h, w] = *d.shape() else {
            return config(format!("motion pattern must be [b, n, c, h, w], got {:?}", d.shape()));
        };
        let lifted = self.lift.forward(g, &d.reshape(vec![b * n, c, h, w])?)?;
        let mut x = lifted.permute(&[0, 2, 3, 1])?;
        for block in self.shared.iter().chain(std::iter::once(&self.own)) {
            x = block.forward(g, &x)?;
        }
        let y = self.project.forward(g, &x)?;
        Ok(y.permute(&[0, 3, 1, 2])?.reshape(vec![b, n, c, h, w])?)
    }
}

impl<S: Float> Module<S> for MotionMining<S> {
    /// Shared blocks belong to the SFT stack and are not visited here.
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.lift.visit(&join(prefix, "lift"), f);
        self.own.visit(&join(prefix, "own"), f);
        self.project.visit(&join(prefix, "project"), f);
    }
}

/// Squeeze-and-excitation channel gate.
#[derive(Clone)]
pub struct SeBlock<S> {
    pub fc1: Linear<S>,
    pub fc2: Linear<S>,
}

impl<S: Float> SeBlock<S> {
    pub fn new(init: &mut Init, c: usize, reduction: usize) -> Self {
        let hidden = (c / reduction).max(1);
        Self {
            fc1: Linear::new(init, c, hidden, true),
            fc2: Linear::new(init, hidden, c, true),
        }
    }

    /// Gate values `[n, c]` in `(0, 1)` for `x = [n, c, h, w]`.
    pub fn gate(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        let pooled = x.mean_spatial()?;
        let hidden = self.fc1.forward(g, &pooled)?.relu();
        Ok(self.fc2.forward(g, &hidden)?.sigmoid())
    }

    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<Var<S>> {
        Ok(x.mul_channel(&self.gate(g, x)?)?)
    }
}

impl<S: Float> Module<S> for SeBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }
}

#[derive(Clone)]
pub struct Reconstruction<S> {
    pub conv1: Conv2d<S>,
    pub se1: SeBlock<S>,
    pub conv2: Conv2d<S>,
    pub se2: SeBlock<S>,
    pub leaky_slope: f64,
    /// Disables both SE gates (ablation).
    pub use_se: bool,
}

impl<S: Float> Reconstruction<S> {
    pub fn new(init: &mut Init, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        Self {
            conv1: Conv2d::new(init, 2 * c, c, 3, 1, 1, true),
            se1: SeBlock::new(init, c, cfg.se_reduction),
            conv2: Conv2d::new(init, 2 * c, c, 3, 1, 1, true),
            se2: SeBlock::new(init, c, cfg.se_reduction),
            leaky_slope: cfg.leaky_slope,
            use_se: true,
        }
    }

    fn stage(&self, g: &Graph<S>, conv: &Conv2d<S>, se: &SeBlock<S>, a: &Var<S>, b: &Var<S>) -> Result<Var<S>> {
        let [bn, n, c, h, w] = *a.shape() else {
            return config(format!("stage input must be [b, n, c, h, w], got {:?}", a.shape()));
        };
        let x = Var::concat(&[a, b], 2)?.reshape(vec![bn * n, 2 * c, h, w])?;
        let mut y = conv.forward(g, &x)?.leaky_relu(self.leaky_slope);
        if self.use_se {
            y = se.forward(g, &y)?;
        }
        Ok(y.reshape(vec![bn, n, c, h, w])?)
    }

    /// Returns `(x_hat_odd, loss)` for stack output `h_prime`, mined motion
    /// `d_prime`, and initial embedding `h`.
    pub fn forward(&self, g: &Graph<S>, h_prime: &Var<S>, d_prime: &Var<S>, h: &Var<S>) -> Result<(Var<S>, Var<S>)> {
        let t = h_prime.shape()[1];
        let even = h_prime.index_select(1, &frames(t, false))?;
        let odd = h_prime.index_select(1, &frames(t, true))?;
        let coarse = self.stage(g, &self.conv1, &self.se1, &even, d_prime)?;
        let x_hat = self.stage(g, &self.conv2, &self.se2, &odd, &coarse)?;
        let target = h.index_select(1, &frames(t, true))?;
        let loss = recon_loss(&x_hat, &target, t)?;
        Ok((x_hat, loss))
    }
}

/// `(1 / 2t) * sum_i mean((x_hat[i] - target[i])^2)` over the `t/2` odd
/// frames, averaged over the batch.
pub fn recon_loss<S: Float>(x_hat: &Var<S>, target: &Var<S>, t: usize) -> Result<Var<S>> {
    let n_odd = x_hat.shape()[1];
    Ok(x_hat.mse(target)?.scale(n_odd as f64 / (2 * t) as f64))
}

impl<S: Float> Module<S> for Reconstruction<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.se1.visit(&join(prefix, "se1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.se2.visit(&join(prefix, "se2"), f);
    }
}

//! One SFT-Block: spatiotemporal correlation, spatial refinement, and
//! temporal modeling layers over a shared input, fused by summation.

use sftformer_autograd::{Float, Graph, Param, Var};

use crate::config::ModelConfig;
use crate::error::{config, Result};
use crate::frequency_block::TemporalLayer;
use crate::nn::{join, zero_param, Conv2d, Init, Linear, Module};
use crate::windowed_attention::{SwinBlock, SwinConfig};

fn dims(z: &Var<impl Float>) -> Result<(usize, usize, usize, usize, usize)> {
    match *z.shape() {
        [b, t, c, h, w] => Ok((b, t, c, h, w)),
        ref s => config(format!("feature volume must be [b, t, c, h, w], got {s:?}")),
    }
}

#[derive(Clone)]
pub struct SftBlock<S> {
    /// Attention over tokens carrying every frame's channels (`dim = t * c`).
    pub st_layer: SwinBlock<S>,
    pub s_embed: Conv2d<S>,
    /// Per-frame attention at `2c`; aliased by the motion branch.
    pub s_layer: SwinBlock<S>,
    pub s_project: Linear<S>,
    pub t_layer: TemporalLayer<S>,
}

impl<S: Float> SftBlock<S> {
    pub fn new(init: &mut Init, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.channels;
        let (h, w) = cfg.latent_hw();
        let swin = |dim| SwinConfig {
            dim,
            heads: cfg.heads,
            window_size: cfg.window_size,
            mlp_ratio: cfg.mlp_ratio,
            relative_bias: cfg.relative_position_bias,
        };
        Ok(Self {
            st_layer: SwinBlock::new(init, swin(cfg.t_in * c))?,
            s_embed: Conv2d::new(init, c, 2 * c, 1, 1, 0, true),
            s_layer: SwinBlock::new(init, swin(2 * c))?,
            s_project: Linear::new(init, 2 * c, c, true),
            t_layer: TemporalLayer::new(init, c, h * w, cfg.temporal_heads, cfg.d_feb, cfg.modes()),
        })
    }

    /// Every spatial token carries all frames: `[b, h, w, t*c]` attention.
    pub fn st_correlation(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let (b, t, c, h, w) = dims(z)?;
        let tokens = z.permute(&[0, 3, 4, 1, 2])?.reshape(vec![b, h, w, t * c])?;
        let out = self.st_layer.forward(g, &tokens)?;
        Ok(out.reshape(vec![b, h, w, t, c])?.permute(&[0, 3, 4, 1, 2])?)
    }

    /// Frames attend independently at doubled width, then return to `c`.
    pub fn spatial_refinement(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let (b, t, c, h, w) = dims(z)?;
        let zs = self.s_embed.forward(g, &z.reshape(vec![b * t, c, h, w])?)?;
        let tokens = zs.permute(&[0, 2, 3, 1])?;
        let out = self.s_layer.forward(g, &tokens)?;
        let fs = self.s_project.forward(g, &out)?;
        Ok(fs.permute(&[0, 3, 1, 2])?.reshape(vec![b, t, c, h, w])?)
    }

    pub fn temporal(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        dims(z)?;
        self.t_layer.forward(g, z)
    }

    pub fn forward(&self, g: &Graph<S>, z: &Var<S>) -> Result<Var<S>> {
        let f_st = self.st_correlation(g, z)?;
        let f_s = self.spatial_refinement(g, z)?;
        let f_t = self.temporal(g, z)?;
        fuse(&f_st, &f_s, &f_t)
    }

    /// Zeroes every branch's output so the block reduces to the identity.
    pub fn silence(&self) {
        self.st_layer.silence();
        zero_param(&self.s_project.weight);
        if let Some(b) = &self.s_project.bias {
            zero_param(b);
        }
        self.t_layer.silence();
    }
}

/// Block output. `f_st` already carries the block input through the
/// attention residual path, so the input is not added a second time.
pub fn fuse<S: Float>(f_st: &Var<S>, f_s: &Var<S>, f_t: &Var<S>) -> Result<Var<S>> {
    Ok(Var::sum_many(&[f_st, f_s, f_t])?)
}

impl<S: Float> Module<S> for SftBlock<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.st_layer.visit(&join(prefix, "st_layer"), f);
        self.s_embed.visit(&join(prefix, "s_embed"), f);
        self.s_layer.visit(&join(prefix, "s_layer"), f);
        self.s_project.visit(&join(prefix, "s_project"), f);
        self.t_layer.visit(&join(prefix, "t_layer"), f);
    }
}

/// Sequential composition of blocks.
pub fn stack_forward<S: Float>(g: &Graph<S>, z: &Var<S>, blocks: &[SftBlock<S>]) -> Result<Var<S>> {
    if blocks.is_empty() {
        return config("block stack is empty");
    }
    blocks.iter().try_fold(z.clone(), |h, b| b.forward(g, &h))
}

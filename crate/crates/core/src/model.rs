//! Full forecaster: embedding, SFT-Block stack, decoder, and the
//! reconstruction branch evaluated on the same pass.

use std::rc::Rc;

use sftformer_autograd::{Float, Graph, Param, Var};

use crate::config::ModelConfig;
use crate::embed_decode::{ConvStackSpec, FeatureEmbed, ForecastDecode};
use crate::error::{config, Error, Result};
use crate::nn::{join, Init, Module};
use crate::reconstruction::{motion_init, MotionMining, Reconstruction};
use crate::sft_block::SftBlock;

pub struct Forward<S> {
    /// `[b, t_out, 1, H, W]`.
    pub y_hat: Var<S>,
    /// Scalar reconstruction loss.
    pub recon: Var<S>,
    /// Embedding output `[b, t_in, c, h, w]`.
    pub latent: Var<S>,
    /// Stack output `[b, t_in, c, h, w]`.
    pub stack_out: Var<S>,
}

pub struct JointLoss<S> {
    pub total: Var<S>,
    pub mse: f64,
    pub recon: f64,
}

#[derive(Clone)]
pub struct Sftformer<S> {
    pub cfg: ModelConfig,
    pub embed: FeatureEmbed<S>,
    pub blocks: Vec<SftBlock<S>>,
    pub decode: ForecastDecode<S>,
    pub mining: MotionMining<S>,
    pub recon: Reconstruction<S>,
    /// Per-step offsets `[t_out, c]` added to the tiled latent when the
    /// horizon differs from the observed length.
    pub step_embed: Option<Param<S>>,
}

fn check_finite<S: Float>(v: &Var<S>, layer: impl FnOnce() -> String) -> Result<()> {
    if v.value().all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: layer() })
    }
}

impl<S: Float> Sftformer<S> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = Init::new(seed);
        let spec = ConvStackSpec::from_config(cfg);
        let embed = FeatureEmbed::new(&mut init, &spec);
        let blocks = (0..cfg.blocks)
            .map(|_| SftBlock::new(&mut init, cfg))
            .collect::<Result<Vec<_>>>()?;
        let decode = ForecastDecode::new(&mut init, &spec);
        let mining = MotionMining::new(&mut init, cfg, &blocks)?;
        let recon = Reconstruction::new(&mut init, cfg);
        let step_embed = (cfg.t_out != cfg.t_in).then(|| init.zeros(&[cfg.t_out, cfg.channels]));
        Ok(Self {
            cfg: cfg.clone(),
            embed,
            blocks,
            decode,
            mining,
            recon,
            step_embed,
        })
    }

    /// Feature embedding of `[b, t, 1, H, W]` frames: `(latent [b, t, c, h, w], skip)`.
    pub fn embed_frames(&self, g: &Graph<S>, x: &Var<S>) -> Result<(Var<S>, Var<S>)> {
        let [b, t, 1, hh, ww] = *x.shape() else {
            return config(format!("input must be [b, t, 1, H, W], got {:?}", x.shape()));
        };
        let (lat, skip) = self.embed.forward(g, &x.reshape(vec![b * t, 1, hh, ww])?)?;
        let (c, h, w) = (lat.shape()[1], lat.shape()[2], lat.shape()[3]);
        let latent = lat.reshape(vec![b, t, c, h, w])?;
        let s = skip.shape().to_vec();
        let skip = skip.reshape(vec![b, t, s[1], s[2], s[3]])?;
        Ok((latent, skip))
    }

    /// Maps `t_in` stack outputs (and skips) onto `t_out` decoder steps.
    pub fn expand_horizon(&self, g: &Graph<S>, h: &Var<S>, skip: &Var<S>) -> Result<(Var<S>, Var<S>)> {
        let (t_in, t_out) = (self.cfg.t_in, self.cfg.t_out);
        let Some(embed) = &self.step_embed else {
            return Ok((h.clone(), skip.clone()));
        };
        let steps: Vec<usize> = (0..t_out).map(|tau| tau % t_in).collect();
        let tiled = h.index_select(1, &steps)?;
        let skip = skip.index_select(1, &steps)?;
        let [b, _, c, hh, ww] = *tiled.shape() else { unreachable!() };
        let mut idx = Vec::with_capacity(tiled.value().len());
        for _ in 0..b {
            for tau in 0..t_out {
                for ch in 0..c {
                    idx.extend(std::iter::repeat_n(tau * c + ch, hh * ww));
                }
            }
        }
        let offsets = g.param(embed).gather(Rc::new(idx), tiled.shape().to_vec())?;
        Ok((tiled.add(&offsets)?, skip))
    }

    /// Prediction `[b, t_out, 1, H, W]` and reconstruction loss for input
    /// frames `[b, t_in, 1, H, W]`.
    pub fn forward_full(&self, g: &Graph<S>, x: &Var<S>) -> Result<Forward<S>> {
        let s = x.shape().to_vec();
        if s.len() != 5 || s[1] != self.cfg.t_in || s[3] != self.cfg.height || s[4] != self.cfg.width {
            return config(format!(
                "input {s:?} does not match [b, {}, 1, {}, {}]",
                self.cfg.t_in, self.cfg.height, self.cfg.width
            ));
        }
        let (latent, skip) = self.embed_frames(g, x)?;
        check_finite(&latent, || "feature_embed".into())?;
        let mut h = latent.clone();
        for (k, block) in self.blocks.iter().enumerate() {
            h = block.forward(g, &h)?;
            check_finite(&h, || format!("sft_block[{k}]"))?;
        }
        let (dec_in, dec_skip) = self.expand_horizon(g, &h, &skip)?;
        let [b, t, c, hh, ww] = *dec_in.shape() else { unreachable!() };
        let ss = dec_skip.shape().to_vec();
        let y = self.decode.forward(
            g,
            &dec_in.reshape(vec![b * t, c, hh, ww])?,
            &dec_skip.reshape(vec![b * t, ss[2], ss[3], ss[4]])?,
        )?;
        let y_hat = y.reshape(vec![b, t, 1, s[3], s[4]])?;
        check_finite(&y_hat, || "forecast_decode".into())?;
        let d = self.mining.forward(g, &motion_init(&latent)?)?;
        check_finite(&d, || "motion_pattern_mining".into())?;
        let (_, recon) = self.recon.forward(g, &h, &d, &latent)?;
        check_finite(&recon, || "reconstruction".into())?;
        Ok(Forward {
            y_hat,
            recon,
            latent,
            stack_out: h,
        })
    }

    /// Prediction only, on an inference tape.
    pub fn predict(&self, x: sftformer_autograd::Tensor<S>) -> Result<sftformer_autograd::Tensor<S>> {
        let g = Graph::inference();
        let out = self.forward_full(&g, &g.constant(x))?;
        Ok(out.y_hat.value().clone())
    }

    /// Parameters of the motion branch that are not shared with the stack.
    pub fn mining_params(&self) -> Vec<(String, Param<S>)> {
        let mut out = Vec::new();
        self.mining.visit("mining", &mut |n, p| out.push((n.to_string(), p.clone())));
        out
    }
}

impl<S: Float> Module<S> for Sftformer<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        self.embed.visit(&join(prefix, "embed"), f);
        for (k, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{k}")), f);
        }
        self.decode.visit(&join(prefix, "decode"), f);
        self.mining.visit(&join(prefix, "mining"), f);
        self.recon.visit(&join(prefix, "recon"), f);
        if let Some(e) = &self.step_embed {
            f(&join(prefix, "step_embed"), e);
        }
    }
}

/// `mse(y_hat, y) + lambda * recon`.
pub fn joint_loss<S: Float>(y_hat: &Var<S>, y: &Var<S>, recon: &Var<S>, lambda: f64) -> Result<JointLoss<S>> {
    let mse = y_hat.mse(y)?;
    let total = mse.add(&recon.scale(lambda))?;
    Ok(JointLoss {
        mse: mse.value().item().f64(),
        recon: recon.value().item().f64(),
        total,
    })
}

//! Per-frame convolutional embedding stack and the mirrored transposed-conv
//! decoder with a skip from the second embedding layer.

use sftformer_autograd::{Float, Graph, Param, Var};

use crate::config::ModelConfig;
use crate::error::{config, Result};
use crate::nn::{join, Conv2d, ConvTranspose2d, GroupNorm, Init, Module};

const KERNEL: usize = 3;
const PAD: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

/// Channel/stride plan of the encoder and decoder stacks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStackSpec {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub norm_groups: usize,
    pub leaky_slope: f64,
}

impl ConvStackSpec {
    /// Encoder layer `j` (1-based) has stride 2 iff `j` is even; the first
    /// half runs at `channels / 2`. The decoder reverses the channel plan with
    /// stride 2 at even positions.
    pub fn new(depth: usize, channels: usize, norm_groups: usize, leaky_slope: f64) -> Self {
        let width = |j: usize| if j == 0 { 1 } else if j <= depth / 2 { channels / 2 } else { channels };
        let stride = |j: usize| if j % 2 == 0 { 2 } else { 1 };
        let encoder = (1..=depth)
            .map(|j| LayerSpec {
                c_in: width(j - 1),
                c_out: width(j),
                stride: stride(j),
            })
            .collect();
        let decoder = (1..=depth)
            .map(|l| {
                let mirror = depth + 1 - l;
                LayerSpec {
                    c_in: width(mirror),
                    c_out: width(mirror - 1),
                    stride: stride(l),
                }
            })
            .collect();
        Self {
            encoder,
            decoder,
            norm_groups,
            leaky_slope,
        }
    }

    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self::new(cfg.embed_depth, cfg.channels, cfg.norm_groups, cfg.leaky_slope)
    }

    pub fn downsample(&self) -> usize {
        self.encoder.iter().map(|l| l.stride).product()
    }
}

#[derive(Clone)]
pub struct EmbedLayer<S> {
    pub conv: Conv2d<S>,
    pub norm: GroupNorm<S>,
}

/// Conv -> GroupNorm -> leaky rectifier, applied frame by frame.
#[derive(Clone)]
pub struct FeatureEmbed<S> {
    pub layers: Vec<EmbedLayer<S>>,
    pub leaky_slope: f64,
}

impl<S: Float> FeatureEmbed<S> {
    pub fn new(init: &mut Init, spec: &ConvStackSpec) -> Self {
        let layers = spec
            .encoder
            .iter()
            .map(|l| EmbedLayer {
                conv: Conv2d::new(init, l.c_in, l.c_out, KERNEL, l.stride, PAD, true),
                norm: GroupNorm::new(init, spec.norm_groups, l.c_out),
            })
            .collect();
        Self {
            layers,
            leaky_slope: spec.leaky_slope,
        }
    }

    pub fn downsample(&self) -> usize {
        self.layers.iter().map(|l| l.conv.stride).product()
    }

    /// `[n, 1, H, W] -> (latent [n, C, h, w], skip [n, C/2, H/2, W/2])`,
    /// where `n` counts frames; frames never interact.
    pub fn forward(&self, g: &Graph<S>, x: &Var<S>) -> Result<(Var<S>, Var<S>)> {
        let s = x.shape();
        let f = self.downsample();
        if s.len() != 4 || s[1] != 1 {
            return config(format!("embedding expects [frames, 1, H, W], got {s:?}"));
        }
        if s[2] % f != 0 || s[3] % f != 0 {
            return config(format!("frame size {}x{} is not divisible by the downsampling factor {f}", s[2], s[3]));
        }
        let mut h = x.clone();
        let mut skip = None;
        for (j, layer) in self.layers.iter().enumerate() {
            let y = layer.conv.forward(g, &h)?;
            h = layer.norm.forward(g, &y)?.leaky_relu(self.leaky_slope);
            if j == 1 {
                skip = Some(h.clone());
            }
        }
        Ok((h, skip.expect("depth >= 2")))
    }
}

impl<S: Float> Module<S> for FeatureEmbed<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        for (j, l) in self.layers.iter().enumerate() {
            let p = join(prefix, &format!("layer{}", j + 1));
            l.conv.visit(&join(&p, "conv"), f);
            l.norm.visit(&join(&p, "norm"), f);
        }
    }
}

#[derive(Clone)]
pub struct DecodeLayer<S> {
    pub deconv: ConvTranspose2d<S>,
    /// Absent on the single-channel output layer.
    pub norm: Option<GroupNorm<S>>,
}

#[derive(Clone)]
pub struct ForecastDecode<S> {
    pub layers: Vec<DecodeLayer<S>>,
    pub leaky_slope: f64,
}

impl<S: Float> ForecastDecode<S> {
    pub fn new(init: &mut Init, spec: &ConvStackSpec) -> Self {
        let last = spec.decoder.len() - 1;
        let layers = spec
            .decoder
            .iter()
            .enumerate()
            .map(|(l, ls)| DecodeLayer {
                deconv: ConvTranspose2d::new(init, ls.c_in, ls.c_out, KERNEL, ls.stride, PAD, ls.stride - 1, true),
                norm: (l != last).then(|| GroupNorm::new(init, spec.norm_groups, ls.c_out)),
            })
            .collect();
        Self {
            layers,
            leaky_slope: spec.leaky_slope,
        }
    }

    /// `latent [n, C, h, w]` plus `skip` added to the input of the last layer.
    pub fn forward(&self, g: &Graph<S>, latent: &Var<S>, skip: &Var<S>) -> Result<Var<S>> {
        let last = self.layers.len() - 1;
        let mut h = latent.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last {
                if h.shape() != skip.shape() {
                    return config(format!(
                        "skip {:?} does not match final decoder input {:?}",
                        skip.shape(),
                        h.shape()
                    ));
                }
                h = h.add(skip)?;
            }
            let mut y = layer.deconv.forward(g, &h)?;
            if let Some(norm) = &layer.norm {
                y = norm.forward(g, &y)?;
            }
            h = y.leaky_relu(self.leaky_slope);
        }
        Ok(h)
    }
}

impl<S: Float> Module<S> for ForecastDecode<S> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<S>)) {
        for (l, layer) in self.layers.iter().enumerate() {
            let p = join(prefix, &format!("layer{}", l + 1));
            layer.deconv.visit(&join(&p, "deconv"), f);
            if let Some(n) = &layer.norm {
                n.visit(&join(&p, "norm"), f);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sftformer_autograd::Tensor;

    #[test]
    fn default_channel_plan() {
        let spec = ConvStackSpec::new(4, 64, 8, 0.2);
        let enc: Vec<_> = spec.encoder.iter().map(|l| (l.c_in, l.c_out, l.stride)).collect();
        assert_eq!(enc, vec![(1, 32, 1), (32, 32, 2), (32, 64, 1), (64, 64, 2)]);
        let dec: Vec<_> = spec.decoder.iter().map(|l| (l.c_in, l.c_out, l.stride)).collect();
        assert_eq!(dec, vec![(64, 64, 1), (64, 32, 2), (32, 32, 1), (32, 1, 2)]);
    }

    #[test]
    fn shapes_round_trip_and_time_is_kept() {
        let spec = ConvStackSpec::new(4, 16, 8, 0.2);
        let mut init = Init::new(0);
        let enc = FeatureEmbed::<f32>::new(&mut init, &spec);
        let dec = ForecastDecode::<f32>::new(&mut init, &spec);
        let g = Graph::inference();
        for t in [1, 3] {
            let x = g.constant(Tensor::full(vec![t, 1, 16, 24], 0.5));
            let (lat, skip) = enc.forward(&g, &x).unwrap();
            assert_eq!(lat.shape(), &[t, 16, 4, 6]);
            assert_eq!(skip.shape(), &[t, 8, 8, 12]);
            assert_eq!(dec.forward(&g, &lat, &skip).unwrap().shape(), &[t, 1, 16, 24]);
        }
    }

    #[test]
    fn indivisible_frame_is_config_error() {
        let enc = FeatureEmbed::<f32>::new(&mut Init::new(0), &ConvStackSpec::new(4, 16, 8, 0.2));
        let g = Graph::inference();
        let x = g.constant(Tensor::zeros(vec![1, 1, 18, 16]));
        assert!(matches!(enc.forward(&g, &x), Err(crate::Error::Config(_))));
    }

    #[test]
    fn zeros_stay_zero_without_biases() {
        let enc = FeatureEmbed::<f64>::new(&mut Init::new(0), &ConvStackSpec::new(4, 16, 8, 0.2));
        enc.visit("", &mut |n, p| {
            if n.ends_with("conv.bias") {
                crate::nn::zero_param(p);
            }
        });
        let g = Graph::inference();
        let (lat, skip) = enc.forward(&g, &g.constant(Tensor::zeros(vec![2, 1, 8, 8]))).unwrap();
        assert!(lat.value().data().iter().all(|&v| v == 0.0));
        assert!(skip.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_permutation_commutes_with_embedding() {
        let enc = FeatureEmbed::<f64>::new(&mut Init::new(1), &ConvStackSpec::new(4, 16, 8, 0.2));
        let g = Graph::inference();
        let x = Init::new(9).normal::<f64>(&[3, 1, 8, 8], 1.0).value().as_ref().clone();
        let (lat, _) = enc.forward(&g, &g.constant(x.clone())).unwrap();
        let xp = g.constant(x).index_select(0, &[2, 0, 1]).unwrap();
        let (latp, _) = enc.forward(&g, &xp).unwrap();
        let expect = lat.index_select(0, &[2, 0, 1]).unwrap();
        assert_eq!(latp.value(), expect.value());
    }
}

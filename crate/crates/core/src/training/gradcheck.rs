//! Central finite-difference verification of analytic gradients in f64.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sftformer_autograd::{Graph, Param, Tensor, Var};

use crate::config::ModelConfig;
use crate::embed_decode::{ConvStackSpec, ForecastDecode};
use crate::error::{Error, Result};
use crate::frequency_block::FrequencyBlock;
use crate::nn::{Init, Module};
use crate::reconstruction::Reconstruction;
use crate::sft_block::SftBlock;
use crate::windowed_attention::{SwinBlock, SwinConfig};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-3;
/// Denominator floor: gradients this small are compared absolutely. Some
/// gradients are exactly zero (key biases under softmax shift invariance),
/// where the central difference returns pure rounding noise.
pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    SwinBlock,
    FebForward,
    SftBlockForward,
    ForecastDecode,
    ReconstructOdd,
}

impl Selection {
    pub const ALL: [Selection; 5] = [
        Selection::SwinBlock,
        Selection::FebForward,
        Selection::SftBlockForward,
        Selection::ForecastDecode,
        Selection::ReconstructOdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Selection::SwinBlock => "swin_block",
            Selection::FebForward => "feb_forward",
            Selection::SftBlockForward => "sft_block_forward",
            Selection::ForecastDecode => "forecast_decode",
            Selection::ReconstructOdd => "reconstruct_odd",
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Selection::ALL
            .into_iter()
            .find(|sel| sel.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradcheck selection {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub coordinates: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub selection: Selection,
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }

    /// Names of tensors over tolerance.
    pub fn failures(&self) -> Vec<&str> {
        self.tensors
            .iter()
            .filter(|t| !(t.max_rel_err < TOLERANCE))
            .map(|t| t.name.as_str())
            .collect()
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// The shape used for every selection's internal model pieces.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        t_in: 4,
        t_out: 4,
        height: 16,
        width: 16,
        embed_depth: 4,
        channels: 4,
        blocks: 2,
        window_size: 2,
        heads: 2,
        mlp_ratio: 2,
        relative_position_bias: true,
        norm_groups: 2,
        leaky_slope: 0.2,
        d_feb: 4,
        feb_modes: None,
        temporal_heads: 2,
        se_reduction: 2,
    }
}

type Objective<'a> = Box<dyn Fn(&Graph<f64>) -> Result<Var<f64>> + 'a>;

/// Projects an arbitrary output onto fixed random weights, so every output
/// coordinate contributes to the checked scalar.
fn project(out: &Var<f64>, rng: &mut ChaCha8Rng) -> Result<Var<f64>> {
    let w = Tensor::from_fn(out.shape().to_vec(), |_| rng.random_range(-1.0..1.0));
    Ok(out.weighted_sum(Rc::new(w))?)
}

fn random_param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Param<f64> {
    Param::new(Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0)))
}

/// Compares analytic and central-difference gradients on up to
/// `per_tensor` sampled coordinates of every tensor in `params`.
pub fn check_objective(
    selection: Selection,
    params: &[(String, Param<f64>)],
    objective: &Objective<'_>,
    per_tensor: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    for (_, p) in params {
        p.zero_grad();
    }
    let g = Graph::new();
    let loss = objective(&g)?;
    g.backward(&loss)?;
    let eval = || -> Result<f64> { Ok(objective(&Graph::inference())?.value().item()) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    for (name, p) in params {
        let analytic = p.grad().unwrap_or_else(|| Tensor::zeros(p.shape()));
        let n = p.numel();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        };
        let mut worst = 0.0f64;
        for &i in &coords {
            let orig = p.value().data()[i];
            p.update(|t| t.data_mut()[i] = orig + FD_STEP);
            let plus = eval()?;
            p.update(|t| t.data_mut()[i] = orig - FD_STEP);
            let minus = eval()?;
            p.update(|t| t.data_mut()[i] = orig);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let e = rel_err(analytic.data()[i], numeric);
            worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            coordinates: coords.len(),
            max_rel_err: worst,
        });
    }
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        selection,
        tensors,
        max_rel_err,
    })
}

/// Collects inputs and module parameters, redrawing every parameter from
/// `U(-0.5, 0.5)`. Training-time init makes attention nearly uniform, which
/// leaves query/key gradients near the finite-difference noise floor.
fn with_inputs<M: Module<f64>>(
    module: &M,
    inputs: &[(&str, &Param<f64>)],
    rng: &mut ChaCha8Rng,
) -> Vec<(String, Param<f64>)> {
    let mut params: Vec<(String, Param<f64>)> = inputs.iter().map(|(n, p)| (n.to_string(), (*p).clone())).collect();
    for (name, p) in module.named_params() {
        p.set_value(Tensor::from_fn(p.shape(), |_| rng.random_range(-0.5..0.5)))
            .expect("same shape");
        params.push((name, p));
    }
    params
}

/// Runs one selection on tiny shapes with parameters and inputs drawn from
/// `seed`.
pub fn gradcheck(selection: Selection, seed: u64, per_tensor: usize) -> Result<GradcheckReport> {
    let cfg = tiny_config();
    let mut init = Init::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let c = cfg.channels;
    let (h, w) = cfg.latent_hw();
    match selection {
        Selection::SwinBlock => {
            let block = SwinBlock::new(
                &mut init,
                SwinConfig {
                    dim: 8,
                    heads: 2,
                    window_size: 2,
                    mlp_ratio: 2,
                    relative_bias: true,
                },
            )?;
            let x = random_param(&mut rng, &[2, 4, 4, 8]);
            let out_rng = rng.clone();
            let obj: Objective = Box::new(|g| project(&block.forward(g, &g.param(&x))?, &mut out_rng.clone()));
            check_objective(selection, &with_inputs(&block, &[("input", &x)], &mut rng), &obj, per_tensor, seed)
        }
        Selection::FebForward => {
            let feb = FrequencyBlock::new(&mut init, 6, cfg.d_feb, cfg.modes());
            let x = random_param(&mut rng, &[2, cfg.t_in, 6]);
            let out_rng = rng.clone();
            let obj: Objective = Box::new(|g| project(&feb.forward(g, &g.param(&x))?, &mut out_rng.clone()));
            check_objective(selection, &with_inputs(&feb, &[("input", &x)], &mut rng), &obj, per_tensor, seed)
        }
        Selection::SftBlockForward => {
            let block = SftBlock::new(&mut init, &cfg)?;
            let x = random_param(&mut rng, &[1, cfg.t_in, c, h, w]);
            let out_rng = rng.clone();
            let obj: Objective = Box::new(|g| project(&block.forward(g, &g.param(&x))?, &mut out_rng.clone()));
            check_objective(selection, &with_inputs(&block, &[("input", &x)], &mut rng), &obj, per_tensor, seed)
        }
        Selection::ForecastDecode => {
            let decode = ForecastDecode::new(&mut init, &ConvStackSpec::from_config(&cfg));
            let latent = random_param(&mut rng, &[2, c, 2, 2]);
            let skip = random_param(&mut rng, &[2, c / 2, 4, 4]);
            let out_rng = rng.clone();
            let obj: Objective = Box::new(|g| {
                project(&decode.forward(g, &g.param(&latent), &g.param(&skip))?, &mut out_rng.clone())
            });
            let params = with_inputs(&decode, &[("latent", &latent), ("skip", &skip)], &mut rng);
            check_objective(selection, &params, &obj, per_tensor, seed)
        }
        Selection::ReconstructOdd => {
            let recon = Reconstruction::new(&mut init, &cfg);
            let t = cfg.t_in;
            let h_prime = random_param(&mut rng, &[1, t, c, h, w]);
            let d_prime = random_param(&mut rng, &[1, t / 2, c, h, w]);
            let h0 = random_param(&mut rng, &[1, t, c, h, w]);
            let out_rng = rng.clone();
            let obj: Objective = Box::new(|g| {
                let (x_hat, loss) = recon.forward(g, &g.param(&h_prime), &g.param(&d_prime), &g.param(&h0))?;
                Ok(project(&x_hat, &mut out_rng.clone())?.add(&loss)?)
            });
            let params = with_inputs(&recon, &[("h_prime", &h_prime), ("d_prime", &d_prime), ("h", &h0)], &mut rng);
            check_objective(selection, &params, &obj, per_tensor, seed)
        }
    }
}

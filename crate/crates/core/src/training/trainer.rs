//! Seeded mini-batch training loop over sequence windows.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sftformer_autograd::{Graph, Param, Tensor};

use super::checkpoint::{Checkpoint, SamplerState};
use super::optim::{clip_grad_norm, Adam, AdamState, OneCycle};
use crate::config::SftformerConfig;
use crate::data_io::SequenceWindow;
use crate::error::{Error, Result};
use crate::model::{joint_loss, Sftformer};
use crate::nn::Module;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub mse: f64,
    pub recon: f64,
    pub grad_norm: f64,
}

/// Stacks window frames into `([b, t_in, 1, H, W], [b, t_out, 1, H, W])`.
pub fn batch_tensors(windows: &[&SequenceWindow]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let stack = |pick: &dyn Fn(&SequenceWindow) -> &Tensor<f32>| -> Result<Tensor<f32>> {
        let items: Vec<Tensor<f32>> = windows.iter().map(|w| pick(w).clone()).collect();
        let t = Tensor::stack(&items)?;
        let s = t.shape().to_vec();
        Ok(t.reshape(vec![s[0], s[1], 1, s[2], s[3]])?)
    };
    Ok((stack(&|w| w.input.frames())?, stack(&|w| w.target.frames())?))
}

pub struct Trainer {
    pub config: SftformerConfig,
    pub model: Sftformer<f32>,
    pub optimizer: Adam<f32>,
    pub schedule: OneCycle,
    /// Completed optimizer steps.
    pub step: usize,
    pub sampler: SamplerState,
    params: Vec<(String, Param<f32>)>,
    order: Vec<usize>,
}

impl Trainer {
    pub fn new(config: &SftformerConfig) -> Result<Self> {
        config.validate()?;
        let model = Sftformer::new(&config.model, config.seed)?;
        let t = &config.train;
        let params = model.named_params();
        Ok(Self {
            schedule: OneCycle {
                max_lr: t.max_lr,
                total_steps: t.steps,
                pct_start: t.pct_start,
                div_factor: t.div_factor,
                final_div_factor: t.final_div_factor,
            },
            optimizer: Adam::new(t.beta1, t.beta2, t.eps),
            step: 0,
            sampler: SamplerState {
                seed: config.seed,
                epoch: 0,
                cursor: 0,
            },
            config: config.clone(),
            model,
            params,
            order: Vec::new(),
        })
    }

    /// Restores model, optimizer, and sampler state.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut tr = Self::new(&ckpt.config)?;
        load_params(&tr.model, &ckpt.params)?;
        if ckpt.adam_t > 0 {
            let state = tr
                .params
                .iter()
                .map(|(n, _)| {
                    let get = |m: &BTreeMap<String, Tensor<f32>>| {
                        m.get(n).cloned().ok_or_else(|| Error::Checkpoint(format!("missing optimizer state for {n}")))
                    };
                    Ok(AdamState {
                        m: get(&ckpt.adam_m)?,
                        v: get(&ckpt.adam_v)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            tr.optimizer.state = state;
        }
        tr.optimizer.t = ckpt.adam_t;
        tr.step = ckpt.step;
        tr.sampler = ckpt.sampler;
        Ok(tr)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let params = self
            .params
            .iter()
            .map(|(n, p)| (n.clone(), p.value().as_ref().clone()))
            .collect();
        let mut adam_m = BTreeMap::new();
        let mut adam_v = BTreeMap::new();
        for ((n, _), st) in self.params.iter().zip(&self.optimizer.state) {
            adam_m.insert(n.clone(), st.m.clone());
            adam_v.insert(n.clone(), st.v.clone());
        }
        Checkpoint {
            config: self.config.clone(),
            step: self.step,
            sampler: self.sampler,
            adam_t: self.optimizer.t,
            params,
            adam_m,
            adam_v,
        }
    }

    pub fn param_handles(&self) -> Vec<Param<f32>> {
        self.params.iter().map(|(_, p)| p.clone()).collect()
    }

    fn epoch_order(&self, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sampler.seed);
        rng.set_stream(self.sampler.epoch);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Next `batch_size` window indices; epochs reshuffle deterministically.
    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        let bs = self.config.train.batch_size;
        let mut out = Vec::with_capacity(bs);
        while out.len() < bs {
            if self.order.len() != n || self.sampler.cursor == 0 {
                self.order = self.epoch_order(n);
            }
            out.push(self.order[self.sampler.cursor]);
            self.sampler.cursor += 1;
            if self.sampler.cursor == n {
                self.sampler.cursor = 0;
                self.sampler.epoch += 1;
            }
        }
        out
    }

    /// Forward/backward on explicit tensors without updating parameters;
    /// gradients are left in the parameters.
    pub fn compute_gradients(&self, x: Tensor<f32>, y: Tensor<f32>) -> Result<(f64, f64, f64)> {
        for (_, p) in &self.params {
            p.zero_grad();
        }
        let g = Graph::new();
        let out = self.model.forward_full(&g, &g.constant(x))?;
        let loss = joint_loss(&out.y_hat, &g.constant(y), &out.recon, self.config.train.recon_weight)?;
        let total = loss.total.value().item() as f64;
        if !total.is_finite() {
            return Err(Error::NonFinite { layer: "joint_loss".into() });
        }
        g.backward(&loss.total)?;
        Ok((total, loss.mse, loss.recon))
    }

    /// Joint loss on explicit tensors, without gradients.
    pub fn evaluate_loss(&self, x: Tensor<f32>, y: Tensor<f32>) -> Result<f64> {
        let g = Graph::inference();
        let out = self.model.forward_full(&g, &g.constant(x))?;
        let loss = joint_loss(&out.y_hat, &g.constant(y), &out.recon, self.config.train.recon_weight)?;
        Ok(loss.total.value().item() as f64)
    }

    /// One optimizer step on the next mini-batch.
    pub fn train_step(&mut self, data: &[SequenceWindow]) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(Error::Domain("training dataset is empty".into()));
        }
        let step = self.step;
        let wrap = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let idx = self.next_batch(data.len());
        let windows: Vec<&SequenceWindow> = idx.iter().map(|&i| &data[i]).collect();
        let (x, y) = batch_tensors(&windows).map_err(wrap)?;
        let (loss, mse, recon) = self.compute_gradients(x, y).map_err(wrap)?;
        let handles = self.param_handles();
        let norm = if self.config.train.grad_clip > 0.0 {
            clip_grad_norm(&handles, self.config.train.grad_clip)
        } else {
            super::optim::grad_norm(&handles)
        };
        if !norm.is_finite() {
            return Err(wrap(Error::NonFinite { layer: "gradients".into() }));
        }
        let lr = self.schedule.lr(step);
        self.optimizer.step(&handles, lr);
        self.step += 1;
        Ok(StepRecord {
            step,
            lr,
            loss,
            mse,
            recon,
            grad_norm: norm,
        })
    }

    /// Runs until `config.train.steps` completed steps, appending one JSON
    /// line per step to `log` and calling `on_checkpoint` at the configured
    /// cadence.
    pub fn run(
        &mut self,
        data: &[SequenceWindow],
        mut log: Option<&mut dyn Write>,
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let mut records = Vec::new();
        let every = self.config.train.checkpoint_every;
        while self.step < self.config.train.steps {
            let rec = self.train_step(data)?;
            if let Some(w) = log.as_deref_mut() {
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(w, "{line}").map_err(|e| Error::Domain(format!("writing training log: {e}")))?;
            }
            records.push(rec);
            if every > 0 && self.step % every == 0 && self.step < self.config.train.steps {
                on_checkpoint(&self.checkpoint())?;
            }
        }
        on_checkpoint(&self.checkpoint())?;
        Ok(records)
    }
}

/// Copies named tensors into a model, requiring an exact name/shape match.
pub fn load_params<M: Module<f32>>(model: &M, params: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
    let mut seen = 0;
    let mut err = None;
    model.visit("", &mut |name, p| {
        if err.is_some() {
            return;
        }
        match params.get(name) {
            Some(t) if t.shape() == p.shape().as_slice() => {
                p.set_value(t.clone()).expect("shape checked");
                seen += 1;
            }
            Some(t) => err = Some(format!("{name}: shape {:?} vs model {:?}", t.shape(), p.shape())),
            None => err = Some(format!("missing tensor {name}")),
        }
    });
    if let Some(e) = err {
        return Err(Error::Checkpoint(e));
    }
    if seen != params.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors but the model has {seen}",
            params.len()
        )));
    }
    Ok(())
}

/// Trains a fresh model on `data` for `config.train.steps` steps.
pub fn train(data: &[SequenceWindow], config: &SftformerConfig) -> Result<Checkpoint> {
    let mut tr = Trainer::new(config)?;
    tr.run(data, None, |_| Ok(()))?;
    Ok(tr.checkpoint())
}

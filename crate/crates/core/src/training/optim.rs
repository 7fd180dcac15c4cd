//! Adam, the one-cycle learning-rate schedule, and global-norm clipping.

use sftformer_autograd::{Float, Param, Tensor};

/// One-cycle schedule with cosine annealing in both phases: warm up from
/// `max_lr / div` to `max_lr` over `pct_start` of the steps, then decay to
/// `max_lr / (div * final_div)` at the last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub pct_start: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

fn cos_anneal(start: f64, end: f64, pct: f64) -> f64 {
    end + (start - end) / 2.0 * ((std::f64::consts::PI * pct).cos() + 1.0)
}

impl OneCycle {
    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.div_factor
    }

    pub fn min_lr(&self) -> f64 {
        self.initial_lr() / self.final_div_factor
    }

    /// Learning rate used by optimizer step `step` (0-based). Steps past the
    /// end hold the final value.
    pub fn lr(&self, step: usize) -> f64 {
        let last = self.total_steps.saturating_sub(1) as f64;
        let warm_end = self.pct_start * self.total_steps as f64 - 1.0;
        let s = (step as f64).min(last);
        if s <= warm_end {
            let pct = if warm_end > 0.0 { s / warm_end } else { 1.0 };
            cos_anneal(self.initial_lr(), self.max_lr, pct)
        } else {
            let span = last - warm_end;
            let pct = if span > 0.0 { (s - warm_end) / span } else { 1.0 };
            cos_anneal(self.max_lr, self.min_lr(), pct)
        }
    }
}

/// Per-parameter first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
}

#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed updates.
    pub t: u64,
    /// Moments aligned with the parameter list passed to [`Adam::step`].
    pub state: Vec<AdamState<S>>,
}

impl<S: Float> Adam<S> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            state: Vec::new(),
        }
    }

    /// Applies one update with learning rate `lr`. Parameters without a
    /// gradient keep their value but still advance their moments with zero.
    pub fn step(&mut self, params: &[Param<S>], lr: f64) {
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| AdamState {
                    m: Tensor::zeros(p.shape()),
                    v: Tensor::zeros(p.shape()),
                })
                .collect();
        }
        assert_eq!(self.state.len(), params.len(), "optimizer state does not match parameter list");
        self.t += 1;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let (c1, c2) = (S::of(1.0 - self.beta1), S::of(1.0 - self.beta2));
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step_size = S::of(lr / bc1);
        let inv_sqrt_bc2 = S::of(1.0 / bc2.sqrt());
        let eps = S::of(self.eps);
        for (p, st) in params.iter().zip(&mut self.state) {
            if !p.trainable() {
                continue;
            }
            let zeros;
            let grad = match p.grad() {
                Some(g) => g,
                None => {
                    zeros = Tensor::zeros(p.shape());
                    zeros
                }
            };
            let (m, v) = (st.m.data_mut(), st.v.data_mut());
            for ((mi, vi), &g) in m.iter_mut().zip(v.iter_mut()).zip(grad.data()) {
                *mi = b1 * *mi + c1 * g;
                *vi = b2 * *vi + c2 * g * g;
            }
            p.update(|w| {
                for ((wi, &mi), &vi) in w.data_mut().iter_mut().zip(st.m.data()).zip(st.v.data()) {
                    *wi -= step_size * mi / (vi.sqrt() * inv_sqrt_bc2 + eps);
                }
            });
        }
    }
}

/// Global L2 norm over all gradients.
pub fn grad_norm<S: Float>(params: &[Param<S>]) -> f64 {
    params
        .iter()
        .map(|p| p.with_grad(|g| g.map_or(0.0, |g| g.sum_sq())))
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<S: Float>(params: &[Param<S>], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm {
        let c = max_norm / (norm + 1e-6);
        for p in params {
            if let Some(mut g) = p.grad() {
                g.scale_in_place(S::of(c));
                p.set_grad(g);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched() -> OneCycle {
        OneCycle {
            max_lr: 1e-4,
            total_steps: 100,
            pct_start: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }

    #[test]
    fn one_cycle_endpoints() {
        let s = sched();
        assert!((s.lr(0) - 4e-6).abs() < 1e-18);
        assert!((s.lr(29) - 1e-4).abs() < 1e-18);
        assert!((s.lr(99) - 4e-10).abs() < 1e-20);
        assert!(s.lr(10) < s.lr(20));
        assert!(s.lr(60) > s.lr(80));
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let p = Param::new(Tensor::full(vec![3], 1.0f64));
        p.set_grad(Tensor::new(vec![3], vec![0.5, -2.0, 0.0]).unwrap());
        let mut adam = Adam::new(0.9, 0.999, 1e-8);
        adam.step(std::slice::from_ref(&p), 0.1);
        let v = p.value();
        assert!((v.data()[0] - 0.9).abs() < 1e-6);
        assert!((v.data()[1] - 1.1).abs() < 1e-6);
        assert_eq!(v.data()[2], 1.0);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let a = Param::new(Tensor::zeros(vec![2]));
        let b = Param::new(Tensor::zeros(vec![1]));
        a.set_grad(Tensor::new(vec![2], vec![3.0f64, 0.0]).unwrap());
        b.set_grad(Tensor::new(vec![1], vec![4.0]).unwrap());
        let params = [a, b];
        assert!((clip_grad_norm(&params, 1.0) - 5.0).abs() < 1e-12);
        assert!((grad_norm(&params) - 1.0).abs() < 1e-6);
        assert!((clip_grad_norm(&params, 10.0) - grad_norm(&params)).abs() < 1e-15);
    }
}

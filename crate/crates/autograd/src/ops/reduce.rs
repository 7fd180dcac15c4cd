use std::rc::Rc;

use crate::error::{ensure_same, invalid, Result};
use crate::{Float, Tensor, Var};

impl<S: Float> Var<S> {
    pub fn sum_all(&self) -> Var<S> {
        let out = Tensor::scalar(self.value.sum());
        let shape = self.shape().to_vec();
        self.graph.record(out, &[self], move |g, _| {
            vec![Some(Tensor::full(shape, g.item()))]
        })
    }

    pub fn mean_all(&self) -> Var<S> {
        let n = self.value.len().max(1);
        self.sum_all().scale(1.0 / n as f64)
    }

    /// Mean squared difference over all elements.
    pub fn mse(&self, target: &Var<S>) -> Result<Var<S>> {
        ensure_same("mse", self.shape(), target.shape())?;
        let n = self.value.len().max(1);
        let diff: Vec<S> = self
            .value
            .data()
            .iter()
            .zip(target.value.data())
            .map(|(&a, &b)| a - b)
            .collect();
        let loss = diff.iter().map(|&d| d * d).sum::<S>() / S::of(n as f64);
        let shape = self.shape().to_vec();
        Ok(self
            .graph
            .record(Tensor::scalar(loss), &[self, target], move |g, needs| {
                let c = g.item() * S::of(2.0 / n as f64);
                let ga = Tensor::new(shape.clone(), diff.iter().map(|&d| d * c).collect())
                    .expect("shape");
                let gb = needs[1].then(|| ga.map(|v| -v));
                vec![needs[0].then_some(ga), gb]
            }))
    }

    /// `Σ w_i x_i` for a fixed weight tensor.
    pub fn weighted_sum(&self, weights: Rc<Tensor<S>>) -> Result<Var<S>> {
        ensure_same("weighted_sum", self.shape(), weights.shape())?;
        let s = self
            .value
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&a, &b)| a * b)
            .sum::<S>();
        Ok(self.graph.record(Tensor::scalar(s), &[self], move |g, _| {
            let c = g.item();
            vec![Some(weights.map(|w| w * c))]
        }))
    }

    /// Mean over every axis after the first two: `[n, c, ...] -> [n, c]`.
    pub fn mean_spatial(&self) -> Result<Var<S>> {
        let s = self.shape();
        if s.len() < 3 {
            return invalid("mean_spatial", format!("need rank >= 3, got {s:?}"));
        }
        let (n, c) = (s[0], s[1]);
        let l = self.value.len() / (n * c).max(1);
        let inv = S::of(1.0 / l.max(1) as f64);
        let out: Vec<S> = self
            .value
            .data()
            .chunks(l.max(1))
            .map(|ch| ch.iter().copied().sum::<S>() * inv)
            .collect();
        let shape = s.to_vec();
        Ok(self
            .graph
            .record(Tensor::new(vec![n, c], out)?, &[self], move |g, _| {
                let mut gx = Vec::with_capacity(n * c * l);
                for &gv in g.data() {
                    gx.extend(std::iter::repeat_n(gv * inv, l));
                }
                vec![Some(Tensor::new(shape, gx).expect("shape"))]
            }))
    }

    /// Scales channel `c` of sample `n` by `gate[n, c]`.
    pub fn mul_channel(&self, gate: &Var<S>) -> Result<Var<S>> {
        let s = self.shape();
        if s.len() < 2 || gate.shape() != &s[..2] {
            return invalid("mul_channel", format!("gate {:?} for input {s:?}", gate.shape()));
        }
        let l = self.value.len() / (s[0] * s[1]).max(1);
        let mut out = self.value().clone();
        for (ch, &gv) in out.data_mut().chunks_mut(l.max(1)).zip(gate.value.data()) {
            for v in ch {
                *v *= gv;
            }
        }
        let x = self.value_rc();
        let gt = gate.value_rc();
        Ok(self.graph.record(out, &[self, gate], move |g, needs| {
            let gx = needs[0].then(|| {
                let mut gx = g.clone();
                for (ch, &gv) in gx.data_mut().chunks_mut(l.max(1)).zip(gt.data()) {
                    for v in ch {
                        *v *= gv;
                    }
                }
                gx
            });
            let gg = needs[1].then(|| {
                let d: Vec<S> = g
                    .data()
                    .chunks(l.max(1))
                    .zip(x.data().chunks(l.max(1)))
                    .map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| p * q).sum())
                    .collect();
                Tensor::new(gt.shape().to_vec(), d).expect("shape")
            });
            vec![gx, gg]
        }))
    }
}

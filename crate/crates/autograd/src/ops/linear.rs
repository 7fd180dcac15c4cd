use crate::error::{invalid, Result};
use crate::gemm::{gemm, View};
use crate::{Float, Tensor, Var};

impl<S: Float> Var<S> {
    /// `x[..., k] · w[k, n] (+ b[n])`.
    pub fn linear(&self, weight: &Var<S>, bias: Option<&Var<S>>) -> Result<Var<S>> {
        let xs = self.shape();
        let ws = weight.shape();
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return invalid("linear", format!("input {xs:?} incompatible with weight {ws:?}"));
        }
        let (k, n) = (ws[0], ws[1]);
        if let Some(b) = bias {
            if b.shape() != [n] {
                return invalid("linear", format!("bias {:?} for {n} outputs", b.shape()));
            }
        }
        let rows = self.value.len() / k.max(1);
        let mut out_shape = xs.to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = vec![S::zero(); rows * n];
        if let Some(b) = bias {
            for row in out.chunks_mut(n.max(1)) {
                row.copy_from_slice(b.value().data());
            }
        }
        let beta = if bias.is_some() { S::one() } else { S::zero() };
        gemm(
            rows,
            k,
            n,
            S::one(),
            self.value.data(),
            View::rm(0, k),
            weight.value.data(),
            View::rm(0, n),
            beta,
            &mut out,
            View::rm(0, n),
        );
        let out = Tensor::new(out_shape, out)?;
        let x = self.value_rc();
        let w = weight.value_rc();
        let x_shape = xs.to_vec();
        let mut parents = vec![self, weight];
        if let Some(b) = bias {
            parents.push(b);
        }
        Ok(self.graph.record(out, &parents, move |g, needs| {
            let gd = g.data();
            let gx = needs[0].then(|| {
                let mut gx = vec![S::zero(); rows * k];
                gemm(rows, n, k, S::one(), gd, View::rm(0, n), w.data(), View::rm(0, n).t(), S::zero(), &mut gx, View::rm(0, k));
                Tensor::new(x_shape, gx).expect("shape")
            });
            let gw = needs[1].then(|| {
                let mut gw = vec![S::zero(); k * n];
                gemm(k, rows, n, S::one(), x.data(), View::rm(0, k).t(), gd, View::rm(0, n), S::zero(), &mut gw, View::rm(0, n));
                Tensor::new(vec![k, n], gw).expect("shape")
            });
            let mut grads = vec![gx, gw];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| {
                    let mut gb = vec![S::zero(); n];
                    for row in gd.chunks(n.max(1)) {
                        for (a, &v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::new(vec![n], gb).expect("shape")
                }));
            }
            grads
        }))
    }
}

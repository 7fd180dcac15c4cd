use crate::error::{invalid, Result};
use crate::lanes;
use crate::{Float, Tensor, Var};

struct Normalized<S> {
    xhat: Vec<S>,
    rstd: Vec<S>,
}

/// Standardizes each contiguous chunk of `group` elements.
fn normalize_chunks<S: Float>(x: &[S], group: usize, eps: f64) -> Normalized<S> {
    let mut xhat = vec![S::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.len() / group.max(1));
    let inv_n = S::of(1.0 / group as f64);
    for (src, dst) in x.chunks(group).zip(xhat.chunks_mut(group)) {
        let mean = lanes::sum(src) * inv_n;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = s - mean;
        }
        let var = lanes::dot(dst, dst) * inv_n;
        let r = S::one() / (var + S::of(eps)).sqrt();
        for d in dst.iter_mut() {
            *d *= r;
        }
        rstd.push(r);
    }
    Normalized { xhat, rstd }
}

/// Backward of `xhat = (x - mean) * rstd` given `dxhat`, in place.
fn normalize_backward<S: Float>(dxhat: &mut [S], xhat: &[S], rstd: &[S], group: usize) {
    let inv_n = S::of(1.0 / group as f64);
    for ((d, xh), &r) in dxhat.chunks_mut(group).zip(xhat.chunks(group)).zip(rstd) {
        let m1 = lanes::sum(d) * inv_n;
        let m2 = lanes::dot(d, xh) * inv_n;
        for (dv, &xv) in d.iter_mut().zip(xh) {
            *dv = r * (*dv - m1 - xv * m2);
        }
    }
}

impl<S: Float> Var<S> {
    /// Layer normalization over the last axis with affine parameters.
    pub fn layer_norm(&self, gamma: &Var<S>, beta: &Var<S>, eps: f64) -> Result<Var<S>> {
        let d = *self.shape().last().unwrap_or(&0);
        if d == 0 || gamma.shape() != [d] || beta.shape() != [d] {
            return invalid(
                "layer_norm",
                format!("input {:?}, gamma {:?}, beta {:?}", self.shape(), gamma.shape(), beta.shape()),
            );
        }
        let norm = normalize_chunks(self.value.data(), d, eps);
        let (gm, bt) = (gamma.value().data(), beta.value().data());
        let out: Vec<S> = norm
            .xhat
            .iter()
            .enumerate()
            .map(|(i, &v)| v * gm[i % d] + bt[i % d])
            .collect();
        let out = Tensor::new(self.shape().to_vec(), out)?;
        let gamma_v = gamma.value_rc();
        let shape = self.shape().to_vec();
        Ok(self.graph.record(out, &[self, gamma, beta], move |g, needs| {
            let gd = g.data();
            let gm = gamma_v.data();
            let mut ggamma = vec![S::zero(); d];
            let mut gbeta = vec![S::zero(); d];
            if needs[1] || needs[2] {
                for (i, (&gv, &xv)) in gd.iter().zip(&norm.xhat).enumerate() {
                    ggamma[i % d] += gv * xv;
                    gbeta[i % d] += gv;
                }
            }
            let gx = needs[0].then(|| {
                let mut dx: Vec<S> = gd.iter().enumerate().map(|(i, &gv)| gv * gm[i % d]).collect();
                normalize_backward(&mut dx, &norm.xhat, &norm.rstd, d);
                Tensor::new(shape, dx).expect("shape")
            });
            vec![
                gx,
                needs[1].then(|| Tensor::new(vec![d], ggamma).expect("shape")),
                needs[2].then(|| Tensor::new(vec![d], gbeta).expect("shape")),
            ]
        }))
    }

    /// Group normalization of `[n, c, ...]` with per-channel affine parameters.
    pub fn group_norm(&self, groups: usize, gamma: &Var<S>, beta: &Var<S>, eps: f64) -> Result<Var<S>> {
        let s = self.shape();
        if s.len() < 2 || groups == 0 || s[1] % groups != 0 {
            return invalid("group_norm", format!("{groups} groups for input {s:?}"));
        }
        let c = s[1];
        if gamma.shape() != [c] || beta.shape() != [c] {
            return invalid("group_norm", format!("affine shape {:?} for {c} channels", gamma.shape()));
        }
        let l = self.value.len() / (s[0] * c).max(1);
        let group = (c / groups) * l;
        let norm = normalize_chunks(self.value.data(), group, eps);
        let (gm, bt) = (gamma.value().data(), beta.value().data());
        let chan = move |i: usize| (i / l) % c;
        let out: Vec<S> = norm
            .xhat
            .iter()
            .enumerate()
            .map(|(i, &v)| v * gm[chan(i)] + bt[chan(i)])
            .collect();
        let out = Tensor::new(s.to_vec(), out)?;
        let gamma_v = gamma.value_rc();
        let shape = s.to_vec();
        Ok(self.graph.record(out, &[self, gamma, beta], move |g, needs| {
            let gd = g.data();
            let gm = gamma_v.data();
            let mut ggamma = vec![S::zero(); c];
            let mut gbeta = vec![S::zero(); c];
            if needs[1] || needs[2] {
                for (i, (&gv, &xv)) in gd.iter().zip(&norm.xhat).enumerate() {
                    ggamma[chan(i)] += gv * xv;
                    gbeta[chan(i)] += gv;
                }
            }
            let gx = needs[0].then(|| {
                let mut dx: Vec<S> = gd.iter().enumerate().map(|(i, &gv)| gv * gm[chan(i)]).collect();
                normalize_backward(&mut dx, &norm.xhat, &norm.rstd, group);
                Tensor::new(shape, dx).expect("shape")
            });
            vec![
                gx,
                needs[1].then(|| Tensor::new(vec![c], ggamma).expect("shape")),
                needs[2].then(|| Tensor::new(vec![c], gbeta).expect("shape")),
            ]
        }))
    }
}

use std::rc::Rc;

use crate::error::{invalid, Result};
use crate::tensor::numel;
use crate::{Float, Tensor, Var};

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

/// Output shape and source indices of an axis permutation:
/// `out[i] = in[idx[i]]` with `out_shape[j] = shape[axes[j]]`.
pub fn permute_indices(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    assert_eq!(shape.len(), axes.len(), "permute: rank mismatch");
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let total = numel(shape);
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; shape.len()];
    let mut offset = 0usize;
    for _ in 0..total {
        idx.push(offset);
        for d in (0..counter.len()).rev() {
            counter[d] += 1;
            offset += src_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * counter[d];
            counter[d] = 0;
        }
    }
    (out_shape, idx)
}

impl<S: Float> Var<S> {
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<S>> {
        let shape = shape.into();
        let out = Tensor::clone(&self.value).reshape(shape)?;
        let in_shape = self.shape().to_vec();
        Ok(self.graph.record(out, &[self], move |g, _| {
            vec![Some(g.clone().reshape(in_shape).expect("reshape back"))]
        }))
    }

    /// `out[i] = x[idx[i]]`; the backward pass scatter-adds.
    pub fn gather(&self, idx: Rc<Vec<usize>>, shape: impl Into<Vec<usize>>) -> Result<Var<S>> {
        let shape = shape.into();
        if numel(&shape) != idx.len() {
            return invalid("gather", format!("{} indices for shape {shape:?}", idx.len()));
        }
        let src = self.value.data();
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.len()) {
            return invalid("gather", format!("index {bad} out of range {}", src.len()));
        }
        let out = Tensor::new(shape, idx.iter().map(|&i| src[i]).collect())?;
        let in_shape = self.shape().to_vec();
        Ok(self.graph.record(out, &[self], move |g, _| {
            let mut gx = Tensor::zeros(in_shape);
            let d = gx.data_mut();
            for (&i, &gv) in idx.iter().zip(g.data()) {
                d[i] += gv;
            }
            vec![Some(gx)]
        }))
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<S>> {
        if axes.len() != self.shape().len() {
            return invalid("permute", format!("axes {axes:?} for shape {:?}", self.shape()));
        }
        let mut seen = vec![false; axes.len()];
        for &a in axes {
            if a >= axes.len() || std::mem::replace(&mut seen[a], true) {
                return invalid("permute", format!("invalid axes {axes:?}"));
            }
        }
        let (out_shape, idx) = permute_indices(self.shape(), axes);
        self.gather(Rc::new(idx), out_shape)
    }

    /// Picks `indices` along `axis` (repeats allowed).
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Var<S>> {
        let s = self.shape();
        if axis >= s.len() || indices.iter().any(|&i| i >= s[axis]) {
            return invalid("index_select", format!("axis {axis}, indices {indices:?}, shape {s:?}"));
        }
        let outer = numel(&s[..axis]);
        let inner = numel(&s[axis + 1..]);
        let mut idx = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let base = (o * s[axis] + i) * inner;
                idx.extend(base..base + inner);
            }
        }
        let mut shape = s.to_vec();
        shape[axis] = indices.len();
        self.gather(Rc::new(idx), shape)
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(items: &[&Var<S>], axis: usize) -> Result<Var<S>> {
        let Some(first) = items.first() else {
            return invalid("concat", "no operands");
        };
        let base = first.shape().to_vec();
        if axis >= base.len() {
            return invalid("concat", format!("axis {axis} for shape {base:?}"));
        }
        for v in items {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return invalid("concat", format!("{s:?} vs {base:?} on axis {axis}"));
            }
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis + 1..]);
        let chunks: Vec<usize> = items.iter().map(|v| v.shape()[axis] * inner).collect();
        let total: usize = chunks.iter().sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (v, &ch) in items.iter().zip(&chunks) {
                data.extend_from_slice(&v.value.data()[o * ch..(o + 1) * ch]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total / inner.max(1);
        let shapes: Vec<Vec<usize>> = items.iter().map(|v| v.shape().to_vec()).collect();
        Ok(first.graph.record(Tensor::new(shape, data)?, items, move |g, needs| {
            let gd = g.data();
            let mut out: Vec<Option<Vec<S>>> = needs
                .iter()
                .zip(&chunks)
                .map(|(&n, &ch)| n.then(|| Vec::with_capacity(outer * ch)))
                .collect();
            for o in 0..outer {
                let mut off = o * total;
                for (slot, &ch) in out.iter_mut().zip(&chunks) {
                    if let Some(buf) = slot {
                        buf.extend_from_slice(&gd[off..off + ch]);
                    }
                    off += ch;
                }
            }
            out.into_iter()
                .zip(shapes)
                .map(|(o, s)| o.map(|d| Tensor::new(s, d).expect("shape")))
                .collect()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_indices_transposes_matrix() {
        let (shape, idx) = permute_indices(&[2, 3], &[1, 0]);
        assert_eq!(shape, vec![3, 2]);
        assert_eq!(idx, vec![0, 3, 1, 4, 2, 5]);
    }

    #[test]
    fn permute_indices_identity() {
        let (shape, idx) = permute_indices(&[2, 2, 2], &[0, 1, 2]);
        assert_eq!(shape, vec![2, 2, 2]);
        assert_eq!(idx, (0..8).collect::<Vec<_>>());
    }
}

use std::rc::Rc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sftformer_autograd::{Graph, Param, Tensor};

fn random(seed: u64, shape: &[usize]) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(vec![n, o, oh, ow]);
    for b in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x.data()[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out.data_mut()[((b * o + oc) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_direct_loops() {
    let x = random(1, &[2, 3, 7, 6]);
    let w = random(2, &[4, 3, 3, 3]);
    let g = Graph::inference();
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        let y = g.constant(x.clone()).conv2d(&g.constant(w.clone()), None, stride, pad).unwrap();
        assert!(y.value().max_abs_diff(&naive_conv(&x, &w, stride, pad)) < 1e-12);
    }
}

#[test]
fn transposed_conv_is_adjoint_of_conv() {
    // <conv(a), b> == <a, conv_t(b)> with shared weights.
    let a = random(3, &[1, 2, 8, 8]);
    let w = random(4, &[3, 2, 3, 3]);
    let g = Graph::inference();
    let ca = g.constant(a.clone()).conv2d(&g.constant(w.clone()), None, 2, 1).unwrap();
    let b = random(5, ca.shape());
    let tb = g
        .constant(b.clone())
        .conv_transpose2d(&g.constant(w), None, 2, 1, 1)
        .unwrap();
    assert_eq!(tb.shape(), &[1, 2, 8, 8]);
    let lhs: f64 = ca.value().data().iter().zip(b.data()).map(|(p, q)| p * q).sum();
    let rhs: f64 = a.data().iter().zip(tb.value().data()).map(|(p, q)| p * q).sum();
    assert!((lhs - rhs).abs() < 1e-10);
}

#[test]
fn stride_two_transposed_conv_doubles_extent() {
    let g = Graph::<f32>::inference();
    let x = g.constant(Tensor::zeros(vec![1, 4, 16, 16]));
    let w = g.constant(Tensor::zeros(vec![4, 2, 3, 3]));
    let y = x.conv_transpose2d(&w, None, 2, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 2, 32, 32]);
}

#[test]
fn shared_param_accumulates_from_every_use() {
    let p = Param::<f64>::new(Tensor::from_f64(vec![2], &[1.0, 2.0]).unwrap());
    let alias = p.clone();
    let g = Graph::new();
    let a = g.param(&p);
    let b = g.param(&alias);
    let loss = a.mul(&b).unwrap().sum_all();
    g.backward(&loss).unwrap();
    assert!(p.ptr_eq(&alias));
    assert_eq!(p.grad().unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn frozen_param_gets_no_gradient() {
    let p = Param::new(Tensor::<f64>::full(vec![3], 1.0));
    p.set_trainable(false);
    let g = Graph::new();
    let x = g.input(Tensor::full(vec![3], 2.0));
    let loss = x.mul(&g.param(&p)).unwrap().sum_all();
    let grads = g.backward(&loss).unwrap();
    assert!(p.grad().is_none());
    assert_eq!(grads.get(&x).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn inference_graph_records_nothing() {
    let g = Graph::<f32>::inference();
    let x = g.input(Tensor::full(vec![4], 1.0));
    let y = x.gelu().scale(2.0);
    assert!(!y.is_tracked());
    assert!(g.is_empty());
}

#[test]
fn attention_rows_are_distributions() {
    let qkv = random(9, &[3, 5, 12]);
    let g = Graph::inference();
    // With v = identity-like probes the output rows are the attention rows.
    let mut t = qkv.clone();
    for b in 0..3 {
        for i in 0..5 {
            for j in 0..4 {
                t.data_mut()[(b * 5 + i) * 12 + 8 + j] = if j == 0 { 1.0 } else { 0.0 };
            }
        }
    }
    let y = g.constant(t).attention(1, None, None).unwrap();
    for row in y.value().data().chunks(4) {
        assert!((row[0] - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn permute_then_inverse_is_identity(a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let x = random(11, &[a, b, c]);
        let g = Graph::inference();
        let y = g.constant(x.clone()).permute(&[1, 2, 0]).unwrap().permute(&[2, 0, 1]).unwrap();
        prop_assert_eq!(y.value(), &x);
    }

    #[test]
    fn gather_backward_is_scatter_add(idx in proptest::collection::vec(0usize..6, 1..12)) {
        let g = Graph::<f64>::new();
        let x = g.input(Tensor::zeros(vec![6]));
        let n = idx.len();
        let loss = x.gather(Rc::new(idx.clone()), vec![n]).unwrap().sum_all();
        let grads = g.backward(&loss).unwrap();
        let gx = grads.get(&x).unwrap();
        for k in 0..6 {
            prop_assert_eq!(gx.data()[k], idx.iter().filter(|&&i| i == k).count() as f64);
        }
    }
}

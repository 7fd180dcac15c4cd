mod common;
use common::*;


use sftformer::frequency_block::{rfft_time, FrequencyBlock, TemporalLayer};
use sftformer::nn::{Init, Module};
use sftformer_autograd::{Graph, Tensor};

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    Init::new(seed).normal::<f64>(shape, 1.0).value().as_ref().clone()
}

#[test]
fn identity_kernel_round_trips() {
    for t in [2, 5, 10] {
        let feb = identity_feb(6, t);
        let g = Graph::inference();
        let x = randn(&[3, t, 6], t as u64);
        let y = feb.forward(&g, &g.constant(x.clone())).unwrap();
        assert!(y.value().max_abs_diff(&x) < 1e-5, "t={t}");
    }
}

#[test]
fn zero_kernel_annihilates() {
    let feb = FrequencyBlock::<f64>::new(&mut Init::new(1), 5, 3, 3);
    feb.r_re.set_value(Tensor::zeros(vec![3, 3, 3])).unwrap();
    feb.r_im.set_value(Tensor::zeros(vec![3, 3, 3])).unwrap();
    let g = Graph::inference();
    let y = feb.forward(&g, &g.constant(randn(&[2, 4, 5], 2))).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_frame_is_rejected() {
    let feb = FrequencyBlock::<f64>::new(&mut Init::new(1), 5, 3, 1);
    let g = Graph::inference();
    assert!(matches!(
        feb.forward(&g, &g.constant(randn(&[1, 1, 5], 2))),
        Err(sftformer::Error::Domain(_))
    ));
}

#[test]
fn matches_explicit_dft_at_t4() {
    let feb = FrequencyBlock::<f64>::new(&mut Init::new(7), 3, 2, 3);
    // Nonzero imaginary parts in the DC/Nyquist kernels exercise the edge bins.
    feb.r_re.set_value(randn(&[3, 2, 2], 8)).unwrap();
    feb.r_im.set_value(randn(&[3, 2, 2], 9)).unwrap();
    let x = randn(&[2, 4, 3], 10);
    let g = Graph::inference();
    let y = feb.forward(&g, &g.constant(x.clone())).unwrap();
    let oracle = dft_oracle(&feb, &x);
    let diff = y.value().data().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "diff {diff}");
}

#[test]
fn truncated_modes_match_oracle() {
    let feb = FrequencyBlock::<f64>::new(&mut Init::new(3), 4, 3, 2);
    let x = randn(&[1, 7, 4], 4);
    let g = Graph::inference();
    let y = feb.forward(&g, &g.constant(x.clone())).unwrap();
    let oracle = dft_oracle(&feb, &x);
    let diff = y.value().data().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "diff {diff}");
}

#[test]
fn linear_in_input() {
    let feb = FrequencyBlock::<f64>::new(&mut Init::new(5), 6, 4, 6);
    let g = Graph::inference();
    let (x, y) = (randn(&[2, 10, 6], 1), randn(&[2, 10, 6], 2));
    let (a, b) = (0.7, -1.3);
    let combo = Tensor::from_fn(vec![2, 10, 6], |i| a * x.data()[i] + b * y.data()[i]);
    let lhs = feb.forward(&g, &g.constant(combo)).unwrap();
    let fx = feb.forward(&g, &g.constant(x)).unwrap();
    let fy = feb.forward(&g, &g.constant(y)).unwrap();
    let rhs = Tensor::from_fn(vec![2, 10, 6], |i| a * fx.value().data()[i] + b * fy.value().data()[i]);
    assert!(lhs.value().max_abs_diff(&rhs) < 1e-6);
}

#[test]
fn orthonormal_transform_preserves_energy() {
    for t in [4, 7, 10] {
        let g = Graph::inference();
        let x = randn(&[2, t, 3], t as u64);
        let q = rfft_time(&g.constant(x.clone())).unwrap();
        let k = t / 2 + 1;
        let qd = q.value().data();
        let mut energy = 0.0;
        for b in 0..2 {
            for m in 0..k {
                let w = if m == 0 || 2 * m == t { 1.0 } else { 2.0 };
                for c in 0..3 {
                    let re = qd[((b * 2) * k + m) * 3 + c];
                    let im = qd[((b * 2 + 1) * k + m) * 3 + c];
                    energy += w * (re * re + im * im);
                }
            }
        }
        assert!((energy - x.sum_sq()).abs() < 1e-6, "t={t}");
    }
}

#[test]
fn constant_signal_lives_in_mode_zero() {
    let feb = identity_feb(4, 10);
    let mut re = feb.r_re.value().as_ref().clone();
    for v in &mut re.data_mut()[..16] {
        *v = 0.0;
    }
    feb.r_re.set_value(re).unwrap();
    let row = randn(&[1, 1, 4], 3);
    let x = Tensor::from_fn(vec![1, 10, 4], |i| row.data()[i % 4]);
    let g = Graph::inference();
    let y = feb.forward(&g, &g.constant(x)).unwrap();
    assert!(y.value().sum_sq().sqrt() < 1e-5);
}

fn temporal(seed: u64) -> TemporalLayer<f64> {
    TemporalLayer::new(&mut Init::new(seed), 4, 16, 2, 8, 3)
}

#[test]
fn channel_copies_are_identical() {
    let layer = temporal(1);
    let g = Graph::inference();
    let out = layer.forward(&g, &g.constant(randn(&[2, 4, 4, 4, 4], 2))).unwrap();
    let d = out.value().data();
    for bt in 0..8 {
        let first = &d[bt * 64..bt * 64 + 16];
        for c in 1..4 {
            assert_eq!(&d[bt * 64 + c * 16..bt * 64 + (c + 1) * 16], first);
        }
    }
}

#[test]
fn uniform_squeeze_is_channel_permutation_invariant() {
    let layer = temporal(2);
    layer.squeeze.weight.set_value(Tensor::full(vec![1, 4, 1, 1], 1.0)).unwrap();
    // Small integers keep every channel sum exact regardless of order.
    let x = Tensor::from_fn(vec![1, 4, 4, 4, 4], |i| ((i * 7919) % 11) as f64 - 5.0);
    let g = Graph::inference();
    let base = layer.forward(&g, &g.constant(x.clone())).unwrap();
    let perm = g.constant(x).index_select(2, &[3, 1, 0, 2]).unwrap();
    let out = layer.forward(&g, &perm).unwrap();
    assert_eq!(out.value(), base.value());
}

#[test]
fn spatial_permutation_permutes_embedding_columns() {
    let layer = temporal(3);
    let x = randn(&[1, 4, 4, 4, 4], 5);
    let perm: Vec<usize> = (0..16).map(|i| (i * 5 + 3) % 16).collect();
    let idx: Vec<usize> = (0..4 * 4 * 16).map(|i| (i / 16) * 16 + perm[i % 16]).collect();
    let g = Graph::inference();
    let xp = g.constant(x.clone()).gather(std::rc::Rc::new(idx), vec![1, 4, 4, 4, 4]).unwrap();
    let zt = layer.embed(&g, &g.constant(x)).unwrap();
    let ztp = layer.embed(&g, &xp).unwrap();
    for t in 0..4 {
        for i in 0..16 {
            let a = ztp.value().data()[t * 16 + i];
            let b = zt.value().data()[t * 16 + perm[i]];
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn silenced_layer_outputs_zero() {
    let layer = temporal(4);
    layer.silence();
    let g = Graph::inference();
    let out = layer.forward(&g, &g.constant(randn(&[1, 4, 4, 4, 4], 6))).unwrap();
    assert!(out.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn parameter_names_are_unique() {
    let names: Vec<String> = temporal(5).named_params().into_iter().map(|(n, _)| n).collect();
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), names.len());
}

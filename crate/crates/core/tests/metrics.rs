mod common;
use common::*;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sftformer::data_io::{generate_synthetic, EchoSequence, GeneratorParams};
use sftformer::metrics_eval::*;
use sftformer_autograd::Tensor;

#[test]
fn scores_match_oracles_on_random_quadruples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        // mix in zero cells so degenerate denominators are exercised
        let mut draw = || if rng.random_bool(0.1) { 0 } else { rng.random_range(0..5000u64) };
        let c = ConfusionCounts::new(draw(), draw(), draw(), draw());
        let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
        assert!(close(csi(&c), oracle_csi(tp, fp, fn_), 1e-12), "case {i}: {c:?}");
        assert!(close(gss(&c), oracle_gss(tp, fp, fn_, tn), 1e-12), "case {i}: {c:?}");
        assert!(close(hss(&c), oracle_hss(tp, fp, fn_, tn), 1e-12), "case {i}: {c:?}");
    }
}

#[test]
fn worked_examples() {
    let ones = ConfusionCounts::new(1, 1, 1, 1);
    assert_eq!(csi(&ones), Some(1.0 / 3.0));
    assert_eq!(ones.expected(), Some((1.0, 1.0)));
    assert_eq!(gss(&ones), Some(0.0));
    assert_eq!(hss(&ones), Some(0.0));
    let perfect = ConfusionCounts::new(2, 0, 0, 2);
    assert_eq!(gss(&perfect), Some(1.0));
    assert_eq!(hss(&perfect), Some(1.0));
    assert_eq!(csi(&perfect), Some(1.0));
    assert_eq!(csi(&ConfusionCounts::new(0, 0, 0, 7)), None);
    assert_eq!(gss(&ConfusionCounts::default()), None);
}

#[test]
fn csi_ignores_true_negatives() {
    let a = ConfusionCounts::new(5, 3, 2, 10);
    let b = ConfusionCounts::new(5, 3, 2, 10_000);
    assert_eq!(csi(&a), csi(&b));
}

#[test]
fn ets_is_exposed_separately() {
    let c = ConfusionCounts::new(30, 10, 20, 40);
    let e = 40.0 * 50.0 / 100.0;
    assert!((ets(&c).unwrap() - (30.0 - e) / (60.0 - e)).abs() < 1e-15);
    assert_ne!(ets(&c), gss(&c));
}

#[test]
fn gss_of_random_forecast_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let pred: Vec<f32> = (0..n).map(|_| rng.random()).collect();
    let truth: Vec<f32> = (0..n).map(|_| rng.random()).collect();
    let c = binarize_and_count(&pred, &truth, 0.6).unwrap();
    assert!(gss(&c).unwrap().abs() < 0.02, "{c:?}");
}

#[test]
fn binarize_matches_pixel_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (h, w) = (16, 16);
        let pred: Vec<f32> = (0..h * w).map(|_| rng.random()).collect();
        let truth: Vec<f32> = (0..h * w).map(|_| rng.random()).collect();
        let tau = rng.random_range(0.0..1.0);
        let c = binarize_and_count(&pred, &truth, tau).unwrap();
        assert_eq!([c.tp, c.fp, c.fn_, c.tn], loop_counts(&pred, &truth, h, w, tau));
    }
}

#[test]
fn binarize_edge_cases() {
    let truth = [0.0f32, 1.0, 0.3, 0.7];
    let c = binarize_and_count(&truth, &truth, 0.3).unwrap();
    assert_eq!((c.fp, c.fn_), (0, 0));
    // threshold is inclusive
    assert_eq!(c.tp, 3);
    let inverted: Vec<f32> = truth.iter().map(|v| if *v >= 0.3 { 0.0 } else { 1.0 }).collect();
    let c = binarize_and_count(&inverted, &truth, 0.3).unwrap();
    assert_eq!((c.tp, c.tn), (0, 0));
    assert!(binarize_and_count(&truth[..3], &truth, 0.3).is_err());
    assert!(binarize_and_count(&truth, &truth, 1.5).is_err());
}

fn seq_pairs(seed: u64) -> Vec<(Tensor<f32>, Tensor<f32>)> {
    let seqs = generate_synthetic(seed, 4, 20, 32, 32, &GeneratorParams::default()).unwrap();
    seqs.iter()
        .map(|s| {
            let input = s.slice(0, 10).unwrap();
            let truth = s.slice(10, 10).unwrap().frames().clone();
            (persistence_baseline(&input, 10).unwrap(), truth)
        })
        .collect()
}

#[test]
fn evaluate_pools_counts() {
    let pairs = seq_pairs(5);
    let ths = [Threshold::pixel(0.2), Threshold::pixel(0.5)];
    let report = evaluate(&pairs, &ths).unwrap();
    // second path: sum per-sequence tables by hand
    let mut manual = CountTable::new(&ths, 10);
    for (p, t) in &pairs {
        let mut one = CountTable::new(&ths, 10);
        one.add_pair(p, t).unwrap();
        manual.merge(&one).unwrap();
    }
    assert_eq!(report, MetricReport::from_counts(&manual));
    assert_eq!(report.rows.len(), 20);
    assert_eq!(report.summaries.len(), 2);
    let last = &report.summaries[0].last;
    assert_eq!(last.lead_time, 10);
}

#[test]
fn perfect_forecast_scores_one() {
    let truth = seq_pairs(6).into_iter().map(|(_, t)| (t.clone(), t)).collect::<Vec<_>>();
    let report = evaluate(&truth, &[Threshold::pixel(0.2)]).unwrap();
    for r in &report.rows {
        if r.counts.tp > 0 && r.counts.tn > 0 {
            assert_eq!((r.csi, r.gss, r.hss), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }
}

#[test]
fn missing_scores_are_excluded_from_means() {
    let blank = Tensor::zeros(vec![2, 4, 4]);
    let mut hit = Tensor::zeros(vec![2, 4, 4]);
    hit.data_mut()[16] = 1.0;
    // lead 1 has no events at all; lead 2 is a perfect hit
    let report = evaluate(&[(hit.clone(), hit)], &[Threshold::pixel(0.5)]).unwrap();
    assert_eq!(report.rows[0].csi, None);
    assert_eq!(report.rows[1].csi, Some(1.0));
    assert_eq!(report.summaries[0].mean_csi, Some(1.0));
    let none = evaluate(&[(blank.clone(), blank)], &[Threshold::pixel(0.5)]).unwrap();
    assert_eq!(none.summaries[0].mean_csi, None);
    let rec = &none.records("model")[0];
    let line = serde_json::to_string(rec).unwrap();
    assert!(line.contains("\"csi\":null"), "{line}");
}

#[test]
fn persistence_repeats_last_frame() {
    let seq = &generate_synthetic(9, 1, 6, 16, 16, &GeneratorParams::default()).unwrap()[0];
    let p = persistence_baseline(seq, 3).unwrap();
    assert_eq!(p.shape(), &[3, 16, 16]);
    for t in 0..3 {
        assert_eq!(&p.data()[t * 256..(t + 1) * 256], seq.frame(5));
    }
}

#[test]
fn persistence_is_exact_on_static_scenes() {
    let frame: Vec<f32> = (0..64).map(|i| (i % 7) as f32 / 7.0).collect();
    let data: Vec<f32> = std::iter::repeat_n(frame, 8).flatten().collect();
    let seq = EchoSequence::normalized(Tensor::new(vec![8, 8, 8], data).unwrap(), "static").unwrap();
    let input = seq.slice(0, 4).unwrap();
    let truth = seq.slice(4, 4).unwrap().frames().clone();
    let p = persistence_baseline(&input, 4).unwrap();
    assert_eq!(p.data(), truth.data());
    let report = evaluate(&[(p, truth)], &[Threshold::pixel(0.5)]).unwrap();
    assert!(report.rows.iter().all(|r| r.csi == Some(1.0)));
}

#[test]
fn persistence_skill_decays_on_advecting_cells() {
    let params = GeneratorParams::default();
    let seqs = generate_synthetic(11, 64, 20, 64, 64, &params).unwrap();
    let pairs: Vec<_> = seqs
        .iter()
        .map(|s| {
            (
                persistence_baseline(&s.slice(0, 10).unwrap(), 10).unwrap(),
                s.slice(10, 10).unwrap().frames().clone(),
            )
        })
        .collect();
    let report = evaluate(&pairs, &[Threshold::pixel(0.3)]).unwrap();
    let curve: Vec<f64> = report.curve(0, |r| r.csi).into_iter().map(Option::unwrap).collect();
    for w in curve.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "{curve:?}");
    }
    assert!(curve[9] < curve[0]);
}

#[test]
fn rain_rate_thresholds_resolve() {
    let cfg = sftformer::config::EvalConfig::default();
    let ths = resolve_thresholds(&cfg).unwrap();
    assert_eq!(ths.len(), 5);
    assert!(ths.windows(2).all(|w| w[0].pixel < w[1].pixel));
    assert_eq!(ths[0].rain_rate_mmh, Some(0.5));
    assert_eq!(ths[0].label(), "0.5mm/h");
}

#[test]
fn csv_leaves_missing_cells_empty() {
    let blank = Tensor::zeros(vec![1, 2, 2]);
    let report = evaluate(&[(blank.clone(), blank)], &[Threshold::pixel(0.5)]).unwrap();
    let mut out = Vec::new();
    ReportRecord::write_csv(&report.records("persistence"), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "persistence,0.5,,1,,,,");
}

use sftformer::training::gradcheck::{gradcheck, rel_err, Selection, TOLERANCE};

fn run(sel: Selection) {
    let report = gradcheck(sel, 7, 6).unwrap();
    for t in &report.tensors {
        assert!(t.max_rel_err < TOLERANCE, "{sel}: {} rel err {}", t.name, t.max_rel_err);
    }
    assert!(report.passed());
    assert!(report.tensors.iter().any(|t| t.name == "input" || t.name == "latent" || t.name == "h_prime"));
}

#[test]
fn swin_block_gradients() {
    run(Selection::SwinBlock);
}

#[test]
fn feb_gradients() {
    run(Selection::FebForward);
}

#[test]
fn sft_block_gradients() {
    run(Selection::SftBlockForward);
}

#[test]
fn forecast_decode_gradients() {
    run(Selection::ForecastDecode);
}

#[test]
fn reconstruct_odd_gradients() {
    run(Selection::ReconstructOdd);
}

#[test]
fn selection_names_round_trip() {
    for sel in Selection::ALL {
        assert_eq!(sel.name().parse::<Selection>().unwrap(), sel);
    }
    assert!("everything".parse::<Selection>().is_err());
}

#[test]
fn relative_error_floor() {
    assert_eq!(rel_err(1.0, 1.0), 0.0);
    assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
    // both tiny: compared against the floor, not each other
    assert!(rel_err(1e-12, -1e-12) < 1e-6);
}

mod common;

use common::grad;

#[test]
fn multinomial_score_matches_differences() {
    assert!(grad::multinomial_score_error() < 1e-6);
}

#[test]
fn cox_gradient_matches_differences() {
    assert!(grad::cox_gradient_error() < 1e-6);
}

#[test]
fn score_and_weight_derivatives_match_differences() {
    let (e, w) = grad::score_and_weight_errors();
    assert!(e < 1e-6, "scores: {e:.2e}");
    assert!(w < 1e-6, "weights: {w:.2e}");
}

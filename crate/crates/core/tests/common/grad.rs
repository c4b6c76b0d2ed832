//! Finite-difference checks of the analytic derivatives, each reporting the
//! worst relative error over 10 random points.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::logit_dataset;
use pseudoweight::propensity::{fit_propensity, propensity_gradients, scores_for, unit_log_likelihood, DesignSpec, PropensityFit};
use pseudoweight::survival::partial_likelihood;
use pseudoweight::weighting::{scheme_from_scores, weight_gradient, SchemeKind};

const H: f64 = 1e-6;
const POINTS: u64 = 10;

fn norm_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// The fit with coefficients replaced and scores recomputed.
fn at_gamma(fit: &PropensityFit, flat: &[f64]) -> PropensityFit {
    let j = fit.n_treatments();
    let q = fit.x.ncols();
    let mut out = fit.clone();
    out.gamma = DMatrix::from_row_slice(j - 1, q, flat);
    for i in 0..fit.x.nrows() {
        let row: Vec<f64> = fit.x.row(i).iter().cloned().collect();
        let e = scores_for(&row, flat, j);
        for a in 0..j {
            out.scores[(i, a)] = e[a];
        }
    }
    out
}

fn random_gamma(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

/// Per-unit multinomial score at the MLE of 10 random datasets.
pub fn multinomial_score_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let data = logit_dataset(150, 3, point, true);
        let fit = fit_propensity(&data, &DesignSpec::default()).unwrap();
        let i = rng.random_range(0..data.len());
        let row: Vec<f64> = fit.x.row(i).iter().cloned().collect();
        let g = fit.gamma_flat();
        let arm = data.arms()[i];
        let fd: Vec<f64> = (0..g.len())
            .map(|c| {
                let (mut up, mut dn) = (g.clone(), g.clone());
                up[c] += H;
                dn[c] -= H;
                (unit_log_likelihood(&row, &up, 3, arm) - unit_log_likelihood(&row, &dn, 3, arm)) / (2.0 * H)
            })
            .collect();
        let analytic: Vec<f64> = fit.score_contributions.row(i).iter().cloned().collect();
        worst = worst.max(norm_rel(&analytic, &fd));
    }
    worst
}

/// Cox log partial likelihood gradient at random coefficients, with and
/// without case weights.
pub fn cox_gradient_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for point in 0..POINTS {
        let data = logit_dataset(120, 3, 50 + point, true);
        let x = data.covariate_matrix();
        let (times, events) = (data.times(), data.events());
        let beta = random_gamma(&mut rng, 2);
        let weights: Vec<f64> = (0..120).map(|_| 0.5 + rng.random::<f64>()).collect();
        for w in [None, Some(weights.as_slice())] {
            let pl = partial_likelihood(&times, &events, &x, w, &beta);
            let fd: Vec<f64> = (0..2)
                .map(|c| {
                    let (mut up, mut dn) = (beta.clone(), beta.clone());
                    up[c] += H;
                    dn[c] -= H;
                    (partial_likelihood(&times, &events, &x, w, &up).value - partial_likelihood(&times, &events, &x, w, &dn).value)
                        / (2.0 * H)
                })
                .collect();
            worst = worst.max(norm_rel(pl.gradient.as_slice(), &fd));
        }
    }
    worst
}

/// `(∂e/∂γ, ∂w/∂γ)` errors at random coefficients; the weight error covers
/// IPW, overlap and treated-group tilting.
pub fn score_and_weight_errors() -> (f64, f64) {
    let data = logit_dataset(200, 3, 99, true);
    let fit = fit_propensity(&data, &DesignSpec::default()).unwrap();
    let d = fit.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kinds = [SchemeKind::Ipw, SchemeKind::Overlap, SchemeKind::Treated { group: 2 }];
    let (mut worst_e, mut worst_w): (f64, f64) = (0.0, 0.0);
    for _ in 0..POINTS {
        let g = random_gamma(&mut rng, d);
        let here = at_gamma(&fit, &g);
        let i = rng.random_range(0..data.len());
        let perturbed = |c: usize, s: f64| {
            let mut v = g.clone();
            v[c] += s;
            at_gamma(&fit, &v)
        };
        let de = propensity_gradients(&here, i);
        let mut fd_e = Vec::new();
        let mut an_e = Vec::new();
        for c in 0..d {
            let (up, dn) = (perturbed(c, H), perturbed(c, -H));
            for a in 0..3 {
                fd_e.push((up.scores[(i, a)] - dn.scores[(i, a)]) / (2.0 * H));
                an_e.push(de[(a, c)]);
            }
        }
        worst_e = worst_e.max(norm_rel(&an_e, &fd_e));

        for kind in kinds {
            let dw = weight_gradient(&here, kind, i);
            let mut fd_w = Vec::new();
            let mut an_w = Vec::new();
            for c in 0..d {
                let up = scheme_from_scores(&perturbed(c, H).scores, kind).unwrap();
                let dn = scheme_from_scores(&perturbed(c, -H).scores, kind).unwrap();
                for a in 0..3 {
                    fd_w.push((up.weights[(i, a)] - dn.weights[(i, a)]) / (2.0 * H));
                    an_w.push(dw[(a, c)]);
                }
            }
            worst_w = worst_w.max(norm_rel(&an_w, &fd_w));
        }
    }
    (worst_e, worst_w)
}

//! True estimands by Monte Carlo integration of analytic conditional means
//! over the covariate law.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, gamma_lr};

use super::generate::{gen_covariates, Covariates, OutcomeModel, Overlap, SimParameters};
use crate::inference::replicate_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EstimandKind {
    /// Survival probability difference at `t`.
    Spce,
    /// Restricted mean difference up to `t`.
    Race,
    /// Mean survival difference; estimated as RACE at the last follow-up.
    Asce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimand {
    pub kind: EstimandKind,
    /// Ignored for ASCE.
    #[serde(default = "default_horizon")]
    pub t: f64,
}

fn default_horizon() -> f64 {
    60.0
}

impl Estimand {
    pub fn label(&self) -> String {
        match self.kind {
            EstimandKind::Spce => format!("SPCE({})", self.t),
            EstimandKind::Race => format!("RACE({})", self.t),
            EstimandKind::Asce => "ASCE".into(),
        }
    }
}

/// Target population through the tilting function `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Combined,
    Overlap,
    Treated { group: usize },
    /// Units whose true scores lie within `[lo, hi]`.
    Trimmed { lo: f64, hi: f64 },
}

impl Target {
    pub fn tilt(&self, e: &[f64; 3]) -> f64 {
        match *self {
            Target::Combined => 1.0,
            Target::Overlap => 1.0 / e.iter().map(|v| 1.0 / v).sum::<f64>(),
            Target::Treated { group } => e[group - 1],
            Target::Trimmed { lo, hi } => {
                let max = e.iter().cloned().fold(0.0, f64::max);
                let min = e.iter().cloned().fold(1.0, f64::min);
                (max <= hi && min >= lo) as u8 as f64
            }
        }
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `E{ν(T(z); t) | X = x}` under the outcome model; `t = ∞` gives the mean.
pub fn conditional_mean(params: &SimParameters, model: OutcomeModel, x: &Covariates, z: usize, kind: EstimandKind, t: f64) -> f64 {
    match model {
        OutcomeModel::WeibullPh => {
            let c = params.eta * params.weibull_lp(x, z).exp();
            let nu = params.nu;
            match kind {
                EstimandKind::Spce => (-c * t.powf(nu)).exp(),
                EstimandKind::Race => c.powf(-1.0 / nu) * gamma(1.0 + 1.0 / nu) * gamma_lr(1.0 / nu, c * t.powf(nu)),
                EstimandKind::Asce => c.powf(-1.0 / nu) * gamma(1.0 + 1.0 / nu),
            }
        }
        OutcomeModel::LogNormalAft => {
            let mu = params.aft_location(x, z);
            let s2 = params.aft_variance;
            let s = s2.sqrt();
            match kind {
                EstimandKind::Spce => 1.0 - normal_cdf((t.ln() - mu) / s),
                EstimandKind::Race => {
                    (mu + s2 / 2.0).exp() * normal_cdf((t.ln() - mu - s2) / s) + t * (1.0 - normal_cdf((t.ln() - mu) / s))
                }
                EstimandKind::Asce => (mu + s2 / 2.0).exp(),
            }
        }
    }
}

/// One requested truth: estimand, target population and 1-based pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRequest {
    pub estimand: Estimand,
    pub target: Target,
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    /// Value over `2 · draws` covariate draws.
    pub value: f64,
    /// Change from the first `draws` draws to all `2 · draws`.
    pub gap: f64,
}

const CHUNK: usize = 1 << 15;
const TRUTH_STREAM: u64 = 1 << 62;

/// Evaluates every request on one shared set of covariate draws.
pub fn true_estimands(
    params: &SimParameters,
    model: OutcomeModel,
    overlap: Overlap,
    requests: &[TruthRequest],
    draws: usize,
    seed: u64,
) -> Vec<TruthEstimate> {
    let total = 2 * draws.max(1);
    let chunks = total.div_ceil(CHUNK);
    // per chunk: (numerator, denominator) per request, split at `draws`
    let sums: Vec<Vec<[f64; 4]>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(seed, TRUTH_STREAM + k as u64);
            let start = k * CHUNK;
            let len = CHUNK.min(total - start);
            let xs = gen_covariates(len, params, &mut rng);
            let mut acc = vec![[0.0; 4]; requests.len()];
            for (off, x) in xs.iter().enumerate() {
                let first = start + off < draws;
                let e = params.propensity(x, overlap);
                for (r, req) in requests.iter().enumerate() {
                    let h = req.target.tilt(&e);
                    if h == 0.0 {
                        continue;
                    }
                    let (a, b) = req.pair;
                    let t = req.estimand.t;
                    let kind = req.estimand.kind;
                    let diff = conditional_mean(params, model, x, a, kind, t) - conditional_mean(params, model, x, b, kind, t);
                    acc[r][0] += h * diff;
                    acc[r][1] += h;
                    if first {
                        acc[r][2] += h * diff;
                        acc[r][3] += h;
                    }
                }
            }
            acc
        })
        .collect();
    (0..requests.len())
        .map(|r| {
            let mut s = [0.0; 4];
            for chunk in &sums {
                for c in 0..4 {
                    s[c] += chunk[r][c];
                }
            }
            let value = if s[1] > 0.0 { s[0] / s[1] } else { 0.0 };
            let half = if s[3] > 0.0 { s[2] / s[3] } else { 0.0 };
            TruthEstimate {
                value,
                gap: (value - half).abs(),
            }
        })
        .collect()
}

/// Single-request convenience wrapper.
pub fn true_estimand(
    params: &SimParameters,
    model: OutcomeModel,
    overlap: Overlap,
    request: TruthRequest,
    draws: usize,
    seed: u64,
) -> TruthEstimate {
    true_estimands(params, model, overlap, &[request], draws, seed)[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weibull_rmst_matches_quadrature() {
        let p = SimParameters::default();
        let x = [0.3, -0.2, 1.0, 0.0];
        let t = 60.0;
        let n = 200_000;
        let h = t / n as f64;
        let quad: f64 = (0..n)
            .map(|k| conditional_mean(&p, OutcomeModel::WeibullPh, &x, 2, EstimandKind::Spce, (k as f64 + 0.5) * h) * h)
            .sum();
        assert_abs_diff_eq!(conditional_mean(&p, OutcomeModel::WeibullPh, &x, 2, EstimandKind::Race, t), quad, epsilon = 1e-6);
    }

    #[test]
    fn lognormal_rmst_matches_quadrature() {
        let p = SimParameters::default();
        let x = [0.1, 0.4, 0.0, 1.0];
        let t = 60.0;
        let n = 200_000;
        let h = t / n as f64;
        let quad: f64 = (0..n)
            .map(|k| conditional_mean(&p, OutcomeModel::LogNormalAft, &x, 1, EstimandKind::Spce, (k as f64 + 0.5) * h) * h)
            .sum();
        let exact = conditional_mean(&p, OutcomeModel::LogNormalAft, &x, 1, EstimandKind::Race, t);
        assert_abs_diff_eq!(exact, quad, epsilon = 1e-6);
    }

    #[test]
    fn survival_effect_vanishes_at_origin() {
        let p = SimParameters::default();
        for model in [OutcomeModel::WeibullPh, OutcomeModel::LogNormalAft] {
            let r = TruthRequest {
                estimand: Estimand {
                    kind: EstimandKind::Spce,
                    t: 1e-9,
                },
                target: Target::Combined,
                pair: (2, 1),
            };
            assert!(true_estimand(&p, model, Overlap::Good, r, 5000, 1).value.abs() < 1e-9);
        }
    }

    #[test]
    fn treatment_worsens_survival() {
        let p = SimParameters::default();
        let r = TruthRequest {
            estimand: Estimand {
                kind: EstimandKind::Race,
                t: 60.0,
            },
            target: Target::Combined,
            pair: (2, 1),
        };
        assert!(true_estimand(&p, OutcomeModel::WeibullPh, Overlap::Good, r, 20_000, 3).value < 0.0);
    }

    #[test]
    fn trimmed_target_is_an_indicator() {
        assert_eq!(Target::Trimmed { lo: 0.03, hi: 0.97 }.tilt(&[0.98, 0.01, 0.01]), 0.0);
        assert_eq!(Target::Trimmed { lo: 0.03, hi: 0.97 }.tilt(&[0.5, 0.25, 0.25]), 1.0);
    }
}

//! Data-generating processes: covariates, multinomial treatment, Weibull PH
//! or log-normal AFT outcomes, and uniform or Weibull PH censoring.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ObservedUnit};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeModel {
    /// Model A: Weibull proportional hazards.
    #[serde(rename = "A", alias = "weibull_ph")]
    WeibullPh,
    /// Model B: log-normal accelerated failure time.
    #[serde(rename = "B", alias = "lognormal_aft")]
    LogNormalAft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Censoring {
    /// `C ~ Unif(0, uniform_max)`.
    Independent,
    /// Weibull PH in the covariates.
    #[serde(alias = "dependent")]
    CovariateDependent,
    /// Every failure observed.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Good,
    Poor,
}

/// Generator constants. Defaults are the published design values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParameters {
    pub beta3_good: [f64; 5],
    pub beta3_poor: [f64; 5],
    /// `β_2 = multiplier · β_3`.
    pub beta2_multiplier: f64,
    pub eta: f64,
    pub nu: f64,
    /// Outcome coefficients on `(1, X)`.
    pub alpha: [f64; 5],
    /// `(γ_2, γ_3)`.
    pub gamma: [f64; 2],
    pub aft_location: f64,
    pub aft_variance: f64,
    pub uniform_max: f64,
    pub eta_c: f64,
    pub nu_c: f64,
    /// Censoring coefficients on `X`.
    pub alpha_c: [f64; 4],
    pub x_variance: f64,
    pub x_correlation: f64,
}

impl Default for SimParameters {
    fn default() -> Self {
        Self {
            beta3_good: [-0.4, 0.85, 0.9, 0.45, -0.25],
            beta3_poor: [1.2, 1.5, 1.0, -1.5, -1.0],
            beta2_multiplier: 0.2,
            eta: 1e-4,
            nu: 3.0,
            alpha: [0.0, 2.0, 1.5, -1.0, 1.0],
            gamma: [1.0, 1.0],
            aft_location: 3.5,
            aft_variance: 0.64,
            uniform_max: 115.0,
            eta_c: 1e-4,
            nu_c: 2.7,
            alpha_c: [1.0, 0.5, -0.5, 0.5],
            x_variance: 2.0,
            x_correlation: 0.25,
        }
    }
}

pub type Covariates = [f64; 4];

impl SimParameters {
    pub fn beta3(&self, overlap: Overlap) -> [f64; 5] {
        match overlap {
            Overlap::Good => self.beta3_good,
            Overlap::Poor => self.beta3_poor,
        }
    }

    /// True generalized propensity scores.
    pub fn propensity(&self, x: &Covariates, overlap: Overlap) -> [f64; 3] {
        let b3 = self.beta3(overlap);
        let lin = b3[0] + (0..4).map(|c| b3[c + 1] * x[c]).sum::<f64>();
        let eta = [0.0, self.beta2_multiplier * lin, lin];
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e = eta.map(|v| (v - shift).exp());
        let total: f64 = e.iter().sum();
        e.map(|v| v / total)
    }

    /// `X'α` including the intercept coefficient.
    pub fn outcome_index(&self, x: &Covariates) -> f64 {
        self.alpha[0] + (0..4).map(|c| self.alpha[c + 1] * x[c]).sum::<f64>()
    }

    /// Treatment shift `γ_z`, zero for the reference arm (`z` is 1-based).
    pub fn treatment_effect(&self, z: usize) -> f64 {
        match z {
            2 => self.gamma[0],
            3 => self.gamma[1],
            _ => 0.0,
        }
    }

    /// Weibull linear predictor `L = γ_z + X'α`.
    pub fn weibull_lp(&self, x: &Covariates, z: usize) -> f64 {
        self.treatment_effect(z) + self.outcome_index(x)
    }

    /// Log-normal location `μ = location - γ_z - X'α`.
    pub fn aft_location(&self, x: &Covariates, z: usize) -> f64 {
        self.aft_location - self.treatment_effect(z) - self.outcome_index(x)
    }

    pub fn censoring_lp(&self, x: &Covariates) -> f64 {
        (0..4).map(|c| self.alpha_c[c] * x[c]).sum()
    }
}

pub fn gen_covariates(n: usize, params: &SimParameters, rng: &mut impl Rng) -> Vec<Covariates> {
    let sd = params.x_variance.sqrt();
    let rho = params.x_correlation;
    let tail = (1.0 - rho * rho).sqrt();
    (0..n)
        .map(|_| {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let x3 = rng.random_bool(0.5) as u8 as f64;
            let x4 = rng.random_bool(0.4 + 0.2 * x3) as u8 as f64;
            [sd * z1, sd * (rho * z1 + tail * z2), x3, x4]
        })
        .collect()
}

/// Draws a 1-based treatment from the true scores.
pub fn gen_treatment(x: &Covariates, overlap: Overlap, params: &SimParameters, rng: &mut impl Rng) -> usize {
    let e = params.propensity(x, overlap);
    let u: f64 = rng.random();
    if u < e[0] {
        1
    } else if u < e[0] + e[1] {
        2
    } else {
        3
    }
}

/// Model A inverse-CDF draw from a pinned uniform.
pub fn weibull_time(u: f64, lp: f64, eta: f64, nu: f64) -> f64 {
    (-u.ln() / (eta * lp.exp())).powf(1.0 / nu)
}

/// Model B draw from a pinned standard normal.
pub fn lognormal_time(z: f64, mu: f64, variance: f64) -> f64 {
    (mu + variance.sqrt() * z).exp()
}

pub fn gen_outcome(x: &Covariates, z: usize, model: OutcomeModel, params: &SimParameters, rng: &mut impl Rng) -> f64 {
    match model {
        OutcomeModel::WeibullPh => {
            let u: f64 = 1.0 - rng.random::<f64>();
            weibull_time(u, params.weibull_lp(x, z), params.eta, params.nu)
        }
        OutcomeModel::LogNormalAft => {
            let e: f64 = StandardNormal.sample(rng);
            lognormal_time(e, params.aft_location(x, z), params.aft_variance)
        }
    }
}

pub fn gen_censoring(x: &Covariates, mechanism: Censoring, params: &SimParameters, rng: &mut impl Rng) -> f64 {
    match mechanism {
        Censoring::Independent => rng.random::<f64>() * params.uniform_max,
        Censoring::CovariateDependent => {
            let u: f64 = 1.0 - rng.random::<f64>();
            weibull_time(u, params.censoring_lp(x), params.eta_c, params.nu_c)
        }
        Censoring::None => f64::INFINITY,
    }
}

/// A full observed sample.
pub fn gen_dataset(
    n: usize,
    model: OutcomeModel,
    censoring: Censoring,
    overlap: Overlap,
    params: &SimParameters,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let xs = gen_covariates(n, params, rng);
    let mut units = Vec::with_capacity(n);
    for (i, x) in xs.iter().enumerate() {
        let z = gen_treatment(x, overlap, params, rng);
        let t = gen_outcome(x, z, model, params, rng);
        let c = gen_censoring(x, censoring, params, rng);
        units.push(ObservedUnit {
            id: (i + 1).to_string(),
            treatment: z,
            covariates: x.to_vec(),
            time: t.min(c),
            event: t <= c,
        });
    }
    Dataset::new(units, 3, (1..=4).map(|k| format!("x{k}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pinned_draws() {
        let p = SimParameters::default();
        assert_abs_diff_eq!(
            weibull_time(0.5, 0.0, p.eta, p.nu),
            (2f64.ln() / 1e-4).powf(1.0 / 3.0),
            epsilon = 1e-12
        );
        let x = [0.0; 4];
        assert_abs_diff_eq!(lognormal_time(0.0, p.aft_location(&x, 1), p.aft_variance), 3.5f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_scores_are_softmax() {
        let p = SimParameters::default();
        let e = p.propensity(&[0.0; 4], Overlap::Good);
        let logits = [0.0, 0.2 * -0.4, -0.4f64];
        let total: f64 = logits.iter().map(|v| v.exp()).sum();
        for j in 0..3 {
            assert_abs_diff_eq!(e[j], logits[j].exp() / total, epsilon = 1e-15);
        }
        let flat = SimParameters {
            beta3_good: [0.0; 5],
            ..SimParameters::default()
        };
        for v in flat.propensity(&[1.0, -2.0, 1.0, 0.0], Overlap::Good) {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn covariates_are_reproducible() {
        let p = SimParameters::default();
        let a = gen_covariates(50, &p, &mut ChaCha8Rng::seed_from_u64(5));
        let b = gen_covariates(50, &p, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_shape() {
        let p = SimParameters::default();
        let d = gen_dataset(
            300,
            OutcomeModel::WeibullPh,
            Censoring::Independent,
            Overlap::Good,
            &p,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(d.len(), 300);
        assert_eq!(d.n_treatments(), 3);
        assert!(d.events().iter().any(|e| !e));
    }
}

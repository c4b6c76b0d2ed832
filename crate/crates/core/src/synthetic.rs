//! Synthetic prostate-cancer registry sample. Every value is simulated; the
//! covariate list mimics a national cancer registry extract (three treatment
//! options, eleven pre-treatment covariates) so the examples have realistic
//! shape without using real patient data.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::Result;

pub const TREATMENTS: [&str; 3] = ["RP", "EBRT+AD", "EBRT+brachy"];

pub const COVARIATES: [&str; 11] = [
    "age",
    "t_stage",
    "charlson",
    "gleason",
    "psa",
    "year",
    "insured",
    "income",
    "education",
    "race_black",
    "hispanic",
];

/// Administrative end of follow-up, in months.
pub const MAX_FOLLOW_UP: f64 = 115.0;

fn categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Draws `n` synthetic patients. Treatment depends on age, comorbidity,
/// stage, grade and PSA; mortality on age, comorbidity, grade and PSA with
/// a modest treatment effect; censoring is administrative plus uniform
/// loss to follow-up.
pub fn synthetic_registry(n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let z1: f64 = StandardNormal.sample(rng);
        let age = (66.0 + 7.5 * z1).clamp(40.0, 90.0);
        let t_stage = categorical(rng, &[0.55, 0.3, 0.15]) as f64 + 1.0;
        let charlson = categorical(rng, &[0.75, 0.18, 0.07]) as f64;
        let gleason = categorical(rng, &[0.35, 0.45, 0.2]) as f64 + 8.0;
        let z2: f64 = StandardNormal.sample(rng);
        let psa = (2.3 + 0.9 * z2 + 0.2 * (t_stage - 1.0)).exp().min(98.0);
        let year = rng.random_range(2004..=2013) as f64;
        let insured = rng.random_bool(0.93) as u8 as f64;
        let income = categorical(rng, &[0.2, 0.25, 0.25, 0.3]) as f64 + 1.0;
        let education = categorical(rng, &[0.2, 0.25, 0.3, 0.25]) as f64 + 1.0;
        let race_black = rng.random_bool(0.16) as u8 as f64;
        let hispanic = rng.random_bool(0.05) as u8 as f64;

        let a = (age - 66.0) / 7.5;
        let lpsa = psa.ln() - 2.3;
        let eta_ad = -0.3 + 0.9 * a + 0.4 * charlson + 0.35 * (t_stage - 1.0) + 0.3 * (gleason - 8.0) + 0.3 * lpsa
            - 0.05 * (year - 2008.0)
            - 0.3 * insured
            + 0.2 * race_black;
        let eta_brachy = -1.2 + 0.5 * a + 0.15 * charlson + 0.1 * (t_stage - 1.0) + 0.1 * (gleason - 8.0) - 0.1 * lpsa
            + 0.08 * (income - 2.5);
        let e = [1.0, eta_ad.exp(), eta_brachy.exp()];
        let total: f64 = e.iter().sum();
        let z = categorical(rng, &e.map(|v| v / total));

        let lp = 0.6 * a + 0.45 * charlson + 0.3 * (gleason - 8.0) + 0.25 * lpsa + 0.2 * (t_stage - 1.0)
            - 0.15 * (income - 2.5)
            - 0.2 * insured
            + [0.0, 0.35, 0.15][z];
        let u: f64 = 1.0 - rng.random::<f64>();
        let death = (-u.ln() / (4e-4 * lp.exp())).powf(1.0 / 1.3);
        let loss = rng.random::<f64>() * 400.0;
        let admin = MAX_FOLLOW_UP - (year - 2004.0) * 8.0 * rng.random::<f64>();
        let censor = loss.min(admin);
        let covariates = vec![
            age, t_stage, charlson, gleason, psa, year, insured, income, education, race_black, hispanic,
        ];
        rows.push((
            format!("S{:05}", i + 1),
            TREATMENTS[z].to_string(),
            covariates,
            death.min(censor),
            death <= censor,
        ));
    }
    Dataset::from_labelled(rows, COVARIATES.iter().map(|s| s.to_string()).collect())
}

//! Nonparametric bootstrap over units with per-replicate RNG streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const MIN_REPLICATES: usize = 100;
const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// One per estimator output.
    pub std_errors: Vec<f64>,
    pub percentile_ci: Vec<(f64, f64)>,
    /// Successful replicates, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Stream for replicate `b`, independent of evaluation order.
pub fn replicate_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

/// Resampled row indices with every arm present.
pub fn resample_indices(data: &Dataset, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let n = data.len();
    let j = data.n_treatments();
    for _ in 0..MAX_REDRAWS {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut seen = vec![false; j];
        for &r in &rows {
            seen[data.units()[r].arm()] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(rows);
        }
    }
    Err(Error::Invalid(format!(
        "bootstrap resample left a treatment group empty {MAX_REDRAWS} times in a row"
    )))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Refits `estimator` on `b` resamples. Replicates whose estimator fails are
/// counted and left out.
pub fn bootstrap<F>(data: &Dataset, b: usize, seed: u64, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Sync,
{
    if b < MIN_REPLICATES {
        return Err(Error::Invalid(format!("bootstrap needs at least {MIN_REPLICATES} replicates, got {b}")));
    }
    let draws: Vec<Result<Option<Vec<f64>>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = replicate_rng(seed, k as u64);
            let rows = resample_indices(data, &mut rng)?;
            let sample = data.select(&rows)?;
            Ok(estimator(&sample).ok())
        })
        .collect();
    let mut replicates = Vec::with_capacity(b);
    let mut failures = 0;
    for d in draws {
        match d? {
            Some(v) => replicates.push(v),
            None => failures += 1,
        }
    }
    if replicates.len() < 2 {
        return Err(Error::Invalid("bootstrap: fewer than two successful replicates".into()));
    }
    if failures > 0 {
        log::warn!("bootstrap: {failures} of {b} replicates failed and were left out");
    }
    let dim = replicates[0].len();
    let mut std_errors = Vec::with_capacity(dim);
    let mut percentile_ci = Vec::with_capacity(dim);
    for c in 0..dim {
        let mut v: Vec<f64> = replicates.iter().map(|r| r[c]).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        std_errors.push(var.sqrt());
        v.sort_by(f64::total_cmp);
        percentile_ci.push((quantile(&v, 0.025), quantile(&v, 0.975)));
    }
    Ok(BootstrapResult {
        std_errors,
        percentile_ci,
        replicates,
        failures,
    })
}

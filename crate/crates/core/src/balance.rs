//! Weighted covariate balance: maximum pairwise absolute standardized
//! difference (MPASD) of group means, scaled by the pooled within-group SD.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{fmt12, Dataset};
use crate::error::{Error, Result};
use crate::propensity::PropensityFit;
use crate::weighting::WeightScheme;

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Balance under one weighting (or none).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Balance {
    pub label: String,
    /// One entry per column.
    pub mpasd: Vec<f64>,
    /// `means[c][j]`: weighted mean of column `c` in arm `j`.
    pub means: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceTable {
    pub columns: Vec<String>,
    /// `S_p` per column.
    pub pooled_sd: Vec<f64>,
    pub unweighted: Balance,
    pub weighted: Vec<Balance>,
    pub threshold: f64,
}

/// `S_p` with `S_p² = J⁻¹ Σ_j S_{p,j}²` (unweighted, denominator `N_j − 1`).
pub fn pooled_sd(x: &DMatrix<f64>, arms: &[usize], n_treatments: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_treatments];
    for &a in arms {
        counts[a] += 1;
    }
    (0..x.ncols())
        .map(|c| {
            let mut sum = vec![0.0; n_treatments];
            for (i, &a) in arms.iter().enumerate() {
                sum[a] += x[(i, c)];
            }
            let mut ss = vec![0.0; n_treatments];
            for (i, &a) in arms.iter().enumerate() {
                let d = x[(i, c)] - sum[a] / counts[a] as f64;
                ss[a] += d * d;
            }
            let var: f64 = (0..n_treatments)
                .map(|j| if counts[j] > 1 { ss[j] / (counts[j] - 1) as f64 } else { 0.0 })
                .sum::<f64>()
                / n_treatments as f64;
            var.sqrt()
        })
        .collect()
}

fn weighted_balance(
    x: &DMatrix<f64>,
    arms: &[usize],
    n_treatments: usize,
    sd: &[f64],
    scheme: Option<&WeightScheme>,
) -> Result<Balance> {
    let weight = |i: usize| scheme.map_or(1.0, |s| s.own(i, arms[i]));
    let mut total = vec![0.0; n_treatments];
    for i in 0..arms.len() {
        total[arms[i]] += weight(i);
    }
    if let Some(j) = total.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::ZeroWeight(j + 1));
    }
    let mut means = Vec::with_capacity(x.ncols());
    let mut mpasd = Vec::with_capacity(x.ncols());
    for c in 0..x.ncols() {
        let mut m = vec![0.0; n_treatments];
        for (i, &a) in arms.iter().enumerate() {
            m[a] += weight(i) * x[(i, c)];
        }
        for j in 0..n_treatments {
            m[j] /= total[j];
        }
        let mut worst: f64 = 0.0;
        for a in 0..n_treatments {
            for b in a + 1..n_treatments {
                worst = worst.max((m[a] - m[b]).abs() / sd[c]);
            }
        }
        mpasd.push(worst);
        means.push(m);
    }
    Ok(Balance {
        label: scheme.map_or_else(|| "unweighted".into(), |s| s.kind.label()),
        mpasd,
        means,
    })
}

/// Balance of the columns of `x` (rows aligned with `arms`), unweighted and
/// under each scheme.
pub fn balance_table(
    x: &DMatrix<f64>,
    columns: Vec<String>,
    arms: &[usize],
    n_treatments: usize,
    schemes: &[&WeightScheme],
    threshold: f64,
) -> Result<BalanceTable> {
    let sd = pooled_sd(x, arms, n_treatments);
    if let Some(c) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Invalid(format!(
            "covariate `{}` has zero within-group variance in every group",
            columns[c]
        )));
    }
    let unweighted = weighted_balance(x, arms, n_treatments, &sd, None)?;
    let weighted = schemes
        .iter()
        .map(|s| weighted_balance(x, arms, n_treatments, &sd, Some(s)))
        .collect::<Result<_>>()?;
    Ok(BalanceTable {
        columns,
        pooled_sd: sd,
        unweighted,
        weighted,
        threshold,
    })
}

/// Raw-covariate balance; `None` gives the unweighted table alone.
pub fn mpasd(data: &Dataset, scheme: Option<&WeightScheme>) -> Result<BalanceTable> {
    let schemes: Vec<&WeightScheme> = scheme.into_iter().collect();
    balance_table(
        &data.covariate_matrix(),
        data.covariate_names().to_vec(),
        &data.arms(),
        data.n_treatments(),
        &schemes,
        DEFAULT_THRESHOLD,
    )
}

/// Balance on the propensity design columns, intercept excluded.
pub fn design_balance(data: &Dataset, fit: &PropensityFit, schemes: &[&WeightScheme], threshold: f64) -> Result<BalanceTable> {
    let x = fit.x.columns(1, fit.x.ncols() - 1).into_owned();
    balance_table(
        &x,
        fit.design.names()[1..].to_vec(),
        &data.arms(),
        data.n_treatments(),
        schemes,
        threshold,
    )
}

impl BalanceTable {
    pub fn all(&self) -> impl Iterator<Item = &Balance> {
        std::iter::once(&self.unweighted).chain(self.weighted.iter())
    }

    pub fn scheme(&self, label: &str) -> Option<&Balance> {
        self.all().find(|b| b.label == label)
    }

    /// Whether every column is below the threshold under `label`.
    pub fn passes(&self, label: &str) -> Option<bool> {
        self.scheme(label).map(|b| b.mpasd.iter().all(|&v| v < self.threshold))
    }

    /// Long format: one row per column and weighting.
    pub fn write_csv_to<W: std::io::Write>(&self, writer: W, section: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let j = self.unweighted.means.first().map_or(0, |m| m.len());
        let mut header = vec!["section".to_string(), "column".into(), "weighting".into(), "mpasd".into(), "pass".into()];
        header.push("pooled_sd".into());
        header.extend((1..=j).map(|g| format!("mean_{g}")));
        w.write_record(&header)?;
        self.write_rows(&mut w, section)?;
        w.flush()?;
        Ok(())
    }

    fn write_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>, section: &str) -> Result<()> {
        for b in self.all() {
            for (c, name) in self.columns.iter().enumerate() {
                let mut rec = vec![
                    section.to_string(),
                    name.clone(),
                    b.label.clone(),
                    fmt12(b.mpasd[c]),
                    (b.mpasd[c] < self.threshold).to_string(),
                    fmt12(self.pooled_sd[c]),
                ];
                rec.extend(b.means[c].iter().map(|&m| fmt12(m)));
                w.write_record(&rec)?;
            }
        }
        Ok(())
    }
}

/// Writes several tables (e.g. raw and design) to one CSV.
pub fn write_tables_csv(path: impl AsRef<Path>, tables: &[(&str, &BalanceTable)]) -> Result<()> {
    let mut out = Vec::new();
    for (k, (section, table)) in tables.iter().enumerate() {
        let mut buf = Vec::new();
        table.write_csv_to(&mut buf, section)?;
        let text = String::from_utf8(buf).expect("csv is utf-8");
        if k == 0 {
            out.extend_from_slice(text.as_bytes());
        } else {
            out.extend(text.split_once('\n').map_or("", |(_, rest)| rest).as_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

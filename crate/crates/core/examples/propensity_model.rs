//! Multinomial logistic propensity model with spline terms for age and PSA,
//! score summaries, and trimming.

use pseudoweight::data::{load_csv, Schema};
use pseudoweight::propensity::{fit_propensity, trim, DesignSpec, SplineTerm};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ncdb_synthetic.csv");

fn main() -> pseudoweight::Result<()> {
    let data = load_csv(DATA, &Schema::default())?;
    let spec = DesignSpec {
        splines: ["age", "psa"]
            .iter()
            .map(|c| SplineTerm {
                column: c.to_string(),
                knots: 4,
            })
            .collect(),
        ..Default::default()
    };
    let fit = fit_propensity(&data, &spec)?;
    println!(
        "converged {} after {} iterations, log-likelihood {:.2}, {} parameters",
        fit.converged,
        fit.iterations,
        fit.log_likelihood,
        fit.n_params()
    );
    let labels = data.label_map();
    for j in 0..data.n_treatments() {
        let col = fit.scores.column(j);
        println!(
            "e_{} ({:>11}): min {:.3}  mean {:.3}  max {:.3}",
            j + 1,
            labels[j],
            col.min(),
            col.mean(),
            col.max()
        );
    }
    let (kept, log) = trim(&data, &fit, 0.03, 0.97)?;
    println!("trimming to [0.03, 0.97] keeps {} of {} units", kept.len(), data.len());
    println!("first removed ids: {:?}", &log.removed[..log.removed.len().min(5)]);
    Ok(())
}

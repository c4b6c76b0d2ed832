//! MPASD balance of the raw covariates before and after weighting.

use pseudoweight::balance::balance_table;
use pseudoweight::data::{load_csv, Schema};
use pseudoweight::propensity::{fit_propensity, DesignSpec};
use pseudoweight::weighting::{make_scheme, SchemeKind};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ncdb_synthetic.csv");

fn main() -> pseudoweight::Result<()> {
    let data = load_csv(DATA, &Schema::default())?;
    let fit = fit_propensity(&data, &DesignSpec::default())?;
    let ow = make_scheme(&fit, SchemeKind::Overlap)?;
    let ipw = make_scheme(&fit, SchemeKind::Ipw)?;
    let table = balance_table(
        &data.covariate_matrix(),
        data.covariate_names().to_vec(),
        &data.arms(),
        data.n_treatments(),
        &[&ow, &ipw],
        0.1,
    )?;
    println!("{:<12} {:>10} {:>8} {:>8}", "covariate", "unweighted", "OW", "IPW");
    for (c, name) in table.columns.iter().enumerate() {
        println!(
            "{name:<12} {:>10.3} {:>8.3} {:>8.3}",
            table.unweighted.mpasd[c], table.weighted[0].mpasd[c], table.weighted[1].mpasd[c]
        );
    }
    for label in ["unweighted", "OW", "IPW"] {
        println!("{label}: all below {} -> {}", table.threshold, table.passes(label).unwrap());
    }
    Ok(())
}

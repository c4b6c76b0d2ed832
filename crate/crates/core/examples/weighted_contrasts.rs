//! Overlap and IPW contrasts of survival and restricted mean at 60 months,
//! with closed-form standard errors.

use pseudoweight::analysis::{Horizon, PipelineOptions, Prepared, PseudoChoice};
use pseudoweight::data::{load_csv, Schema, Transform};
use pseudoweight::weighting::{all_pairs, SchemeKind};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/ncdb_synthetic.csv");

fn main() -> pseudoweight::Result<()> {
    let data = load_csv(DATA, &Schema::default())?;
    let labels = data.label_map().to_vec();
    let horizons = vec![
        Horizon {
            transform: Transform::Survival,
            t: 60.0,
        },
        Horizon {
            transform: Transform::Restricted,
            t: 60.0,
        },
    ];
    let prep = Prepared::new(data, horizons, PseudoChoice::Jackknife, &PipelineOptions::default())?;
    for kind in [SchemeKind::Overlap, SchemeKind::Ipw, SchemeKind::Treated { group: 1 }] {
        let scheme = prep.scheme(kind)?;
        println!("{}", kind.label());
        for (h, name) in ["SPCE(60)", "RACE(60)"].iter().enumerate() {
            for (a, b) in all_pairs(labels.len()) {
                let (est, var) = prep.contrast(&scheme, h, (a, b))?;
                let se = var.std_error;
                println!(
                    "  {name} {:>11} - {:<11} {est:8.4}  se {se:.4}  95% CI ({:.4}, {:.4})",
                    labels[a - 1],
                    labels[b - 1],
                    est - 1.96 * se,
                    est + 1.96 * se
                );
            }
        }
    }
    Ok(())
}

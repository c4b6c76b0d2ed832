//! Closed-form standard errors and their two reduced variants, set against
//! the bootstrap on one simulated dataset.

use pseudoweight::analysis::{Horizon, PipelineOptions, Prepared, PseudoChoice};
use pseudoweight::data::{Dataset, Transform};
use pseudoweight::inference::bootstrap;
use pseudoweight::sim::{replicate_dataset, SimulationConfig};
use pseudoweight::weighting::SchemeKind;

const KINDS: [SchemeKind; 2] = [SchemeKind::Overlap, SchemeKind::Ipw];

fn prepare(data: &Dataset) -> pseudoweight::Result<Prepared> {
    let h = Horizon {
        transform: Transform::Survival,
        t: 60.0,
    };
    Prepared::new(data.clone(), vec![h], PseudoChoice::Jackknife, &PipelineOptions::default())
}

fn main() -> pseudoweight::Result<()> {
    let config = SimulationConfig::default();
    let (data, seed) = replicate_dataset(&config, 0)?;
    let prep = prepare(&data)?;
    let boot = bootstrap(&data, 500, seed, |d| {
        let p = prepare(d)?;
        KINDS.iter().map(|&k| Ok(p.contrast(&p.scheme(k)?, 0, (2, 3))?.0)).collect()
    })?;
    println!("SPCE(60), treatment 2 vs 3, N = {}", data.len());
    for (k, kind) in KINDS.iter().enumerate() {
        let (est, var) = prep.contrast(&prep.scheme(*kind)?, 0, (2, 3))?;
        let c = var.components;
        println!(
            "{:>4}: estimate {est:.4}  se {:.4}  without Q {:.4}  fixed scores {:.4}  bootstrap {:.4}",
            kind.label(),
            c.full,
            c.no_q,
            c.fixed_gamma,
            boot.std_errors[k]
        );
    }
    Ok(())
}

//! Writes the synthetic registry sample used by the other examples.
//!
//! cargo run --example synthetic_registry -- data/ncdb_synthetic.csv 3000 2024

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pseudoweight::synthetic::synthetic_registry;

fn main() -> pseudoweight::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ncdb_synthetic.csv".into());
    let n: usize = args.next().map_or(3000, |s| s.parse().expect("n"));
    let seed: u64 = args.next().map_or(2024, |s| s.parse().expect("seed"));
    let data = synthetic_registry(n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    data.write_csv(&path)?;
    let deaths = data.events().iter().filter(|&&e| e).count();
    println!("wrote {n} synthetic patients to {path}");
    println!("treatments {:?}, group sizes {:?}", data.label_map(), data.group_sizes());
    println!("deaths {deaths}, last follow-up {:.1} months", data.max_time());
    Ok(())
}

//! Runs the reduced-scale per-layer comparison and prints the mean curves.
//!
//! `cargo run --release --example layerwise [realizations]`

use deepbiht::eval::{layerwise_experiment, ExperimentConfig, BIHT, UNFOLDED};

fn main() -> deepbiht::Result<()> {
    let mut cfg = ExperimentConfig::fast();
    if let Some(r) = std::env::args().nth(1) {
        cfg.realizations = r.parse().expect("realizations must be an integer");
    }
    let result = layerwise_experiment(&cfg)?;
    let net = result.series(UNFOLDED).unwrap_or_default();
    let biht = result.series(BIHT).unwrap_or_default();
    println!("layer  unfolded  biht");
    for (i, (a, b)) in net.iter().zip(biht).enumerate() {
        println!("{:>5}  {a:.4}    {b:.4}", i + 1);
    }
    Ok(())
}

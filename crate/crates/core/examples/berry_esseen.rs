//! Kolmogorov distance of the rescaled walk to its Gaussian limit.

use bhl::effective::AverageOptions;
use bhl::environment::EnvironmentLaw;
use bhl::experiments::{berry_esseen, binomial_ks_oracle, dkw_band, BerryEsseenSetup, DKW_ALPHA};

fn main() -> bhl::error::Result<()> {
    let walks = 20_000;
    let rep = berry_esseen(&BerryEsseenSetup {
        law: EnvironmentLaw::constant(2, 1.0)?,
        ladder: vec![100, 400],
        direction: vec![1.0, 0.0],
        walks,
        environments: 1,
        seed: 3,
        reference: AverageOptions::new(1, 1, 1, 0),
        threshold: None,
    })?;
    for &(n, stat) in &rep.ladder {
        println!("n = {n}: statistic {stat:.4}, exact {:.4}", binomial_ks_oracle(n as u64));
    }
    println!("sampling band at α = {DKW_ALPHA}: {:.4}", dkw_band(walks, DKW_ALPHA));
    Ok(())
}

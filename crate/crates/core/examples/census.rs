//! Count the sites where local corrector functionals are large.

use bhl::effective::EffectiveCoefficients;
use bhl::environment::{EnvBox, Environment, EnvironmentLaw, Observable, WeightLaw};
use bhl::experiments::bad_point_census;

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    let env = Environment::sample(&law, EnvBox::cube(2, 24)?, 5)?;
    // b̄ for this law, estimated once with the `effective` example
    let refs = EffectiveCoefficients::exact(vec![0.5, 0.5], 0.256, 0.256);
    let rep = bad_point_census(&env, 20, 0.4, 0.05, 0.5, &Observable::Const { value: 1.0 }, &refs)?;
    println!("{} of {} sites are bad at c = 0.05 (R₀ = {:.2})", rep.bad, rep.sites, rep.r0);
    for c in [0.05, 0.1, 0.2, 0.5, 1.0] {
        println!("  c = {c}: {}", rep.count_at(c));
    }
    Ok(())
}

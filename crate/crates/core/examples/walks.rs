//! Random walks in a fixed environment: exit times and a Feynman-Kac estimate.

use std::sync::Arc;

use bhl::environment::{EnvBox, Environment, EnvironmentLaw, Observable, WeightLaw};
use bhl::lattice::{LatticeDomain, Radius};
use bhl::rng::Stream;
use bhl::solver::{expected_exit_time, SolveSettings};
use bhl::walk::{feynman_kac_elliptic, run_until_exit, Walker};

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::Uniform { low: 1.0, high: 3.0 })?;
    let env = Environment::sample(&law, EnvBox::cube(2, 40)?, 7)?;

    let mut walker = Walker::new(&env, [0, 0, 0])?;
    let mut s = Stream::new(1, 0);
    for _ in 0..100 {
        walker.step_with(s.uniform())?;
    }
    println!("after {} steps: {:?}", walker.steps(), &walker.site()[..2]);

    let dom = Arc::new(LatticeDomain::ball(Radius::int(10)?, 2)?);
    let mut total = 0u64;
    let walks = 2000;
    for j in 0..walks {
        let (_, steps) = run_until_exit(&env, [0, 0, 0], &dom, &mut Stream::new(2, j))?;
        total += steps;
    }
    let (t, _) = expected_exit_time(&env, dom.clone(), &SolveSettings::default())?;
    println!("mean exit time from B_10: {:.1} sampled, {:.1} solved", total as f64 / walks as f64, t.get(&[0, 0, 0])?);

    let est = feynman_kac_elliptic(
        &env,
        [0, 0, 0],
        &dom,
        |_| 1.0,
        &Observable::Const { value: 1.0 },
        |z| z[0],
        10.0,
        5000,
        3,
    )?;
    println!("Feynman-Kac value at the origin: {:.4} ± {:.4}", est.mean, est.se);
    Ok(())
}

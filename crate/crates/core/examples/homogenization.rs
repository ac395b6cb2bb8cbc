//! Homogenization error ladders for the elliptic and parabolic problems.

use bhl::effective::AverageOptions;
use bhl::environment::{EnvironmentLaw, Observable, WeightLaw};
use bhl::experiments::{homog_error_elliptic, homog_error_parabolic, DataFn, HomogSetup};
use bhl::solver::SolveSettings;

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    let mut setup = HomogSetup {
        law,
        ladder: vec![9, 27],
        f: DataFn::Constant { value: 1.0 },
        g: DataFn::CosineBoundary,
        psi: Observable::Const { value: 1.0 },
        replicas: 2,
        seed: 1,
        reference: AverageOptions::new(20_000, 4, 50, 0),
        spacing: None,
        solver: SolveSettings::default(),
    };
    let rep = homog_error_elliptic(&setup)?;
    println!("elliptic: {:?}", rep.ladder);
    for c in &rep.checks {
        println!("  {} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }

    setup.ladder = vec![5, 9, 17];
    setup.g = DataFn::Constant { value: 0.0 };
    let rep = homog_error_parabolic(&setup)?;
    println!("parabolic: {:?}", rep.ladder);
    for c in &rep.checks {
        println!("  {} {}", if c.passed { "pass" } else { "FAIL" }, c.name);
    }
    Ok(())
}

//! Effective coefficients from walk averages, and the continuum equation they define.

use bhl::effective::{
    default_spacing, estimate_effective, solve_effective_elliptic, AverageOptions, EffectiveEquation,
};
use bhl::environment::{EnvironmentLaw, Observable, WeightLaw};
use bhl::solver::SolveSettings;

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    let c = estimate_effective(&law, &Observable::Const { value: 1.0 }, &AverageOptions::new(20_000, 4, 50, 1))?;
    println!("ā = {:.4?}, standard errors {:?}", c.abar, c.se.abar);
    println!("b̄ = {:.4} ± {:.1e}, trace defect {:.1e}", c.bbar, c.se.bbar, c.trace_defect());

    let eq = EffectiveEquation::for_lattice(&c)?;
    let sol = solve_effective_elliptic(&eq, |_| 1.0, |z| z[0], default_spacing(2), &SolveSettings::default())?;
    for z in [[0.0, 0.0], [0.5, 0.0], [0.0, 0.7]] {
        println!("ū({z:?}) = {:.4}", sol.value(&z)?.value);
    }
    Ok(())
}

//! Elliptic, corrector and parabolic solves on lattice domains.

use std::sync::Arc;

use bhl::environment::{EnvBox, Environment, EnvironmentLaw, Observable, WeightLaw};
use bhl::lattice::{norm_sq, LatticeDomain, Radius, SpaceTimeDomain};
use bhl::solver::{
    solve_corrector, solve_elliptic, solve_elliptic_direct, solve_parabolic, EllipticProblem, ParabolicProblem,
    SolveSettings,
};

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    let env = Environment::sample(&law, EnvBox::cube(2, 21)?, 3)?;

    let dom = Arc::new(LatticeDomain::ball(Radius::int(12)?, 2)?);
    let problem = EllipticProblem::from_fns(&env, dom.clone(), |_| -1e-2, |x| (norm_sq(x) as f64).sqrt() / 12.0)?;
    let (u, rep) = solve_elliptic(&problem, &SolveSettings::default())?;
    let direct = solve_elliptic_direct(&problem)?;
    let gap = u.values().iter().zip(direct.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("elliptic: {} sweeps, residual {:.1e}, distance to dense LU {:.1e}", rep.iterations, rep.residual, gap);

    let cube = Arc::new(LatticeDomain::cube(41, 2)?);
    let (phi, rep) = solve_corrector(&env, cube, &Observable::CoordRatio { axis: 0 }, 0.5, &SolveSettings::default())?;
    println!(
        "corrector on a cube of side 41: max |φ|/R² = {:.3e} ({} sweeps)",
        phi.max_abs_interior() / 41f64.powi(2),
        rep.iterations
    );

    let cyl = Arc::new(SpaceTimeDomain::cylinder(Radius::int(6)?, 2)?);
    let problem = ParabolicProblem::from_fns(&env, cyl, |_, _| -1.0, |x, _| x[0] as f64)?;
    let (v, rep) = solve_parabolic(&problem)?;
    println!("parabolic: u(0,0) = {:.3}, residual {:.1e}", v.get(&[0, 0, 0], 0)?, rep.residual);
    Ok(())
}

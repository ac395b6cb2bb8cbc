//! Subdifferential cells and the ABP-type inequalities built on them.

use std::sync::Arc;

use bhl::convexity::{abp_check, containment_check, parabolic_abp_check, subdifferential};
use bhl::environment::{EnvBox, Environment, EnvironmentLaw, WeightLaw};
use bhl::lattice::{norm_sq, LatticeDomain, LatticeField, Radius, SpaceTimeDomain, SpaceTimeField};

fn main() -> bhl::error::Result<()> {
    let dom = Arc::new(LatticeDomain::ball(Radius::int(4)?, 2)?);
    let bowl = LatticeField::from_fn(dom.clone(), |x| 0.5 * norm_sq(x) as f64 + 0.3 * (x[0] * x[1]) as f64 % 1.0);

    let cell = subdifferential(&bowl, &[0, 0, 0])?;
    println!("cell at the origin: area {:.4}, {} vertices", cell.volume, cell.vertices.len());

    let rep = abp_check(&bowl)?;
    println!("elliptic ABP: defect {:.3} <= bound {:.3}: {}", rep.m, rep.rhs, rep.holds);

    let law = EnvironmentLaw::new(2, WeightLaw::Uniform { low: 1.0, high: 2.0 })?;
    let env = Environment::sample(&law, EnvBox::cube(2, 5)?, 9)?;
    let ok = dom.interior().iter().map(|x| containment_check(&env, &bowl, x)).collect::<Result<Vec<_>, _>>()?;
    println!("containment holds at {}/{} sites", ok.iter().filter(|c| c.holds).count(), ok.len());

    let cyl = Arc::new(SpaceTimeDomain::cylinder(Radius::int(3)?, 1)?);
    let field = SpaceTimeField::from_fn(cyl, |x, n| (x[0] * x[0]) as f64 - 0.5 * n as f64);
    let rep = parabolic_abp_check(&field)?;
    println!("parabolic ABP: defect {:.3} <= bound {:.3}: {}", rep.m, rep.rhs, rep.holds);
    Ok(())
}

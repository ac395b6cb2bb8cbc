//! Sample an environment, look at its weights and evaluate observables.

use bhl::environment::{EnvBox, Environment, EnvironmentLaw, Observable, WeightLaw};

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    println!("ellipticity floor κ = {:.4}", law.kappa());

    let env = Environment::sample(&law, EnvBox::cube(2, 3)?, 42)?;
    for x in [[0, 0, 0], [1, 0, 0], [0, -2, 0], [3, 3, 0], [-1, 2, 0]] {
        let w = env.weights(&x)?;
        let p = env.transition_probabilities(&x)?;
        println!("ω({:?}) = {:?}, jump probabilities {:.3?}", &x[..2], w, p);
    }

    let psi = Observable::PsiOverTrace { inner: Box::new(Observable::CoordRatio { axis: 0 }) };
    println!("ψ at the origin: {:.4}", psi.eval_at(&env, &[0, 0, 0])?);
    println!("sup of ψ over the law: {:.4}", psi.sup_norm(&law));

    // same law, box and seed: the same field
    let again = Environment::sample(&law, EnvBox::cube(2, 3)?, 42)?;
    assert_eq!(env.weights(&[2, 1, 0])?, again.weights(&[2, 1, 0])?);
    Ok(())
}

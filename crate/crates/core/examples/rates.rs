//! Corrector growth, ergodic averages and μ̂ decay on short ladders.

use bhl::effective::AverageOptions;
use bhl::environment::{EnvironmentLaw, Observable, WeightLaw};
use bhl::experiments::{
    corrector_sublinearity, ergodicity_rate, mu_decay, CorrectorSetup, ErgodicitySetup, ExperimentReport, MuDecaySetup,
};
use bhl::solver::SolveSettings;

fn show(rep: &ExperimentReport) {
    let values: Vec<String> = rep.ladder.iter().map(|(x, y)| format!("{x}: {y:.3e}")).collect();
    println!("{}  {}", rep.kind, values.join(", "));
}

fn main() -> bhl::error::Result<()> {
    let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 })?;
    let psi = Observable::CoordRatio { axis: 0 };
    let reference = AverageOptions::new(20_000, 4, 50, 0);

    show(&corrector_sublinearity(&CorrectorSetup {
        law: law.clone(),
        ladder: vec![9, 27],
        psi: psi.clone(),
        replicas: 4,
        seed: 1,
        reference,
        solver: SolveSettings::default(),
    })?);
    show(&ergodicity_rate(&ErgodicitySetup {
        law: law.clone(),
        ladder: vec![100, 1000],
        psi: psi.clone(),
        replicas: 4,
        walks: 200,
        seed: 1,
        reference,
    })?);
    show(&mu_decay(&MuDecaySetup {
        law,
        ladder: vec![1, 2],
        offsets: vec![0.5],
        psi,
        replicas: 4,
        seed: 1,
        reference,
        solver: SolveSettings::default(),
    })?);
    Ok(())
}

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::homog::replica_env;
use super::{finish_ladder, finish_vanishing, fmt, median, ExperimentReport, Table};
use crate::effective::{reference_mean, AverageOptions};
use crate::environment::{EnvironmentLaw, Observable};
use crate::error::{config_err, Result};
use crate::lattice::LatticeDomain;
use crate::rng::{derive_seed, tag};
use crate::solver::{solve_corrector, SolveSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSetup {
    pub law: EnvironmentLaw,
    /// Cube sides.
    pub ladder: Vec<u32>,
    pub psi: Observable,
    pub replicas: usize,
    pub seed: u64,
    /// Run for `E_Q ψ`; its horizon must be at least ten times the largest `R²`.
    pub reference: AverageOptions,
    pub solver: SolveSettings,
}

impl CorrectorSetup {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < 2 || self.ladder.windows(2).any(|w| w[1] <= w[0]) || self.ladder[0] == 0 {
            return Err(config_err("ladder must hold at least two increasing positive sides"));
        }
        if self.replicas == 0 {
            return Err(config_err("replicas must be positive"));
        }
        self.psi.validate(self.law.dim())?;
        let rmax = *self.ladder.last().unwrap() as u64;
        if !self.trivial() && self.reference.horizon < 10 * rmax * rmax {
            return Err(config_err(format!(
                "reference horizon {} is below ten times the largest R² ({})",
                self.reference.horizon,
                10 * rmax * rmax
            )));
        }
        Ok(())
    }

    /// `ψ_ω` is a single number for every environment of the law.
    fn trivial(&self) -> bool {
        self.law.is_constant() || self.psi.is_constant_on(&self.law)
    }
}

// A residual δ moves φ by at most δ max E[τ] ≤ δ side², so 1e-9 is far
// below the statistic and clear of the rounding floor at large sides.
fn cell_settings(base: &SolveSettings) -> SolveSettings {
    if base.abs_tol.is_some() {
        return *base;
    }
    SolveSettings { abs_tol: Some(1e-9), ..*base }
}

/// `max_{□_R} |φ| / R²` for the corrector `L_ω φ = ψ - E_Q ψ` with zero
/// boundary values on the cube of side `R`, medians over replicas, and the
/// fitted power of `R`.
pub fn corrector_sublinearity(setup: &CorrectorSetup) -> Result<ExperimentReport> {
    setup.validate()?;
    let d = setup.law.dim();
    let (mean, mean_se) = if setup.trivial() {
        (setup.psi.eval(&setup.law.support_points(2)[0]), 0.0)
    } else {
        let opts = AverageOptions { seed: derive_seed(setup.seed, &[tag::REFERENCE]), ..setup.reference };
        let m = reference_mean(&setup.law, &setup.psi, &opts)?;
        (m.mean, m.se)
    };
    let jobs: Vec<(u32, usize)> = setup.ladder.iter().flat_map(|&r| (0..setup.replicas).map(move |k| (r, k))).collect();
    let cells: Vec<Result<(f64, usize)>> = jobs
        .par_iter()
        .map(|&(side, replica)| {
            let env = replica_env(&setup.law, side / 2 + 1, setup.seed, replica)?;
            let dom = Arc::new(LatticeDomain::cube(side as u64, d)?);
            let (phi, rep) = solve_corrector(&env, dom, &setup.psi, mean, &cell_settings(&setup.solver))?;
            Ok((phi.max_abs_interior() / (side as f64).powi(2), rep.iterations))
        })
        .collect();
    let mut table = Table::new(&["R", "replica", "statistic", "iterations", "status"]);
    let mut warnings = Vec::new();
    let mut ladder = Vec::new();
    for &r in &setup.ladder {
        let mut stats = Vec::new();
        for (&(side, replica), cell) in jobs.iter().zip(&cells).filter(|(j, _)| j.0 == r) {
            match cell {
                Ok((s, it)) => {
                    stats.push(*s);
                    table.push(vec![side.to_string(), replica.to_string(), fmt(*s), it.to_string(), "ok".into()]);
                }
                Err(e) => {
                    warnings.push(format!("R = {side}, replica {replica}: {e}"));
                    table.push(vec![side.to_string(), replica.to_string(), "".into(), "".into(), "failed".into()]);
                }
            }
        }
        if !stats.is_empty() {
            ladder.push((r as f64, median(&stats)));
        }
    }
    let extra = serde_json::json!({ "reference_mean": mean, "reference_se": mean_se, "trivial_data": setup.trivial() });
    if setup.trivial() {
        return Ok(finish_vanishing("corrector", table, ladder, setup.ladder.len(), 0.0, warnings, extra));
    }
    Ok(finish_ladder("corrector", table, ladder, false, warnings, extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::WeightLaw;

    fn setup(law: EnvironmentLaw, psi: Observable) -> CorrectorSetup {
        CorrectorSetup {
            law,
            ladder: vec![3, 9, 27],
            psi,
            replicas: 3,
            seed: 11,
            reference: AverageOptions::new(8000, 2, 40, 0),
            solver: SolveSettings::default(),
        }
    }

    #[test]
    fn constant_psi_gives_zero() {
        let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 }).unwrap();
        let rep = corrector_sublinearity(&setup(law, Observable::Const { value: 0.7 })).unwrap();
        assert!(rep.passed(), "{:?}", rep.checks);
        assert!(rep.ladder.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn constant_environment_gives_zero() {
        let law = EnvironmentLaw::constant(2, 2.0).unwrap();
        let rep = corrector_sublinearity(&setup(law, Observable::CoordRatio { axis: 0 })).unwrap();
        assert!(rep.passed(), "{:?}", rep.checks);
    }

    #[test]
    fn short_reference_is_rejected() {
        let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 }).unwrap();
        let mut s = setup(law, Observable::CoordRatio { axis: 0 });
        s.reference.horizon = 100;
        assert!(corrector_sublinearity(&s).unwrap_err().to_string().contains("reference horizon"));
    }

    #[test]
    fn table_has_a_row_per_cell() {
        let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 }).unwrap();
        let mut s = setup(law, Observable::CoordRatio { axis: 0 });
        s.ladder = vec![3, 5, 7];
        s.reference = AverageOptions::new(500, 2, 20, 0);
        let rep = corrector_sublinearity(&s).unwrap();
        assert_eq!(rep.table.rows.len(), 9);
        assert_eq!(rep.ladder.len(), 3);
        assert!(rep.ladder.iter().all(|p| p.1 > 0.0));
    }
}

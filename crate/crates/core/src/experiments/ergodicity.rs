use serde::{Deserialize, Serialize};

use super::{finish_ladder, finish_vanishing, fmt, median, ExperimentReport, Table};
use crate::effective::{reference_mean, replica_environment, AverageOptions};
use crate::environment::{EnvironmentLaw, Observable};
use crate::error::{config_err, Result};
use crate::lattice::ORIGIN;
use crate::rng::{derive_seed, tag};
use crate::walk::{run_until, sample_walks, FixedHorizon, PathFunctionalEstimate, RunningMean};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicitySetup {
    pub law: EnvironmentLaw,
    /// Horizons `n`.
    pub ladder: Vec<u64>,
    pub psi: Observable,
    pub replicas: usize,
    pub walks: usize,
    pub seed: u64,
    /// Run for `E_Q ψ`; its horizon must be at least ten times the largest `n`.
    pub reference: AverageOptions,
}

impl ErgodicitySetup {
    pub fn validate(&self) -> Result<()> {
        if self.ladder.len() < 2 || self.ladder.windows(2).any(|w| w[1] <= w[0]) || self.ladder[0] == 0 {
            return Err(config_err("ladder must hold at least two increasing positive horizons"));
        }
        if self.replicas == 0 || self.walks == 0 {
            return Err(config_err("replicas and walks must be positive"));
        }
        self.psi.validate(self.law.dim())?;
        let nmax = *self.ladder.last().unwrap();
        if !self.trivial() && self.reference.horizon < 10 * nmax {
            return Err(config_err(format!(
                "reference horizon {} is below ten times the largest n ({})",
                self.reference.horizon,
                10 * nmax
            )));
        }
        Ok(())
    }

    fn trivial(&self) -> bool {
        self.law.is_constant() || self.psi.is_constant_on(&self.law)
    }
}

/// `|(1/n) Σ_{i<n} E_ω[ψ(ω̄^i)] - E_Q ψ|` per `(n, replica)`. The quenched
/// expectation is an average over `walks` walks from the origin; one pass to
/// the largest `n` records every horizon of the ladder.
pub fn ergodicity_rate(setup: &ErgodicitySetup) -> Result<ExperimentReport> {
    setup.validate()?;
    let (mean, mean_se) = if setup.trivial() {
        (setup.psi.eval(&setup.law.support_points(2)[0]), 0.0)
    } else {
        let opts = AverageOptions { seed: derive_seed(setup.seed, &[tag::REFERENCE]), ..setup.reference };
        let m = reference_mean(&setup.law, &setup.psi, &opts)?;
        (m.mean, m.se)
    };
    let nmax = *setup.ladder.last().unwrap();
    // no burn-in: the statistic starts at the origin
    let opts = AverageOptions { burn_in: 0.0, ..AverageOptions::new(nmax, setup.replicas, setup.walks, setup.seed) };
    let k = setup.ladder.len();
    let mut dev = vec![vec![0.0; setup.replicas]; k];
    let mut table = Table::new(&["n", "replica", "deviation", "se"]);
    let mut rows = Vec::new();
    for r in 0..setup.replicas {
        let env = replica_environment(&setup.law, &opts, r)?;
        let key = derive_seed(setup.seed, &[tag::WALK, r as u64]);
        let per_walk = sample_walks(key, setup.walks, |_, s| {
            let mut acc = RunningMean::default();
            let mut snap = Vec::with_capacity(k);
            let mut next = 0;
            run_until(&env, ORIGIN, &FixedHorizon(nmax), s, |_, w, i| {
                acc.push(setup.psi.eval(w));
                if next < k && i + 1 == setup.ladder[next] {
                    snap.push(acc.mean);
                    next += 1;
                }
            })?;
            Ok(snap)
        })?;
        for j in 0..k {
            let col: Vec<f64> = per_walk.iter().map(|v| v[j]).collect();
            let est = PathFunctionalEstimate::from_samples(&col);
            dev[j][r] = (est.mean - mean).abs();
            rows.push((j, r, dev[j][r], est.se));
        }
    }
    rows.sort_by_key(|&(j, r, _, _)| (j, r));
    for (j, r, v, se) in rows {
        table.push(vec![setup.ladder[j].to_string(), r.to_string(), fmt(v), fmt(se)]);
    }
    let ladder: Vec<(f64, f64)> = setup.ladder.iter().zip(&dev).map(|(&n, d)| (n as f64, median(d))).collect();
    let extra = serde_json::json!({
        "reference_mean": mean,
        "reference_se": mean_se,
        "note": "a single decay exponent is measured; its trade-off against the moment order is not resolved",
    });
    if setup.trivial() {
        return Ok(finish_vanishing("ergodicity", table, ladder, k, 0.0, Vec::new(), extra));
    }
    Ok(finish_ladder("ergodicity", table, ladder, false, Vec::new(), extra))
}

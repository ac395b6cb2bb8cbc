//! Effective coefficients estimated along the walk, and the constant-coefficient
//! equations they define on the unit ball and cylinder.

mod continuum;

pub use continuum::{
    default_spacing, max_time_step, solve_effective_elliptic, solve_effective_parabolic, ContinuumGrid,
    ContinuumSolution, EffectiveEquation, Interpolated, ScaledSolution,
};

use serde::{Deserialize, Serialize};

use crate::environment::{EnvBox, Environment, EnvironmentLaw, Observable};
use crate::error::{Error, Result};
use crate::lattice::ORIGIN;
use crate::rng::{derive_seed, tag};
use crate::walk::{run_until, safe_radius, sample_walks, FixedHorizon, PathFunctionalEstimate, RunningMean};

/// Settings shared by the time-average estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageOptions {
    pub horizon: u64,
    pub replicas: usize,
    pub walks_per_replica: usize,
    pub seed: u64,
    /// Fraction of each path discarded before averaging.
    pub burn_in: f64,
    /// Per-walk probability bound used to size the environment box.
    pub escape_probability: f64,
}

impl AverageOptions {
    pub fn new(horizon: u64, replicas: usize, walks_per_replica: usize, seed: u64) -> Self {
        AverageOptions { horizon, replicas, walks_per_replica, seed, burn_in: 0.1, escape_probability: 1e-6 }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.replicas == 0 || self.walks_per_replica == 0 {
            return Err(Error::Precondition("horizon, replicas and walks must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::Config(format!("burn-in fraction {} not in [0, 1)", self.burn_in)));
        }
        Ok(())
    }

    fn skipped(&self) -> u64 {
        (self.burn_in * self.horizon as f64).floor() as u64
    }
}

/// Environment for replica `r` of an estimator, sized so that a walk of the
/// given horizon leaves it with probability at most `escape_probability`.
pub fn replica_environment(law: &EnvironmentLaw, opts: &AverageOptions, r: usize) -> Result<Environment> {
    let radius = safe_radius(law.dim(), opts.horizon, opts.walks_per_replica, opts.escape_probability);
    Environment::sample(law, EnvBox::cube(law.dim(), radius)?, derive_seed(opts.seed, &[tag::REPLICA, r as u64]))
}

/// Per-replica means of `k` functionals of `ω(X_i)` averaged over
/// `i ∈ [burn-in, n)` and over walks. Replicas run one after another; walks
/// within a replica run in parallel.
fn replica_means(
    law: &EnvironmentLaw,
    opts: &AverageOptions,
    k: usize,
    eval: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Result<Vec<Vec<f64>>> {
    opts.validate()?;
    let skip = opts.skipped();
    let mut out = Vec::with_capacity(opts.replicas);
    for r in 0..opts.replicas {
        let env = replica_environment(law, opts, r)?;
        let key = derive_seed(opts.seed, &[tag::WALK, r as u64]);
        let per_walk = sample_walks(key, opts.walks_per_replica, |_, s| {
            let mut acc = vec![RunningMean::default(); k];
            let mut buf = vec![0.0; k];
            run_until(&env, ORIGIN, &FixedHorizon(opts.horizon), s, |_, w, i| {
                if i >= skip {
                    eval(w, &mut buf);
                    for (a, &v) in acc.iter_mut().zip(&buf) {
                        a.push(v);
                    }
                }
            })?;
            Ok(acc.iter().map(|a| a.mean).collect::<Vec<f64>>())
        })?;
        let means = (0..k)
            .map(|j| {
                let col: Vec<f64> = per_walk.iter().map(|v| v[j]).collect();
                PathFunctionalEstimate::from_samples(&col).mean
            })
            .collect();
        out.push(means);
    }
    Ok(out)
}

/// Estimate of `E_Q ψ` by time averages along the walk: the cross-replica
/// mean, with the cross-replica standard error.
pub fn reference_mean(law: &EnvironmentLaw, psi: &Observable, opts: &AverageOptions) -> Result<PathFunctionalEstimate> {
    psi.validate(law.dim())?;
    let reps = replica_means(law, opts, 1, |w, out| out[0] = psi.eval(w))?;
    let col: Vec<f64> = reps.iter().map(|v| v[0]).collect();
    Ok(PathFunctionalEstimate::from_samples(&col))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientErrors {
    pub abar: Vec<f64>,
    pub bbar: f64,
    pub psibar: f64,
}

/// Where a set of coefficients came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub law: Option<EnvironmentLaw>,
    pub psi: Option<Observable>,
    pub horizon: u64,
    pub replicas: usize,
    pub walks_per_replica: usize,
    pub seed: u64,
    pub burn_in: f64,
}

/// `ā = E_Q[ω/tr ω]` (diagonal), `b̄ = E_Q[1/tr ω]`, `ψ̄ = E_Q[ψ/tr ω]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCoefficients {
    pub abar: Vec<f64>,
    pub bbar: f64,
    pub psibar: f64,
    pub se: CoefficientErrors,
    pub provenance: Provenance,
}

impl EffectiveCoefficients {
    /// Known coefficients with zero standard errors.
    pub fn exact(abar: Vec<f64>, bbar: f64, psibar: f64) -> Self {
        let d = abar.len();
        EffectiveCoefficients {
            abar,
            bbar,
            psibar,
            se: CoefficientErrors { abar: vec![0.0; d], bbar: 0.0, psibar: 0.0 },
            provenance: Provenance {
                law: None,
                psi: None,
                horizon: 0,
                replicas: 0,
                walks_per_replica: 0,
                seed: 0,
                burn_in: 0.0,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.abar.len()
    }

    /// `|Σ ā_i - 1|`
    pub fn trace_defect(&self) -> f64 {
        (self.abar.iter().sum::<f64>() - 1.0).abs()
    }
}

/// Time averages of `ω/tr ω`, `1/tr ω` and `ψ/tr ω` along walks from the
/// origin, one fresh environment per replica.
pub fn estimate_effective(
    law: &EnvironmentLaw,
    psi: &Observable,
    opts: &AverageOptions,
) -> Result<EffectiveCoefficients> {
    psi.validate(law.dim())?;
    let d = law.dim();
    let reps = replica_means(law, opts, d + 2, |w, out| {
        let tr: f64 = w.iter().sum();
        for a in 0..d {
            out[a] = w[a] / tr;
        }
        out[d] = 1.0 / tr;
        out[d + 1] = psi.eval(w) / tr;
    })?;
    let column = |j: usize| {
        let col: Vec<f64> = reps.iter().map(|v| v[j]).collect();
        PathFunctionalEstimate::from_samples(&col)
    };
    let cols: Vec<PathFunctionalEstimate> = (0..d + 2).map(column).collect();
    let coeffs = EffectiveCoefficients {
        abar: cols[..d].iter().map(|c| c.mean).collect(),
        bbar: cols[d].mean,
        psibar: cols[d + 1].mean,
        se: CoefficientErrors {
            abar: cols[..d].iter().map(|c| c.se).collect(),
            bbar: cols[d].se,
            psibar: cols[d + 1].se,
        },
        provenance: Provenance {
            law: Some(law.clone()),
            psi: Some(psi.clone()),
            horizon: opts.horizon,
            replicas: opts.replicas,
            walks_per_replica: opts.walks_per_replica,
            seed: opts.seed,
            burn_in: opts.burn_in,
        },
    };
    if coeffs.trace_defect() > 1e-12 {
        return Err(Error::Precondition(format!("effective matrix trace is off by {:e}", coeffs.trace_defect())));
    }
    let floor = 2.0 * law.kappa();
    if coeffs.abar.iter().any(|&a| a < floor * (1.0 - 1e-12)) {
        return Err(Error::Precondition(format!("effective matrix entry below 2κ = {floor}")));
    }
    Ok(coeffs)
}

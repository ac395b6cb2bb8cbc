use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::homog::{reference_coefficients, replica_env};
use super::{fmt, median, Check, ExperimentReport, Table};
use crate::effective::{AverageOptions, EffectiveCoefficients};
use crate::environment::{Environment, EnvironmentLaw, Observable};
use crate::error::{config_err, domain_err, Error, Result};
use crate::lattice::{add, LatticeDomain, Radius, ORIGIN};

/// Bad points of one environment. `scores[k]` is the largest normalized
/// functional at `sites[k]`; a site is bad when its score exceeds the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub radius: u32,
    /// `R₀ = R^γ`
    pub r0: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub bad: usize,
    pub sites: usize,
    pub scores: Vec<f64>,
}

impl CensusReport {
    /// Bad count at another threshold; nonincreasing in `c`.
    pub fn count_at(&self, c: f64) -> usize {
        self.scores.iter().filter(|&&s| s > c).count()
    }

    pub fn fraction(&self) -> f64 {
        if self.sites == 0 {
            0.0
        } else {
            self.bad as f64 / self.sites as f64
        }
    }
}

/// For every `x ∈ B_{R-R₀}` and `ζ ∈ {ψ/tr ω, ω_i/tr ω}`, the functional
/// `|E_ω^x Σ_{i<σ} (ζ(ω̄^i) - ζ̄)|` with `σ` the exit time of `B_{R₀}(x)`,
/// which is `|φ(x)|` for `L_ω φ = ζ - ζ̄` on `B_{R₀}(x)` with zero boundary
/// values. One factorization per site serves all `d + 1` right sides. The
/// score divides by `‖ζ‖_∞ R₀^{2-α}`.
#[allow(clippy::too_many_arguments)]
pub fn bad_point_census(
    env: &Environment,
    radius: u32,
    gamma: f64,
    threshold: f64,
    alpha: f64,
    psi: &Observable,
    refs: &EffectiveCoefficients,
) -> Result<CensusReport> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(config_err(format!("census exponent γ = {gamma} not in (0, 1/2)")));
    }
    if !(threshold > 0.0) {
        return Err(config_err("census threshold must be positive"));
    }
    if !alpha.is_finite() {
        return Err(config_err("census rate α must be finite"));
    }
    let d = env.dim();
    if refs.dim() != d {
        return Err(config_err("reference coefficients have the wrong dimension"));
    }
    psi.validate(d)?;
    let rf = radius as f64;
    let r0 = rf.powf(gamma);
    let template = LatticeDomain::ball(Radius::from_f64(r0)?, d)?;
    let outer = rf - r0;
    let centers =
        if outer > 0.0 { LatticeDomain::ball(Radius::from_f64(outer)?, d)?.interior().to_vec() } else { Vec::new() };
    let reach = template.closure().map(|z| z[..d].iter().map(|c| c.unsigned_abs()).max().unwrap()).max().unwrap();
    for x in &centers {
        let far: Vec<i32> = (0..d).map(|a| x[a] + x[a].signum() * reach as i32).collect();
        let mut y = ORIGIN;
        y[..d].copy_from_slice(&far);
        if !env.bbox().contains(&y) {
            return Err(domain_err(format!("census ball around {x:?} escapes the environment box")));
        }
    }
    let zetas: Vec<(Observable, f64)> =
        std::iter::once((Observable::PsiOverTrace { inner: Box::new(psi.clone()) }, refs.psibar))
            .chain((0..d).map(|a| (Observable::CoordRatio { axis: a }, refs.abar[a])))
            .collect();
    let norms: Vec<f64> = zetas.iter().map(|(z, _)| z.sup_norm(env.law())).collect();
    let scale = r0.powf(2.0 - alpha);
    let n = template.n_interior();
    let center = template.index_of(&ORIGIN).unwrap();
    let scores: Vec<f64> = centers
        .par_iter()
        .map(|x| -> Result<f64> {
            let mut a = DMatrix::<f64>::identity(n, n);
            let mut b = DMatrix::<f64>::zeros(n, zetas.len());
            for (i, z) in template.interior().iter().enumerate() {
                let w = env.weights(&add(x, z))?;
                let tr: f64 = w.iter().sum();
                for (k, &j) in template.neighbors(i).iter().enumerate() {
                    if (j as usize) < n {
                        a[(i, j as usize)] -= w[k / 2] / (2.0 * tr);
                    }
                }
                for (c, (zeta, mean)) in zetas.iter().enumerate() {
                    b[(i, c)] = mean - zeta.eval(w);
                }
            }
            let sol = a.lu().solve(&b).ok_or_else(|| Error::Precondition("census system is singular".into()))?;
            Ok((0..zetas.len())
                .filter(|&c| norms[c] > 0.0)
                .map(|c| sol[(center, c)].abs() / (norms[c] * scale))
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let bad = scores.iter().filter(|&&s| s > threshold).count();
    Ok(CensusReport { radius, r0, threshold, alpha, bad, sites: centers.len(), scores })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusSetup {
    pub law: EnvironmentLaw,
    pub radius: u32,
    pub gamma: f64,
    pub threshold: f64,
    /// Rate from an earlier ergodicity fit.
    pub alpha: f64,
    pub psi: Observable,
    pub environments: usize,
    pub seed: u64,
    pub reference: AverageOptions,
    /// Largest allowed median bad fraction.
    pub max_bad_fraction: f64,
}

/// The census on independent environments, with the median bad fraction.
pub fn census_experiment(setup: &CensusSetup) -> Result<ExperimentReport> {
    if setup.environments == 0 {
        return Err(config_err("environments must be positive"));
    }
    let refs = reference_coefficients(&setup.law, &setup.psi, &setup.reference, setup.seed)?;
    let mut table = Table::new(&["R", "environment", "bad", "sites", "fraction"]);
    let mut fractions = Vec::new();
    let mut r0 = 0.0;
    for e in 0..setup.environments {
        let env = replica_env(&setup.law, setup.radius + 1, setup.seed, e)?;
        let rep = bad_point_census(&env, setup.radius, setup.gamma, setup.threshold, setup.alpha, &setup.psi, &refs)?;
        r0 = rep.r0;
        table.push(vec![
            setup.radius.to_string(),
            e.to_string(),
            rep.bad.to_string(),
            rep.sites.to_string(),
            fmt(rep.fraction()),
        ]);
        fractions.push(rep.fraction());
    }
    let m = median(&fractions);
    let checks = vec![Check::new(
        "bad_fraction",
        m < setup.max_bad_fraction,
        format!("median bad fraction {m}, limit {}", setup.max_bad_fraction),
    )];
    Ok(ExperimentReport {
        kind: "census".into(),
        table,
        ladder: vec![(setup.radius as f64, m)],
        fit: None,
        checks,
        warnings: Vec::new(),
        extra: serde_json::json!({ "r0": r0, "coefficients": refs }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvBox, WeightLaw};

    fn exact_refs(law: &EnvironmentLaw, psi: &Observable) -> EffectiveCoefficients {
        reference_coefficients(law, psi, &AverageOptions::new(2000, 2, 50, 0), 7).unwrap()
    }

    #[test]
    fn constant_environment_has_no_bad_points() {
        let law = EnvironmentLaw::new(2, WeightLaw::Constant { value: 2.0 }).unwrap();
        let env = Environment::sample(&law, EnvBox::cube(2, 20).unwrap(), 1).unwrap();
        let psi = Observable::Trace;
        let rep = bad_point_census(&env, 16, 0.4, 1e-12, 0.5, &psi, &exact_refs(&law, &psi)).unwrap();
        assert_eq!(rep.bad, 0);
        assert!(rep.sites > 0);
        assert!(rep.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn counts_fall_with_threshold() {
        let law = EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 5.0, p: 0.5 }).unwrap();
        let env = Environment::sample(&law, EnvBox::cube(2, 20).unwrap(), 3).unwrap();
        let psi = Observable::Const { value: 1.0 };
        let rep = bad_point_census(&env, 16, 0.45, 0.01, 0.5, &psi, &exact_refs(&law, &psi)).unwrap();
        let counts: Vec<usize> = [0.0, 0.01, 0.1, 1.0, 1e9].iter().map(|&c| rep.count_at(c)).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        assert_eq!(counts[4], 0);
        assert_eq!(rep.count_at(0.01), rep.bad);
    }

    #[test]
    fn census_functional_matches_exit_sum() {
        // d = 1: ω_1/tr ω ≡ 1, so only ψ/tr ω = 1/ω contributes; on a ball of
        // radius r0 the exit-time sum is linear algebra we can redo by hand
        let law = EnvironmentLaw::new(1, WeightLaw::Uniform { low: 1.0, high: 2.0 }).unwrap();
        let env = Environment::sample(&law, EnvBox::cube(1, 40).unwrap(), 5).unwrap();
        let psi = Observable::Const { value: 1.0 };
        let refs = EffectiveCoefficients::exact(vec![1.0], 0.6, 0.6);
        let rep = bad_point_census(&env, 36, 0.45, 1.0, 0.0, &psi, &refs).unwrap();
        let r0 = 36f64.powf(0.45);
        let m = r0.ceil() as i32 - 1;
        // φ solves ½(φ(x+1) + φ(x-1)) - φ(x) = ζ(x) - ζ̄ on |z| ≤ m around x = 0
        let x0 = rep.scores.len() / 2;
        let size = (2 * m + 1) as usize;
        let mut a = DMatrix::<f64>::identity(size, size);
        let mut b = nalgebra::DVector::<f64>::zeros(size);
        for i in 0..size {
            if i > 0 {
                a[(i, i - 1)] = -0.5;
            }
            if i + 1 < size {
                a[(i, i + 1)] = -0.5;
            }
            let z = i as i32 - m;
            b[i] = 0.6 - 1.0 / env.weights(&[z, 0, 0]).unwrap()[0];
        }
        let phi = a.lu().solve(&b).unwrap();
        let norm = Observable::InvTrace.sup_norm(&law);
        let expect = phi[m as usize].abs() / (norm * r0.powi(2));
        assert!((rep.scores[x0] - expect).abs() < 1e-12, "{} {}", rep.scores[x0], expect);
    }
}

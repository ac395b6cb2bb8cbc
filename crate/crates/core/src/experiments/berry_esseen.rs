use serde::{Deserialize, Serialize};

use super::homog::reference_coefficients;
use super::{finish_ladder, fmt, median, Check, ExperimentReport, Table};
use crate::effective::{replica_environment, AverageOptions};
use crate::environment::{EnvironmentLaw, Observable, WeightLaw};
use crate::error::{config_err, Result};
use crate::lattice::ORIGIN;
use crate::rng::{derive_seed, tag};
use crate::walk::{sample_walks, Walker};

/// Confidence level of the band used when comparing with the exact law.
pub const DKW_ALPHA: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenSetup {
    pub law: EnvironmentLaw,
    /// Step counts `n`.
    pub ladder: Vec<u64>,
    /// Unit direction `ℓ`.
    pub direction: Vec<f64>,
    pub walks: usize,
    /// Number of independent environments.
    pub environments: usize,
    pub seed: u64,
    /// Run for `ā`; unused for a constant law.
    pub reference: AverageOptions,
    /// Largest allowed statistic at the last rung, when set.
    pub threshold: Option<f64>,
}

impl BerryEsseenSetup {
    pub fn validate(&self) -> Result<()> {
        let d = self.law.dim();
        if self.ladder.len() < 2 || self.ladder.windows(2).any(|w| w[1] <= w[0]) || self.ladder[0] == 0 {
            return Err(config_err("ladder must hold at least two increasing positive step counts"));
        }
        if self.walks == 0 || self.environments == 0 {
            return Err(config_err("walks and environments must be positive"));
        }
        if self.direction.len() != d {
            return Err(config_err(format!("direction has {} entries, expected {d}", self.direction.len())));
        }
        let norm: f64 = self.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("direction must be a unit vector, has length {norm}")));
        }
        Ok(())
    }

    /// The exact law is available for the two-dimensional walk with equal
    /// weights along a coordinate axis, where `X_n·e_1 + n ~ Binomial(2n, ½)`.
    fn binomial_case(&self) -> bool {
        self.law.dim() == 2
            && matches!(self.law.weights(), WeightLaw::Constant { .. })
            && self.direction.iter().filter(|v| v.abs() == 1.0).count() == 1
    }
}

/// `Φ(x)`
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// One-sample Kolmogorov distance `sup_r |F_N(r) - F(r)|` against a
/// continuous `cdf`, evaluated on both sides of every jump of `F_N`.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

/// Exact `sup_r |P(X_n·e_1/√n ≤ r) - Φ(r/σ)|` with `σ² = ½` for the walk with
/// equal weights in two dimensions.
pub fn binomial_ks_oracle(n: u64) -> f64 {
    let m = 2 * n;
    let ln_total = libm::lgamma(m as f64 + 1.0) - m as f64 * std::f64::consts::LN_2;
    let sd = (0.5 * n as f64).sqrt();
    let mut below = 0.0;
    let mut d = 0.0f64;
    for j in 0..=m {
        let p = (ln_total - libm::lgamma(j as f64 + 1.0) - libm::lgamma((m - j) as f64 + 1.0)).exp();
        let k = j as f64 - n as f64;
        let f = normal_cdf(k / sd);
        d = d.max((f - below).abs());
        below += p;
        d = d.max((below - f).abs());
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz half-width for `walks` samples at level `alpha`.
pub fn dkw_band(walks: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * walks as f64)).sqrt()
}

/// Kolmogorov distance between the law of `X_n·ℓ/√n` under `P_ω` and
/// `N(0, ℓᵀāℓ)`, per `(n, environment)`, medians over environments.
pub fn berry_esseen(setup: &BerryEsseenSetup) -> Result<ExperimentReport> {
    setup.validate()?;
    let d = setup.law.dim();
    let coeffs = reference_coefficients(&setup.law, &Observable::Const { value: 1.0 }, &setup.reference, setup.seed)?;
    let var: f64 = (0..d).map(|a| coeffs.abar[a] * setup.direction[a].powi(2)).sum();
    let sd = var.sqrt();
    let nmax = *setup.ladder.last().unwrap();
    let k = setup.ladder.len();
    let opts = AverageOptions::new(nmax, setup.environments, setup.walks, setup.seed);
    let mut stats = vec![vec![0.0; setup.environments]; k];
    for e in 0..setup.environments {
        let env = replica_environment(&setup.law, &opts, e)?;
        let key = derive_seed(setup.seed, &[tag::WALK, e as u64]);
        let ends = sample_walks(key, setup.walks, |_, s| {
            let mut w = Walker::new(&env, ORIGIN)?;
            let mut out = Vec::with_capacity(k);
            for &n in &setup.ladder {
                while w.steps() < n {
                    w.step_with(s.uniform())?;
                }
                let x = w.site();
                out.push((0..d).map(|a| x[a] as f64 * setup.direction[a]).sum::<f64>());
            }
            Ok(out)
        })?;
        for (j, &n) in setup.ladder.iter().enumerate() {
            let scale = (n as f64).sqrt();
            let proj: Vec<f64> = ends.iter().map(|v| v[j] / scale).collect();
            stats[j][e] = kolmogorov_distance(&proj, |r| normal_cdf(r / sd));
        }
    }
    let mut table = Table::new(&["n", "environment", "statistic"]);
    for (j, &n) in setup.ladder.iter().enumerate() {
        for (e, s) in stats[j].iter().enumerate() {
            table.push(vec![n.to_string(), e.to_string(), fmt(*s)]);
        }
    }
    let ladder: Vec<(f64, f64)> = setup.ladder.iter().zip(&stats).map(|(&n, s)| (n as f64, median(s))).collect();
    let band = dkw_band(setup.walks, DKW_ALPHA);
    let mut extra = serde_json::json!({ "variance": var, "dkw_band": band, "coefficients": coeffs });
    let mut checks = Vec::new();
    if setup.binomial_case() {
        let exact: Vec<f64> = setup.ladder.iter().map(|&n| binomial_ks_oracle(n)).collect();
        let worst =
            stats.iter().zip(&exact).flat_map(|(s, x)| s.iter().map(move |v| (v - x).abs())).fold(0.0f64, f64::max);
        checks.push(Check::new(
            "exact_law_agreement",
            worst <= band,
            format!("largest |empirical - exact| {worst:e}, band {band:e}"),
        ));
        extra["exact"] = serde_json::json!(exact);
    }
    if let Some(t) = setup.threshold {
        let last = ladder.last().unwrap().1;
        checks.push(Check::new("threshold", last <= t, format!("statistic {last:e} at n = {nmax}, threshold {t}")));
    }
    let mut rep = finish_ladder("berry_esseen", table, ladder, false, Vec::new(), extra);
    rep.checks.extend(checks);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) + normal_cdf(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_of_a_point_mass() {
        // all mass at 0 against N(0,1): the jump from 0 to 1 straddles Φ(0) = ½
        assert_eq!(kolmogorov_distance(&[0.0; 10], normal_cdf), 0.5);
        let d = kolmogorov_distance(&[-1.0, 1.0], normal_cdf);
        assert!((d - (1.0 - normal_cdf(1.0)).max(0.5 - normal_cdf(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_direct_enumeration() {
        // n = 2: X ∈ {-2..2} with weights 1, 4, 6, 4, 1 over 16
        let p = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v| v / 16.0);
        let mut below = 0.0;
        let mut d = 0.0f64;
        for (i, pi) in p.iter().enumerate() {
            let f = normal_cdf((i as f64 - 2.0) / 1.0);
            d = d.max((f - below).abs());
            below += pi;
            d = d.max((below - f).abs());
        }
        assert!((binomial_ks_oracle(2) - d).abs() < 1e-14);
        assert!(binomial_ks_oracle(6400) < 0.005);
        assert!(binomial_ks_oracle(6400) < binomial_ks_oracle(400));
    }

    #[test]
    fn identity_walk_agrees_with_exact_law() {
        let s = BerryEsseenSetup {
            law: EnvironmentLaw::constant(2, 1.0).unwrap(),
            ladder: vec![25, 100],
            direction: vec![1.0, 0.0],
            walks: 20_000,
            environments: 1,
            seed: 3,
            reference: AverageOptions::new(1, 1, 1, 0),
            threshold: Some(0.1),
        };
        let rep = berry_esseen(&s).unwrap();
        assert!(rep.checks.iter().find(|c| c.name == "exact_law_agreement").unwrap().passed, "{:?}", rep.checks);
        assert!(rep.checks.iter().find(|c| c.name == "threshold").unwrap().passed);
    }

    #[test]
    fn direction_is_checked() {
        let s = BerryEsseenSetup {
            law: EnvironmentLaw::constant(2, 1.0).unwrap(),
            ladder: vec![4, 16],
            direction: vec![1.0, 1.0],
            walks: 10,
            environments: 1,
            seed: 0,
            reference: AverageOptions::new(1, 1, 1, 0),
            threshold: None,
        };
        assert!(berry_esseen(&s).is_err());
    }
}

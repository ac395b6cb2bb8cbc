//! The random walk `X_n`, the lazy space-time chain `Ŷ_n`, stopping rules and
//! Monte Carlo estimators of path functionals.
//!
//! Walk `j` of an estimator draws from stream `j` of the estimator's key, so
//! results do not depend on how walks are scheduled across threads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Observable};
use crate::error::{domain_err, Error, Result};
use crate::lattice::{LatticeDomain, Site, MAX_DIM};
use crate::rng::Stream;

/// A walker that tracks its position and the matching environment index.
#[derive(Clone, Debug)]
pub struct Walker<'e> {
    env: &'e Environment,
    site: Site,
    idx: usize,
    steps: u64,
    strides: [usize; MAX_DIM],
}

impl<'e> Walker<'e> {
    pub fn new(env: &'e Environment, start: Site) -> Result<Self> {
        let idx = env
            .bbox()
            .linear_index(&start)
            .ok_or_else(|| domain_err(format!("start {start:?} outside the environment box")))?;
        let strides = [0, 1, 2].map(|a| env.bbox().stride(a));
        Ok(Walker { env, site: start, idx, steps: 0, strides })
    }

    pub fn site(&self) -> Site {
        self.site
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Weights at the current site.
    #[inline]
    pub fn weights(&self) -> &'e [f64] {
        self.env.weights_at(self.idx)
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.env.trace_at(self.idx)
    }

    #[inline]
    fn check_inner(&self) -> Result<()> {
        let r = self.env.bbox().radius();
        for (a, &ra) in r.iter().enumerate() {
            if self.site[a].unsigned_abs() >= ra {
                return Err(Error::Truncated { site: self.site });
            }
        }
        Ok(())
    }

    #[inline]
    fn move_dir(&mut self, k: usize) {
        let a = k / 2;
        if k.is_multiple_of(2) {
            self.site[a] += 1;
            self.idx += self.strides[a];
        } else {
            self.site[a] -= 1;
            self.idx -= self.strides[a];
        }
    }

    /// One step of `X`, driven by the uniform variate `u` through the inverse
    /// CDF over `+e_1, -e_1, ..., +e_d, -e_d`.
    #[inline]
    pub fn step_with(&mut self, u: f64) -> Result<()> {
        self.check_inner()?;
        let w = self.weights();
        let mut t = u * 2.0 * self.trace();
        let mut dir = 2 * w.len() - 1;
        for (k, &wk) in w.iter().enumerate() {
            if t < wk {
                dir = 2 * k;
                break;
            }
            t -= wk;
            if t < wk {
                dir = 2 * k + 1;
                break;
            }
            t -= wk;
        }
        self.move_dir(dir);
        self.steps += 1;
        Ok(())
    }

    /// One step of the lazy chain: neighbours first in the usual order, then
    /// staying put. Returns whether the walker moved.
    #[inline]
    pub fn lazy_step_with(&mut self, u: f64) -> Result<bool> {
        self.check_inner()?;
        let w = self.weights();
        let mut t = u * 2.0 * (1.0 + self.trace());
        for (k, &wk) in w.iter().enumerate() {
            if t < wk {
                self.move_dir(2 * k);
                self.steps += 1;
                return Ok(true);
            }
            t -= wk;
            if t < wk {
                self.move_dir(2 * k + 1);
                self.steps += 1;
                return Ok(true);
            }
            t -= wk;
        }
        self.steps += 1;
        Ok(false)
    }
}

/// One step of `X` from `x`.
pub fn step(env: &Environment, x: &Site, stream: &mut Stream) -> Result<Site> {
    let mut w = Walker::new(env, *x)?;
    w.step_with(stream.uniform())?;
    Ok(w.site())
}

/// One step of the lazy chain from `x`; returns `x` itself when the chain stays.
pub fn lazy_step(env: &Environment, x: &Site, stream: &mut Stream) -> Result<Site> {
    let mut w = Walker::new(env, *x)?;
    w.lazy_step_with(stream.uniform())?;
    Ok(w.site())
}

/// When to stop a walk, checked before every step.
pub trait StoppingRule {
    fn should_stop(&self, site: &Site, steps: u64) -> bool;
}

/// Stop after exactly `n` steps.
pub struct FixedHorizon(pub u64);

impl StoppingRule for FixedHorizon {
    fn should_stop(&self, _: &Site, steps: u64) -> bool {
        steps >= self.0
    }
}

/// Stop on first exit from a domain's interior.
pub struct ExitTime<'d>(pub &'d LatticeDomain);

impl StoppingRule for ExitTime<'_> {
    fn should_stop(&self, site: &Site, _: u64) -> bool {
        !self.0.contains_interior(site)
    }
}

/// `τ ∧ n`
pub struct ExitOrHorizon<'d>(pub &'d LatticeDomain, pub u64);

impl StoppingRule for ExitOrHorizon<'_> {
    fn should_stop(&self, site: &Site, steps: u64) -> bool {
        steps >= self.1 || !self.0.contains_interior(site)
    }
}

/// Run `X` from `start` until the rule fires. `visit` sees every pre-stopping
/// state `(X_i, ω(X_i), i)` for `i` below the stopping time.
pub fn run_until(
    env: &Environment,
    start: Site,
    rule: &impl StoppingRule,
    stream: &mut Stream,
    mut visit: impl FnMut(&Site, &[f64], u64),
) -> Result<(Site, u64)> {
    let mut w = Walker::new(env, start)?;
    while !rule.should_stop(&w.site, w.steps) {
        visit(&w.site, w.weights(), w.steps);
        w.step_with(stream.uniform())?;
    }
    Ok((w.site, w.steps))
}

/// Exit site and exit time `τ = min{n ≥ 0 : X_n ∉ B}`.
pub fn run_until_exit(
    env: &Environment,
    start: Site,
    domain: &LatticeDomain,
    stream: &mut Stream,
) -> Result<(Site, u64)> {
    run_until(env, start, &ExitTime(domain), stream, |_, _, _| {})
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionalEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub se: f64,
    pub n: usize,
    pub truncated: usize,
}

impl PathFunctionalEstimate {
    /// Mean and standard error by Welford's recursion in index order. Equal
    /// samples give their common value and a zero standard error exactly.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mut acc = RunningMean::default();
        for &v in samples {
            acc.push(v);
        }
        let se = if n > 1 { (acc.m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        PathFunctionalEstimate { mean: acc.mean, se, n, truncated: 0 }
    }
}

/// Welford accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningMean {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningMean {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (v - self.mean);
    }
}

/// Evaluate `sample(j, stream_j)` for `j < count` in parallel and collect in index order.
pub fn sample_walks<T: Send>(
    key: u64,
    count: usize,
    sample: impl Fn(usize, &mut Stream) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..count)
        .into_par_iter()
        .map(|j| {
            let mut s = Stream::new(key, j as u64);
            sample(j, &mut s)
        })
        .collect()
}

fn require_closure_in_box(env: &Environment, domain: &LatticeDomain) -> Result<()> {
    match domain.closure().find(|x| !env.bbox().contains(x)) {
        Some(x) => Err(domain_err(format!("domain site {x:?} lies outside the environment box"))),
        None => Ok(()),
    }
}

/// Monte Carlo estimate of `E[terminal(X_τ)] - E[Σ_{i<τ} running(X_i, ω(X_i))]`,
/// the probabilistic solution of `L_ω u = running` in `B`, `u = terminal` on `∂B`.
pub fn feynman_kac(
    env: &Environment,
    x: Site,
    domain: &LatticeDomain,
    running: impl Fn(&Site, &[f64]) -> f64 + Sync,
    terminal: impl Fn(&Site) -> f64 + Sync,
    samples: usize,
    key: u64,
) -> Result<PathFunctionalEstimate> {
    require_closure_in_box(env, domain)?;
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let values = sample_walks(key, samples, |_, s| {
        let mut cost = 0.0;
        let (exit, _) = run_until(env, x, &ExitTime(domain), s, |y, w, _| cost += running(y, w))?;
        Ok(terminal(&exit) - cost)
    })?;
    Ok(PathFunctionalEstimate::from_samples(&values))
}

/// The estimator for the scaled problem: running cost `f(X_i/R) ψ(ω̄^i) / (R² tr ω(X_i))`
/// and terminal value `g(X_τ/|X_τ|)`. `f` takes the scaled point, `g` the unit vector.
#[allow(clippy::too_many_arguments)]
pub fn feynman_kac_elliptic(
    env: &Environment,
    x: Site,
    domain: &LatticeDomain,
    f: impl Fn(&[f64]) -> f64 + Sync,
    psi: &Observable,
    g: impl Fn(&[f64]) -> f64 + Sync,
    radius: f64,
    samples: usize,
    key: u64,
) -> Result<PathFunctionalEstimate> {
    let d = env.dim();
    let r2 = radius * radius;
    feynman_kac(
        env,
        x,
        domain,
        |y, w| {
            let z: Vec<f64> = y[..d].iter().map(|&c| c as f64 / radius).collect();
            f(&z) * psi.eval(w) / (r2 * w.iter().sum::<f64>())
        },
        |y| {
            let n = y[..d].iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
            let z: Vec<f64> = y[..d].iter().map(|&c| c as f64 / n).collect();
            g(&z)
        },
        samples,
        key,
    )
}

/// Per-walk time averages `(1/n) Σ_{i<n} ψ(ω̄^i)` from `x`, without checking
/// that the box is large enough; a truncated walk is an error.
pub fn path_averages(
    env: &Environment,
    x: Site,
    horizon: u64,
    psi: &Observable,
    samples: usize,
    key: u64,
) -> Result<Vec<f64>> {
    if horizon == 0 || samples == 0 {
        return Err(Error::Precondition("horizon and sample count must be positive".into()));
    }
    sample_walks(key, samples, |_, s| {
        let mut acc = RunningMean::default();
        run_until(env, x, &FixedHorizon(horizon), s, |_, w, _| acc.push(psi.eval(w)))?;
        Ok(acc.mean)
    })
}

/// Estimate of `(1/n) E_ω[Σ_{i<n} ψ(ω̄^i)]` by averaging over independent
/// walks. The box must be wide enough that no `n`-step walk from `x` can
/// reach its edge.
pub fn environment_process_average(
    env: &Environment,
    x: Site,
    horizon: u64,
    psi: &Observable,
    samples: usize,
    key: u64,
) -> Result<PathFunctionalEstimate> {
    for (a, &ra) in env.bbox().radius().iter().enumerate() {
        if (x[a].unsigned_abs() as u64) + horizon > ra as u64 {
            return Err(Error::Precondition(format!(
                "environment box radius {ra} on axis {} cannot contain a {horizon}-step walk from {x:?}",
                a + 1
            )));
        }
    }
    let v = path_averages(env, x, horizon, psi, samples, key)?;
    Ok(PathFunctionalEstimate::from_samples(&v))
}

/// Box radius that a walk of `horizon` steps from the origin leaves with
/// probability at most `delta` per walk. Each coordinate is a martingale with
/// unit-bounded increments, so Azuma's inequality gives
/// `P(max_k |X_k·e_a| ≥ r) ≤ 2 exp(-r² / 2n)`.
pub fn safe_radius(dim: usize, horizon: u64, walks: usize, delta: f64) -> u32 {
    let n = horizon.max(1) as f64;
    let r = (2.0 * n * (2.0 * dim as f64 * walks.max(1) as f64 / delta).ln()).sqrt();
    (r.ceil() as u32 + 2).min(horizon as u32 + 1)
}

/// CSV `walk_index,step,x1,..,xd` for `walks` paths of length `horizon` from `x`.
pub fn write_paths<W: Write>(
    env: &Environment,
    x: Site,
    horizon: u64,
    walks: usize,
    key: u64,
    mut out: W,
) -> Result<()> {
    let d = env.dim();
    let cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    writeln!(out, "walk_index,step,{}", cols.join(","))?;
    for j in 0..walks {
        let mut s = Stream::new(key, j as u64);
        let mut rows = Vec::new();
        let (last, n) = run_until(env, x, &FixedHorizon(horizon), &mut s, |y, _, i| rows.push((*y, i)))?;
        rows.push((last, n));
        for (y, i) in rows {
            let c: Vec<String> = y[..d].iter().map(|v| v.to_string()).collect();
            writeln!(out, "{j},{i},{}", c.join(","))?;
        }
    }
    Ok(())
}

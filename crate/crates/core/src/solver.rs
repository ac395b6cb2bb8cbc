//! Dirichlet problems for `L_ω` and the lazy space-time generator.
//!
//! Elliptic problems are posed in the normalized form `L_ω u = r` on `B`,
//! `u = g` on `∂B`, and solved by red-black Gauss-Seidel sweeps of
//! `u(x) <- Σ_y ω(x,y) u(y) - r(x)`. Parabolic problems are solved exactly by
//! the backward recursion of the lazy chain.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Observable};
use crate::error::{config_err, domain_err, Error, Result};
use crate::lattice::{LatticeDomain, LatticeField, Site, SpaceTimeDomain, SpaceTimeField};

/// Largest system the dense solver accepts.
pub const DIRECT_LIMIT: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSettings {
    /// Tolerance on `max |L_ω u - r|`, relative to the problem scale
    /// `max(|r|_inf, |g|_inf / R²)`.
    pub rel_tol: f64,
    /// Absolute tolerance; overrides `rel_tol` when set.
    pub abs_tol: Option<f64>,
    /// Sweep cap; `50 R²` when unset.
    pub max_iters: Option<usize>,
    /// Run half-sweeps on the rayon pool.
    pub parallel: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings { rel_tol: 1e-10, abs_tol: None, max_iters: None, parallel: false }
    }
}

impl SolveSettings {
    pub fn absolute(tol: f64) -> Self {
        SolveSettings { abs_tol: Some(tol), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `max` over the interior of `|L_ω u - r|`.
    pub residual: f64,
    pub seconds: f64,
}

/// `L_ω u = r` in `B`, `u = g` on `∂B`.
#[derive(Clone, Debug)]
pub struct EllipticProblem<'a> {
    env: &'a Environment,
    domain: Arc<LatticeDomain>,
    rhs: Vec<f64>,
    boundary: Vec<f64>,
}

impl<'a> EllipticProblem<'a> {
    /// `rhs` is indexed like the domain's interior, `boundary` like its boundary list.
    pub fn new(env: &'a Environment, domain: Arc<LatticeDomain>, rhs: Vec<f64>, boundary: Vec<f64>) -> Result<Self> {
        if env.dim() != domain.dim() {
            return Err(config_err("environment and domain dimensions differ"));
        }
        if rhs.len() != domain.n_interior() || boundary.len() != domain.boundary().len() {
            return Err(config_err("right-hand side or boundary data has the wrong length"));
        }
        if rhs.iter().chain(&boundary).any(|v| !v.is_finite()) {
            return Err(config_err("right-hand side and boundary data must be finite"));
        }
        if let Some(x) = domain.closure().find(|x| !env.bbox().contains(x)) {
            return Err(domain_err(format!("domain site {x:?} lies outside the environment box")));
        }
        Ok(EllipticProblem { env, domain, rhs, boundary })
    }

    pub fn from_fns(
        env: &'a Environment,
        domain: Arc<LatticeDomain>,
        rhs: impl Fn(&Site) -> f64,
        boundary: impl Fn(&Site) -> f64,
    ) -> Result<Self> {
        let r = domain.interior().iter().map(&rhs).collect();
        let g = domain.boundary().iter().map(&boundary).collect();
        Self::new(env, domain, r, g)
    }

    pub fn env(&self) -> &Environment {
        self.env
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    fn length_scale_sq(&self) -> f64 {
        let r = 0.5 * self.domain.diameter();
        (r * r).max(1.0)
    }

    fn scale(&self) -> f64 {
        let rmax = self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gmax = self.boundary.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        rmax.max(gmax / self.length_scale_sq())
    }

    /// Half jump weights `ω_a / (2 tr ω)` per interior site, `d` per site.
    fn half_weights(&self) -> Vec<f64> {
        let d = self.domain.dim();
        let mut p = Vec::with_capacity(self.domain.n_interior() * d);
        for x in self.domain.interior() {
            let i = self.env.bbox().linear_index(x).unwrap();
            let w = self.env.weights_at(i);
            let tr = self.env.trace_at(i);
            p.extend(w.iter().map(|wa| wa / (2.0 * tr)));
        }
        p
    }

    fn assemble(&self, values: Vec<f64>) -> LatticeField {
        LatticeField::new(self.domain.clone(), values).expect("solver produced a non-finite value")
    }

    /// `max |L_ω u - r|` over the interior for closure values `u`.
    pub fn residual(&self, u: &[f64]) -> f64 {
        let d = self.domain.dim();
        let p = self.half_weights();
        let mut res = 0.0f64;
        for i in 0..self.domain.n_interior() {
            let nb = self.domain.neighbors(i);
            let mut s = 0.0;
            for a in 0..d {
                s += p[i * d + a] * (u[nb[2 * a] as usize] + u[nb[2 * a + 1] as usize]);
            }
            res = res.max((s - u[i] - self.rhs[i]).abs());
        }
        res
    }
}

const BOUNDARY_BIT: u32 = 1 << 31;

/// Sites of one checkerboard colour, with neighbours encoded as indices into
/// the other colour's value array or (high bit set) into the boundary values.
struct ColorBlock {
    closure_index: Vec<usize>,
    rhs: Vec<f64>,
    probs: Vec<f64>,
    nbrs: Vec<u32>,
}

fn split_colors(problem: &EllipticProblem) -> [ColorBlock; 2] {
    let dom = &problem.domain;
    let d = dom.dim();
    let n_int = dom.n_interior();
    let p = problem.half_weights();
    let parity = |x: &Site| (x[0] + x[1] + x[2]).rem_euclid(2) as usize;
    let mut pos = vec![0usize; n_int];
    let mut counts = [0usize; 2];
    for (i, x) in dom.interior().iter().enumerate() {
        let c = parity(x);
        pos[i] = counts[c];
        counts[c] += 1;
    }
    let mut blocks = [0, 1].map(|c| ColorBlock {
        closure_index: Vec::with_capacity(counts[c]),
        rhs: Vec::with_capacity(counts[c]),
        probs: Vec::with_capacity(counts[c] * d),
        nbrs: Vec::with_capacity(counts[c] * 2 * d),
    });
    for (i, x) in dom.interior().iter().enumerate() {
        let b = &mut blocks[parity(x)];
        b.closure_index.push(i);
        b.rhs.push(problem.rhs[i]);
        b.probs.extend_from_slice(&p[i * d..(i + 1) * d]);
        for &j in dom.neighbors(i) {
            let j = j as usize;
            b.nbrs.push(if j < n_int { pos[j] as u32 } else { (j - n_int) as u32 | BOUNDARY_BIT });
        }
    }
    blocks
}

#[inline]
fn relax(block: &ColorBlock, k: usize, d: usize, other: &[f64], bnd: &[f64]) -> f64 {
    let nb = &block.nbrs[k * 2 * d..(k + 1) * 2 * d];
    let pr = &block.probs[k * d..(k + 1) * d];
    let val = |j: u32| {
        if j & BOUNDARY_BIT != 0 {
            bnd[(j & !BOUNDARY_BIT) as usize]
        } else {
            other[j as usize]
        }
    };
    let mut s = 0.0;
    for a in 0..d {
        s += pr[a] * (val(nb[2 * a]) + val(nb[2 * a + 1]));
    }
    s - block.rhs[k]
}

fn half_sweep(block: &ColorBlock, d: usize, mine: &mut [f64], other: &[f64], bnd: &[f64], parallel: bool) -> f64 {
    if parallel {
        mine.par_iter_mut()
            .enumerate()
            .with_min_len(1024)
            .map(|(k, v)| {
                let new = relax(block, k, d, other, bnd);
                let delta = (new - *v).abs();
                *v = new;
                delta
            })
            .reduce(|| 0.0, f64::max)
    } else {
        let mut delta = 0.0f64;
        for (k, v) in mine.iter_mut().enumerate() {
            let new = relax(block, k, d, other, bnd);
            delta = delta.max((new - *v).abs());
            *v = new;
        }
        delta
    }
}

/// Iterative solve. The returned field equals the boundary data on `∂B` and
/// has residual at most the requested tolerance.
pub fn solve_elliptic(problem: &EllipticProblem, settings: &SolveSettings) -> Result<(LatticeField, SolveReport)> {
    solve_elliptic_from(problem, settings, None)
}

/// As [`solve_elliptic`], starting the sweeps from `initial` interior values.
pub fn solve_elliptic_from(
    problem: &EllipticProblem,
    settings: &SolveSettings,
    initial: Option<&[f64]>,
) -> Result<(LatticeField, SolveReport)> {
    let start = Instant::now();
    let tol = match settings.abs_tol {
        Some(t) => t,
        None => settings.rel_tol * problem.scale(),
    };
    if !(tol >= 0.0) || (settings.abs_tol.is_some() && tol == 0.0) || !(settings.rel_tol > 0.0) {
        return Err(config_err(format!("solver tolerance must be positive, got {tol}")));
    }
    let max_iters = settings.max_iters.unwrap_or_else(|| (50.0 * problem.length_scale_sq()).ceil() as usize).max(1);
    let d = problem.domain.dim();
    let n_int = problem.domain.n_interior();
    let blocks = split_colors(problem);
    let init = |b: &ColorBlock| -> Vec<f64> {
        match initial {
            Some(u0) => b.closure_index.iter().map(|&i| u0[i]).collect(),
            None => vec![0.0; b.closure_index.len()],
        }
    };
    let mut red = init(&blocks[0]);
    let mut black = init(&blocks[1]);
    let bnd = &problem.boundary;
    let gather = |red: &[f64], black: &[f64]| {
        let mut values = vec![0.0; problem.domain.n_closure()];
        for (b, vals) in blocks.iter().zip([red, black]) {
            for (&i, &v) in b.closure_index.iter().zip(vals.iter()) {
                values[i] = v;
            }
        }
        values[n_int..].copy_from_slice(bnd);
        values
    };
    let mut iterations = 0;
    let mut values = Vec::new();
    let mut residual = f64::INFINITY;
    while iterations < max_iters {
        half_sweep(&blocks[0], d, &mut red, &black, bnd, settings.parallel);
        let bound = half_sweep(&blocks[1], d, &mut black, &red, bnd, settings.parallel);
        iterations += 1;
        // red equations hold exactly after their half-sweep, so the residual
        // is bounded by the largest black update up to rounding in evaluating it
        if bound <= tol || iterations == max_iters {
            values = gather(&red, &black);
            residual = problem.residual(&values);
            if residual <= tol {
                break;
            }
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence { iterations, residual, tol });
    }
    let report = SolveReport { iterations, residual, seconds: start.elapsed().as_secs_f64() };
    Ok((problem.assemble(values), report))
}

/// Dense LU solve of the same linear system; a test oracle for small domains.
pub fn solve_elliptic_direct(problem: &EllipticProblem) -> Result<LatticeField> {
    let dom = &problem.domain;
    let n = dom.n_interior();
    if n > DIRECT_LIMIT {
        return Err(Error::TooLarge { size: n, limit: DIRECT_LIMIT });
    }
    let d = dom.dim();
    let p = problem.half_weights();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        b[i] = -problem.rhs[i];
        for (k, &j) in dom.neighbors(i).iter().enumerate() {
            let pk = p[i * d + k / 2];
            let j = j as usize;
            if j < n {
                a[(i, j)] -= pk;
            } else {
                b[i] += pk * problem.boundary[j - n];
            }
        }
    }
    let sol = a.lu().solve(&b).ok_or_else(|| Error::Precondition("dense system is singular".into()))?;
    let mut values = sol.as_slice().to_vec();
    values.extend_from_slice(&problem.boundary);
    Ok(problem.assemble(values))
}

/// Corrector: `L_ω φ = ψ - mean` in `B`, `φ = 0` on `∂B`.
pub fn solve_corrector(
    env: &Environment,
    domain: Arc<LatticeDomain>,
    psi: &Observable,
    mean: f64,
    settings: &SolveSettings,
) -> Result<(LatticeField, SolveReport)> {
    let problem = EllipticProblem::from_fns(env, domain, |x| psi.eval(env.weights(x).unwrap()) - mean, |_| 0.0)?;
    solve_elliptic(&problem, settings)
}

/// Expected exit time: `L_ω t = -1` in `B`, `t = 0` on `∂B`.
pub fn expected_exit_time(
    env: &Environment,
    domain: Arc<LatticeDomain>,
    settings: &SolveSettings,
) -> Result<(LatticeField, SolveReport)> {
    let problem = EllipticProblem::from_fns(env, domain, |_| -1.0, |_| 0.0)?;
    solve_elliptic(&problem, settings)
}

/// `ℒ_ω u = r̂` on `K_R`, `u = g` on `∂^p K_R`.
#[derive(Clone, Debug)]
pub struct ParabolicProblem<'a> {
    env: &'a Environment,
    domain: Arc<SpaceTimeDomain>,
    /// Level-major: `rhs[n * #B + i]`.
    rhs: Vec<f64>,
    data: SpaceTimeField,
}

impl<'a> ParabolicProblem<'a> {
    /// `rhs(x, n)` is the normalized right side at interior points; `boundary`
    /// is read on the parabolic boundary only.
    pub fn from_fns(
        env: &'a Environment,
        domain: Arc<SpaceTimeDomain>,
        rhs: impl Fn(&Site, usize) -> f64,
        boundary: impl Fn(&Site, usize) -> f64,
    ) -> Result<Self> {
        if env.dim() != domain.dim() {
            return Err(config_err("environment and domain dimensions differ"));
        }
        let space = domain.space().clone();
        if let Some(x) = space.closure().find(|x| !env.bbox().contains(x)) {
            return Err(domain_err(format!("domain site {x:?} lies outside the environment box")));
        }
        let n_int = space.n_interior();
        let mut r = Vec::with_capacity(n_int * domain.horizon());
        for n in 0..domain.horizon() {
            r.extend(space.interior().iter().map(|x| rhs(x, n)));
        }
        let mut data = SpaceTimeField::zeros(domain.clone());
        for (x, n) in domain.parabolic_boundary() {
            let i = space.index_of(&x).unwrap();
            data.set(i, n, boundary(&x, n));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(config_err("parabolic right-hand side must be finite"));
        }
        if domain.parabolic_boundary().any(|(x, n)| !data.get(&x, n as i64).unwrap().is_finite()) {
            return Err(config_err("parabolic boundary data must be finite"));
        }
        Ok(ParabolicProblem { env, domain, rhs: r, data })
    }

    pub fn domain(&self) -> &Arc<SpaceTimeDomain> {
        &self.domain
    }

    pub fn rhs(&self, i: usize, n: usize) -> f64 {
        self.rhs[n * self.domain.space().n_interior() + i]
    }
}

/// Exact backward recursion
/// `u(x,n) = [Σ_i (ω_i/2)(u(x+e_i,n+1) + u(x-e_i,n+1)) + u(x,n+1)] / (1 + tr ω) - r̂(x,n)`.
pub fn solve_parabolic(problem: &ParabolicProblem) -> Result<(SpaceTimeField, SolveReport)> {
    let start = Instant::now();
    let space = problem.domain.space().clone();
    let n_int = space.n_interior();
    let mut u = problem.data.clone();
    let coef = lazy_coefficients(problem.env, &space);
    let mut next: Vec<f64> = (0..space.n_closure()).map(|i| problem.data.at(i, problem.domain.horizon())).collect();
    let mut cur = next.clone();
    for n in (0..problem.domain.horizon()).rev() {
        for i in n_int..space.n_closure() {
            cur[i] = if n > 0 { problem.data.at(i, n) } else { 0.0 };
        }
        backward_level(&space, &coef, &next, &mut cur, |i| problem.rhs(i, n));
        for i in 0..n_int {
            u.set(i, n, cur[i]);
        }
        std::mem::swap(&mut next, &mut cur);
    }
    let residual = parabolic_residual(problem, &u)?;
    let report = SolveReport { iterations: problem.domain.horizon(), residual, seconds: start.elapsed().as_secs_f64() };
    Ok((u, report))
}

/// The same recursion without storing the cylinder: `visit(n, level)` sees
/// the closure values of level `n` for `n = T, T-1, ..., 0` (boundary entries
/// of level 0 are zero). The right side `rhs(x, n)` is the normalized one.
pub fn sweep_parabolic(
    env: &Environment,
    domain: &SpaceTimeDomain,
    rhs: impl Fn(&Site, usize) -> f64,
    boundary: impl Fn(&Site, usize) -> f64,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let space = domain.space().clone();
    if let Some(x) = space.closure().find(|x| !env.bbox().contains(x)) {
        return Err(domain_err(format!("domain site {x:?} lies outside the environment box")));
    }
    let n_int = space.n_interior();
    let t = domain.horizon();
    let coef = lazy_coefficients(env, &space);
    let mut next: Vec<f64> = space.closure().map(|x| boundary(&x, t)).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(config_err("parabolic boundary data must be finite"));
    }
    visit(t, &next)?;
    let mut cur = next.clone();
    let mut r = vec![0.0; n_int];
    for n in (0..t).rev() {
        for (i, x) in space.closure().enumerate().skip(n_int) {
            cur[i] = if n > 0 { boundary(&x, n) } else { 0.0 };
        }
        for (i, x) in space.interior().iter().enumerate() {
            r[i] = rhs(x, n);
        }
        if r.iter().chain(&cur[n_int..]).any(|v| !v.is_finite()) {
            return Err(config_err("parabolic data must be finite"));
        }
        backward_level(&space, &coef, &next, &mut cur, |i| r[i]);
        visit(n, &cur)?;
        std::mem::swap(&mut next, &mut cur);
    }
    Ok(())
}

fn lazy_coefficients(env: &Environment, space: &LatticeDomain) -> Vec<f64> {
    let d = space.dim();
    let mut coef = Vec::with_capacity(space.n_interior() * (d + 1));
    for x in space.interior() {
        let k = env.bbox().linear_index(x).unwrap();
        let w = env.weights_at(k);
        let denom = 1.0 + env.trace_at(k);
        coef.extend(w.iter().map(|wa| 0.5 * wa / denom));
        coef.push(1.0 / denom);
    }
    coef
}

fn backward_level(space: &LatticeDomain, coef: &[f64], next: &[f64], cur: &mut [f64], rhs: impl Fn(usize) -> f64) {
    let d = space.dim();
    for i in 0..space.n_interior() {
        let c = &coef[i * (d + 1)..(i + 1) * (d + 1)];
        let nb = space.neighbors(i);
        let mut s = c[d] * next[i];
        for a in 0..d {
            s += c[a] * (next[nb[2 * a] as usize] + next[nb[2 * a + 1] as usize]);
        }
        cur[i] = s - rhs(i);
    }
}

/// `max |ℒ_ω u - r̂|` over `K_R`.
pub fn parabolic_residual(problem: &ParabolicProblem, u: &SpaceTimeField) -> Result<f64> {
    let space = problem.domain.space();
    let mut res = 0.0f64;
    for n in 0..problem.domain.horizon() {
        for (i, x) in space.interior().iter().enumerate() {
            let v = crate::lattice::apply_parabolic(problem.env, u, x, n as i64)?;
            res = res.max((v.normalized - problem.rhs(i, n)).abs());
        }
    }
    Ok(res)
}

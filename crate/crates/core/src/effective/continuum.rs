//! Finite differences for `½tr(ā D²ū) = F` on the unit ball and
//! `½tr(ā D²ū) + c ∂_t ū = F` on the unit cylinder, with Shortley-Weller
//! arms at grid points next to the sphere.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EffectiveCoefficients;
use crate::error::{config_err, domain_err, Error, Result};
use crate::lattice::{Site, MAX_DIM};
use crate::solver::SolveSettings;

const BOUNDARY_BIT: u32 = 1 << 31;
const ABSENT: u32 = u32::MAX;

/// Constant coefficients of the continuum equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveEquation {
    pub abar: Vec<f64>,
    /// Coefficient `c` of `∂_t ū`.
    pub time_coeff: f64,
    /// Multiplies `f` on the right side.
    pub source_scale: f64,
}

impl EffectiveEquation {
    pub fn new(abar: Vec<f64>, time_coeff: f64, source_scale: f64) -> Result<Self> {
        if abar.is_empty() || abar.len() > MAX_DIM || abar.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(config_err("effective matrix needs 1 to 3 positive finite entries"));
        }
        if !(time_coeff > 0.0) || !time_coeff.is_finite() || !source_scale.is_finite() {
            return Err(config_err("time coefficient must be positive and the source scale finite"));
        }
        Ok(EffectiveEquation { abar, time_coeff, source_scale })
    }

    /// The limit equation of the lattice problems: the elliptic right side is
    /// `f ψ̄`; the lazy space-time chain puts `1 + b̄` in front of `∂_t ū`.
    pub fn for_lattice(c: &EffectiveCoefficients) -> Result<Self> {
        Self::new(c.abar.clone(), 1.0 + c.bbar, c.psibar)
    }

    pub fn dim(&self) -> usize {
        self.abar.len()
    }
}

/// Default spacing per dimension.
pub fn default_spacing(dim: usize) -> f64 {
    match dim {
        1 => 1.0 / 256.0,
        2 => 1.0 / 64.0,
        _ => 1.0 / 32.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Arm {
    /// Interior index, or boundary index with `BOUNDARY_BIT` set.
    target: u32,
    len: f64,
}

/// Points `hk` with `|hk| < 1`, their stencil arms, and the sphere points
/// where arms are cut.
#[derive(Clone, Debug)]
pub struct ContinuumGrid {
    dim: usize,
    h: f64,
    k_max: i32,
    keys: Vec<Site>,
    index: Vec<u32>,
    arms: Vec<Arm>,
    near: Vec<bool>,
    boundary: Vec<[f64; MAX_DIM]>,
    buckets: HashMap<Site, Vec<u32>>,
}

impl ContinuumGrid {
    pub fn new(dim: usize, h: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(config_err(format!("dimension {dim} not in 1..=3")));
        }
        if !(h > 0.0 && h <= 0.1) {
            return Err(config_err(format!("grid spacing {h} not in (0, 0.1]")));
        }
        let k_max = (1.0 / h).ceil() as i32;
        let side = (2 * k_max + 1) as usize;
        let mut index = vec![ABSENT; side.pow(dim as u32)];
        let mut keys = Vec::new();
        let r = |a: usize| if a < dim { -k_max..=k_max } else { 0..=0 };
        for k0 in r(0) {
            for k1 in r(1) {
                for k2 in r(2) {
                    let k = [k0, k1, k2];
                    if norm_sq_scaled(&k, h) < 1.0 {
                        index[dense(&k, k_max, dim)] = keys.len() as u32;
                        keys.push(k);
                    }
                }
            }
        }
        let mut grid = ContinuumGrid {
            dim,
            h,
            k_max,
            keys,
            index,
            arms: Vec::new(),
            near: Vec::new(),
            boundary: Vec::new(),
            buckets: HashMap::new(),
        };
        grid.build_arms();
        Ok(grid)
    }

    fn build_arms(&mut self) {
        let (d, h) = (self.dim, self.h);
        let mut arms = Vec::with_capacity(self.keys.len() * 2 * d);
        let mut near = vec![false; self.keys.len()];
        for (i, k) in self.keys.iter().enumerate() {
            let x = self.coords(k);
            for a in 0..d {
                for sign in [1i32, -1] {
                    let mut nk = *k;
                    nk[a] += sign;
                    match self.lookup(&nk) {
                        Some(j) => arms.push(Arm { target: j as u32, len: h }),
                        None => {
                            // |x + t s e_a| = 1 with t in (0, h]
                            let rest: f64 = (0..d).filter(|&b| b != a).map(|b| x[b] * x[b]).sum();
                            let t = ((1.0 - rest).max(0.0).sqrt() - sign as f64 * x[a]).clamp(f64::MIN_POSITIVE, h);
                            let mut p = x;
                            p[a] += sign as f64 * t;
                            let n = (p[..d].iter().map(|v| v * v).sum::<f64>()).sqrt();
                            for v in p[..d].iter_mut() {
                                *v /= n;
                            }
                            let b = self.boundary.len() as u32;
                            self.boundary.push(p);
                            arms.push(Arm { target: b | BOUNDARY_BIT, len: t });
                            near[i] = true;
                        }
                    }
                }
            }
        }
        for (b, p) in self.boundary.iter().enumerate() {
            let cell = self.cell_of(p);
            self.buckets.entry(cell).or_default().push(b as u32);
        }
        self.arms = arms;
        self.near = near;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Number of points with at least one cut arm.
    pub fn near_boundary_count(&self) -> usize {
        self.near.iter().filter(|&&b| b).count()
    }

    pub fn boundary_points(&self) -> &[[f64; MAX_DIM]] {
        &self.boundary
    }

    pub fn point(&self, i: usize) -> [f64; MAX_DIM] {
        self.coords(&self.keys[i])
    }

    fn coords(&self, k: &Site) -> [f64; MAX_DIM] {
        [0, 1, 2].map(|a| k[a] as f64 * self.h)
    }

    fn lookup(&self, k: &Site) -> Option<usize> {
        if (0..self.dim).any(|a| k[a].abs() > self.k_max) {
            return None;
        }
        match self.index[dense(k, self.k_max, self.dim)] {
            ABSENT => None,
            j => Some(j as usize),
        }
    }

    fn cell_of(&self, p: &[f64; MAX_DIM]) -> Site {
        [0, 1, 2].map(|a| if a < self.dim { (p[a] / self.h).floor() as i32 } else { 0 })
    }

    /// Stencil weights `ā_a / ((h₋ + h₊) h_±)` in arm order, and their sum.
    fn weights(&self, i: usize, abar: &[f64]) -> ([f64; 2 * MAX_DIM], f64) {
        let d = self.dim;
        let arms = &self.arms[i * 2 * d..(i + 1) * 2 * d];
        let mut w = [0.0; 2 * MAX_DIM];
        let mut sum = 0.0;
        for a in 0..d {
            let (hp, hm) = (arms[2 * a].len, arms[2 * a + 1].len);
            w[2 * a] = abar[a] / ((hp + hm) * hp);
            w[2 * a + 1] = abar[a] / ((hp + hm) * hm);
            sum += w[2 * a] + w[2 * a + 1];
        }
        (w, sum)
    }

    fn red_black_order(&self) -> Vec<usize> {
        let parity = |k: &Site| (k[0] + k[1] + k[2]).rem_euclid(2);
        let mut order: Vec<usize> = (0..self.len()).filter(|&i| parity(&self.keys[i]) == 0).collect();
        order.extend((0..self.len()).filter(|&i| parity(&self.keys[i]) == 1));
        order
    }
}

fn norm_sq_scaled(k: &Site, h: f64) -> f64 {
    k.iter().map(|&c| (c as f64 * h).powi(2)).sum()
}

fn dense(k: &Site, k_max: i32, dim: usize) -> usize {
    let side = (2 * k_max + 1) as usize;
    (0..dim).fold(0usize, |acc, a| acc * side + (k[a] + k_max) as usize)
}

#[inline]
fn arm_value(target: u32, u: &[f64], bnd: &[f64]) -> f64 {
    if target & BOUNDARY_BIT != 0 {
        bnd[(target & !BOUNDARY_BIT) as usize]
    } else {
        u[target as usize]
    }
}

/// Grid values of a continuum solution. Elliptic solutions have one level;
/// parabolic ones keep snapshots at increasing times in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct ContinuumSolution {
    grid: Arc<ContinuumGrid>,
    times: Option<Vec<f64>>,
    levels: Vec<Vec<f64>>,
    boundary_levels: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
    pub time_step: Option<f64>,
}

/// An interpolated value and whether the query point had to be moved onto
/// the closed cylinder or ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    pub clamped: bool,
}

impl ContinuumSolution {
    pub fn grid(&self) -> &Arc<ContinuumGrid> {
        &self.grid
    }

    pub fn is_parabolic(&self) -> bool {
        self.times.is_some()
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    /// Values at grid points for level `l` (the only level when elliptic).
    pub fn level(&self, l: usize) -> &[f64] {
        &self.levels[l]
    }

    pub fn max_abs(&self) -> f64 {
        self.levels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Elliptic value at `z`. Multilinear on cells whose corners are grid
    /// points, else a least-squares quadratic through nearby grid and sphere
    /// points.
    pub fn value(&self, z: &[f64]) -> Result<Interpolated> {
        if self.is_parabolic() {
            return Err(Error::Precondition("parabolic solution queried without a time".into()));
        }
        let (p, clamped) = self.clamp_space(z)?;
        Ok(Interpolated { value: self.spatial(0, &p)?, clamped })
    }

    /// Parabolic value at `(z, t)`, linear in time between snapshots.
    pub fn value_at(&self, z: &[f64], t: f64) -> Result<Interpolated> {
        let times =
            self.times.as_ref().ok_or_else(|| Error::Precondition("elliptic solution queried with a time".into()))?;
        let (p, mut clamped) = self.clamp_space(z)?;
        let tc = t.clamp(0.0, 1.0);
        clamped |= tc != t;
        let j = times.partition_point(|&s| s <= tc).clamp(1, times.len() - 1);
        let (t0, t1) = (times[j - 1], times[j]);
        let v0 = self.spatial(j - 1, &p)?;
        let v1 = self.spatial(j, &p)?;
        let th = if t1 > t0 { (tc - t0) / (t1 - t0) } else { 0.0 };
        Ok(Interpolated { value: v0 + th * (v1 - v0), clamped })
    }

    fn clamp_space(&self, z: &[f64]) -> Result<([f64; MAX_DIM], bool)> {
        let d = self.grid.dim;
        if z.len() != d || z.iter().any(|v| !v.is_finite()) {
            return Err(domain_err(format!("query point {z:?} is not a finite {d}-vector")));
        }
        let mut p = [0.0; MAX_DIM];
        p[..d].copy_from_slice(z);
        let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 {
            for v in p.iter_mut() {
                *v /= n;
            }
            return Ok((p, true));
        }
        Ok((p, false))
    }

    fn spatial(&self, l: usize, p: &[f64; MAX_DIM]) -> Result<f64> {
        let g = &self.grid;
        let d = g.dim;
        let u = &self.levels[l];
        let base: Site = [0, 1, 2].map(|a| if a < d { (p[a] / g.h).floor() as i32 } else { 0 });
        let mut total = 0.0;
        let mut inside = true;
        for corner in 0..(1usize << d) {
            let mut k = base;
            let mut w = 1.0;
            for a in 0..d {
                let frac = p[a] / g.h - base[a] as f64;
                if corner >> a & 1 == 1 {
                    k[a] += 1;
                    w *= frac;
                } else {
                    w *= 1.0 - frac;
                }
            }
            match g.lookup(&k) {
                Some(j) => total += w * u[j],
                None => {
                    inside = false;
                    break;
                }
            }
        }
        if inside {
            return Ok(total);
        }
        self.quadratic_fit(l, p, &base)
    }

    fn quadratic_fit(&self, l: usize, p: &[f64; MAX_DIM], base: &Site) -> Result<f64> {
        let g = &self.grid;
        let d = g.dim;
        let reach = 2.5 * g.h;
        let mut nodes: Vec<([f64; MAX_DIM], f64)> = Vec::new();
        let r = |a: usize| if a < d { base[a] - 2..=base[a] + 3 } else { 0..=0 };
        for k0 in r(0) {
            for k1 in r(1) {
                for k2 in r(2) {
                    let k = [k0, k1, k2];
                    if let Some(j) = g.lookup(&k) {
                        let q = g.coords(&k);
                        if dist(&q, p) <= reach {
                            nodes.push((q, self.levels[l][j]));
                        }
                    }
                }
            }
        }
        let rb = |a: usize| if a < d { base[a] - 3..=base[a] + 3 } else { 0..=0 };
        for k0 in rb(0) {
            for k1 in rb(1) {
                for k2 in rb(2) {
                    if let Some(list) = g.buckets.get(&[k0, k1, k2]) {
                        for &b in list {
                            let q = g.boundary[b as usize];
                            if dist(&q, p) <= reach {
                                nodes.push((q, self.boundary_levels[l][b as usize]));
                            }
                        }
                    }
                }
            }
        }
        let basis = |q: &[f64; MAX_DIM]| -> Vec<f64> {
            let y: Vec<f64> = (0..d).map(|a| (q[a] - p[a]) / g.h).collect();
            let mut v = vec![1.0];
            v.extend(y.iter().copied());
            for a in 0..d {
                for b in a..d {
                    v.push(y[a] * y[b]);
                }
            }
            v
        };
        let m = 1 + d + d * (d + 1) / 2;
        if nodes.len() < m {
            return Err(domain_err(format!("too few nodes near {:?} for a quadratic fit", &p[..d])));
        }
        let a = DMatrix::from_fn(nodes.len(), m, |i, j| basis(&nodes[i].0)[j]);
        let rhs = DVector::from_iterator(nodes.len(), nodes.iter().map(|n| n.1));
        let coef =
            a.svd(true, true).solve(&rhs, 1e-12).map_err(|e| domain_err(format!("quadratic fit failed: {e}")))?;
        Ok(coef[0])
    }

    /// CSV `x1,..,xd,value`, or `x1,..,xd,t,value` for parabolic solutions.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.grid.dim;
        let cols: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        match &self.times {
            None => {
                writeln!(out, "{},value", cols.join(","))?;
                for i in 0..self.grid.len() {
                    let x = self.grid.point(i);
                    let c: Vec<String> = x[..d].iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{},{}", c.join(","), self.levels[0][i])?;
                }
            }
            Some(times) => {
                writeln!(out, "{},t,value", cols.join(","))?;
                for (l, t) in times.iter().enumerate() {
                    for i in 0..self.grid.len() {
                        let x = self.grid.point(i);
                        let c: Vec<String> = x[..d].iter().map(|v| v.to_string()).collect();
                        writeln!(out, "{},{t},{}", c.join(","), self.levels[l][i])?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn dist(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `½tr(ā D²ū) = f ψ̄` in `𝔹₁`, `ū = g(x/|x|)` on the sphere. Red-black SOR
/// sweeps; the tolerance is on the residual of the equation divided by its
/// diagonal, relative to `max(|F/diag|, h²|g|)`.
pub fn solve_effective_elliptic(
    eq: &EffectiveEquation,
    f: impl Fn(&[f64]) -> f64,
    g: impl Fn(&[f64]) -> f64,
    h: f64,
    settings: &SolveSettings,
) -> Result<ContinuumSolution> {
    let grid = Arc::new(ContinuumGrid::new(eq.dim(), h)?);
    let d = grid.dim;
    let n = grid.len();
    let bnd: Vec<f64> = grid.boundary.iter().map(|p| g(&p[..d])).collect();
    let mut diag = Vec::with_capacity(n);
    let mut wts = Vec::with_capacity(n);
    let mut src = Vec::with_capacity(n);
    for i in 0..n {
        let (w, s) = grid.weights(i, &eq.abar);
        let x = grid.point(i);
        let fx = f(&x[..d]) * eq.source_scale;
        diag.push(s);
        wts.push(w);
        src.push(fx / s);
    }
    if src.iter().chain(bnd.iter()).any(|v| !v.is_finite()) {
        return Err(config_err("continuum data must be finite"));
    }
    let scale =
        src.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(bnd.iter().fold(0.0f64, |m, v| m.max(v.abs())) * h * h);
    let tol = settings.abs_tol.unwrap_or(settings.rel_tol * scale);
    let max_iters = settings.max_iters.unwrap_or((50.0 / (h * h)).ceil() as usize);
    let omega = 2.0 / (1.0 + (PI * h / 2.0).sin());
    let order = grid.red_black_order();
    let mut u = vec![0.0; n];
    let relax = |i: usize, u: &[f64]| -> f64 {
        let arms = &grid.arms[i * 2 * d..(i + 1) * 2 * d];
        let mut s = 0.0;
        for (k, arm) in arms.iter().enumerate() {
            s += wts[i][k] * arm_value(arm.target, u, &bnd);
        }
        s / diag[i] - src[i]
    };
    let residual = |u: &[f64]| (0..n).map(|i| (relax(i, u) - u[i]).abs()).fold(0.0f64, f64::max);
    let mut iterations = 0;
    let mut res = f64::INFINITY;
    while iterations < max_iters {
        let mut worst = 0.0f64;
        for &i in &order {
            let r = relax(i, &u) - u[i];
            worst = worst.max(r.abs());
            u[i] += omega * r;
        }
        iterations += 1;
        if worst <= tol {
            res = residual(&u);
            if res <= tol {
                break;
            }
        }
    }
    if res > tol {
        res = residual(&u);
        if res > tol {
            return Err(Error::NonConvergence { iterations, residual: res, tol });
        }
    }
    Ok(ContinuumSolution {
        grid,
        times: None,
        levels: vec![u],
        boundary_levels: vec![bnd],
        iterations,
        residual: res,
        time_step: None,
    })
}

/// Largest stable explicit step `c h² / Σ ā_i`.
pub fn max_time_step(eq: &EffectiveEquation, h: f64) -> f64 {
    eq.time_coeff * h * h / eq.abar.iter().sum::<f64>()
}

/// `½tr(ā D²ū) + c ∂_t ū = f ψ̄` in `𝕂₁`, `ū = g` on the lateral surface and
/// at `t = 1`, stepped backward from `t = 1` to `t = 0`. Points with a full
/// stencil step explicitly; points with a cut arm step implicitly, since a
/// short arm would break the explicit bound. At most 257 snapshots are kept.
pub fn solve_effective_parabolic(
    eq: &EffectiveEquation,
    f: impl Fn(&[f64], f64) -> f64,
    g: impl Fn(&[f64], f64) -> f64,
    h: f64,
    dt: Option<f64>,
) -> Result<ContinuumSolution> {
    let grid = Arc::new(ContinuumGrid::new(eq.dim(), h)?);
    let d = grid.dim;
    let n = grid.len();
    let limit = max_time_step(eq, h);
    let dt_req = dt.unwrap_or(0.9 * limit);
    if !(dt_req > 0.0) || dt_req > limit * (1.0 + 1e-12) {
        return Err(config_err(format!(
            "time step {dt_req} violates the explicit stability bound c h² / Σā = {limit}"
        )));
    }
    let raw_steps = (1.0 / dt_req).ceil() as usize;
    let stride = raw_steps.div_ceil(256).max(1);
    let steps = raw_steps.div_ceil(stride) * stride;
    let dt = 1.0 / steps as f64;
    let lam = dt / eq.time_coeff;

    let mut diag = Vec::with_capacity(n);
    let mut wts = Vec::with_capacity(n);
    for i in 0..n {
        let (w, s) = grid.weights(i, &eq.abar);
        diag.push(s);
        wts.push(w);
    }
    let points: Vec<[f64; MAX_DIM]> = (0..n).map(|i| grid.point(i)).collect();
    let near: Vec<usize> = (0..n).filter(|&i| grid.near[i]).collect();
    let regular: Vec<usize> = (0..n).filter(|&i| !grid.near[i]).collect();
    let bvals = |t: f64| -> Vec<f64> { grid.boundary.iter().map(|p| g(&p[..d], t)).collect() };
    let source = |i: usize, t: f64| f(&points[i][..d], t) * eq.source_scale;

    let mut u: Vec<f64> = points.iter().map(|x| g(&x[..d], 1.0)).collect();
    let mut bnd_old = bvals(1.0);
    let mut times = vec![1.0];
    let mut levels = vec![u.clone()];
    let mut blevels = vec![bnd_old.clone()];
    let mut next = u.clone();
    let mut worst_inner = 0usize;
    for step in 1..=steps {
        let t_old = 1.0 - (step - 1) as f64 * dt;
        let t_new = 1.0 - step as f64 * dt;
        let bnd_new = bvals(t_new);
        for &i in &regular {
            let arms = &grid.arms[i * 2 * d..(i + 1) * 2 * d];
            let mut s = 0.0;
            for (k, arm) in arms.iter().enumerate() {
                s += wts[i][k] * arm_value(arm.target, &u, &bnd_old);
            }
            next[i] = u[i] + lam * (s - diag[i] * u[i] - source(i, t_old));
        }
        let rhs: Vec<f64> = near.iter().map(|&i| u[i] - lam * source(i, t_new)).collect();
        let mut inner = 0;
        loop {
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for (m, &i) in near.iter().enumerate() {
                let arms = &grid.arms[i * 2 * d..(i + 1) * 2 * d];
                let mut s = 0.0;
                for (k, arm) in arms.iter().enumerate() {
                    s += wts[i][k] * arm_value(arm.target, &next, &bnd_new);
                }
                let v = (rhs[m] + lam * s) / (1.0 + lam * diag[i]);
                change = change.max((v - next[i]).abs());
                size = size.max(v.abs());
                next[i] = v;
            }
            inner += 1;
            if change <= 1e-15 * (1.0 + size) || inner >= 500 {
                break;
            }
        }
        worst_inner = worst_inner.max(inner);
        std::mem::swap(&mut u, &mut next);
        bnd_old = bnd_new;
        if step % stride == 0 {
            times.push(t_new);
            levels.push(u.clone());
            blevels.push(bnd_old.clone());
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence { iterations: steps, residual: f64::INFINITY, tol: 0.0 });
    }
    times.reverse();
    levels.reverse();
    blevels.reverse();
    if let Some(t) = times.first_mut() {
        *t = 0.0;
    }
    Ok(ContinuumSolution {
        grid,
        times: Some(times),
        levels,
        boundary_levels: blevels,
        iterations: steps * worst_inner.max(1),
        residual: 0.0,
        time_step: Some(dt),
    })
}

/// `x ↦ ū(x/R)` and `(x, n) ↦ ū(x/R, n/R²)` on the lattice.
#[derive(Clone, Debug)]
pub struct ScaledSolution<'a> {
    solution: &'a ContinuumSolution,
    radius: f64,
}

impl<'a> ScaledSolution<'a> {
    pub fn new(solution: &'a ContinuumSolution, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(config_err("scaling radius must be positive"));
        }
        Ok(ScaledSolution { solution, radius })
    }

    fn scaled(&self, x: &Site) -> Vec<f64> {
        x[..self.solution.grid.dim].iter().map(|&c| c as f64 / self.radius).collect()
    }

    pub fn at(&self, x: &Site) -> Result<Interpolated> {
        self.solution.value(&self.scaled(x))
    }

    pub fn at_time(&self, x: &Site, n: usize) -> Result<Interpolated> {
        self.solution.value_at(&self.scaled(x), n as f64 / (self.radius * self.radius))
    }
}

impl ContinuumSolution {
    /// The lattice view at scale `R`.
    pub fn scale_to_lattice(&self, radius: f64) -> Result<ScaledSolution<'_>> {
        ScaledSolution::new(self, radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq(abar: Vec<f64>, c: f64) -> EffectiveEquation {
        EffectiveEquation::new(abar, c, 1.0).unwrap()
    }

    fn max_err(sol: &ContinuumSolution, exact: impl Fn(&[f64]) -> f64) -> f64 {
        let d = sol.grid().dim();
        (0..sol.grid().len())
            .map(|i| {
                let x = sol.grid().point(i);
                (sol.level(0)[i] - exact(&x[..d])).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_classification() {
        for d in 1..=3 {
            let g = ContinuumGrid::new(d, 0.1).unwrap();
            for i in 0..g.len() {
                let x = g.point(i);
                assert!(x.iter().map(|v| v * v).sum::<f64>() < 1.0);
            }
            for p in g.boundary_points() {
                assert!((p.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert!(g.near_boundary_count() > 0);
        }
        assert_eq!(ContinuumGrid::new(1, 0.1).unwrap().len(), 19);
        assert!(ContinuumGrid::new(2, 0.2).is_err());
    }

    #[test]
    fn affine_boundary_data() {
        let s = solve_effective_elliptic(
            &eq(vec![0.3, 0.7], 1.0),
            |_| 0.0,
            |y| y[0],
            1.0 / 32.0,
            &SolveSettings::default(),
        )
        .unwrap();
        assert!(max_err(&s, |x| x[0]) < 1e-9);
    }

    #[test]
    fn quadratics_are_reproduced() {
        // ½tr(ā D²|x|²) = tr ā
        let e = eq(vec![0.5, 0.5], 1.0);
        let s =
            solve_effective_elliptic(&e, |_| 1.0, |y| y[0] * y[0] + y[1] * y[1], 1.0 / 32.0, &SolveSettings::default())
                .unwrap();
        assert!(max_err(&s, |x| x[0] * x[0] + x[1] * x[1]) < 1e-8);
        let e = eq(vec![0.2, 0.3, 0.5], 1.0);
        let s = solve_effective_elliptic(
            &e,
            |_| 0.2 * 3.0,
            |y| 3.0 * y[0] * y[0] + y[1] * y[2],
            0.1,
            &SolveSettings::default(),
        )
        .unwrap();
        assert!(max_err(&s, |x| 3.0 * x[0] * x[0] + x[1] * x[2]) < 1e-8);
    }

    #[test]
    fn cosine_boundary_gives_first_coordinate() {
        let e = eq(vec![0.5, 0.5], 1.0);
        let cos = |y: &[f64]| y[1].atan2(y[0]).cos();
        let s = solve_effective_elliptic(&e, |_| 0.0, cos, 1.0 / 32.0, &SolveSettings::default()).unwrap();
        assert!(max_err(&s, |x| x[0]) < 1e-8);
    }

    #[test]
    fn second_order_refinement() {
        // ū = e^{x} cos y is harmonic for ā = I/2
        let e = eq(vec![0.5, 0.5], 1.0);
        let exact = |x: &[f64]| x[0].exp() * x[1].cos();
        let errs: Vec<f64> = [16.0, 32.0, 64.0]
            .iter()
            .map(|m| {
                let s = solve_effective_elliptic(&e, |_| 0.0, exact, 1.0 / m, &SolveSettings::default()).unwrap();
                max_err(&s, exact)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..=5.0).contains(&ratio), "{errs:?}");
        }
    }

    #[test]
    fn comparison_principle() {
        let e = eq(vec![0.4, 0.6], 1.0);
        let g1 = |y: &[f64]| y[0] * y[1];
        let g2 = |y: &[f64]| y[0] * y[1] + 0.1 + 0.05 * y[0];
        let a = solve_effective_elliptic(&e, |x| x[0], g1, 1.0 / 16.0, &SolveSettings::default()).unwrap();
        let b = solve_effective_elliptic(&e, |x| x[0], g2, 1.0 / 16.0, &SolveSettings::default()).unwrap();
        assert!(a.level(0).iter().zip(b.level(0)).all(|(x, y)| y >= x));
    }

    #[test]
    fn parabolic_trivial_and_polynomial_data() {
        let e = eq(vec![0.5, 0.5], 1.5);
        let c = solve_effective_parabolic(&e, |_, _| 0.0, |_, _| 2.5, 1.0 / 16.0, None).unwrap();
        assert!(c.level(0).iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let a = solve_effective_parabolic(&e, |_, _| 0.0, |y, _| y[0], 1.0 / 16.0, None).unwrap();
        for l in 0..a.times().unwrap().len() {
            for i in 0..a.grid().len() {
                assert!((a.level(l)[i] - a.grid().point(i)[0]).abs() < 1e-12);
            }
        }
        // ½tr(ā D²|x|²) = 1 and c ∂_t(-t/c) = -1
        let q = |y: &[f64], t: f64| y[0] * y[0] + y[1] * y[1] - t / 1.5;
        let s = solve_effective_parabolic(&e, |_, _| 0.0, q, 1.0 / 16.0, None).unwrap();
        let times = s.times().unwrap().to_vec();
        assert_eq!((times[0], *times.last().unwrap()), (0.0, 1.0));
        for (l, &t) in times.iter().enumerate() {
            for i in 0..s.grid().len() {
                let x = s.grid().point(i);
                assert!((s.level(l)[i] - q(&x[..2], t)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn time_step_bound_is_enforced() {
        let e = eq(vec![0.5, 0.5], 0.5);
        let h = 0.05;
        assert!(solve_effective_parabolic(&e, |_, _| 0.0, |_, _| 0.0, h, Some(1.01 * max_time_step(&e, h))).is_err());
        assert!(solve_effective_parabolic(&e, |_, _| 0.0, |_, _| 0.0, h, Some(max_time_step(&e, h))).is_ok());
    }

    #[test]
    fn scaled_values() {
        let e = eq(vec![0.5, 0.5], 1.0);
        let s = solve_effective_elliptic(&e, |_| 0.0, |y| y[0], 1.0 / 64.0, &SolveSettings::default()).unwrap();
        let v = s.scale_to_lattice(10.0).unwrap();
        assert!((v.at(&[3, 0, 0]).unwrap().value - 0.3).abs() < 1e-9);
        assert!((v.at(&[-9, 4, 0]).unwrap().value + 0.9).abs() < 1e-9);
        let out = v.at(&[20, 0, 0]).unwrap();
        assert!(out.clamped && (out.value - 1.0).abs() < 1e-9);

        let c = solve_effective_elliptic(&e, |_| 0.0, |_| 4.0, 1.0 / 64.0, &SolveSettings::default()).unwrap();
        let v = c.scale_to_lattice(7.0).unwrap();
        for x in [[0, 0, 0], [6, 3, 0], [-4, -5, 0]] {
            assert!((v.at(&x).unwrap().value - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_of_a_quadratic() {
        let h = 1.0 / 16.0;
        let e = eq(vec![0.5, 0.5], 1.0);
        let s =
            solve_effective_elliptic(&e, |_| 1.0, |y| y[0] * y[0] + y[1] * y[1], h, &SolveSettings::default()).unwrap();
        let mut worst = 0.0f64;
        for k in 0..400 {
            let r = 0.999 * ((k as f64 * 0.618) % 1.0).sqrt();
            let a = k as f64 * 2.399;
            let z = [r * a.cos(), r * a.sin()];
            let v = s.value(&z).unwrap().value;
            worst = worst.max((v - r * r).abs());
        }
        assert!(worst <= h * h, "{worst}");
    }

    #[test]
    fn one_dimensional_problems() {
        let e = eq(vec![1.0], 1.0);
        // ½ u'' = 1, u(±1) = 1: u = x²
        let s = solve_effective_elliptic(&e, |_| 1.0, |_| 1.0, 1.0 / 128.0, &SolveSettings::default()).unwrap();
        assert!(max_err(&s, |x| x[0] * x[0]) < 1e-8);
        assert!((s.value(&[0.3]).unwrap().value - 0.09).abs() < 1e-4);
    }
}

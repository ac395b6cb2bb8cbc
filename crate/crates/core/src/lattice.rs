//! Lattice domains, fields on them, and the discrete operators.
//!
//! Sites are stored as `[i32; 3]` with unused trailing axes set to zero.
//! A domain keeps its interior `B` and discrete boundary `∂B` as sorted site
//! lists; a field holds one value per site of the closure, interior first.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{config_err, domain_err, Result};

pub const MAX_DIM: usize = 3;

pub type Site = [i32; MAX_DIM];

pub const ORIGIN: Site = [0, 0, 0];

/// Build a site from up to three coordinates.
pub fn site(coords: &[i32]) -> Site {
    let mut x = [0; MAX_DIM];
    x[..coords.len()].copy_from_slice(coords);
    x
}

#[inline]
pub fn norm_sq(x: &Site) -> i64 {
    x.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

#[inline]
pub fn add(x: &Site, y: &Site) -> Site {
    [x[0] + y[0], x[1] + y[1], x[2] + y[2]]
}

#[inline]
pub fn sub(x: &Site, y: &Site) -> Site {
    [x[0] - y[0], x[1] - y[1], x[2] - y[2]]
}

/// The unit step in direction `k` of the order `+e_1, -e_1, ..., +e_d, -e_d`.
#[inline]
pub fn unit_step(k: usize) -> Site {
    let mut e = [0; MAX_DIM];
    e[k / 2] = if k.is_multiple_of(2) { 1 } else { -1 };
    e
}

/// A positive radius held as an exact ratio `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Radius {
    num: u64,
    den: u64,
}

const MAX_DEN_BITS: u32 = 30;

impl Radius {
    pub fn int(r: u32) -> Result<Self> {
        Self::ratio(r as u64, 1)
    }

    pub fn ratio(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(config_err(format!("radius {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        let (num, den) = (num / g, den / g);
        if num >= 1 << 40 || den > 1 << MAX_DEN_BITS {
            return Err(config_err(format!("radius {num}/{den} out of supported range")));
        }
        Ok(Radius { num, den })
    }

    /// Exact conversion of a binary floating-point radius; values needing more
    /// than 30 fractional bits are rounded to that precision.
    pub fn from_f64(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() || r >= (1u64 << 30) as f64 {
            return Err(config_err(format!("radius {r} must be positive and below 2^30")));
        }
        for k in 0..=MAX_DEN_BITS {
            let scaled = r * (1u64 << k) as f64;
            if scaled.fract() == 0.0 {
                return Self::ratio(scaled as u64, 1 << k);
            }
        }
        Self::ratio((r * (1u64 << MAX_DEN_BITS) as f64).round() as u64, 1 << MAX_DEN_BITS)
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    /// `|x|^2 < R^2`, exactly.
    #[inline]
    pub fn contains_norm_sq(&self, n2: i64) -> bool {
        (n2 as u128) * (self.den as u128).pow(2) < (self.num as u128).pow(2)
    }

    /// `⌈R^2⌉` computed from the exact ratio.
    pub fn ceil_sq(&self) -> u64 {
        let n = (self.num as u128).pow(2);
        let d = (self.den as u128).pow(2);
        n.div_ceil(d) as u64
    }

    /// `⌊R⌋`
    pub fn floor(&self) -> u64 {
        self.num / self.den
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// How a domain was built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// `{x : |x - center| < R}`
    Ball {
        center: Site,
        radius: Radius,
    },
    /// `{x : |x - center|_inf < side / 2}`
    Cube {
        center: Site,
        side: u64,
    },
    /// The cube of side `3^n` around a point of `3^n Z^d`.
    Triadic {
        center: Site,
        n: u32,
    },
    Explicit,
}

/// A finite set of sites `B` with its discrete boundary
/// `∂B = {z ∉ B : |z - x| = 1 for some x ∈ B}`.
#[derive(Clone, Debug)]
pub struct LatticeDomain {
    dim: usize,
    kind: DomainKind,
    interior: Vec<Site>,
    boundary: Vec<Site>,
    lo: Site,
    extent: [usize; MAX_DIM],
    lookup: Vec<u32>,
    neighbors: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl LatticeDomain {
    /// Discrete ball `B_R = {x : |x| < R}` centred at the origin.
    pub fn ball(radius: Radius, dim: usize) -> Result<Self> {
        Self::ball_at(ORIGIN, radius, dim)
    }

    pub fn ball_at(center: Site, radius: Radius, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let r = radius.floor() as i32;
        let mut sites = Vec::new();
        for_box(dim, -r, r, |z| {
            if radius.contains_norm_sq(norm_sq(&z)) {
                sites.push(add(&center, &z));
            }
        });
        Self::build(dim, DomainKind::Ball { center, radius }, sites)
    }

    /// Cube `□_r = {x : |x|_inf < r / 2}` centred at the origin.
    pub fn cube(side: u64, dim: usize) -> Result<Self> {
        Self::cube_at(ORIGIN, side, dim)
    }

    pub fn cube_at(center: Site, side: u64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if side == 0 {
            return Err(config_err("cube side must be positive"));
        }
        let h = ((side - 1) / 2) as i32;
        let mut sites = Vec::new();
        for_box(dim, -h, h, |z| {
            if z.iter().take(dim).all(|&c| 2 * (c.unsigned_abs() as u64) < side) {
                sites.push(add(&center, &z));
            }
        });
        Self::build(dim, DomainKind::Cube { center, side }, sites)
    }

    /// Triadic cube `Q_n = □_{3^n}`, with `3^{nd}` sites.
    pub fn triadic(n: u32, dim: usize) -> Result<Self> {
        Self::triadic_at(ORIGIN, n, dim)
    }

    pub fn triadic_at(center: Site, n: u32, dim: usize) -> Result<Self> {
        let side = 3u64.pow(n);
        let mut d = Self::cube_at(center, side, dim)?;
        d.kind = DomainKind::Triadic { center, n };
        Ok(d)
    }

    /// Domain with an arbitrary nonempty interior set.
    pub fn explicit(sites: Vec<Site>, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if sites.is_empty() {
            return Err(config_err("explicit domain must be nonempty"));
        }
        if sites.iter().any(|x| x[dim..].iter().any(|&c| c != 0)) {
            return Err(config_err(format!("sites have nonzero coordinates beyond dimension {dim}")));
        }
        Self::build(dim, DomainKind::Explicit, sites)
    }

    fn build(dim: usize, kind: DomainKind, mut interior: Vec<Site>) -> Result<Self> {
        interior.sort_unstable();
        interior.dedup();
        let mut lo = [0i32; MAX_DIM];
        let mut hi = [0i32; MAX_DIM];
        for a in 0..dim {
            lo[a] = interior.iter().map(|x| x[a]).min().unwrap() - 1;
            hi[a] = interior.iter().map(|x| x[a]).max().unwrap() + 1;
        }
        let mut extent = [1usize; MAX_DIM];
        for a in 0..dim {
            extent[a] = (hi[a] - lo[a] + 1) as usize;
        }
        let cells: usize = extent.iter().product();
        let mut lookup = vec![ABSENT; cells];
        let flat = |x: &Site| -> usize {
            let mut i = 0;
            for a in 0..MAX_DIM {
                i = i * extent[a] + (x[a] - lo[a]) as usize;
            }
            i
        };
        for (i, x) in interior.iter().enumerate() {
            lookup[flat(x)] = i as u32;
        }
        let mut boundary = Vec::new();
        for x in &interior {
            for k in 0..2 * dim {
                let y = add(x, &unit_step(k));
                if lookup[flat(&y)] == ABSENT {
                    boundary.push(y);
                }
            }
        }
        boundary.sort_unstable();
        boundary.dedup();
        let n_int = interior.len();
        for (j, y) in boundary.iter().enumerate() {
            lookup[flat(y)] = (n_int + j) as u32;
        }
        let mut neighbors = Vec::with_capacity(n_int * 2 * dim);
        for x in &interior {
            for k in 0..2 * dim {
                neighbors.push(lookup[flat(&add(x, &unit_step(k)))]);
            }
        }
        Ok(LatticeDomain { dim, kind, interior, boundary, lo, extent, lookup, neighbors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn interior(&self) -> &[Site] {
        &self.interior
    }

    pub fn boundary(&self) -> &[Site] {
        &self.boundary
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// `#B̄ = #B + #∂B`
    pub fn n_closure(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    /// Site with closure index `i` (interior first, then boundary).
    pub fn site(&self, i: usize) -> Site {
        if i < self.interior.len() {
            self.interior[i]
        } else {
            self.boundary[i - self.interior.len()]
        }
    }

    pub fn closure(&self) -> impl Iterator<Item = Site> + '_ {
        self.interior.iter().chain(self.boundary.iter()).copied()
    }

    /// Closure index of `x`, if `x ∈ B̄`.
    #[inline]
    pub fn index_of(&self, x: &Site) -> Option<usize> {
        let mut i = 0usize;
        for a in 0..MAX_DIM {
            let off = x[a] as i64 - self.lo[a] as i64;
            if off < 0 || off >= self.extent[a] as i64 {
                return None;
            }
            i = i * self.extent[a] + off as usize;
        }
        match self.lookup[i] {
            ABSENT => None,
            v => Some(v as usize),
        }
    }

    pub fn contains_interior(&self, x: &Site) -> bool {
        self.index_of(x).is_some_and(|i| i < self.interior.len())
    }

    pub fn contains_closure(&self, x: &Site) -> bool {
        self.index_of(x).is_some()
    }

    /// Closure indices of the `2d` neighbours of interior site `i`, in step order.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        let k = 2 * self.dim;
        &self.neighbors[i * k..(i + 1) * k]
    }

    /// Whether the interior is connected under nearest-neighbour steps.
    pub fn is_connected(&self) -> bool {
        let n = self.interior.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in self.neighbors(i) {
                let j = j as usize;
                if j < n && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Euclidean diameter of `B̄`. Every interior site is the midpoint of two
    /// closure sites, so the maximum is attained on boundary pairs.
    pub fn diameter(&self) -> f64 {
        let b = &self.boundary;
        let mut best = 0i64;
        for i in 0..b.len() {
            for j in (i + 1)..b.len() {
                best = best.max(norm_sq(&sub(&b[i], &b[j])));
            }
        }
        (best as f64).sqrt()
    }

    /// Largest `|x|` over the boundary.
    pub fn boundary_radius(&self) -> f64 {
        self.boundary.iter().map(norm_sq).max().map_or(0.0, |v| (v as f64).sqrt())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(config_err(format!("dimension {dim} not in 1..=3")))
    }
}

fn for_box(dim: usize, lo: i32, hi: i32, mut f: impl FnMut(Site)) {
    let r = |a: usize| if a < dim { lo..=hi } else { 0..=0 };
    for x0 in r(0) {
        for x1 in r(1) {
            for x2 in r(2) {
                f([x0, x1, x2]);
            }
        }
    }
}

/// Centre `y ∈ 3^m Z^d` of the unique triadic cube `y + Q_m` containing `x`.
pub fn subcube_of(x: &Site, m: u32) -> Site {
    let side = 3i64.pow(m);
    let h = (side - 1) / 2;
    let mut y = [0; MAX_DIM];
    for a in 0..MAX_DIM {
        y[a] = ((x[a] as i64 + h).div_euclid(side) * side) as i32;
    }
    y
}

/// Space-time cylinder `K_R = B_R × {0, ..., ⌈R²⌉ - 1}` with parabolic
/// boundary `(∂B_R × {1..T}) ∪ (B_R × {T})`, `T = ⌈R²⌉`.
#[derive(Clone, Debug)]
pub struct SpaceTimeDomain {
    radius: Radius,
    space: Arc<LatticeDomain>,
    horizon: usize,
}

impl SpaceTimeDomain {
    pub fn cylinder(radius: Radius, dim: usize) -> Result<Self> {
        let space = Arc::new(LatticeDomain::ball(radius, dim)?);
        Ok(SpaceTimeDomain { radius, space, horizon: radius.ceil_sq() as usize })
    }

    pub fn radius(&self) -> Radius {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn space(&self) -> &Arc<LatticeDomain> {
        &self.space
    }

    /// `T = ⌈R²⌉`, the terminal time level.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn contains_interior(&self, x: &Site, n: i64) -> bool {
        n >= 0 && (n as usize) < self.horizon && self.space.contains_interior(x)
    }

    /// Membership in `K̄_R = K_R ∪ ∂^p K_R`.
    pub fn contains_closure(&self, x: &Site, n: i64) -> bool {
        if n < 0 || n as usize > self.horizon {
            return false;
        }
        match self.space.index_of(x) {
            None => false,
            Some(i) if i < self.space.n_interior() => true,
            Some(_) => n >= 1,
        }
    }

    pub fn interior_points(&self) -> impl Iterator<Item = (Site, usize)> + '_ {
        (0..self.horizon).flat_map(move |n| self.space.interior().iter().map(move |x| (*x, n)))
    }

    /// Lateral boundary `∂B_R × {1..T}`.
    pub fn lateral_boundary(&self) -> impl Iterator<Item = (Site, usize)> + '_ {
        (1..=self.horizon).flat_map(move |n| self.space.boundary().iter().map(move |x| (*x, n)))
    }

    /// Time boundary `B_R × {T}`.
    pub fn time_boundary(&self) -> impl Iterator<Item = (Site, usize)> + '_ {
        self.space.interior().iter().map(move |x| (*x, self.horizon))
    }

    pub fn parabolic_boundary(&self) -> impl Iterator<Item = (Site, usize)> + '_ {
        self.lateral_boundary().chain(self.time_boundary())
    }
}

/// Real values on the closure `B̄` of a domain.
#[derive(Clone, Debug)]
pub struct LatticeField {
    domain: Arc<LatticeDomain>,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(domain: Arc<LatticeDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.n_closure() {
            return Err(config_err(format!(
                "field has {} values, domain closure has {} sites",
                values.len(),
                domain.n_closure()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain_err(format!("non-finite field value at {:?}", domain.site(i))));
        }
        Ok(LatticeField { domain, values })
    }

    pub fn zeros(domain: Arc<LatticeDomain>) -> Self {
        let n = domain.n_closure();
        LatticeField { domain, values: vec![0.0; n] }
    }

    pub fn from_fn(domain: Arc<LatticeDomain>, f: impl Fn(&Site) -> f64) -> Self {
        let values = domain.closure().map(|x| f(&x)).collect();
        LatticeField { domain, values }
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: &Site) -> Result<f64> {
        self.domain
            .index_of(x)
            .map(|i| self.values[i])
            .ok_or_else(|| domain_err(format!("site {x:?} outside the field's closure")))
    }

    pub fn interior_values(&self) -> &[f64] {
        &self.values[..self.domain.n_interior()]
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.interior_values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with header `x1,...,xd,value`, rows in closure index order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.domain.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        for (x, v) in self.domain.closure().zip(&self.values) {
            for c in &x[..d] {
                write!(out, "{c},")?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

/// Values on `K̄_R`, stored level by level over the spatial closure.
/// Points `(∂B_R, 0)` are not part of `K̄_R` and cannot be read.
#[derive(Clone, Debug)]
pub struct SpaceTimeField {
    domain: Arc<SpaceTimeDomain>,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(domain: Arc<SpaceTimeDomain>) -> Self {
        let n = domain.space().n_closure() * (domain.horizon() + 1);
        SpaceTimeField { domain, values: vec![0.0; n] }
    }

    pub fn from_fn(domain: Arc<SpaceTimeDomain>, f: impl Fn(&Site, usize) -> f64) -> Self {
        let mut out = Self::zeros(domain);
        let space = out.domain.space().clone();
        for n in 0..=out.domain.horizon() {
            for (i, x) in space.closure().enumerate() {
                if n > 0 || i < space.n_interior() {
                    let k = out.slot(i, n);
                    out.values[k] = f(&x, n);
                }
            }
        }
        out
    }

    pub fn domain(&self) -> &Arc<SpaceTimeDomain> {
        &self.domain
    }

    #[inline]
    pub(crate) fn slot(&self, i: usize, n: usize) -> usize {
        n * self.domain.space().n_closure() + i
    }

    #[inline]
    pub(crate) fn at(&self, i: usize, n: usize) -> f64 {
        self.values[self.slot(i, n)]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, n: usize, v: f64) {
        let k = self.slot(i, n);
        self.values[k] = v;
    }

    pub fn get(&self, x: &Site, n: i64) -> Result<f64> {
        if !self.domain.contains_closure(x, n) {
            return Err(domain_err(format!("point ({x:?}, {n}) outside the cylinder closure")));
        }
        let i = self.domain.space().index_of(x).unwrap();
        Ok(self.at(i, n as usize))
    }

    /// CSV with header `x1,...,xd,n,value`, time-major over `K̄_R`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let space = self.domain.space();
        let d = space.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(out, "{},n,value", header.join(","))?;
        for n in 0..=self.domain.horizon() {
            for (i, x) in space.closure().enumerate() {
                if n == 0 && i >= space.n_interior() {
                    continue;
                }
                for c in &x[..d] {
                    write!(out, "{c},")?;
                }
                writeln!(out, "{n},{}", self.at(i, n))?;
            }
        }
        Ok(())
    }
}

/// `tr(ω(x)∇²u(x)) = Σ_i ω_i(x)[u(x+e_i) + u(x-e_i) - 2u(x)]`.
pub fn apply_tr_hessian(env: &Environment, field: &LatticeField, x: &Site) -> Result<f64> {
    let w = env.weights(x)?;
    let ux = field.get(x)?;
    let mut s = 0.0;
    for (a, &wa) in w.iter().enumerate() {
        let up = field.get(&add(x, &unit_step(2 * a)))?;
        let dn = field.get(&add(x, &unit_step(2 * a + 1)))?;
        s += wa * (up + dn - 2.0 * ux);
    }
    Ok(s)
}

/// `L_ω u(x) = Σ_y ω(x,y)[u(y) - u(x)] = tr(ω∇²u) / (2 tr ω)`.
pub fn apply_l(env: &Environment, field: &LatticeField, x: &Site) -> Result<f64> {
    Ok(apply_tr_hessian(env, field, x)? / (2.0 * env.trace(x)?))
}

/// Both forms of the space-time operator at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParabolicValue {
    /// `(1 + tr ω) ℒ_ω u`
    pub raw: f64,
    /// `ℒ_ω u(x,n) = E[u(Ŷ_1)] - u(x,n)` for the lazy space-time chain.
    pub normalized: f64,
}

/// The generator of the lazy chain that moves to `(x ± e_i, n+1)` with
/// probability `ω_i / (2(1 + tr ω))` and to `(x, n+1)` with `1 / (1 + tr ω)`.
///
/// The raw value expands to
/// `½tr(ω∇²u(x,n+1)) + (1 + tr ω)[u(x,n+1) - u(x,n)]`.
pub fn apply_parabolic(env: &Environment, field: &SpaceTimeField, x: &Site, n: i64) -> Result<ParabolicValue> {
    let dom = field.domain();
    if !dom.contains_interior(x, n) {
        return Err(domain_err(format!("point ({x:?}, {n}) is not interior to the cylinder")));
    }
    let w = env.weights(x)?;
    let tr = env.trace(x)?;
    let next = field.get(x, n + 1)?;
    let mut hess = 0.0;
    for (a, &wa) in w.iter().enumerate() {
        let up = field.get(&add(x, &unit_step(2 * a)), n + 1)?;
        let dn = field.get(&add(x, &unit_step(2 * a + 1)), n + 1)?;
        hess += wa * (up + dn - 2.0 * next);
    }
    let raw = 0.5 * hess + (1.0 + tr) * (next - field.get(x, n)?);
    Ok(ParabolicValue { raw, normalized: raw / (1.0 + tr) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvBox, EnvironmentLaw, WeightLaw};

    fn identity_env(dim: usize, r: u32) -> Environment {
        let law = EnvironmentLaw::constant(dim, 1.0).unwrap();
        Environment::sample(&law, EnvBox::cube(dim, r).unwrap(), 0).unwrap()
    }

    #[test]
    fn ball_examples() {
        let b = LatticeDomain::ball(Radius::int(1).unwrap(), 2).unwrap();
        assert_eq!(b.interior(), &[ORIGIN]);
        let mut bd = b.boundary().to_vec();
        bd.sort();
        assert_eq!(bd, vec![[-1, 0, 0], [0, -1, 0], [0, 1, 0], [1, 0, 0]]);

        let b = LatticeDomain::ball(Radius::from_f64(1.5).unwrap(), 1).unwrap();
        assert_eq!(b.interior(), &[[-1, 0, 0], [0, 0, 0], [1, 0, 0]]);
        assert_eq!(b.boundary(), &[[-2, 0, 0], [2, 0, 0]]);

        // brute-force count of |x| < 2 in Z^2
        let mut count = 0;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                if ((i * i + j * j) as f64) < 4.0 {
                    count += 1;
                }
            }
        }
        let b = LatticeDomain::ball(Radius::int(2).unwrap(), 2).unwrap();
        assert_eq!(b.n_interior(), count);
        assert_eq!(count, 9);
    }

    #[test]
    fn boundary_matches_definition_by_enumeration() {
        for (r, d) in [(3u32, 2usize), (4, 3), (5, 1), (7, 2)] {
            let b = LatticeDomain::ball(Radius::int(r).unwrap(), d).unwrap();
            let mut expected = Vec::new();
            let lim = r as i32 + 1;
            for_box(d, -lim, lim, |z| {
                let inside = norm_sq(&z) < (r * r) as i64;
                let touches = (0..2 * d).any(|k| norm_sq(&add(&z, &unit_step(k))) < (r * r) as i64);
                if !inside && touches {
                    expected.push(z);
                }
            });
            expected.sort();
            assert_eq!(b.boundary(), expected.as_slice());
            assert!(b.is_connected());
        }
    }

    #[test]
    fn triadic_examples() {
        let q = LatticeDomain::triadic(1, 2).unwrap();
        assert_eq!(q.n_interior(), 9);
        assert!(q.interior().iter().all(|x| x[0].abs() <= 1 && x[1].abs() <= 1));
        let q = LatticeDomain::triadic(2, 1).unwrap();
        assert_eq!(q.interior().first(), Some(&[-4, 0, 0]));
        assert_eq!(q.n_interior(), 9);
        assert_eq!(LatticeDomain::triadic(2, 3).unwrap().n_interior(), 729);
        assert_eq!(subcube_of(&[4, 0, 0], 1), [3, 0, 0]);
        assert_eq!(subcube_of(&[-5, 13, 0], 2), [-9, 9, 0]);
    }

    #[test]
    fn subcube_contains_point() {
        for x0 in -30..30 {
            for m in 0..4 {
                let y = subcube_of(&[x0, 7 - x0, 0], m);
                let side = 3i32.pow(m);
                assert!((x0 - y[0]).abs() * 2 < side && (7 - x0 - y[1]).abs() * 2 < side);
                assert!(y[0] % side == 0 && y[1] % side == 0);
            }
        }
    }

    #[test]
    fn cylinder_examples() {
        let k = SpaceTimeDomain::cylinder(Radius::int(1).unwrap(), 2).unwrap();
        assert_eq!(k.horizon(), 1);
        assert_eq!(k.interior_points().collect::<Vec<_>>(), vec![(ORIGIN, 0)]);
        let k = SpaceTimeDomain::cylinder(Radius::int(2).unwrap(), 1).unwrap();
        assert_eq!(k.horizon(), 4);
        assert_eq!(k.interior_points().count(), 12);
        let k = SpaceTimeDomain::cylinder(Radius::from_f64(2.5).unwrap(), 2).unwrap();
        assert_eq!(k.horizon(), 7);
    }

    #[test]
    fn parabolic_boundary_partition() {
        for r in 1..=10u32 {
            for d in 1..=2 {
                let k = SpaceTimeDomain::cylinder(Radius::int(r).unwrap(), d).unwrap();
                let lat: Vec<_> = k.lateral_boundary().collect();
                let tim: Vec<_> = k.time_boundary().collect();
                let mut all: Vec<_> = k.parabolic_boundary().collect();
                all.sort();
                all.dedup();
                assert_eq!(all.len(), lat.len() + tim.len());
                for (x, n) in k.interior_points() {
                    for s in 0..2 * d {
                        assert!(k.contains_closure(&add(&x, &unit_step(s)), n as i64 + 1));
                    }
                    assert!(k.contains_closure(&x, n as i64 + 1));
                }
            }
        }
    }

    #[test]
    fn radius_arithmetic() {
        let r = Radius::from_f64(2.5).unwrap();
        assert_eq!((r.num(), r.den()), (5, 2));
        assert_eq!(r.ceil_sq(), 7);
        assert!(r.contains_norm_sq(6));
        assert!(!Radius::int(3).unwrap().contains_norm_sq(9));
        assert_eq!(Radius::ratio(10, 4).unwrap(), r);
    }

    #[test]
    fn operator_examples() {
        let env = identity_env(2, 5);
        let dom = Arc::new(LatticeDomain::ball(Radius::int(3).unwrap(), 2).unwrap());
        let affine = LatticeField::from_fn(dom.clone(), |x| 2.0 * x[0] as f64 - x[1] as f64 + 0.5);
        let quad = LatticeField::from_fn(dom.clone(), |x| norm_sq(x) as f64);
        for x in dom.interior() {
            assert_eq!(apply_tr_hessian(&env, &affine, x).unwrap(), 0.0);
            assert_eq!(apply_tr_hessian(&env, &quad, x).unwrap(), 4.0);
            assert_eq!(apply_l(&env, &quad, x).unwrap(), 1.0);
        }
        let law = EnvironmentLaw::new(2, WeightLaw::Uniform { low: 1.0, high: 3.0 }).unwrap();
        let env = Environment::from_fn(&law, EnvBox::cube(2, 5).unwrap(), |_| vec![3.0, 1.0]).unwrap();
        let x1sq = LatticeField::from_fn(dom.clone(), |x| (x[0] * x[0]) as f64);
        assert_eq!(apply_tr_hessian(&env, &x1sq, &ORIGIN).unwrap(), 6.0);
        assert!(apply_tr_hessian(&env, &x1sq, &[3, 0, 0]).is_err());
    }

    #[test]
    fn l_matches_hand_sum_in_one_dimension() {
        let law = EnvironmentLaw::new(1, WeightLaw::Uniform { low: 1.0, high: 2.0 }).unwrap();
        let env = Environment::sample(&law, EnvBox::cube(1, 3).unwrap(), 3).unwrap();
        let dom = Arc::new(LatticeDomain::explicit(vec![[-1, 0, 0], [0, 0, 0], [1, 0, 0]], 1).unwrap());
        let vals = [0.3, -1.2, 2.5, 0.7, 1.9];
        let u = LatticeField::from_fn(dom.clone(), |x| vals[(x[0] + 2) as usize]);
        for x in dom.interior() {
            let i = (x[0] + 2) as usize;
            let hand = 0.5 * (vals[i + 1] - vals[i]) + 0.5 * (vals[i - 1] - vals[i]);
            assert!((apply_l(&env, &u, x).unwrap() - hand).abs() < 1e-15);
        }
    }

    #[test]
    fn parabolic_operator_examples() {
        let env = identity_env(2, 4);
        let k = Arc::new(SpaceTimeDomain::cylinder(Radius::int(2).unwrap(), 2).unwrap());
        let c = SpaceTimeField::from_fn(k.clone(), |_, _| 4.2);
        let t = SpaceTimeField::from_fn(k.clone(), |_, n| n as f64);
        let q = SpaceTimeField::from_fn(k.clone(), |x, _| norm_sq(x) as f64);
        for (x, n) in k.interior_points() {
            let n = n as i64;
            assert_eq!(apply_parabolic(&env, &c, &x, n).unwrap().raw, 0.0);
            let v = apply_parabolic(&env, &t, &x, n).unwrap();
            assert_eq!(v.normalized, 1.0);
            assert_eq!(v.raw, 3.0);
            assert_eq!(apply_parabolic(&env, &q, &x, n).unwrap().raw, 2.0);
        }
        assert!(apply_parabolic(&env, &c, &ORIGIN, 4).is_err());
    }

    #[test]
    fn csv_dump_header_and_rows() {
        let dom = Arc::new(LatticeDomain::ball(Radius::int(1).unwrap(), 2).unwrap());
        let u = LatticeField::from_fn(dom, |x| x[0] as f64 * 0.5);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,value");
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines.len(), 6);
    }
}

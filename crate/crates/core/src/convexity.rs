//! Discrete subdifferentials, their volumes, and the ABP inequalities.
//!
//! The cell of `u` at `x` relative to `B` is
//! `∂u(x;B) = {p : u(x) - p·x <= u(y) - p·y for all y ∈ B̄}`. The nearest
//! neighbours alone confine it to the box
//! `p_i ∈ [u(x) - u(x-e_i), u(x+e_i) - u(x)]`; the remaining constraints are
//! applied by clipping that box. Volumes are exact for `d <= 2` and estimated
//! by hit-or-miss sampling for `d = 3`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Observable};
use crate::error::{domain_err, Error, Result};
use crate::lattice::{self, LatticeDomain, LatticeField, Site, SpaceTimeField, MAX_DIM};
use crate::rng::{derive_seed, tag, Stream};
use crate::solver::{expected_exit_time, solve_corrector, SolveSettings};

/// `p·a <= b`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub a: [f64; MAX_DIM],
    pub b: f64,
}

impl HalfSpace {
    #[inline]
    fn slack(&self, p: &[f64; MAX_DIM]) -> f64 {
        self.b - (self.a[0] * p[0] + self.a[1] * p[1] + self.a[2] * p[2])
    }

    fn tolerance(&self, pmax: f64) -> f64 {
        1e-12 * (1.0 + self.b.abs() + (self.a[0].abs() + self.a[1].abs() + self.a[2].abs()) * pmax)
    }
}

/// Settings for the sampled volumes used when `d = 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeOptions {
    /// Target relative standard error.
    pub rel_se: f64,
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for VolumeOptions {
    fn default() -> Self {
        VolumeOptions { rel_se: 0.01, max_samples: 1_000_000, seed: 0 }
    }
}

/// The subdifferential at one point: the neighbour box, the constraints that
/// cut it (constraints satisfied on the whole box are dropped), and the volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdifferentialCell {
    pub site: Site,
    pub dim: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
    pub halfspaces: Vec<HalfSpace>,
    /// Polygon vertices (counter-clockwise) when `d = 2` and the cell is nonempty.
    pub vertices: Vec<[f64; 2]>,
    pub volume: f64,
    /// Zero for exact volumes.
    pub se: f64,
    pub empty: bool,
}

impl SubdifferentialCell {
    /// Membership up to a small relative tolerance.
    pub fn contains(&self, p: &[f64]) -> bool {
        let mut q = [0.0; MAX_DIM];
        q[..self.dim].copy_from_slice(&p[..self.dim]);
        let pmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.dim).all(|i| q[i] >= self.lo[i] - 1e-12 * (1.0 + pmax) && q[i] <= self.hi[i] + 1e-12 * (1.0 + pmax))
            && self.halfspaces.iter().all(|h| h.slack(&q) >= -h.tolerance(pmax))
    }

    /// Extent of the cell along each axis (`0` for empty cells).
    pub fn widths(&self) -> Vec<f64> {
        if self.empty {
            return vec![0.0; self.dim];
        }
        if self.dim == 2 {
            return (0..2)
                .map(|i| {
                    let lo = self.vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                    let hi = self.vertices.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .collect();
        }
        (0..self.dim).map(|i| (self.hi[i] - self.lo[i]).max(0.0)).collect()
    }

    pub fn summary(&self) -> CellSummary {
        CellSummary { site: self.site[..self.dim].to_vec(), volume: self.volume, se: self.se, empty: self.empty }
    }
}

/// JSON form of a cell: `{site, volume, se, empty}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub site: Vec<i32>,
    pub volume: f64,
    pub se: f64,
    pub empty: bool,
}

fn build_cell(
    site: Site,
    dim: usize,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    constraints: impl Iterator<Item = HalfSpace>,
    opts: &VolumeOptions,
) -> SubdifferentialCell {
    let mut cell = SubdifferentialCell {
        site,
        dim,
        lo,
        hi,
        halfspaces: vec![],
        vertices: vec![],
        volume: 0.0,
        se: 0.0,
        empty: false,
    };
    let pmax = (0..dim).fold(0.0f64, |m, i| m.max(lo[i].abs()).max(hi[i].abs()));
    if (0..dim).any(|i| lo[i] > hi[i] + 1e-12 * (1.0 + pmax)) {
        cell.empty = true;
        return cell;
    }
    for i in 0..dim {
        if cell.lo[i] > cell.hi[i] {
            let mid = 0.5 * (cell.lo[i] + cell.hi[i]);
            cell.lo[i] = mid;
            cell.hi[i] = mid;
        }
    }
    let (lo, hi) = (cell.lo, cell.hi);
    for h in constraints {
        // largest value of a·p over the box
        let mut top = 0.0;
        let mut bottom = 0.0;
        for i in 0..dim {
            let (x, y) = (h.a[i] * lo[i], h.a[i] * hi[i]);
            top += x.max(y);
            bottom += x.min(y);
        }
        let tol = h.tolerance(pmax);
        if top <= h.b + tol {
            continue;
        }
        if bottom > h.b + tol {
            cell.empty = true;
            cell.halfspaces.push(h);
            return cell;
        }
        cell.halfspaces.push(h);
    }
    match dim {
        1 => {
            let (mut a, mut b) = (lo[0], hi[0]);
            for h in &cell.halfspaces {
                if h.a[0] > 0.0 {
                    b = b.min(h.b / h.a[0]);
                } else if h.a[0] < 0.0 {
                    a = a.max(h.b / h.a[0]);
                }
            }
            if a > b + 1e-12 * (1.0 + pmax) {
                cell.empty = true;
            } else {
                cell.volume = (b - a).max(0.0);
                cell.lo[0] = a;
                cell.hi[0] = b.max(a);
            }
        }
        2 => {
            let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
            for h in &cell.halfspaces {
                poly = clip_polygon(&poly, h, h.tolerance(pmax));
                if poly.is_empty() {
                    break;
                }
            }
            if poly.is_empty() {
                cell.empty = true;
            } else {
                cell.volume = polygon_area(&poly);
                cell.vertices = poly;
            }
        }
        _ => {
            let (v, se, any_hit) = sampled_volume(&cell, opts);
            cell.volume = v;
            cell.se = se;
            // a cell can be nonempty with zero volume; emptiness here is only
            // decided when the box itself is degenerate or no sample landed
            cell.empty = !any_hit && (0..3).all(|i| hi[i] > lo[i]) && !cell.contains(&center(&cell));
        }
    }
    cell
}

fn center(cell: &SubdifferentialCell) -> [f64; MAX_DIM] {
    [0, 1, 2].map(|i| 0.5 * (cell.lo[i] + cell.hi[i]))
}

/// One Sutherland-Hodgman pass against `a·p <= b`.
fn clip_polygon(poly: &[[f64; 2]], h: &HalfSpace, tol: f64) -> Vec<[f64; 2]> {
    let f = |p: &[f64; 2]| h.a[0] * p[0] + h.a[1] * p[1] - h.b;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let p = poly[k];
        let q = poly[(k + 1) % poly.len()];
        let (fp, fq) = (f(&p), f(&q));
        let (pin, qin) = (fp <= tol, fq <= tol);
        if pin {
            out.push(p);
        }
        if pin != qin && (fp > 0.0) != (fq > 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Shoelace formula.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s.abs()
}

fn sampled_volume(cell: &SubdifferentialCell, opts: &VolumeOptions) -> (f64, f64, bool) {
    let box_vol: f64 = (0..3).map(|i| cell.hi[i] - cell.lo[i]).product();
    if box_vol <= 0.0 {
        return (0.0, 0.0, false);
    }
    if cell.halfspaces.is_empty() {
        return (box_vol, 0.0, true);
    }
    let mut stream = Stream::new(derive_seed(opts.seed, &[tag::VOLUME]), site_stream(&cell.site));
    let batch = 1000;
    let (mut hits, mut total) = (0usize, 0usize);
    loop {
        for _ in 0..batch {
            let p = [0, 1, 2].map(|i| cell.lo[i] + (cell.hi[i] - cell.lo[i]) * stream.uniform());
            if cell.halfspaces.iter().all(|h| h.slack(&p) >= 0.0) {
                hits += 1;
            }
        }
        total += batch;
        let frac = hits as f64 / total as f64;
        let se = (frac * (1.0 - frac) / total as f64).sqrt();
        let done = hits > 0 && se <= opts.rel_se * frac;
        if done || total >= opts.max_samples {
            return (box_vol * frac, box_vol * se.max(if hits == 0 { 1.0 / total as f64 } else { 0.0 }), hits > 0);
        }
    }
}

fn site_stream(x: &Site) -> u64 {
    x.iter().fold(0u64, |acc, &c| (acc << 21) | ((c as i64 + (1 << 20)) as u64 & 0x1f_ffff))
}

fn neighbour_box(
    get: impl Fn(&Site) -> Result<f64>,
    x: &Site,
    ux: f64,
    dim: usize,
) -> Result<([f64; MAX_DIM], [f64; MAX_DIM])> {
    let mut lo = [0.0; MAX_DIM];
    let mut hi = [0.0; MAX_DIM];
    for i in 0..dim {
        hi[i] = get(&lattice::add(x, &lattice::unit_step(2 * i)))? - ux;
        lo[i] = ux - get(&lattice::add(x, &lattice::unit_step(2 * i + 1)))?;
    }
    Ok((lo, hi))
}

fn offset(y: &Site, x: &Site) -> [f64; MAX_DIM] {
    [0, 1, 2].map(|i| (y[i] - x[i]) as f64)
}

/// `∂u(x;B)` with `B` the field's domain and `x ∈ B`.
pub fn subdifferential(field: &LatticeField, x: &Site) -> Result<SubdifferentialCell> {
    subdifferential_with(field, x, &VolumeOptions::default())
}

pub fn subdifferential_with(field: &LatticeField, x: &Site, opts: &VolumeOptions) -> Result<SubdifferentialCell> {
    let dom = field.domain();
    if !dom.contains_interior(x) {
        return Err(domain_err(format!("site {x:?} is not in the domain interior")));
    }
    let ux = field.get(x)?;
    let (lo, hi) = neighbour_box(|y| field.get(y), x, ux, dom.dim())?;
    let vals = field.values();
    let constraints =
        dom.closure().enumerate().filter(|(_, y)| y != x).map(|(j, y)| HalfSpace { a: offset(&y, x), b: vals[j] - ux });
    Ok(build_cell(*x, dom.dim(), lo, hi, constraints, opts))
}

/// Sum of cell volumes and standard errors over a set of interior sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSum {
    pub volume: f64,
    pub se: f64,
}

/// `|∂u(A;B)| = Σ_{x∈A} |∂u(x;B)|`.
pub fn subdifferential_volume(field: &LatticeField, sites: &[Site]) -> Result<VolumeSum> {
    subdifferential_volume_with(field, sites, &VolumeOptions::default())
}

pub fn subdifferential_volume_with(field: &LatticeField, sites: &[Site], opts: &VolumeOptions) -> Result<VolumeSum> {
    let cells: Vec<(f64, f64)> = sites
        .par_iter()
        .map(|x| subdifferential_with(field, x, opts).map(|c| (c.volume, c.se)))
        .collect::<Result<_>>()?;
    let volume = cells.iter().map(|c| c.0).sum();
    let se = cells.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
    Ok(VolumeSum { volume, se })
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(d as f64 / 2.0) / libm::tgamma(d as f64 / 2.0 + 1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbpReport {
    /// `min_{∂B} u - min_B u`
    pub m: f64,
    /// `diam(B̄) (|∂u(B)| / v_d)^{1/d}`
    pub rhs: f64,
    pub volume: f64,
    pub volume_se: f64,
    pub diameter: f64,
    pub holds: bool,
}

/// Elliptic ABP with the constant read off from `𝔹_{M/diam} ⊆ ∂u(B)`.
/// Sampled volumes enter as `volume + 3 se`.
pub fn abp_check(field: &LatticeField) -> Result<AbpReport> {
    abp_check_with(field, &VolumeOptions::default())
}

pub fn abp_check_with(field: &LatticeField, opts: &VolumeOptions) -> Result<AbpReport> {
    let dom = field.domain();
    if !dom.is_connected() {
        return Err(Error::Precondition("ABP check needs a connected domain".into()));
    }
    let d = dom.dim();
    let n = dom.n_interior();
    let vals = field.values();
    let min_int = vals[..n].iter().copied().fold(f64::INFINITY, f64::min);
    let min_bd = vals[n..].iter().copied().fold(f64::INFINITY, f64::min);
    let m = min_bd - min_int;
    let vs = subdifferential_volume_with(field, dom.interior(), opts)?;
    let diameter = dom.diameter();
    let vol = vs.volume + 3.0 * vs.se;
    let rhs = diameter * (vol / unit_ball_volume(d)).powf(1.0 / d as f64);
    let tol = 1e-9 * (1.0 + m.abs() + rhs);
    Ok(AbpReport { m, rhs, volume: vs.volume, volume_se: vs.se, diameter, holds: m <= rhs + tol })
}

/// `|∂u(x;B)|` against the bound `(2 (L_ω u(x))_+ / κ)^d`, and the stronger
/// per-axis containment `width_i <= (L_ω u(x))_+ / κ` that the bound comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCheck {
    pub site: Site,
    pub lu: f64,
    pub volume: f64,
    pub widths: Vec<f64>,
    pub empty: bool,
    pub holds: bool,
}

pub fn containment_check(env: &Environment, field: &LatticeField, x: &Site) -> Result<ContainmentCheck> {
    let cell = subdifferential(field, x)?;
    let lu = lattice::apply_l(env, field, x)?;
    let kappa = env.kappa();
    let scale = 1e-9 * (1.0 + field.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let side = lu.max(0.0) / kappa;
    let widths = cell.widths();
    let mut holds = widths.iter().all(|&w| w <= side + scale);
    holds &= cell.volume <= (2.0 * side).powi(field.domain().dim() as i32) + scale;
    if lu < -scale {
        holds &= cell.empty;
    }
    if lu <= scale {
        holds &= cell.volume <= scale;
    }
    Ok(ContainmentCheck { site: *x, lu, volume: cell.volume, widths, empty: cell.empty, holds })
}

/// `μ̂_n(s) = |∂u_n(Q_n)| / #Q_n` for `u_n = φ_n - s E[τ]`, and the starred
/// value for `-φ_n - s E[τ]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub n: u32,
    pub s: f64,
    pub mu_hat: f64,
    pub mu_hat_star: f64,
    pub se: f64,
    pub se_star: f64,
}

impl MuEstimate {
    /// `2^d [(2 |ψ|_inf + s)_+ / κ]^d`
    pub fn upper_bound(dim: usize, psi_sup: f64, s: f64, kappa: f64) -> f64 {
        (2.0 * (2.0 * psi_sup + s).max(0.0) / kappa).powi(dim as i32)
    }
}

pub fn mu_hat(
    env: &Environment,
    n: u32,
    s: f64,
    psi: &Observable,
    mean: f64,
    settings: &SolveSettings,
) -> Result<MuEstimate> {
    let dom = Arc::new(LatticeDomain::triadic(n, env.dim())?);
    let (phi, _) = solve_corrector(env, dom.clone(), psi, mean, settings)?;
    let tau = if s != 0.0 { Some(expected_exit_time(env, dom.clone(), settings)?.0) } else { None };
    let combine = |sign: f64| -> Result<LatticeField> {
        let vals = phi
            .values()
            .iter()
            .enumerate()
            .map(|(i, &p)| sign * p - tau.as_ref().map_or(0.0, |t| s * t.values()[i]))
            .collect();
        LatticeField::new(dom.clone(), vals)
    };
    let opts = VolumeOptions { seed: env.seed(), ..Default::default() };
    let count = dom.n_interior() as f64;
    let v = subdifferential_volume_with(&combine(1.0)?, dom.interior(), &opts)?;
    let w = subdifferential_volume_with(&combine(-1.0)?, dom.interior(), &opts)?;
    Ok(MuEstimate {
        n,
        s,
        mu_hat: v.volume / count,
        mu_hat_star: w.volume / count,
        se: v.se / count,
        se_star: w.se / count,
    })
}

/// CSV `n,s,mu_hat,mu_hat_star`.
pub fn write_mu_table<W: Write>(rows: &[MuEstimate], mut out: W) -> Result<()> {
    writeln!(out, "n,s,mu_hat,mu_hat_star")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.s, r.mu_hat, r.mu_hat_star)?;
    }
    Ok(())
}

/// Cell dump as a JSON array of `{site, volume, se, empty}`.
pub fn write_cells_json<W: Write>(cells: &[SubdifferentialCell], out: W) -> Result<()> {
    let rows: Vec<CellSummary> = cells.iter().map(|c| c.summary()).collect();
    serde_json::to_writer_pretty(out, &rows)?;
    Ok(())
}

/// Spatial cell of the parabolic subdifferential at `(x,n)`: constraints from
/// every `(y,m) ∈ K̄_R` with `m > n`.
pub fn parabolic_subdifferential(field: &SpaceTimeField, x: &Site, n: usize) -> Result<SubdifferentialCell> {
    let dom = field.domain();
    if !dom.contains_interior(x, n as i64) {
        return Err(domain_err(format!("point ({x:?}, {n}) is not interior to the cylinder")));
    }
    let space = dom.space();
    let d = space.dim();
    let ux = field.get(x, n as i64)?;
    let (lo, hi) = neighbour_box(|y| field.get(y, n as i64 + 1), x, ux, d)?;
    let n_int = space.n_interior();
    let mut constraints = Vec::new();
    for m in (n + 1)..=dom.horizon() {
        for (j, y) in space.closure().enumerate() {
            if j >= n_int && m == 0 {
                continue;
            }
            constraints.push(HalfSpace { a: offset(&y, x), b: field.get(&y, m as i64)? - ux });
        }
    }
    // same-site future values must not lie below u(x,n)
    let mut cell =
        build_cell(*x, d, lo, hi, constraints.iter().filter(|h| h.a != [0.0; 3]).copied(), &VolumeOptions::default());
    let pmax = 1.0 + ux.abs();
    if constraints.iter().any(|h| h.a == [0.0; 3] && h.b < -1e-12 * (pmax + h.b.abs())) {
        cell.empty = true;
        cell.volume = 0.0;
        cell.se = 0.0;
        cell.vertices.clear();
    }
    Ok(cell)
}

/// `|𝒟u(x,n)| = (u(x,n+1) - u(x,n))_+ |∂u(x,n;K_R)|`.
pub fn parabolic_cell_volume(field: &SpaceTimeField, x: &Site, n: usize) -> Result<f64> {
    let cell = parabolic_subdifferential(field, x, n)?;
    if cell.empty {
        return Ok(0.0);
    }
    let inc = field.get(x, n as i64 + 1)? - field.get(x, n as i64)?;
    Ok(inc.max(0.0) * cell.volume)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicAbpReport {
    /// `min_{∂^p K_R} u - min_{K_R} u`
    pub m: f64,
    pub rhs: f64,
    /// `Σ (u(x,n+1) - u(x,n))_+ |∂u(x,n)|`
    pub volume: f64,
    /// Largest `|x|` over the lateral boundary; replaces `R` in the bound.
    pub rho: f64,
    pub constant: f64,
    pub holds: bool,
}

/// `(2^{d+1} (d+1) / v_d)^{1/(d+1)}`, from
/// `|{(ξ,h) : ρ|ξ| < h < M/2}| = v_d M^{d+1} / (2^{d+1} (d+1) ρ^d)`.
pub fn parabolic_abp_constant(d: usize) -> f64 {
    let df = d as f64;
    (2f64.powf(df + 1.0) * (df + 1.0) / unit_ball_volume(d)).powf(1.0 / (df + 1.0))
}

/// Parabolic ABP: `M <= C ρ^{d/(d+1)} (Σ |𝒟u|)^{1/(d+1)}`.
pub fn parabolic_abp_check(field: &SpaceTimeField) -> Result<ParabolicAbpReport> {
    let dom = field.domain();
    let d = dom.dim();
    let min_int = dom.interior_points().map(|(x, n)| field.get(&x, n as i64).unwrap()).fold(f64::INFINITY, f64::min);
    let min_bd = dom.parabolic_boundary().map(|(x, n)| field.get(&x, n as i64).unwrap()).fold(f64::INFINITY, f64::min);
    let m = min_bd - min_int;
    let points: Vec<(Site, usize)> = dom.interior_points().collect();
    let vols: Vec<f64> = points.par_iter().map(|(x, n)| parabolic_cell_volume(field, x, *n)).collect::<Result<_>>()?;
    let volume: f64 = vols.iter().sum();
    let rho = dom.space().boundary_radius();
    let constant = parabolic_abp_constant(d);
    let rhs = constant * rho.powf(d as f64 / (d as f64 + 1.0)) * volume.powf(1.0 / (d as f64 + 1.0));
    let tol = 1e-9 * (1.0 + m.abs() + rhs);
    Ok(ParabolicAbpReport { m, rhs, volume, rho, constant, holds: m <= rhs + tol })
}

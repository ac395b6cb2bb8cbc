//! I.i.d. balanced environments on a finite lattice box.
//!
//! An environment assigns to every site a positive diagonal matrix
//! `diag(w_1, ..., w_d)`. The walk jumps from `x` to `x ± e_i` with probability
//! `w_i / (2 tr w)`. Weights are drawn coordinate-wise i.i.d. from a
//! [`WeightLaw`], and each site reads its variates from a fixed offset of a
//! counter-based stream so the value at a site depends only on `(seed, site)`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Error, Result};
use crate::lattice::{Site, MAX_DIM};
use crate::rng::{tag, Stream};

/// Coordinates must satisfy |c| < 2^20 so that site positions pack into the
/// stream offset.
const COORD_LIMIT: i64 = 1 << 20;
const WORDS_PER_SITE: u128 = 8;

/// Distribution of each diagonal weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightLaw {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    TwoPoint { v1: f64, v2: f64, p: f64 },
}

impl WeightLaw {
    fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64, name: &str| {
            if !v.is_finite() || v <= 0.0 {
                Err(config_err(format!(
                    "weight {name} = {v} must be finite and strictly positive (uniform ellipticity)"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            WeightLaw::Constant { value } => finite_pos(value, "value"),
            WeightLaw::Uniform { low, high } => {
                finite_pos(low, "low")?;
                finite_pos(high, "high")?;
                if low > high {
                    return Err(config_err(format!("uniform law needs low <= high, got [{low}, {high}]")));
                }
                Ok(())
            }
            WeightLaw::TwoPoint { v1, v2, p } => {
                finite_pos(v1, "v1")?;
                finite_pos(v2, "v2")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(config_err(format!("two-point probability p = {p} outside [0, 1]")));
                }
                Ok(())
            }
        }
    }

    /// Smallest and largest value in the support.
    pub fn support_bounds(&self) -> (f64, f64) {
        match *self {
            WeightLaw::Constant { value } => (value, value),
            WeightLaw::Uniform { low, high } => (low, high),
            WeightLaw::TwoPoint { v1, v2, p } => {
                if p >= 1.0 {
                    (v1, v1)
                } else if p <= 0.0 {
                    (v2, v2)
                } else {
                    (v1.min(v2), v1.max(v2))
                }
            }
        }
    }

    /// Atoms of a discrete law with their probabilities; `None` for the uniform law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            WeightLaw::Constant { value } => Some(vec![(value, 1.0)]),
            WeightLaw::Uniform { .. } => None,
            WeightLaw::TwoPoint { v1, v2, p } => Some(vec![(v1, p), (v2, 1.0 - p)]),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WeightLaw::Constant { value } => value,
            WeightLaw::Uniform { low, high } => 0.5 * (low + high),
            WeightLaw::TwoPoint { v1, v2, p } => p * v1 + (1.0 - p) * v2,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            WeightLaw::Constant { .. } => 0.0,
            WeightLaw::Uniform { low, high } => (high - low).powi(2) / 12.0,
            WeightLaw::TwoPoint { v1, v2, p } => p * (1.0 - p) * (v1 - v2).powi(2),
        }
    }

    /// Inverse-CDF draw from a uniform variate.
    #[inline]
    pub fn draw(&self, u: f64) -> f64 {
        match *self {
            WeightLaw::Constant { value } => value,
            WeightLaw::Uniform { low, high } => low + (high - low) * u,
            WeightLaw::TwoPoint { v1, v2, p } => {
                if u < p {
                    v1
                } else {
                    v2
                }
            }
        }
    }
}

/// Law of an i.i.d. environment: dimension, weight distribution and the
/// ellipticity constant `kappa` with `w_i / tr w >= 2 kappa` on the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentLaw {
    dim: usize,
    weights: WeightLaw,
    kappa: f64,
}

impl EnvironmentLaw {
    /// Law with the sharp ellipticity constant `min w / (2 (min w + (d-1) max w))`.
    pub fn new(dim: usize, weights: WeightLaw) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(config_err(format!("dimension {dim} not in 1..=3")));
        }
        weights.validate()?;
        let kappa = natural_kappa(dim, &weights);
        Ok(EnvironmentLaw { dim, weights, kappa })
    }

    /// Law with a caller-declared ellipticity constant, which must be
    /// attained by every realizable weight vector.
    pub fn with_kappa(dim: usize, weights: WeightLaw, kappa: f64) -> Result<Self> {
        let mut law = Self::new(dim, weights)?;
        if !(kappa > 0.0) {
            return Err(config_err(format!("kappa = {kappa} must be positive")));
        }
        if kappa > law.kappa * (1.0 + 1e-12) {
            return Err(config_err(format!(
                "law violates the ellipticity assumption w/tr(w) >= 2*kappa*I: declared kappa = {kappa}, \
                 but the support only guarantees kappa = {}",
                law.kappa
            )));
        }
        law.kappa = kappa;
        Ok(law)
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self> {
        Self::new(dim, WeightLaw::Constant { value })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &WeightLaw {
        &self.weights
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_constant(&self) -> bool {
        let (lo, hi) = self.weights.support_bounds();
        lo == hi
    }

    /// Whether `kappa I <= w <= kappa^{-1} I` holds on the support, the
    /// two-sided bound required by the parabolic experiments.
    pub fn two_sided_bound_holds(&self) -> bool {
        let (lo, hi) = self.weights.support_bounds();
        lo >= self.kappa && hi <= 1.0 / self.kappa
    }

    /// Weight vectors spanning the support: every atom combination for
    /// discrete laws, a tensor grid with `grid` points per axis otherwise.
    pub fn support_points(&self, grid: usize) -> Vec<Vec<f64>> {
        let values: Vec<f64> = match self.weights.atoms() {
            Some(atoms) => atoms.into_iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect(),
            None => {
                let (lo, hi) = self.weights.support_bounds();
                let g = grid.max(2);
                (0..g).map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64).collect()
            }
        };
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for _ in 0..self.dim {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

fn natural_kappa(dim: usize, weights: &WeightLaw) -> f64 {
    let (lo, hi) = weights.support_bounds();
    lo / (2.0 * (lo + (dim as f64 - 1.0) * hi))
}

/// Symmetric lattice box `[-r_1, r_1] x ... x [-r_d, r_d]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvBox {
    dim: usize,
    radius: [u32; MAX_DIM],
}

impl EnvBox {
    pub fn new(dim: usize, radius: &[u32]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || radius.len() != dim {
            return Err(config_err(format!("box needs {dim} radii in dimension 1..=3")));
        }
        let mut r = [0u32; MAX_DIM];
        for (i, &ri) in radius.iter().enumerate() {
            if ri as i64 >= COORD_LIMIT {
                return Err(config_err(format!("box radius {ri} exceeds 2^20")));
            }
            r[i] = ri;
        }
        Ok(EnvBox { dim, radius: r })
    }

    /// Cube `[-r, r]^d`.
    pub fn cube(dim: usize, r: u32) -> Result<Self> {
        Self::new(dim, &vec![r; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> &[u32] {
        &self.radius[..self.dim]
    }

    pub fn min_radius(&self) -> u32 {
        *self.radius().iter().min().unwrap()
    }

    fn extent(&self, axis: usize) -> usize {
        2 * self.radius[axis] as usize + 1
    }

    pub fn len(&self) -> usize {
        (0..MAX_DIM).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &Site) -> bool {
        (0..MAX_DIM).all(|a| x[a].unsigned_abs() <= self.radius[a])
    }

    /// Sites strictly inside the box: all nearest neighbours are stored too.
    pub fn is_inner(&self, x: &Site) -> bool {
        (0..self.dim).all(|a| x[a].unsigned_abs() < self.radius[a]) && self.contains(x)
    }

    /// Row-major position (last axis fastest).
    #[inline]
    pub fn linear_index(&self, x: &Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for a in 0..MAX_DIM {
            idx = idx * self.extent(a) + (x[a] + self.radius[a] as i32) as usize;
        }
        Some(idx)
    }

    /// Index offset of a unit step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        ((axis + 1)..MAX_DIM).map(|a| self.extent(a)).product()
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut x = [0i32; MAX_DIM];
        for a in (0..MAX_DIM).rev() {
            let e = self.extent(a);
            x[a] = (idx % e) as i32 - self.radius[a] as i32;
            idx /= e;
        }
        x
    }

    /// All sites in row-major order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site_at(i))
    }
}

fn stream_position(x: &Site) -> u128 {
    let mut pack: u128 = 0;
    for &c in x.iter() {
        pack = (pack << 21) | (c as i64 + COORD_LIMIT) as u128;
    }
    pack * WORDS_PER_SITE
}

/// A realized environment on a box. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Environment {
    law: EnvironmentLaw,
    bbox: EnvBox,
    seed: u64,
    weights: Vec<f64>,
    trace: Vec<f64>,
}

impl Environment {
    /// Draw every site's weights independently. Deterministic in `(law, box, seed)`;
    /// a site's value does not depend on the box that contains it.
    pub fn sample(law: &EnvironmentLaw, bbox: EnvBox, seed: u64) -> Result<Self> {
        if law.dim() != bbox.dim() {
            return Err(config_err(format!("law dimension {} does not match box dimension {}", law.dim(), bbox.dim())));
        }
        let d = law.dim();
        let n = bbox.len();
        let mut weights = Vec::with_capacity(n * d);
        let dist = law.weights().clone();
        if law.is_constant() {
            let v = dist.support_bounds().0;
            weights.resize(n * d, v);
        } else {
            let last = MAX_DIM - 1;
            let row_len = bbox.extent(last);
            let mut stream = Stream::new(seed, tag::ENVIRONMENT);
            let mut row_start = 0usize;
            while row_start < n {
                let first = bbox.site_at(row_start);
                stream.seek(stream_position(&first));
                for _ in 0..row_len {
                    let mut draws = [0.0f64; 4];
                    for v in draws.iter_mut() {
                        *v = stream.uniform();
                    }
                    for &u in draws.iter().take(d) {
                        weights.push(dist.draw(u));
                    }
                }
                row_start += row_len;
            }
        }
        Self::assemble(law.clone(), bbox, seed, weights)
    }

    /// Environment with caller-provided weights at every site of the box.
    pub fn from_fn(law: &EnvironmentLaw, bbox: EnvBox, mut f: impl FnMut(&Site) -> Vec<f64>) -> Result<Self> {
        let d = law.dim();
        let mut weights = Vec::with_capacity(bbox.len() * d);
        for x in bbox.sites() {
            let w = f(&x);
            if w.len() != d {
                return Err(config_err(format!("site {x:?}: expected {d} weights, got {}", w.len())));
            }
            weights.extend_from_slice(&w);
        }
        Self::assemble(law.clone(), bbox, 0, weights)
    }

    fn assemble(law: EnvironmentLaw, bbox: EnvBox, seed: u64, weights: Vec<f64>) -> Result<Self> {
        let d = law.dim();
        let kappa = law.kappa();
        let mut trace = Vec::with_capacity(weights.len() / d);
        for (i, w) in weights.chunks_exact(d).enumerate() {
            let tr: f64 = w.iter().sum();
            if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
                return Err(config_err(format!("site {:?}: weights {w:?} not strictly positive", bbox.site_at(i))));
            }
            let min_ratio = w.iter().fold(f64::INFINITY, |m, &wi| m.min(wi / tr));
            if min_ratio < 2.0 * kappa * (1.0 - 1e-12) {
                return Err(config_err(format!(
                    "site {:?}: weights {w:?} violate the ellipticity assumption w/tr(w) >= 2*kappa with kappa = {kappa}",
                    bbox.site_at(i)
                )));
            }
            trace.push(tr);
        }
        Ok(Environment { law, bbox, seed, weights, trace })
    }

    pub fn law(&self) -> &EnvironmentLaw {
        &self.law
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn bbox(&self) -> &EnvBox {
        &self.bbox
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kappa(&self) -> f64 {
        self.law.kappa()
    }

    fn index(&self, x: &Site) -> Result<usize> {
        self.bbox
            .linear_index(x)
            .ok_or_else(|| domain_err(format!("site {x:?} outside environment box {:?}", self.bbox.radius())))
    }

    pub fn weights(&self, x: &Site) -> Result<&[f64]> {
        let i = self.index(x)?;
        let d = self.dim();
        Ok(&self.weights[i * d..(i + 1) * d])
    }

    pub fn trace(&self, x: &Site) -> Result<f64> {
        Ok(self.trace[self.index(x)?])
    }

    /// Weights by row-major index; used by hot loops that already hold an index.
    #[inline]
    pub(crate) fn weights_at(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.weights[idx * d..(idx + 1) * d]
    }

    #[inline]
    pub(crate) fn trace_at(&self, idx: usize) -> f64 {
        self.trace[idx]
    }

    /// Jump probabilities in the fixed order `+e_1, -e_1, ..., +e_d, -e_d`.
    pub fn transition_probabilities(&self, x: &Site) -> Result<Vec<f64>> {
        let w = self.weights(x)?;
        let tr = self.trace(x)?;
        Ok(w.iter()
            .flat_map(|&wi| {
                let p = wi / (2.0 * tr);
                [p, p]
            })
            .collect())
    }

    /// The shifted environment `y -> w(x + y)`, stored on the largest
    /// symmetric box that fits inside the original one.
    pub fn shifted(&self, by: &Site) -> Result<Environment> {
        let d = self.dim();
        let mut r = Vec::with_capacity(d);
        for a in 0..d {
            let ra = self.bbox.radius[a] as i64 - (by[a] as i64).abs();
            if ra < 0 {
                return Err(domain_err(format!("shift {by:?} leaves the environment box")));
            }
            r.push(ra as u32);
        }
        let bbox = EnvBox::new(d, &r)?;
        let mut weights = Vec::with_capacity(bbox.len() * d);
        for y in bbox.sites() {
            let z = [y[0] + by[0], y[1] + by[1], y[2] + by[2]];
            weights.extend_from_slice(self.weights(&z)?);
        }
        Self::assemble(self.law.clone(), bbox, self.seed, weights)
    }

    /// Binary dump: 32-byte header (`BHL1`, d, three box radii, reserved, seed)
    /// followed by little-endian f64 weights in row-major site order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"BHL1")?;
        out.write_all(&(self.dim() as u32).to_le_bytes())?;
        for a in 0..MAX_DIM {
            out.write_all(&self.bbox.radius[a].to_le_bytes())?;
        }
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R, law: &EnvironmentLaw) -> Result<Self> {
        let mut header = [0u8; 32];
        input.read_exact(&mut header)?;
        if &header[0..4] != b"BHL1" {
            return Err(config_err("environment dump: bad magic"));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let d = word(4) as usize;
        if d != law.dim() {
            return Err(config_err(format!("environment dump has d = {d}, law has d = {}", law.dim())));
        }
        let radius: Vec<u32> = (0..d).map(|a| word(8 + 4 * a)).collect();
        let seed = u64::from_le_bytes(header[24..32].try_into().unwrap());
        let bbox = EnvBox::new(d, &radius)?;
        let mut body = vec![0u8; bbox.len() * d * 8];
        input.read_exact(&mut body)?;
        let weights = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Self::assemble(law.clone(), bbox, seed, weights)
    }
}

/// Functionals of the weight matrix at a single site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    Const {
        value: f64,
    },
    Trace,
    InvTrace,
    /// `w_axis / tr w`, with a zero-based axis.
    CoordRatio {
        axis: usize,
    },
    /// `inner / tr w`.
    PsiOverTrace {
        inner: Box<Observable>,
    },
    /// `1{w_1 > threshold}`.
    Indicator {
        threshold: f64,
    },
}

impl Observable {
    #[inline]
    pub fn eval(&self, w: &[f64]) -> f64 {
        match self {
            Observable::Const { value } => *value,
            Observable::Trace => w.iter().sum(),
            Observable::InvTrace => 1.0 / w.iter().sum::<f64>(),
            Observable::CoordRatio { axis } => w[*axis] / w.iter().sum::<f64>(),
            Observable::PsiOverTrace { inner } => inner.eval(w) / w.iter().sum::<f64>(),
            Observable::Indicator { threshold } => {
                if w[0] > *threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Value at site `x`, i.e. the functional applied to the shifted environment at the origin.
    pub fn eval_at(&self, env: &Environment, x: &Site) -> Result<f64> {
        Ok(self.eval(env.weights(x)?))
    }

    /// Check that the observable is meaningful for a law of dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Observable::Const { value } if !value.is_finite() => Err(config_err("const observable must be finite")),
            Observable::CoordRatio { axis } if *axis >= dim => {
                Err(config_err(format!("coord_ratio axis {} out of range for d = {dim}", axis + 1)))
            }
            Observable::PsiOverTrace { inner } => inner.validate(dim),
            Observable::Indicator { threshold } if !threshold.is_finite() => {
                Err(Error::Config("indicator threshold must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// `sup |psi|` over the law's support (exact for discrete laws, a grid
    /// maximum over the support box for the uniform law).
    pub fn sup_norm(&self, law: &EnvironmentLaw) -> f64 {
        law.support_points(17).iter().map(|w| self.eval(w).abs()).fold(0.0, f64::max)
    }

    /// Whether the observable is the same at every realizable weight vector.
    pub fn is_constant_on(&self, law: &EnvironmentLaw) -> bool {
        let pts = law.support_points(5);
        let first = self.eval(&pts[0]);
        pts.iter().all(|w| self.eval(w) == first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn two_point(dim: usize) -> EnvironmentLaw {
        EnvironmentLaw::new(dim, WeightLaw::TwoPoint { v1: 1.0, v2: 3.0, p: 0.5 }).unwrap()
    }

    #[test]
    fn constant_law_gives_identity_everywhere() {
        let law = EnvironmentLaw::constant(2, 1.0).unwrap();
        let env = Environment::sample(&law, EnvBox::cube(2, 5).unwrap(), 123).unwrap();
        for x in env.bbox().sites() {
            assert_eq!(env.weights(&x).unwrap(), &[1.0, 1.0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let law = EnvironmentLaw::new(2, WeightLaw::Uniform { low: 1.0, high: 2.0 }).unwrap();
        let b = EnvBox::cube(2, 10).unwrap();
        let a = Environment::sample(&law, b, 99).unwrap();
        let c = Environment::sample(&law, b, 99).unwrap();
        assert_eq!(a.weights, c.weights);
        let e = Environment::sample(&law, b, 99 ^ 1).unwrap();
        assert_ne!(a.weights, e.weights);
    }

    #[test]
    fn enlarging_the_box_keeps_inner_sites() {
        let law = two_point(2);
        let small = Environment::sample(&law, EnvBox::cube(2, 4).unwrap(), 5).unwrap();
        let big = Environment::sample(&law, EnvBox::new(2, &[9, 6]).unwrap(), 5).unwrap();
        for x in small.bbox().sites() {
            assert_eq!(small.weights(&x).unwrap(), big.weights(&x).unwrap());
        }
    }

    #[test]
    fn two_point_mean_matches_iid_oracle() {
        let law = two_point(2);
        let env = Environment::sample(&law, EnvBox::cube(2, 50).unwrap(), 7).unwrap();
        let vals: Vec<f64> = env.bbox().sites().map(|x| env.weights(&x).unwrap()[0]).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");

        // independent i.i.d. draws with an unrelated stream
        let mut s = Stream::new(0xdead_beef, 17);
        let oracle: f64 = (0..vals.len()).map(|_| law.weights().draw(s.uniform())).sum::<f64>() / n;
        assert!((mean - oracle).abs() < 3.0 * se * 2f64.sqrt());
    }

    #[test]
    fn transition_probabilities_examples() {
        let law = EnvironmentLaw::new(2, WeightLaw::Uniform { low: 1.0, high: 3.0 }).unwrap();
        let b = EnvBox::cube(2, 1).unwrap();
        let env =
            Environment::from_fn(&law, b, |x| if x[0] == 0 && x[1] == 0 { vec![3.0, 1.0] } else { vec![1.0, 1.0] })
                .unwrap();
        assert_eq!(env.transition_probabilities(&[0, 0, 0]).unwrap(), vec![0.375, 0.375, 0.125, 0.125]);
        assert_eq!(env.transition_probabilities(&[1, 0, 0]).unwrap(), vec![0.25; 4]);
        assert!(env.transition_probabilities(&[2, 0, 0]).is_err());

        let law1 = EnvironmentLaw::constant(1, 5.0).unwrap();
        let env1 = Environment::sample(&law1, EnvBox::cube(1, 2).unwrap(), 0).unwrap();
        assert_eq!(env1.transition_probabilities(&[0, 0, 0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn kappa_for_uniform_law() {
        let law = EnvironmentLaw::new(3, WeightLaw::Uniform { low: 1.0, high: 2.0 }).unwrap();
        assert!((law.kappa() - 1.0 / (2.0 * (1.0 + 2.0 * 2.0))).abs() < 1e-15);
        assert!(EnvironmentLaw::with_kappa(3, WeightLaw::Uniform { low: 1.0, high: 2.0 }, 0.2).is_err());
        assert!(EnvironmentLaw::new(2, WeightLaw::Uniform { low: 0.0, high: 2.0 }).is_err());
    }

    #[test]
    fn observable_examples() {
        assert_eq!(Observable::InvTrace.eval(&[1.0, 1.0]), 0.5);
        assert_eq!(Observable::CoordRatio { axis: 0 }.eval(&[3.0, 1.0]), 0.75);
        assert_eq!(Observable::Const { value: 2.5 }.eval(&[7.0, 1.0]), 2.5);
        assert_eq!(Observable::Indicator { threshold: 2.0 }.eval(&[3.0, 1.0]), 1.0);
        let law = two_point(2);
        assert_eq!(Observable::InvTrace.sup_norm(&law), 0.5);
        assert_eq!(Observable::CoordRatio { axis: 1 }.sup_norm(&law), 0.75);
    }

    #[test]
    fn shift_consistency() {
        let law = two_point(2);
        let env = Environment::sample(&law, EnvBox::cube(2, 6).unwrap(), 11).unwrap();
        let psi = Observable::PsiOverTrace { inner: Box::new(Observable::Trace) };
        for x in [[1, 2, 0], [-3, 0, 0], [2, -2, 0]] {
            let shifted = env.shifted(&x).unwrap();
            for obs in [Observable::InvTrace, Observable::CoordRatio { axis: 0 }, psi.clone()] {
                assert_eq!(obs.eval_at(&env, &x).unwrap(), obs.eval_at(&shifted, &[0, 0, 0]).unwrap());
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let law = two_point(2);
        let env = Environment::sample(&law, EnvBox::new(2, &[3, 2]).unwrap(), 77).unwrap();
        let mut buf = Vec::new();
        env.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + env.bbox().len() * 2 * 8);
        assert_eq!(&buf[..4], b"BHL1");
        let back = Environment::read_dump(&buf[..], &law).unwrap();
        assert_eq!(back.weights, env.weights);
        assert_eq!(back.seed(), 77);
    }
}

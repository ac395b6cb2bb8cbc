use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// `coef · Π x_i^{powers_i} · t^{time_power}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
    #[serde(default)]
    pub time_power: u32,
}

/// Source terms `f` and boundary data `g` by name. Every entry is smooth on
/// the closed ball, except `cosine_boundary`, which is smooth on the sphere
/// and only allowed as boundary data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataFn {
    Constant {
        value: f64,
    },
    /// `slope · x + offset + time · t`
    Affine {
        slope: Vec<f64>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        time: f64,
    },
    /// `scale |x|² + time · t`
    Quadratic {
        scale: f64,
        #[serde(default)]
        time: f64,
    },
    /// `x_1 / |x|`, which is `cos θ` on the circle.
    CosineBoundary,
    Polynomial {
        terms: Vec<Monomial>,
    },
}

impl DataFn {
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            DataFn::Constant { value } => *value,
            DataFn::Affine { slope, offset, time } => {
                slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset + time * t
            }
            DataFn::Quadratic { scale, time } => scale * x.iter().map(|v| v * v).sum::<f64>() + time * t,
            DataFn::CosineBoundary => {
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    0.0
                } else {
                    x[0] / n
                }
            }
            DataFn::Polynomial { terms } => terms
                .iter()
                .map(|m| {
                    m.coef
                        * m.powers.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product::<f64>()
                        * t.powi(m.time_power as i32)
                })
                .sum(),
        }
    }

    /// Check the entry against the dimension; `boundary` says whether it is used as `g`.
    pub fn validate(&self, dim: usize, boundary: bool) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("{what} must be finite")))
            }
        };
        match self {
            DataFn::Constant { value } => finite(*value, "constant value"),
            DataFn::Affine { slope, offset, time } => {
                if slope.len() != dim {
                    return Err(config_err(format!("affine slope has {} entries, expected {dim}", slope.len())));
                }
                slope.iter().try_for_each(|v| finite(*v, "affine slope"))?;
                finite(*offset, "affine offset")?;
                finite(*time, "affine time coefficient")
            }
            DataFn::Quadratic { scale, time } => {
                finite(*scale, "quadratic scale")?;
                finite(*time, "quadratic time coefficient")
            }
            DataFn::CosineBoundary if !boundary => {
                Err(config_err("cosine_boundary is only smooth on the sphere and cannot be a source term"))
            }
            DataFn::CosineBoundary if dim < 2 => Err(config_err("cosine_boundary needs d >= 2")),
            DataFn::CosineBoundary => Ok(()),
            DataFn::Polynomial { terms } => {
                if terms.is_empty() {
                    return Err(config_err("polynomial needs at least one term"));
                }
                for m in terms {
                    if m.powers.len() != dim {
                        return Err(config_err(format!(
                            "polynomial term has {} powers, expected {dim}",
                            m.powers.len()
                        )));
                    }
                    finite(m.coef, "polynomial coefficient")?;
                }
                Ok(())
            }
        }
    }

    /// Whether the entry is affine in space and constant in time.
    pub fn is_affine_static(&self) -> bool {
        match self {
            DataFn::Constant { .. } => true,
            DataFn::Affine { time, .. } => *time == 0.0,
            DataFn::Quadratic { scale, time } => *scale == 0.0 && *time == 0.0,
            DataFn::CosineBoundary => false,
            DataFn::Polynomial { terms } => {
                terms.iter().all(|m| m.coef == 0.0 || (m.time_power == 0 && m.powers.iter().sum::<u32>() <= 1))
            }
        }
    }

    /// Whether the entry takes a single value everywhere.
    pub fn is_constant(&self) -> bool {
        match self {
            DataFn::Constant { .. } => true,
            DataFn::Affine { slope, time, .. } => slope.iter().all(|v| *v == 0.0) && *time == 0.0,
            DataFn::Quadratic { scale, time } => *scale == 0.0 && *time == 0.0,
            DataFn::CosineBoundary => false,
            DataFn::Polynomial { terms } => {
                terms.iter().all(|m| m.coef == 0.0 || (m.time_power == 0 && m.powers.iter().all(|&p| p == 0)))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DataFn::Constant { value } => *value == 0.0,
            DataFn::Affine { slope, offset, time } => slope.iter().all(|v| *v == 0.0) && *offset == 0.0 && *time == 0.0,
            DataFn::Quadratic { scale, time } => *scale == 0.0 && *time == 0.0,
            DataFn::CosineBoundary => false,
            DataFn::Polynomial { terms } => terms.iter().all(|m| m.coef == 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let a = DataFn::Affine { slope: vec![1.0, -2.0], offset: 0.5, time: 0.0 };
        assert_eq!(a.eval(&[0.25, 0.5], 0.0), -0.25);
        assert_eq!(DataFn::CosineBoundary.eval(&[0.0, 2.0], 0.0), 0.0);
        assert_eq!(DataFn::CosineBoundary.eval(&[-3.0, 0.0], 0.0), -1.0);
        let p = DataFn::Polynomial { terms: vec![Monomial { coef: 2.0, powers: vec![1, 2], time_power: 1 }] };
        assert_eq!(p.eval(&[3.0, 2.0], 0.5), 12.0);
        assert!(a.is_affine_static());
        assert!(!DataFn::Quadratic { scale: 1.0, time: 0.0 }.is_affine_static());
    }

    #[test]
    fn catalog_validation() {
        assert!(DataFn::CosineBoundary.validate(2, false).is_err());
        assert!(DataFn::CosineBoundary.validate(2, true).is_ok());
        assert!(DataFn::Affine { slope: vec![1.0], offset: 0.0, time: 0.0 }.validate(2, true).is_err());
        let parsed: DataFn = toml::from_str("kind = \"cosine_boundary\"").unwrap();
        assert_eq!(parsed, DataFn::CosineBoundary);
        let parsed: DataFn = toml::from_str("kind = \"quadratic\"\nscale = 2.0").unwrap();
        assert_eq!(parsed, DataFn::Quadratic { scale: 2.0, time: 0.0 });
    }
}

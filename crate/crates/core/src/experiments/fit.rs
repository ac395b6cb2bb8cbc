use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `log y` against `log x`.
    LogLog,
    /// `log y` against `x`.
    LogLinear,
}

/// Least-squares line through the ladder after the log transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kind: FitKind,
    /// `(scale, statistic)` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub warnings: Vec<String>,
}

/// Power-law fit: OLS of `log statistic` on `log scale`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    fit(pairs, FitKind::LogLog)
}

/// Exponential fit: OLS of `log statistic` on `scale`.
pub fn fit_exponential(pairs: &[(f64, f64)]) -> Result<RateFit> {
    fit(pairs, FitKind::LogLinear)
}

fn fit(pairs: &[(f64, f64)], kind: FitKind) -> Result<RateFit> {
    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for &(x, y) in pairs {
        let scale_ok = match kind {
            FitKind::LogLog => x > 0.0,
            FitKind::LogLinear => x.is_finite(),
        };
        if y > 0.0 && y.is_finite() && scale_ok {
            points.push((x, y));
        } else {
            warnings.push(format!("excluded ({x}, {y}) from the fit"));
        }
    }
    if points.len() < 3 {
        return Err(Error::Fit(format!("{} usable points, at least 3 needed", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| if kind == FitKind::LogLog { p.0.ln() } else { p.0 }).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all scales are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { kind, points, slope, intercept, r2, warnings })
}

/// Median with the mean of the two middle values for even counts. NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn exact_power_law() {
        let f = fit_rate(&[(1.0, 1.0), (2.0, 0.25), (4.0, 0.0625)]).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_statistic() {
        let f = fit_rate(&[(1.0, 3.0), (2.0, 3.0), (5.0, 3.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
    }

    #[test]
    fn noisy_power_law() {
        let mut s = Stream::new(17, 0);
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let x = 2f64.powi(k);
                (x, (1.0 + 0.01 * (2.0 * s.uniform() - 1.0)) / x)
            })
            .collect();
        let f = fit_rate(&pts).unwrap();
        assert!((-1.1..=-0.9).contains(&f.slope), "{}", f.slope);
    }

    #[test]
    fn nonpositive_points_are_excluded() {
        let f = fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0 / 3.0), (4.0, 0.25)]).unwrap();
        assert_eq!(f.points.len(), 3);
        assert_eq!(f.warnings.len(), 1);
        assert!(fit_rate(&[(1.0, 1.0), (2.0, -1.0), (3.0, 0.5)]).is_err());
    }

    #[test]
    fn exponential_fit() {
        let pts: Vec<(f64, f64)> = (1..=4).map(|n| (n as f64, 5.0 * (-0.7 * n as f64).exp())).collect();
        let f = fit_exponential(&pts).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.intercept - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

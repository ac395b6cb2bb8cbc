//! Ladder experiments: a statistic measured at increasing scales, medians over
//! replicas, and a fitted decay rate.

mod berry_esseen;
mod census;
mod corrector;
mod data;
mod ergodicity;
mod fit;
mod homog;
mod mu_decay;

pub use berry_esseen::{
    berry_esseen, binomial_ks_oracle, dkw_band, kolmogorov_distance, normal_cdf, BerryEsseenSetup, DKW_ALPHA,
};
pub use census::{bad_point_census, census_experiment, CensusReport, CensusSetup};
pub use corrector::{corrector_sublinearity, CorrectorSetup};
pub use data::{DataFn, Monomial};
pub use ergodicity::{ergodicity_rate, ErgodicitySetup};
pub use fit::{fit_exponential, fit_rate, median, FitKind, RateFit};
pub use homog::{homog_error_elliptic, homog_error_parabolic, HomogSetup};
pub use mu_decay::{mu_decay, MuDecaySetup};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A CSV table with one row per ladder cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(out, "{}", r.join(","))?;
        }
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

/// One pass/fail line of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Everything an experiment produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub table: Table,
    /// Median statistic per ladder value.
    pub ladder: Vec<(f64, f64)>,
    pub fit: Option<RateFit>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    /// Experiment-specific numbers for the summary.
    pub extra: serde_json::Value,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Whether `v` is strictly decreasing.
pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Ladder medians, fit and the standard decay checks.
pub(crate) fn finish_ladder(
    kind: &str,
    table: Table,
    ladder: Vec<(f64, f64)>,
    exponential: bool,
    mut warnings: Vec<String>,
    extra: serde_json::Value,
) -> ExperimentReport {
    let fitted = if exponential { fit_exponential(&ladder) } else { fit_rate(&ladder) };
    let fit = match fitted {
        Ok(f) => {
            warnings.extend(f.warnings.iter().cloned());
            Some(f)
        }
        Err(e) => {
            warnings.push(format!("no fit: {e}"));
            None
        }
    };
    let stats: Vec<f64> = ladder.iter().map(|p| p.1).collect();
    let mut checks =
        vec![Check::new("strictly_decreasing", strictly_decreasing(&stats), format!("ladder medians {stats:?}"))];
    checks.push(match &fit {
        Some(f) => Check::new("negative_slope", f.slope < 0.0, format!("slope {}", f.slope)),
        // a two-rung ladder has no fit; its secant slope stands in
        None if ladder.len() == 2 && ladder.iter().all(|p| p.0 > 0.0 && p.1 > 0.0) => {
            let (a, b) = (ladder[0], ladder[1]);
            let slope = if exponential { (b.1 / a.1).ln() / (b.0 - a.0) } else { (b.1 / a.1).ln() / (b.0 / a.0).ln() };
            Check::new("negative_slope", slope < 0.0, format!("two-point slope {slope}"))
        }
        None => Check::new("negative_slope", false, "fit unavailable"),
    });
    ExperimentReport { kind: kind.into(), table, ladder, fit, checks, warnings, extra }
}

/// Checks for data whose statistic vanishes identically: every ladder value
/// is present and at most `tol`. A fit is attached when one is possible.
pub(crate) fn finish_vanishing(
    kind: &str,
    table: Table,
    ladder: Vec<(f64, f64)>,
    expected_len: usize,
    tol: f64,
    warnings: Vec<String>,
    extra: serde_json::Value,
) -> ExperimentReport {
    let worst = ladder.iter().fold(0.0f64, |m, p| m.max(p.1));
    let checks = vec![Check::new(
        "statistic_vanishes",
        worst <= tol && ladder.len() == expected_len,
        format!("largest statistic {worst:e}, tolerance {tol:e}"),
    )];
    let fit = fit_rate(&ladder).ok();
    ExperimentReport { kind: kind.into(), table, ladder, fit, checks, warnings, extra }
}

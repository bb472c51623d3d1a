//! Canonical asymptotic series Σ c·pᵃ·(ln p)ᵇ and the tools built on them.

mod analysis;
mod extract;

pub use analysis::{
    compare_series, lamb_a_from_fit, optimal_truncation, rrmse, rrmse_surface, CoefficientDelta, LambFitCoefficients,
    RrmseSurface,
};
pub use extract::{
    extract_series, fit_basis, holdout_points, ExtractOptions, Extraction, ExtractionMethod, CONDITION_WARNING,
    NON_SERIES_RESIDUAL,
};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::expr::format_number;

/// Coefficients with smaller magnitude are dropped from a [`Series`].
pub const PRUNE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("log terms need a positive parameter, got {0}")]
    NonPositiveParameter(f64),
    #[error("rrmse inputs must be nonempty and of equal length ({approx} vs {exact})")]
    LengthMismatch { approx: usize, exact: usize },
    #[error("rrmse undefined: exact values are all zero")]
    ZeroReference,
    #[error("fit has no usable Omega^2 coefficient (|c2| = {0})")]
    MissingLeadingTerm(f64),
    #[error("invalid parameter range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("expression produced non-finite values on the sampling range")]
    NonFinite,
    #[error("oracle failed at p = {param}: {message}")]
    Oracle { param: f64, message: String },
    #[error("malformed series text: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub power: u32,
    pub log_power: u32,
    pub coeff: f64,
}

impl Term {
    pub fn new(power: u32, log_power: u32, coeff: f64) -> Self {
        Term { power, log_power, coeff }
    }

    fn value(&self, p: f64, ln_p: f64) -> f64 {
        let mut v = self.coeff * p.powi(self.power as i32);
        if self.log_power > 0 {
            v *= ln_p.powi(self.log_power as i32);
        }
        v
    }
}

/// A canonical expansion: terms sorted by (power, log_power), no duplicates,
/// no coefficient below [`PRUNE_THRESHOLD`].
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    var: String,
    terms: Vec<Term>,
}

impl Series {
    pub fn new(var: impl Into<String>, terms: impl IntoIterator<Item = Term>) -> Self {
        let mut merged: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for t in terms {
            *merged.entry((t.power, t.log_power)).or_insert(0.0) += t.coeff;
        }
        Self::from_map(var, merged)
    }

    pub(crate) fn from_map(var: impl Into<String>, map: BTreeMap<(u32, u32), f64>) -> Self {
        let terms =
            map.into_iter().filter(|(_, c)| c.abs() >= PRUNE_THRESHOLD).map(|((a, b), c)| Term::new(a, b, c)).collect();
        Series { var: var.into(), terms }
    }

    /// Plain power series c₀ + c₁p + c₂p² + …
    pub fn from_coefficients(var: impl Into<String>, coeffs: &[f64]) -> Self {
        Series::new(var, coeffs.iter().enumerate().map(|(a, &c)| Term::new(a as u32, 0, c)))
    }

    pub fn empty(var: impl Into<String>) -> Self {
        Series { var: var.into(), terms: Vec::new() }
    }

    pub fn var(&self) -> &str {
        &self.var
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn has_log_terms(&self) -> bool {
        self.terms.iter().any(|t| t.log_power > 0)
    }

    pub fn max_power(&self) -> Option<u32> {
        self.terms.iter().map(|t| t.power).max()
    }

    /// Coefficient of pᵃ(ln p)ᵇ, zero when absent.
    pub fn coefficient(&self, power: u32, log_power: u32) -> f64 {
        self.terms.iter().find(|t| t.power == power && t.log_power == log_power).map_or(0.0, |t| t.coeff)
    }

    /// Dense power-series coefficients c₀..c_n of the log-free part.
    pub fn power_coefficients(&self, n: u32) -> Vec<f64> {
        (0..=n).map(|a| self.coefficient(a, 0)).collect()
    }

    /// Partial sum over the terms with power ≤ `up_to`.
    pub fn eval(&self, p: f64, up_to: u32) -> Result<f64, SeriesError> {
        let logs = self.terms.iter().any(|t| t.log_power > 0 && t.power <= up_to);
        if logs && p <= 0.0 {
            return Err(SeriesError::NonPositiveParameter(p));
        }
        let ln_p = if logs { p.ln() } else { 0.0 };
        Ok(self.terms.iter().filter(|t| t.power <= up_to).map(|t| t.value(p, ln_p)).sum())
    }

    /// Sum of every term.
    pub fn eval_full(&self, p: f64) -> Result<f64, SeriesError> {
        self.eval(p, u32::MAX)
    }

    /// Sum of |term| magnitudes, a scale for relative comparisons.
    pub fn magnitude(&self, p: f64) -> f64 {
        let ln_p = if p > 0.0 { p.ln() } else { 0.0 };
        self.terms.iter().map(|t| t.value(p, ln_p).abs()).sum()
    }

    /// `power,log_power,coefficient` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("power,log_power,coefficient\n");
        for t in &self.terms {
            out.push_str(&format!("{},{},{}\n", t.power, t.log_power, crate::problems::fmt_real(t.coeff)));
        }
        out
    }

    pub fn from_csv(var: impl Into<String>, text: &str) -> Result<Self, SeriesError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "power,log_power,coefficient" => {}
            other => return Err(SeriesError::Malformed(format!("bad header {other:?}"))),
        }
        let mut terms = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(SeriesError::Malformed(line.to_string()));
            }
            let bad = || SeriesError::Malformed(line.to_string());
            terms.push(Term::new(
                cols[0].trim().parse().map_err(|_| bad())?,
                cols[1].trim().parse().map_err(|_| bad())?,
                cols[2].trim().parse().map_err(|_| bad())?,
            ));
        }
        Ok(Series::new(var, terms))
    }
}

impl fmt::Display for Series {
    /// `c * p^a * log(p)^b` terms in ascending order joined by signs.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let sign = if t.coeff < 0.0 { '-' } else { '+' };
            if i == 0 {
                if sign == '-' {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            f.write_str(&format_number(t.coeff.abs()))?;
            match t.power {
                0 => {}
                1 => write!(f, " * {}", self.var)?,
                a => write!(f, " * {}^{a}", self.var)?,
            }
            match t.log_power {
                0 => {}
                1 => write!(f, " * log({})", self.var)?,
                b => write!(f, " * log({})^{b}", self.var)?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        let s = Series::new(
            "d",
            [Term::new(2, 0, 1.0), Term::new(0, 0, -1.0), Term::new(2, 0, 0.5), Term::new(1, 0, 1e-13)],
        );
        assert_eq!(s.terms(), &[Term::new(0, 0, -1.0), Term::new(2, 0, 1.5)]);
        assert_eq!(s.coefficient(1, 0), 0.0);
    }

    #[test]
    fn evaluation() {
        assert_eq!(Series::empty("d").eval(0.3, 5).unwrap(), 0.0);
        let s = Series::from_coefficients("d", &[-1.0, 2.0, -2.0, 2.0]);
        assert!((s.eval(0.1, 2).unwrap() - (-0.82)).abs() < 1e-15);
        let logs = Series::new("eta", [Term::new(1, 1, -1.0)]);
        assert!(logs.eval(-0.5, 3).is_err());
        assert!(logs.eval(0.0, 3).is_err());
        // log terms above the cutoff do not trigger the domain check
        assert_eq!(logs.eval(-0.5, 0).unwrap(), 0.0);
    }

    #[test]
    fn display_layout() {
        let s = Series::new(
            "eta",
            [Term::new(1, 1, -1.0), Term::new(1, 0, -0.58), Term::new(0, 0, 1.0), Term::new(2, 2, 0.25)],
        );
        assert_eq!(s.to_string(), "1.0 - 0.58 * eta - 1.0 * eta * log(eta) + 0.25 * eta^2 * log(eta)^2");
        assert_eq!(Series::empty("x").to_string(), "0");
    }

    #[test]
    fn csv_round_trip() {
        let s = Series::new("eta", [Term::new(1, 1, -1.0), Term::new(3, 0, 1.0 / 3.0)]);
        assert_eq!(Series::from_csv("eta", &s.to_csv()).unwrap(), s);
        assert!(Series::from_csv("eta", "a,b\n").is_err());
    }
}

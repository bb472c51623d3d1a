//! Kelvin-Voigt relaxation integral I(δ) = ∫₀^∞ e^{−x}/(1+δx) dx = (e^{1/δ}/δ)·E₁(1/δ).
//!
//! The small-δ expansion Σ(−1)ᵏk!δᵏ diverges; the large-δ one carries log terms.

use super::{check_range, linspace, Dataset, Feature, ProblemError};
use crate::numerics::{exp_integral_e1_scaled, EULER_GAMMA};
use crate::series::{Series, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KvLimit {
    /// δ ≪ 1, parameter δ.
    SmallDelta,
    /// δ ≫ 1, parameter η = 1/δ.
    LargeDelta,
}

impl KvLimit {
    pub fn param_name(self) -> &'static str {
        match self {
            KvLimit::SmallDelta => "delta",
            KvLimit::LargeDelta => "eta",
        }
    }

    pub fn to_delta(self, p: f64) -> f64 {
        match self {
            KvLimit::SmallDelta => p,
            KvLimit::LargeDelta => 1.0 / p,
        }
    }

    pub fn default_range(self) -> (f64, f64) {
        (2e-4, 0.2)
    }

    /// I as a function of the limit's own parameter.
    pub fn exact(self, p: f64) -> Result<f64, ProblemError> {
        kv_integral_exact(self.to_delta(p))
    }
}

/// I(δ) via the scaled exponential integral, so e^{1/δ} is never formed.
pub fn kv_integral_exact(delta: f64) -> Result<f64, ProblemError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ProblemError::InvalidParameter {
            what: "Kelvin-Voigt delta",
            requirement: "a finite value > 0",
            value: delta,
        });
    }
    let x = 1.0 / delta;
    Ok(x * exp_integral_e1_scaled(x)?)
}

/// Number of large-δ terms available in closed form.
pub const KV_LARGE_DELTA_TERMS: u32 = 4;

/// Benchmark expansion through order `n`.
pub fn kv_benchmark_series(limit: KvLimit, n: u32) -> Result<Series, ProblemError> {
    match limit {
        KvLimit::SmallDelta => {
            let mut coeffs = Vec::with_capacity(n as usize + 1);
            let mut fact = 1.0;
            for k in 0..=n {
                if k > 0 {
                    fact *= k as f64;
                }
                coeffs.push(if k % 2 == 0 { fact } else { -fact });
            }
            Ok(Series::from_coefficients(limit.param_name(), &coeffs))
        }
        KvLimit::LargeDelta => {
            if n > KV_LARGE_DELTA_TERMS {
                return Err(ProblemError::OrderTooHigh { requested: n, available: KV_LARGE_DELTA_TERMS });
            }
            let g = EULER_GAMMA;
            // (power, constant part, log coefficient)
            let all = [
                (1, -g, -1.0),
                (2, 1.0 - g, -1.0),
                (3, (3.0 - 2.0 * g) / 4.0, -2.0 / 4.0),
                (4, (11.0 - 6.0 * g) / 36.0, -6.0 / 36.0),
            ];
            let terms = all
                .iter()
                .filter(|(a, _, _)| *a <= n)
                .flat_map(|&(a, c0, c1)| [Term::new(a, 0, c0), Term::new(a, 1, c1)]);
            Ok(Series::new(limit.param_name(), terms))
        }
    }
}

/// Training set with target I. Large-δ data gets an ln η column when `with_log`.
pub fn kv_dataset(limit: KvLimit, n_points: usize, range: (f64, f64), with_log: bool) -> Result<Dataset, ProblemError> {
    let (lo, hi) = range;
    check_range(lo, hi, n_points)?;
    if lo <= 0.0 {
        return Err(ProblemError::InvalidRange { lo, hi, n: n_points, reason: "parameter must be positive" });
    }
    kv_dataset_on(limit, linspace(lo, hi, n_points), with_log)
}

/// Like [`kv_dataset`] on an explicit parameter grid.
pub fn kv_dataset_on(limit: KvLimit, grid: Vec<f64>, with_log: bool) -> Result<Dataset, ProblemError> {
    let target = grid.iter().map(|&p| limit.exact(p)).collect::<Result<Vec<_>, _>>()?;
    let mut features = vec![Feature::Power(1)];
    if with_log && limit == KvLimit::LargeDelta {
        features.push(Feature::Log);
    }
    Dataset::new(limit.param_name(), grid, features, target)
}

//! Elastic collision of a moving mass with a resting one: u₁ = (δ−1)/(δ+1).

use super::{check_range, linspace, Dataset, Feature, ProblemError};
use crate::series::Series;

/// Which limit of the mass ratio δ the small parameter describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollisionRegime {
    /// δ ≪ 1, parameter δ.
    SmallDelta,
    /// δ ≈ 1, parameter θ = (δ−1)/2.
    NearUnit,
    /// δ ≫ 1, parameter η = 1/δ.
    LargeDelta,
}

impl CollisionRegime {
    pub const ALL: [CollisionRegime; 3] =
        [CollisionRegime::SmallDelta, CollisionRegime::NearUnit, CollisionRegime::LargeDelta];

    pub fn param_name(self) -> &'static str {
        match self {
            CollisionRegime::SmallDelta => "delta",
            CollisionRegime::NearUnit => "theta",
            CollisionRegime::LargeDelta => "eta",
        }
    }

    /// Mass ratio δ for a value of the regime's small parameter.
    pub fn to_delta(self, p: f64) -> f64 {
        match self {
            CollisionRegime::SmallDelta => p,
            CollisionRegime::NearUnit => 1.0 + 2.0 * p,
            CollisionRegime::LargeDelta => 1.0 / p,
        }
    }

    pub fn default_range(self) -> (f64, f64) {
        (0.005, 0.1)
    }
}

/// How the small parameter is fed to the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputStrategy {
    /// The parameter alone.
    Single,
    /// p, p², …, pᵏ as separate columns.
    Powers(u32),
}

impl InputStrategy {
    pub fn features(self) -> Vec<Feature> {
        match self {
            InputStrategy::Single => vec![Feature::Power(1)],
            InputStrategy::Powers(k) => (1..=k.max(1)).map(Feature::Power).collect(),
        }
    }
}

/// u₁ = (δ−1)/(δ+1), the post-impact velocity of the projectile relative to v₀.
pub fn collision_exact(delta: f64) -> Result<f64, ProblemError> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ProblemError::InvalidParameter {
            what: "mass ratio",
            requirement: "a finite value > 0",
            value: delta,
        });
    }
    Ok((delta - 1.0) / (delta + 1.0))
}

pub fn collision_dataset(
    regime: CollisionRegime,
    n_points: usize,
    range: (f64, f64),
    strategy: InputStrategy,
) -> Result<Dataset, ProblemError> {
    let (lo, hi) = range;
    check_range(lo, hi, n_points)?;
    if lo.abs() >= 1.0 || hi.abs() >= 1.0 {
        return Err(ProblemError::InvalidRange { lo, hi, n: n_points, reason: "small parameter must stay below 1" });
    }
    collision_dataset_on(regime, linspace(lo, hi, n_points), strategy)
}

/// Like [`collision_dataset`] on an explicit parameter grid.
pub fn collision_dataset_on(
    regime: CollisionRegime,
    grid: Vec<f64>,
    strategy: InputStrategy,
) -> Result<Dataset, ProblemError> {
    let target = grid.iter().map(|&p| collision_exact(regime.to_delta(p))).collect::<Result<Vec<_>, _>>()?;
    Dataset::new(regime.param_name(), grid, strategy.features(), target)
}

/// Convergent expansion of u₁ in the regime's parameter through order `n`.
pub fn collision_benchmark_series(regime: CollisionRegime, n: u32) -> Series {
    let coeffs: Vec<f64> = (0..=n)
        .map(|k| {
            let alt = if k % 2 == 0 { 1.0 } else { -1.0 };
            match (regime, k) {
                (CollisionRegime::SmallDelta, 0) => -1.0,
                (CollisionRegime::SmallDelta, _) => -2.0 * alt,
                (CollisionRegime::NearUnit, 0) => 0.0,
                (CollisionRegime::NearUnit, _) => -alt,
                (CollisionRegime::LargeDelta, 0) => 1.0,
                (CollisionRegime::LargeDelta, _) => 2.0 * alt,
            }
        })
        .collect();
    Series::from_coefficients(regime.param_name(), &coeffs)
}

//! Built-in problems: exact oracles, training-set builders and benchmark series.

pub mod collision;
pub mod kelvin_voigt;
pub mod rayleigh_lamb;

pub use collision::{
    collision_benchmark_series, collision_dataset, collision_dataset_on, collision_exact, CollisionRegime,
    InputStrategy,
};
pub use kelvin_voigt::{
    kv_benchmark_series, kv_dataset, kv_dataset_on, kv_integral_exact, KvLimit, KV_LARGE_DELTA_TERMS,
};
pub use rayleigh_lamb::{
    lamb_benchmark_coeffs, lamb_benchmark_series, lamb_dataset, lamb_dispersion_residual, lamb_solve_k,
    poisson_from_a1, poisson_from_a2, LambConfig,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("{what} must satisfy {requirement}, got {value}")]
    InvalidParameter { what: &'static str, requirement: &'static str, value: f64 },
    #[error("invalid parameter range [{lo}, {hi}] with {n} points: {reason}")]
    InvalidRange { lo: f64, hi: f64, n: usize, reason: &'static str },
    #[error("requested order {requested} exceeds the {available} available terms")]
    OrderTooHigh { requested: u32, available: u32 },
    #[error("negative discriminant {discriminant} when inverting {coefficient} = {value}")]
    NegativeDiscriminant { coefficient: &'static str, value: f64, discriminant: f64 },
    #[error("no bending root bracketed at Omega = {omega} (last interval [{lo}, {hi}])")]
    Bracketing { omega: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("dataset: {0}")]
    Dataset(String),
}

/// Formats a real with 17 significant digits, as used in every CSV.
pub fn fmt_real(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive; both bounds must be positive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect();
    // exp(ln x) can drift by an ulp; keep the requested endpoints exact
    if let Some(first) = v.first_mut() {
        *first = lo;
    }
    if n > 1 {
        v[n - 1] = hi;
    }
    v
}

pub(crate) fn check_range(lo: f64, hi: f64, n: usize) -> Result<(), ProblemError> {
    let bad = |reason| Err(ProblemError::InvalidRange { lo, hi, n, reason });
    if n == 0 {
        return bad("no points requested");
    }
    if !lo.is_finite() || !hi.is_finite() {
        return bad("bounds must be finite");
    }
    if n > 1 && lo >= hi {
        return bad("lower bound must be below upper bound");
    }
    Ok(())
}

/// How an input column is derived from the raw small parameter p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    /// pᵏ; `Power(1)` is the raw parameter.
    Power(u32),
    /// ln p
    Log,
}

impl Feature {
    pub fn apply(self, p: f64) -> f64 {
        match self {
            Feature::Power(1) => p,
            Feature::Power(k) => p.powi(k as i32),
            Feature::Log => p.ln(),
        }
    }

    /// Exponents (a, b) of the monomial pᵃ(ln p)ᵇ this feature represents.
    pub fn monomial(self) -> (u32, u32) {
        match self {
            Feature::Power(k) => (k, 0),
            Feature::Log => (0, 1),
        }
    }

    pub fn name(self, param: &str) -> String {
        match self {
            Feature::Power(1) => param.to_string(),
            Feature::Power(k) => format!("{param}^{k}"),
            Feature::Log => format!("log_{param}"),
        }
    }

    pub fn from_name(name: &str, param: &str) -> Option<Feature> {
        if name == param {
            return Some(Feature::Power(1));
        }
        if let Some(rest) = name.strip_prefix(param).and_then(|r| r.strip_prefix('^')) {
            return rest.parse().ok().filter(|k| *k > 0).map(Feature::Power);
        }
        (name.strip_prefix("log_") == Some(param)).then_some(Feature::Log)
    }
}

/// Training pairs plus the recipe that produced the input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub param_name: String,
    pub parameter_grid: Vec<f64>,
    pub features: Vec<Feature>,
    /// Row-major inputs, one row per grid value.
    pub inputs: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl Dataset {
    pub fn new(
        param_name: impl Into<String>,
        parameter_grid: Vec<f64>,
        features: Vec<Feature>,
        target: Vec<f64>,
    ) -> Result<Self, ProblemError> {
        let inputs = parameter_grid.iter().map(|&p| features.iter().map(|f| f.apply(p)).collect()).collect();
        let ds = Dataset { param_name: param_name.into(), parameter_grid, features, inputs, target };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let err = |m: String| Err(ProblemError::Dataset(m));
        if self.target.is_empty() {
            return err("no rows".into());
        }
        if self.features.is_empty() {
            return err("no feature columns".into());
        }
        if self.inputs.len() != self.target.len() || self.parameter_grid.len() != self.target.len() {
            return err("row counts of inputs, target and grid differ".into());
        }
        for (i, row) in self.inputs.iter().enumerate() {
            if row.len() != self.features.len() {
                return err(format!("row {i} has {} columns, expected {}", row.len(), self.features.len()));
            }
            if row.iter().chain([&self.target[i], &self.parameter_grid[i]]).any(|v| !v.is_finite()) {
                return err(format!("row {i} contains a non-finite value"));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name(&self.param_name)).collect()
    }

    pub fn param_range(&self) -> (f64, f64) {
        let lo = self.parameter_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.parameter_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// True when the input columns are exactly the feature transforms of the grid.
    pub fn is_pure(&self) -> bool {
        self.parameter_grid
            .iter()
            .zip(&self.inputs)
            .all(|(&p, row)| self.features.iter().zip(row).all(|(f, v)| f.apply(p).to_bits() == v.to_bits()))
    }

    /// `param,<feature names>,target` with 17 significant digits and LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param");
        for name in self.feature_names() {
            out.push(',');
            out.push_str(&name);
        }
        out.push_str(",target\n");
        for ((p, row), t) in self.parameter_grid.iter().zip(&self.inputs).zip(&self.target) {
            out.push_str(&fmt_real(*p));
            for v in row {
                out.push(',');
                out.push_str(&fmt_real(*v));
            }
            out.push(',');
            out.push_str(&fmt_real(*t));
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. The parameter name is recovered
    /// from the first feature column, which must be a power or log of it.
    pub fn from_csv(text: &str) -> Result<Self, ProblemError> {
        let bad = |m: String| ProblemError::Dataset(m);
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
        if header.len() < 3 || header[0] != "param" || header[header.len() - 1] != "target" {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let names = &header[1..header.len() - 1];
        let param_name = names
            .iter()
            .map(|n| match n.strip_prefix("log_") {
                Some(p) => p.to_string(),
                None => n.split('^').next().unwrap_or(n).to_string(),
            })
            .next()
            .ok_or_else(|| bad("no feature columns".into()))?;
        let features = names
            .iter()
            .map(|n| Feature::from_name(n, &param_name).ok_or_else(|| bad(format!("unknown feature '{n}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        let (mut grid, mut inputs, mut target) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", ln + 2)))?;
            if vals.len() != header.len() {
                return Err(bad(format!("line {}: expected {} fields", ln + 2, header.len())));
            }
            grid.push(vals[0]);
            inputs.push(vals[1..vals.len() - 1].to_vec());
            target.push(vals[vals.len() - 1]);
        }
        let ds = Dataset { param_name, parameter_grid: grid, features, inputs, target };
        ds.validate()?;
        Ok(ds)
    }
}

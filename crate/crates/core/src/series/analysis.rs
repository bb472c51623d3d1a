use std::collections::BTreeSet;

use super::{Series, SeriesError};
use crate::problems::fmt_real;

/// One row of a coefficient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientDelta {
    pub power: u32,
    pub log_power: u32,
    pub found: f64,
    pub benchmark: f64,
    pub abs_delta: f64,
}

/// Compares coefficients up to power `up_to`. Missing terms count as zero;
/// every pure power 0..=up_to gets a row.
pub fn compare_series(found: &Series, benchmark: &Series, up_to: u32) -> Vec<CoefficientDelta> {
    let mut keys: BTreeSet<(u32, u32)> = (0..=up_to).map(|a| (a, 0)).collect();
    for t in found.terms().iter().chain(benchmark.terms()) {
        if t.power <= up_to {
            keys.insert((t.power, t.log_power));
        }
    }
    keys.into_iter()
        .map(|(a, b)| {
            let f = found.coefficient(a, b);
            let r = benchmark.coefficient(a, b);
            CoefficientDelta { power: a, log_power: b, found: f, benchmark: r, abs_delta: (f - r).abs() }
        })
        .collect()
}

/// ‖approx − exact‖₂ / ‖exact‖₂.
pub fn rrmse(approx: &[f64], exact: &[f64]) -> Result<f64, SeriesError> {
    if approx.len() != exact.len() || exact.is_empty() {
        return Err(SeriesError::LengthMismatch { approx: approx.len(), exact: exact.len() });
    }
    let norm: f64 = exact.iter().map(|e| e * e).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(SeriesError::ZeroReference);
    }
    let err: f64 = approx.iter().zip(exact).map(|(a, e)| (a - e).powi(2)).sum::<f64>().sqrt();
    Ok(err / norm)
}

/// RRMSE of every truncation order at every grid value; `values[order][param]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RrmseSurface {
    pub params: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl RrmseSurface {
    pub fn orders(&self) -> usize {
        self.values.len()
    }

    /// Long-form `order,param,rrmse` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("order,param,rrmse\n");
        for (n, row) in self.values.iter().enumerate() {
            for (p, v) in self.params.iter().zip(row) {
                out.push_str(&format!("{n},{},{}\n", fmt_real(*p), fmt_real(*v)));
            }
        }
        out
    }
}

fn oracle_value<E>(exact: &impl Fn(f64) -> Result<f64, E>, p: f64) -> Result<f64, SeriesError>
where
    E: std::fmt::Display,
{
    exact(p).map_err(|e| SeriesError::Oracle { param: p, message: e.to_string() })
}

pub fn rrmse_surface<E: std::fmt::Display>(
    series: &Series,
    exact: impl Fn(f64) -> Result<f64, E>,
    grid: &[f64],
    n_max: u32,
) -> Result<RrmseSurface, SeriesError> {
    let exact_values: Vec<f64> = grid.iter().map(|&p| oracle_value(&exact, p)).collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let mut row = Vec::with_capacity(grid.len());
        for (&p, &e) in grid.iter().zip(&exact_values) {
            let approx = series.eval(p, n)?;
            row.push(rrmse(&[approx], &[e])?);
        }
        values.push(row);
    }
    Ok(RrmseSurface { params: grid.to_vec(), values })
}

/// The order n ∈ [0, n_max] minimizing |Sₙ(p) − exact(p)|; ties go to the smaller n.
pub fn optimal_truncation<E: std::fmt::Display>(
    series: &Series,
    exact: impl Fn(f64) -> Result<f64, E>,
    p: f64,
    n_max: u32,
) -> Result<u32, SeriesError> {
    let target = oracle_value(&exact, p)?;
    let mut best = (0u32, f64::INFINITY);
    for n in 0..=n_max {
        let err = (series.eval(p, n)? - target).abs();
        if err < best.1 {
            best = (n, err);
        }
    }
    Ok(best.0)
}

/// Bending-mode coefficients recovered from a fitted K⁴(Ω) series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambFitCoefficients {
    /// The fitted Ω² coefficient, an estimate of (3/2)(1−ν).
    pub scale: f64,
    /// The value the Ω³ and Ω⁴ coefficients were divided by.
    pub normalization: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Aⱼ = c_{j+2} / c₂. With `nu_known`, the normalization is (3/2)(1−ν) instead.
pub fn lamb_a_from_fit(fit: &Series, nu_known: Option<f64>) -> Result<LambFitCoefficients, SeriesError> {
    let c2 = fit.coefficient(2, 0);
    if c2.abs() <= 1e-6 {
        return Err(SeriesError::MissingLeadingTerm(c2.abs()));
    }
    let normalization = match nu_known {
        Some(nu) => 1.5 * (1.0 - nu),
        None => c2,
    };
    Ok(LambFitCoefficients {
        scale: c2,
        normalization,
        a1: fit.coefficient(3, 0) / normalization,
        a2: fit.coefficient(4, 0) / normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Term;

    #[test]
    fn compare_identical_and_zero_fill() {
        let bench = Series::from_coefficients("d", &[-1.0, 2.0, -2.0, 2.0, -2.0]);
        assert!(compare_series(&bench, &bench, 4).iter().all(|d| d.abs_delta == 0.0));
        let found = Series::from_coefficients("d", &[-1.0, 2.00, -2.01]);
        let deltas: Vec<f64> = compare_series(&found, &bench, 2).iter().map(|d| d.abs_delta).collect();
        assert_eq!(deltas.len(), 3);
        assert!(deltas[0] == 0.0 && deltas[1] == 0.0 && (deltas[2] - 0.01).abs() < 1e-12);
        let tail = compare_series(&found, &bench, 4);
        assert_eq!(tail[3].abs_delta, 2.0);
        assert_eq!(tail[4].abs_delta, 2.0);
    }

    #[test]
    fn compare_is_symmetric_in_magnitude() {
        let a = Series::new("e", [Term::new(1, 1, -1.0), Term::new(2, 0, 0.4)]);
        let b = Series::new("e", [Term::new(1, 1, -0.9), Term::new(1, 0, -0.58)]);
        let ab: Vec<f64> = compare_series(&a, &b, 3).iter().map(|d| d.abs_delta).collect();
        let ba: Vec<f64> = compare_series(&b, &a, 3).iter().map(|d| d.abs_delta).collect();
        assert_eq!(ab, ba);
    }

    #[test]
    fn rrmse_basics() {
        let exact = [1.0, -2.0, 3.5];
        assert_eq!(rrmse(&exact, &exact).unwrap(), 0.0);
        let doubled: Vec<f64> = exact.iter().map(|e| 2.0 * e).collect();
        assert!((rrmse(&doubled, &exact).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rrmse(&[1.0], &[0.0]), Err(SeriesError::ZeroReference));
        assert!(rrmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rrmse(&[], &[]).is_err());
    }

    #[test]
    fn optimal_truncation_edge_cases() {
        let s = Series::from_coefficients("d", &[1.0, -1.0, 2.0]);
        let exact = |_p: f64| -> Result<f64, String> { Ok(0.9) };
        assert_eq!(optimal_truncation(&s, exact, 0.1, 0).unwrap(), 0);
        // S0 = 1.0, S1 = 0.9, S2 = 0.92
        assert_eq!(optimal_truncation(&s, exact, 0.1, 2).unwrap(), 1);
    }

    #[test]
    fn single_cell_surface() {
        let s = Series::from_coefficients("d", &[1.0]);
        let surf = rrmse_surface(&s, |_p: f64| -> Result<f64, String> { Ok(2.0) }, &[0.1], 0).unwrap();
        assert_eq!(surf.values, vec![vec![0.5]]);
        assert_eq!(surf.to_csv().lines().count(), 2);
    }

    #[test]
    fn lamb_ratio_extraction() {
        let fit = Series::from_coefficients("Omega", &[0.0, 0.0, 0.99, 1.39, 0.81]);
        let a = lamb_a_from_fit(&fit, None).unwrap();
        assert!((a.a1 - 1.39 / 0.99).abs() < 1e-12);
        assert!((a.a1 - 1.404).abs() < 5e-4);
        assert!((a.a2 - 0.818).abs() < 5e-4);
        let run4 = Series::from_coefficients("Omega", &[0.0, 0.0, 0.95, 1.56]);
        assert!((lamb_a_from_fit(&run4, None).unwrap().a1 - 1.642).abs() < 5e-4);
        let missing = Series::from_coefficients("Omega", &[0.0, 1.0, 0.0, 1.0]);
        assert!(lamb_a_from_fit(&missing, None).is_err());
        let known = lamb_a_from_fit(&fit, Some(0.3455)).unwrap();
        assert!((known.a1 - 1.39 / (1.5 * (1.0 - 0.3455))).abs() < 1e-12);
    }
}

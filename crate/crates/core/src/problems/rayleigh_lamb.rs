//! Antisymmetric Rayleigh-Lamb waves in a traction-free layer: the bending-mode
//! dispersion relation, its low-frequency expansion, and Poisson-ratio inversion.

use super::{check_range, linspace, Dataset, Feature, ProblemError};
use crate::numerics::{even_cosh, even_sinhc, find_root_bracketed, BracketedRootConfig, NumericsError};
use crate::series::Series;

pub const DEFAULT_NU: f64 = 0.3455;
pub const DEFAULT_OMEGA_RANGE: (f64, f64) = (0.025, 0.5);

#[derive(Debug, Clone, PartialEq)]
pub struct LambConfig {
    pub nu: f64,
    pub omega_grid: Vec<f64>,
    pub root: BracketedRootConfig,
}

impl LambConfig {
    pub fn uniform(nu: f64, range: (f64, f64), n_points: usize) -> Result<Self, ProblemError> {
        check_range(range.0, range.1, n_points)?;
        let cfg =
            LambConfig { nu, omega_grid: linspace(range.0, range.1, n_points), root: BracketedRootConfig::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn n_points(&self) -> usize {
        self.omega_grid.len()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        check_nu(self.nu)?;
        if self.omega_grid.is_empty() {
            return Err(ProblemError::Dataset("empty frequency grid".into()));
        }
        for &w in &self.omega_grid {
            if !(w > 0.0 && w <= 1.0) {
                return Err(ProblemError::InvalidParameter { what: "Omega", requirement: "0 < Omega <= 1", value: w });
            }
        }
        Ok(())
    }
}

impl Default for LambConfig {
    fn default() -> Self {
        LambConfig::uniform(DEFAULT_NU, DEFAULT_OMEGA_RANGE, 20).expect("default Lamb config is valid")
    }
}

fn check_nu(nu: f64) -> Result<(), ProblemError> {
    if nu > -1.0 && nu < 0.5 {
        Ok(())
    } else {
        Err(ProblemError::InvalidParameter { what: "Poisson ratio", requirement: "-1 < nu < 0.5", value: nu })
    }
}

/// κ² = (1−2ν)/(2−2ν), the squared shear-to-longitudinal speed ratio.
pub fn kappa_squared(nu: f64) -> f64 {
    (1.0 - 2.0 * nu) / (2.0 - 2.0 * nu)
}

/// γ⁴·S(α²)·C(β²) − K²β²·C(α²)·S(β²), with S, C the even sinh/cosh helpers.
pub fn lamb_dispersion_residual(k: f64, omega: f64, nu: f64) -> f64 {
    let k2 = k * k;
    let w2 = omega * omega;
    let gamma2 = k2 - 0.5 * w2;
    let alpha2 = k2 - kappa_squared(nu) * w2;
    let beta2 = k2 - w2;
    gamma2 * gamma2 * even_sinhc(alpha2) * even_cosh(beta2) - k2 * beta2 * even_cosh(alpha2) * even_sinhc(beta2)
}

/// Leading-order bending wavenumber K₀ = [(3/2)(1−ν)]^{1/4}·√Ω.
pub fn leading_order_k(omega: f64, nu: f64) -> f64 {
    (1.5 * (1.0 - nu)).powf(0.25) * omega.sqrt()
}

/// Fundamental bending root K > 0 of the dispersion relation.
pub fn lamb_solve_k(omega: f64, nu: f64, root: &BracketedRootConfig) -> Result<f64, ProblemError> {
    check_nu(nu)?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(ProblemError::InvalidParameter { what: "Omega", requirement: "a finite value > 0", value: omega });
    }
    let guess = leading_order_k(omega, nu);
    let (mut lo, mut hi) = (0.5 * guess, 2.0 * guess);
    let f = |k: f64| lamb_dispersion_residual(k, omega, nu);
    for _ in 0..=4 {
        match find_root_bracketed(f, lo, hi, root) {
            Ok(k) => return Ok(k),
            Err(NumericsError::NoSignChange { .. }) => {
                lo *= 0.5;
                hi *= 2.0;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(ProblemError::Bracketing { omega, lo: lo * 2.0, hi: hi * 0.5 })
}

/// Rows (Ω, K⁴) with Ω as the only input column.
pub fn lamb_dataset(config: &LambConfig) -> Result<Dataset, ProblemError> {
    config.validate()?;
    let target = config
        .omega_grid
        .iter()
        .map(|&w| lamb_solve_k(w, config.nu, &config.root).map(|k| k.powi(4)))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new("Omega", config.omega_grid.clone(), vec![Feature::Power(1)], target)
}

/// A₀..A_n of K⁴ = (3/2)(1−ν)Ω² Σ Aⱼ Ωʲ; four coefficients are known.
pub fn lamb_benchmark_coeffs(nu: f64, n: u32) -> Result<Vec<f64>, ProblemError> {
    check_nu(nu)?;
    if n > 3 {
        return Err(ProblemError::OrderTooHigh { requested: n, available: 3 });
    }
    let chi = (1.5 * (1.0 - nu)).sqrt();
    let one_minus = 1.0 - nu;
    let all = [
        1.0,
        chi * (17.0 - 7.0 * nu) / (15.0 * one_minus),
        (1179.0 - 818.0 * nu + 409.0 * nu * nu) / (2100.0 * one_minus),
        chi * (5951.0 - 2603.0 * nu + 9953.0 * nu * nu - 4901.0 * nu.powi(3)) / (126_000.0 * one_minus * one_minus),
    ];
    Ok(all[..=n as usize].to_vec())
}

/// K⁴ expansion in powers of Ω through A_n.
pub fn lamb_benchmark_series(nu: f64, n: u32) -> Result<Series, ProblemError> {
    let a = lamb_benchmark_coeffs(nu, n)?;
    let scale = 1.5 * (1.0 - nu);
    let mut coeffs = vec![0.0, 0.0];
    coeffs.extend(a.iter().map(|aj| scale * aj));
    Ok(Series::from_coefficients("Omega", &coeffs))
}

/// ν(A₁) = (119 − 75A₁² + 5√15·√(15A₁⁴ − 28A₁²))/49.
pub fn poisson_from_a1(a1: f64) -> Result<f64, ProblemError> {
    let a2 = a1 * a1;
    let disc = 15.0 * a2 * a2 - 28.0 * a2;
    if !(disc >= 0.0) {
        return Err(ProblemError::NegativeDiscriminant { coefficient: "A1", value: a1, discriminant: disc });
    }
    Ok((119.0 - 75.0 * a2 + 5.0 * 15f64.sqrt() * disc.sqrt()) / 49.0)
}

/// ν(A₂) = (409 − 1050A₂ + √70·√(15750A₂² − 4499))/409.
pub fn poisson_from_a2(a2: f64) -> Result<f64, ProblemError> {
    let disc = 15750.0 * a2 * a2 - 4499.0;
    if !(disc >= 0.0) {
        return Err(ProblemError::NegativeDiscriminant { coefficient: "A2", value: a2, discriminant: disc });
    }
    Ok((409.0 - 1050.0 * a2 + 70f64.sqrt() * disc.sqrt()) / 409.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_k4(omega: f64, nu: f64) -> f64 {
        lamb_benchmark_series(nu, 3).unwrap().eval_full(omega).unwrap()
    }

    #[test]
    fn benchmark_coefficients() {
        let a = lamb_benchmark_coeffs(DEFAULT_NU, 3).unwrap();
        assert_eq!(a[0], 1.0);
        assert!((a[1] - 1.471_640_554).abs() < 1e-8);
        assert!((a[2] - 0.687_695_756).abs() < 1e-8);
        assert!((a[1] - 1.47).abs() < 0.01 && (a[2] - 0.688).abs() < 0.001);
        for nu in [-0.5, 0.0, 0.2, 0.45] {
            assert_eq!(lamb_benchmark_coeffs(nu, 0).unwrap(), vec![1.0]);
        }
        assert!(lamb_benchmark_coeffs(DEFAULT_NU, 4).is_err());
        assert!(lamb_benchmark_coeffs(0.5, 1).is_err());
    }

    #[test]
    fn poisson_inversion() {
        assert!((poisson_from_a1(1.48).unwrap() - 0.36).abs() < 0.005);
        assert!((poisson_from_a2(0.71).unwrap() - 0.38).abs() < 0.005);
        assert!(matches!(poisson_from_a1(0.5), Err(ProblemError::NegativeDiscriminant { .. })));
        assert!(poisson_from_a2(0.1).is_err());
        let a = lamb_benchmark_coeffs(DEFAULT_NU, 2).unwrap();
        assert!((poisson_from_a1(a[1]).unwrap() - DEFAULT_NU).abs() < 1e-10);
        assert!((poisson_from_a2(a[2]).unwrap() - DEFAULT_NU).abs() < 1e-10);
    }

    #[test]
    fn inversion_round_trip_grid() {
        for i in 0..=40 {
            let nu = 0.05 + 0.4 * i as f64 / 40.0;
            let a = lamb_benchmark_coeffs(nu, 2).unwrap();
            assert!((poisson_from_a1(a[1]).unwrap() - nu).abs() < 1e-9, "nu={nu}");
            assert!((poisson_from_a2(a[2]).unwrap() - nu).abs() < 1e-9, "nu={nu}");
        }
    }

    #[test]
    fn residual_dips_at_series_root() {
        let (w, nu) = (0.1, DEFAULT_NU);
        let k = series_k4(w, nu).powf(0.25);
        let at = lamb_dispersion_residual(k, w, nu).abs();
        assert!(at < lamb_dispersion_residual(1.1 * k, w, nu).abs());
        assert!(at < lamb_dispersion_residual(0.9 * k, w, nu).abs());
        let lo = lamb_dispersion_residual(0.8 * k, w, nu);
        let hi = lamb_dispersion_residual(1.25 * k, w, nu);
        assert!(lo * hi < 0.0);
        // trivial origin root
        assert!(lamb_dispersion_residual(0.0, 1e-4, nu).abs() < 1e-15);
    }

    #[test]
    fn solver_values() {
        let root = BracketedRootConfig::default();
        let k = lamb_solve_k(0.1, DEFAULT_NU, &root).unwrap();
        assert!((k - 0.326_261_606_970_373).abs() < 1e-10, "{k}");
        assert!((k.powi(4) / series_k4(0.1, DEFAULT_NU) - 1.0).abs() < 0.005);
        assert!(lamb_dispersion_residual(k, 0.1, DEFAULT_NU).abs() <= 1e-13);
        let k = lamb_solve_k(0.01, DEFAULT_NU, &root).unwrap();
        assert!((k.powi(4) / 1e-4 / 0.981_75 - 1.0).abs() < 0.02);
        let mut prev = 0.0;
        for i in 0..=48 {
            let w = 0.02 + 0.01 * i as f64;
            let k = lamb_solve_k(w, DEFAULT_NU, &root).unwrap();
            assert!(k > prev);
            prev = k;
        }
        assert!(lamb_solve_k(0.0, DEFAULT_NU, &root).is_err());
    }

    #[test]
    fn dataset() {
        let cfg = LambConfig::default();
        let ds = lamb_dataset(&cfg).unwrap();
        assert_eq!(ds.n_rows(), 20);
        assert!(ds.target.iter().all(|&t| t > 0.0));
        assert!(ds.target.windows(2).all(|w| w[1] > w[0]));
        assert!((ds.target[0] / 0.025f64.powi(2) / 0.981_75 - 1.0).abs() < 0.05);
        assert_eq!(lamb_dataset(&cfg).unwrap(), ds);
        for (&w, &t) in ds.parameter_grid.iter().zip(&ds.target) {
            assert!(lamb_dispersion_residual(t.powf(0.25), w, cfg.nu).abs() <= 1e-12);
        }
        assert!(LambConfig::uniform(0.3, (0.5, 2.0), 5).is_err());
    }
}

//! Turning an evolved expression into a [`Series`].
//!
//! Division-free trees (or trees whose divisors contain no variables) are
//! expanded symbolically. Anything else is projected by least squares onto
//! the monomials pᵃ(ln p)ᵇ sampled at Chebyshev points of the training range.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{Series, SeriesError};
use crate::expr::{ExprTree, Node, NodeId, Op, PROTECTED_DIV_EPS};
use crate::problems::Feature;

/// Relative projection residual above which the expression is flagged as not
/// representable by the basis.
pub const NON_SERIES_RESIDUAL: f64 = 1e-6;

/// Condition estimate above which a projection warning is attached.
pub const CONDITION_WARNING: f64 = 1e12;

/// Projection stops raising the degree once the held-out residual drops here.
const PROJECTION_TARGET: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub max_power: u32,
    pub max_log_power: u32,
    /// Parameter interval sampled by the projection route.
    pub range: (f64, f64),
}

impl ExtractOptions {
    pub fn new(range: (f64, f64)) -> Self {
        ExtractOptions { max_power: 25, max_log_power: 4, range }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionMethod {
    Symbolic,
    Projection {
        /// Highest power in the selected basis.
        degree: u32,
        /// Highest log power in the basis (0 when no log feature is used).
        log_degree: u32,
        /// RMS of tree − series on the held-out points.
        residual_rms: f64,
        /// `residual_rms` divided by the RMS of the tree values.
        relative_residual: f64,
        /// σ_max/σ_min of the column-normalized design matrix.
        condition: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub series: Series,
    pub method: ExtractionMethod,
    pub warnings: Vec<String>,
}

impl Extraction {
    /// True when projection could not represent the tree to [`NON_SERIES_RESIDUAL`].
    pub fn is_non_series(&self) -> bool {
        matches!(self.method, ExtractionMethod::Projection { relative_residual, .. } if relative_residual > NON_SERIES_RESIDUAL)
    }
}

type Poly = BTreeMap<(u32, u32), f64>;

pub fn extract_series(
    tree: &ExprTree,
    features: &[Feature],
    var: &str,
    opts: &ExtractOptions,
) -> Result<Extraction, SeriesError> {
    if let Some(poly) = expand(tree, tree.root(), features) {
        return Ok(Extraction {
            series: Series::from_map(var, poly),
            method: ExtractionMethod::Symbolic,
            warnings: Vec::new(),
        });
    }
    project(tree, features, var, opts)
}

fn poly_const(c: f64) -> Poly {
    let mut p = Poly::new();
    if c != 0.0 {
        p.insert((0, 0), c);
    }
    p
}

fn poly_add(mut a: Poly, b: &Poly, sign: f64) -> Poly {
    for (k, v) in b {
        *a.entry(*k).or_insert(0.0) += sign * v;
    }
    a
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for ((a1, b1), c1) in a {
        for ((a2, b2), c2) in b {
            *out.entry((a1 + a2, b1 + b2)).or_insert(0.0) += c1 * c2;
        }
    }
    out
}

/// Symbolic expansion; `None` when a divisor depends on a variable.
fn expand(tree: &ExprTree, id: NodeId, features: &[Feature]) -> Option<Poly> {
    match *tree.node(id) {
        Node::Constant(c) => Some(poly_const(c)),
        Node::Variable(i) => {
            let (a, b) = features[i].monomial();
            Some(Poly::from([((a, b), 1.0)]))
        }
        Node::Binary { op, left, right } => match op {
            Op::Add | Op::Sub => {
                let l = expand(tree, left, features)?;
                let r = expand(tree, right, features)?;
                Some(poly_add(l, &r, if op == Op::Add { 1.0 } else { -1.0 }))
            }
            Op::Mul => {
                let l = expand(tree, left, features)?;
                let r = expand(tree, right, features)?;
                Some(poly_mul(&l, &r))
            }
            Op::Div => {
                let divisor = tree.subtree(right);
                if divisor.has_variables() {
                    return None;
                }
                let d = divisor.evaluate(&[]);
                if d.abs() <= PROTECTED_DIV_EPS {
                    Some(poly_const(1.0))
                } else {
                    let l = expand(tree, left, features)?;
                    Some(l.into_iter().map(|(k, v)| (k, v / d)).collect())
                }
            }
        },
    }
}

fn chebyshev_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64;
            mid - half * theta.cos()
        })
        .collect()
}

/// Held-out points used to score a projection of the given basis size.
pub fn holdout_points(range: (f64, f64), max_power: u32, max_log_power: u32) -> Vec<f64> {
    let n = 4 * (max_power as usize + 1) * (max_log_power as usize + 1);
    // Chebyshev-Lobatto interior nodes of a different count never coincide with the fit nodes.
    let (lo, hi) = range;
    let m = n + 1;
    (1..m)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / m as f64;
            0.5 * (lo + hi) - 0.5 * (hi - lo) * theta.cos()
        })
        .collect()
}

fn feature_row(features: &[Feature], p: f64) -> Vec<f64> {
    features.iter().map(|f| f.apply(p)).collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n.max(1) as f64).sqrt()
}

fn project(tree: &ExprTree, features: &[Feature], var: &str, opts: &ExtractOptions) -> Result<Extraction, SeriesError> {
    let (lo, hi) = opts.range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(SeriesError::InvalidRange { lo, hi });
    }
    let uses_log = features.iter().any(|f| matches!(f, Feature::Log));
    if uses_log && lo <= 0.0 {
        return Err(SeriesError::InvalidRange { lo, hi });
    }
    let log_degree = if uses_log { opts.max_log_power } else { 0 };
    let n_fit = 4 * (opts.max_power as usize + 1) * (log_degree as usize + 1);
    let fit_p = chebyshev_points(lo, hi, n_fit);
    let hold_p = holdout_points(opts.range, opts.max_power, log_degree);
    let eval_all = |ps: &[f64]| -> Result<Vec<f64>, SeriesError> {
        let mut stack = Vec::new();
        ps.iter()
            .map(|&p| {
                let v = tree.evaluate_with(&feature_row(features, p), &mut stack);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(SeriesError::NonFinite)
                }
            })
            .collect()
    };
    let fit_y = eval_all(&fit_p)?;
    let hold_y = eval_all(&hold_p)?;
    let hold_scale = rms(hold_y.iter().copied());

    struct Candidate {
        series: Series,
        degree: u32,
        residual_rms: f64,
        relative: f64,
        condition: f64,
    }
    let mut best: Option<Candidate> = None;
    for degree in 0..=opts.max_power {
        let basis: Vec<(u32, u32)> = (0..=degree).flat_map(|a| (0..=log_degree).map(move |b| (a, b))).collect();
        let (coeffs, condition) = least_squares(&fit_p, &fit_y, &basis);
        let series = Series::from_map(var, basis.iter().copied().zip(coeffs).collect::<BTreeMap<_, _>>());
        let residual_rms = rms(hold_p.iter().zip(&hold_y).map(|(&p, &y)| y - series.eval_full(p).unwrap_or(f64::NAN)));
        let relative = if hold_scale > 0.0 { residual_rms / hold_scale } else { residual_rms };
        let cand = Candidate { series, degree, residual_rms, relative, condition };
        let done = relative <= PROJECTION_TARGET;
        if best.as_ref().is_none_or(|b| cand.relative < b.relative) {
            best = Some(cand);
        }
        if done {
            break;
        }
    }
    let best = best.expect("at least one degree tried");
    let mut warnings = Vec::new();
    if best.condition > CONDITION_WARNING {
        warnings.push(format!(
            "ill-conditioned projection: condition estimate {:.3e} at degree {}",
            best.condition, best.degree
        ));
    }
    if best.relative > NON_SERIES_RESIDUAL {
        warnings.push(format!("non-series expression: relative projection residual {:.3e}", best.relative));
    }
    Ok(Extraction {
        series: best.series,
        method: ExtractionMethod::Projection {
            degree: best.degree,
            log_degree,
            residual_rms: best.residual_rms,
            relative_residual: best.relative,
            condition: best.condition,
        },
        warnings,
    })
}

/// Least-squares fit of samples onto the monomials pᵃ(ln p)ᵇ listed in `basis`.
pub fn fit_basis(var: &str, ps: &[f64], ys: &[f64], basis: &[(u32, u32)]) -> Result<Series, SeriesError> {
    if ps.len() != ys.len() || ps.len() < basis.len() || basis.is_empty() {
        return Err(SeriesError::LengthMismatch { approx: ps.len(), exact: ys.len() });
    }
    if ps.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(SeriesError::NonFinite);
    }
    if basis.iter().any(|&(_, b)| b > 0) {
        if let Some(&p) = ps.iter().find(|&&p| p <= 0.0) {
            return Err(SeriesError::NonPositiveParameter(p));
        }
    }
    let (coeffs, _) = least_squares(ps, ys, basis);
    Ok(Series::from_map(var, basis.iter().copied().zip(coeffs).collect()))
}

/// Solves the column-normalized least-squares problem by SVD. Returns the
/// coefficients in the original basis and the condition estimate.
fn least_squares(ps: &[f64], ys: &[f64], basis: &[(u32, u32)]) -> (Vec<f64>, f64) {
    let rows = ps.len();
    let cols = basis.len();
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for (i, &p) in ps.iter().enumerate() {
        let ln_p = if p > 0.0 { p.ln() } else { 0.0 };
        for (j, &(a, b)) in basis.iter().enumerate() {
            m[(i, j)] = p.powi(a as i32) * ln_p.powi(b as i32);
        }
    }
    let scales: Vec<f64> = (0..cols)
        .map(|j| {
            let n = m.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        m.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = m.svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let y = DVector::from_column_slice(ys);
    let sol = svd.solve(&y, smax * 1e-15 * rows as f64).unwrap_or_else(|_| DVector::zeros(cols));
    let coeffs = sol.iter().zip(&scales).map(|(c, s)| c / s).collect();
    (coeffs, condition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Term;

    fn x(i: usize) -> ExprTree {
        ExprTree::variable(i)
    }
    fn c(v: f64) -> ExprTree {
        ExprTree::constant(v)
    }
    fn bin(op: Op, a: &ExprTree, b: &ExprTree) -> ExprTree {
        ExprTree::binary(op, a, b)
    }

    #[test]
    fn basis_fit_recovers_polynomial() {
        let ps: Vec<f64> = (0..20).map(|i| 0.025 + 0.025 * i as f64).collect();
        let ys: Vec<f64> = ps.iter().map(|p| 0.5 * p * p - 2.0 * p.powi(3) + 0.25 * p.powi(5)).collect();
        let s = fit_basis("w", &ps, &ys, &[(2, 0), (3, 0), (4, 0), (5, 0)]).unwrap();
        assert!((s.coefficient(2, 0) - 0.5).abs() < 1e-10);
        assert!((s.coefficient(3, 0) + 2.0).abs() < 1e-9);
        assert!(s.coefficient(4, 0).abs() < 1e-7);
        assert!((s.coefficient(5, 0) - 0.25).abs() < 1e-7);
        assert!(fit_basis("w", &ps[..2], &ys[..2], &[(2, 0), (3, 0), (4, 0)]).is_err());
        assert!(fit_basis("w", &[-1.0, 1.0], &[0.0, 0.0], &[(0, 1)]).is_err());
    }

    #[test]
    fn symbolic_difference_of_squares() {
        let t = bin(Op::Mul, &bin(Op::Sub, &x(0), &c(1.0)), &bin(Op::Add, &x(0), &c(1.0)));
        let e = extract_series(&t, &[Feature::Power(1)], "p", &ExtractOptions::new((0.0, 1.0))).unwrap();
        assert_eq!(e.method, ExtractionMethod::Symbolic);
        assert_eq!(e.series.terms(), &[Term::new(0, 0, -1.0), Term::new(2, 0, 1.0)]);
    }

    #[test]
    fn symbolic_mixed_monomial() {
        let t = bin(Op::Mul, &x(0), &x(1));
        let feats = [Feature::Power(1), Feature::Log];
        let e = extract_series(&t, &feats, "eta", &ExtractOptions::new((1e-3, 0.2))).unwrap();
        assert_eq!(e.series.terms(), &[Term::new(1, 1, 1.0)]);
    }

    #[test]
    fn symbolic_with_power_features_and_constant_divisor() {
        // (p^2 * p^3) / (1 + 3) with p^2 and p^3 supplied as inputs
        let t = bin(Op::Div, &bin(Op::Mul, &x(1), &x(2)), &bin(Op::Add, &c(1.0), &c(3.0)));
        let feats = [Feature::Power(1), Feature::Power(2), Feature::Power(3)];
        let e = extract_series(&t, &feats, "d", &ExtractOptions::new((0.0, 0.1))).unwrap();
        assert_eq!(e.method, ExtractionMethod::Symbolic);
        assert_eq!(e.series.terms(), &[Term::new(5, 0, 0.25)]);
        // protected division by a constant zero yields the constant 1
        let z = bin(Op::Div, &x(0), &bin(Op::Sub, &c(2.0), &c(2.0)));
        let e = extract_series(&z, &feats, "d", &ExtractOptions::new((0.0, 0.1))).unwrap();
        assert_eq!(e.series.terms(), &[Term::new(0, 0, 1.0)]);
    }

    #[test]
    fn projection_of_collision_solution() {
        // (d - 1) / (d + 1) = -1 + 2d - 2d^2 + 2d^3 - ...
        let t = bin(Op::Div, &bin(Op::Sub, &x(0), &c(1.0)), &bin(Op::Add, &x(0), &c(1.0)));
        let e = extract_series(&t, &[Feature::Power(1)], "d", &ExtractOptions::new((0.005, 0.1))).unwrap();
        assert!(matches!(e.method, ExtractionMethod::Projection { .. }));
        assert!(!e.is_non_series());
        let expected = [-1.0, 2.0, -2.0, 2.0, -2.0, 2.0];
        for (a, want) in expected.iter().enumerate() {
            let got = e.series.coefficient(a as u32, 0);
            assert!((got - want).abs() < 0.05, "order {a}: {got}");
        }
    }

    #[test]
    fn projection_residual_matches_holdout() {
        let t = bin(Op::Div, &c(1.0), &bin(Op::Add, &x(0), &c(0.7)));
        let opts = ExtractOptions::new((0.01, 0.3));
        let e = extract_series(&t, &[Feature::Power(1)], "p", &opts).unwrap();
        let ExtractionMethod::Projection { residual_rms, log_degree, .. } = e.method else {
            panic!("expected projection");
        };
        let pts = holdout_points(opts.range, opts.max_power, log_degree);
        let recomputed = rms(pts.iter().map(|&p| t.evaluate(&[p]) - e.series.eval_full(p).unwrap()));
        assert!((recomputed - residual_rms).abs() <= 1e-12);
    }

    #[test]
    fn projection_flags_non_series() {
        // 1 / (p - 0.05) has a pole inside the sampling range.
        let t = bin(Op::Div, &c(1.0), &bin(Op::Sub, &x(0), &c(0.05)));
        let e = extract_series(&t, &[Feature::Power(1)], "p", &ExtractOptions::new((0.0, 0.1))).unwrap();
        assert!(e.is_non_series());
        assert!(e.warnings.iter().any(|w| w.contains("non-series")));
    }

    #[test]
    fn projection_rejects_bad_range() {
        let t = bin(Op::Div, &c(1.0), &x(0));
        assert!(extract_series(&t, &[Feature::Power(1)], "p", &ExtractOptions::new((0.2, 0.1))).is_err());
        assert!(extract_series(&t, &[Feature::Log], "p", &ExtractOptions::new((0.0, 0.1))).is_err());
    }
}

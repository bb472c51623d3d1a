//! Special functions, an adaptive quadrature oracle, and a bracketed root finder.

use thiserror::Error;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_86;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{what} requires {requirement}, got {value}")]
    Domain { what: &'static str, requirement: &'static str, value: f64 },
    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root finder did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("function returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

fn require_positive(what: &'static str, x: f64) -> Result<(), NumericsError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::Domain { what, requirement: "a finite value > 0", value: x })
    }
}

/// Exponential integral E₁(x) = Γ(0, x) for x > 0.
///
/// Power series for x ≤ 1, continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64, NumericsError> {
    require_positive("E1", x)?;
    if x <= 1.0 {
        Ok(e1_series(x))
    } else {
        Ok(e1_scaled_cf(x) * (-x).exp())
    }
}

/// eˣ·E₁(x), computed without forming eˣ for x > 1 so it stays finite for huge x.
pub fn exp_integral_e1_scaled(x: f64) -> Result<f64, NumericsError> {
    require_positive("scaled E1", x)?;
    if x <= 1.0 {
        Ok(x.exp() * e1_series(x))
    } else {
        Ok(e1_scaled_cf(x))
    }
}

pub(crate) fn e1_series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ (-x)^k / (k k!)
    let mut sum = 0.0;
    let mut pow_fact = 1.0; // (-x)^k / k!
    for k in 1..200 {
        pow_fact *= -x / k as f64;
        let term = pow_fact / k as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Modified Lentz evaluation of eˣ·E₁(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...))).
pub(crate) fn e1_scaled_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over the finite interval [a, b].
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth >= 48 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    let (rough, _) = gk15(&f, a, b);
    let tol = abs_tol.max(rel_tol * rough.abs());
    recurse(&f, a, b, tol, 0)
}

/// I(δ) = ∫₀^∞ e^{−x}/(1+δx) dx by quadrature after mapping x = t/(1−t).
///
/// Independent of the closed form through E₁; used to check it.
pub fn kv_integral_quadrature_oracle(delta: f64) -> Result<f64, NumericsError> {
    require_positive("Kelvin-Voigt integral", delta)?;
    let integrand = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - t;
        let x = t / one_minus;
        (-x).exp() / (1.0 + delta * x) / (one_minus * one_minus)
    };
    Ok(integrate_adaptive(integrand, 0.0, 1.0, 1e-15, 1e-14))
}

const EVEN_TAYLOR_CUTOFF: f64 = 1e-8;

/// S(z) = sinh(√z)/√z, continued evenly to sin(√−z)/√−z for z < 0.
pub fn even_sinhc(z: f64) -> f64 {
    if z.abs() < EVEN_TAYLOR_CUTOFF {
        1.0 + z / 6.0
    } else if z > 0.0 {
        let r = z.sqrt();
        r.sinh() / r
    } else {
        let r = (-z).sqrt();
        r.sin() / r
    }
}

/// C(z) = cosh(√z), continued evenly to cos(√−z) for z < 0.
pub fn even_cosh(z: f64) -> f64 {
    if z.abs() < EVEN_TAYLOR_CUTOFF {
        1.0 + z / 2.0
    } else if z > 0.0 {
        z.sqrt().cosh()
    } else {
        (-z).sqrt().cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketedRootConfig {
    /// Accept x once |f(x)| falls to this level.
    pub abs_tol: f64,
    /// Accept x once the bracket is narrower than `x_tol * |x|`.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for BracketedRootConfig {
    fn default() -> Self {
        BracketedRootConfig { abs_tol: 1e-13, x_tol: 1e-14, max_iter: 200 }
    }
}

/// Brent's method on a sign-changing bracket. Every evaluation of `f` lies in [lo, hi].
pub fn find_root_bracketed<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    config: &BracketedRootConfig,
) -> Result<f64, NumericsError> {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() {
        return Err(NumericsError::NonFinite(a));
    }
    if !fb.is_finite() {
        return Err(NumericsError::NonFinite(b));
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NoSignChange { lo, hi, f_lo: fa, f_hi: fb });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..config.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * config.x_tol * b.abs();
        let m = 0.5 * (c - b);
        if fb.abs() <= config.abs_tol || m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            // inverse quadratic interpolation, or secant when only two points are distinct
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite(b));
        }
    }
    Err(NumericsError::NoConvergence(config.max_iter))
}

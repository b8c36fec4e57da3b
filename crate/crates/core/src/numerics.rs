//! Gaussian special functions used by every likelihood, EM and Fisher formula.
//!
//! Cell probabilities are evaluated in log space whenever both cell edges lie
//! on the same side of the mean. In that regime the probability is a
//! difference of two upper-tail masses, which is computed from the scaled
//! complementary error function `erfcx` so that cells many standard
//! deviations into a tail keep full relative precision.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::error::{Error, Result};

/// Distance from ±1 at which [`erf_inv`] reports saturation.
pub const SATURATION_EPS: f64 = 1e-15;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// A half-open interval `[lo, up)` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub up: f64,
}

impl Interval {
    pub fn new(lo: f64, up: f64) -> Result<Self> {
        if lo.is_nan() || up.is_nan() {
            return Err(Error::NonFinite("Interval::new"));
        }
        if lo >= up || lo == f64::INFINITY || up == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument(format!("interval requires lo < up, got [{lo}, {up})")));
        }
        Ok(Self { lo, up })
    }

    /// The whole real line.
    pub const fn whole() -> Self {
        Self { lo: f64::NEG_INFINITY, up: f64::INFINITY }
    }

    #[inline]
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y < self.up
    }

    #[inline]
    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.up.is_finite()
    }
}

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        // erfcx(-x) = 2 exp(x²) - erfcx(x)
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 4.0 {
        return (x * x).exp() * libm::erfc(x);
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    // Modified Lentz evaluation of
    // sqrt(pi) erfcx(x) = 1 / (x + (1/2) / (x + 1 / (x + (3/2) / (x + ...))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI / f
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

#[inline]
pub fn ln_std_normal_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF Φ(x).
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::NonFinite("std_normal_cdf"));
    }
    Ok(0.5 * libm::erfc(-x * FRAC_1_SQRT_2))
}

/// `ln Q(z)` where `Q(z) = 1 - Φ(z)` is the upper-tail mass.
pub fn ln_upper_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        f64::NEG_INFINITY
    } else if z >= 0.0 {
        erfcx(z * FRAC_1_SQRT_2).ln() - LN_2 - 0.5 * z * z
    } else {
        (-0.5 * libm::erfc(-z * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// `ln(Q(s) - Q(t))` for `0 <= s < t <= +inf`.
fn ln_tail_difference(s: f64, t: f64) -> f64 {
    let lqs = ln_upper_tail(s);
    if t == f64::INFINITY {
        return lqs;
    }
    let d = ln_upper_tail(t) - lqs;
    if d > -1e-10 {
        // Cell narrower than the resolution of the tail difference: midpoint rule.
        let mid = 0.5 * (s + t);
        return ln_std_normal_pdf(mid) + (t - s).ln();
    }
    lqs + (-d.exp_m1()).ln()
}

fn standardize(cell: &Interval, mean: f64, sigma: f64) -> Result<(f64, f64)> {
    if mean.is_nan() || !mean.is_finite() {
        return Err(Error::NonFinite("cell mean"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive and finite, got {sigma}")));
    }
    Ok(((cell.lo - mean) / sigma, (cell.up - mean) / sigma))
}

/// `ln P(mean + σ·Z ∈ cell)` for a standard normal `Z`.
pub fn log_cell_prob(cell: &Interval, mean: f64, sigma: f64) -> Result<f64> {
    let (a, b) = standardize(cell, mean, sigma)?;
    log_prob_standardized(a, b)
}

fn log_prob_standardized(a: f64, b: f64) -> Result<f64> {
    let lp = if a >= 0.0 {
        ln_tail_difference(a, b)
    } else if b <= 0.0 {
        ln_tail_difference(-b, -a)
    } else {
        // Edges straddle the mean: erf(b') and erf(a') have opposite signs,
        // so the difference is a sum of magnitudes.
        (0.5 * (libm::erf(b * FRAC_1_SQRT_2) - libm::erf(a * FRAC_1_SQRT_2))).ln()
    };
    if lp.is_nan() || lp == f64::NEG_INFINITY {
        return Err(Error::EmptyCell);
    }
    Ok(lp)
}

/// Per-cell quantities shared by the E-step, the score and the Fisher weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStats {
    /// `ln P(cell)`.
    pub log_prob: f64,
    /// `E[Z | cell]` in standardized units; `(φ(a) - φ(b)) / P`.
    pub mean_z: f64,
    /// `Var[Z | cell]` in standardized units.
    pub var_z: f64,
}

impl CellStats {
    /// Fisher weight `(φ(a) - φ(b))² / P` of this cell (standardized units).
    #[inline]
    pub fn fisher_weight(&self) -> f64 {
        self.log_prob.exp() * self.mean_z * self.mean_z
    }
}

pub fn cell_stats(cell: &Interval, mean: f64, sigma: f64) -> Result<CellStats> {
    let (a, b) = standardize(cell, mean, sigma)?;
    let lp = log_prob_standardized(a, b)?;
    let ra = if a.is_finite() { (ln_std_normal_pdf(a) - lp).exp() } else { 0.0 };
    let rb = if b.is_finite() { (ln_std_normal_pdf(b) - lp).exp() } else { 0.0 };
    let mut mz = ra - rb;
    if a.is_finite() && mz < a {
        mz = a;
    }
    if b.is_finite() && mz > b {
        mz = b;
    }
    let a_term = if a.is_finite() { a * ra } else { 0.0 };
    let b_term = if b.is_finite() { b * rb } else { 0.0 };
    let mut var = 1.0 + a_term - b_term - mz * mz;
    if var < 0.0 {
        var = 0.0;
    }
    if a.is_finite() && b.is_finite() {
        // Variance of any law on [a, b) is at most (b - a)² / 4.
        var = var.min(0.25 * (b - a) * (b - a));
    }
    Ok(CellStats { log_prob: lp, mean_z: mz, var_z: var })
}

/// First and second conditional moments of the noise `η ~ N(0, σ²)` given
/// `mean + η ∈ cell`.
pub fn cell_conditional_moments(cell: &Interval, mean: f64, sigma: f64) -> Result<(f64, f64)> {
    let s = cell_stats(cell, mean, sigma)?;
    let m1 = sigma * s.mean_z;
    let m2 = sigma * sigma * (s.mean_z * s.mean_z + s.var_z);
    Ok((m1, m2))
}

/// Inverse error function.
///
/// Rational initial guess followed by two Halley steps. Arguments within
/// [`SATURATION_EPS`] of ±1 are rejected with [`Error::Saturated`].
pub fn erf_inv(p: f64) -> Result<f64> {
    if p.is_nan() {
        return Err(Error::NonFinite("erf_inv"));
    }
    if p.abs() >= 1.0 - SATURATION_EPS {
        return Err(Error::Saturated(p));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let q = p.abs();
    let mut x = initial_erf_inv(q);
    // complement is exact for q >= 0.5 (Sterbenz)
    let use_complement = q > 0.5;
    let comp = 1.0 - q;
    for _ in 0..2 {
        let f = if use_complement { comp - libm::erfc(x) } else { libm::erf(x) - q };
        let fp = FRAC_2_SQRT_PI * (-x * x).exp();
        if fp == 0.0 {
            break;
        }
        let delta = f / fp;
        x -= delta / (1.0 + x * delta);
    }
    Ok(x.copysign(p))
}

// Giles' single-precision approximation, used only as a starting point.
fn initial_erf_inv(x: f64) -> f64 {
    let mut w = -((1.0 - x) * (1.0 + x)).ln();
    let p = if w < 5.0 {
        w -= 2.5;
        let mut p = 2.810_226_36e-08;
        p = 3.432_739_39e-07 + p * w;
        p = -3.523_387_7e-06 + p * w;
        p = -4.391_506_54e-06 + p * w;
        p = 0.000_218_580_87 + p * w;
        p = -0.001_253_725_03 + p * w;
        p = -0.004_177_681_64 + p * w;
        p = 0.246_640_727 + p * w;
        1.501_409_41 + p * w
    } else {
        w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        p = 0.000_100_950_558 + p * w;
        p = 0.001_349_343_22 + p * w;
        p = -0.003_673_428_44 + p * w;
        p = 0.005_739_507_73 + p * w;
        p = -0.007_622_461_3 + p * w;
        p = 0.009_438_870_47 + p * w;
        p = 1.001_674_06 + p * w;
        2.832_976_82 + p * w
    };
    p * x
}

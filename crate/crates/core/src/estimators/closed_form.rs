//! Exact single-bit ML estimators for pilot designs that decouple into
//! independent scalar problems.
//!
//! For the sign quantizer and a scalar gain `g` seen through pilots `±1`,
//! the fraction of sign agreements `p` has expectation `erf(g/(√2σ))`, and the
//! ML estimate is `√2σ·erf⁻¹(p)` whenever `|p| < 1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::erf_inv;

fn check_pm1(name: &str, v: impl IntoIterator<Item = f64>) -> Result<()> {
    if v.into_iter().all(|s| s == 1.0 || s == -1.0) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} entries must be ±1")))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

/// `ĥ = √2 σ erf⁻¹(rᵀx / N)`.
pub fn ml_siso_one_bit(r: &[f64], x: &[f64], sigma: f64) -> Result<f64> {
    if r.is_empty() || r.len() != x.len() {
        return Err(Error::DimensionMismatch(format!("r has {} samples, x has {}", r.len(), x.len())));
    }
    check_pm1("r", r.iter().copied())?;
    check_pm1("x", x.iter().copied())?;
    check_sigma(sigma)?;
    let corr: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(std::f64::consts::SQRT_2 * sigma * erf_inv(corr / r.len() as f64)?)
}

/// Two-tap ISI channel `y_i = h₀x_i + h₁x_{i−1} + η_i`, `i = 2..N`.
///
/// Outputs whose two symbols agree see only `h₀ + h₁`; the others see only
/// `h₀ − h₁`. With `S = Σ x_i x_{i−1}` the two groups have `(N−1±S)/2`
/// members, which gives the denominators below.
pub fn ml_siso_two_tap(r: &[f64], x: &[f64], sigma: f64) -> Result<(f64, f64)> {
    if r.len() < 2 || r.len() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "two-tap estimation needs equal lengths >= 2, got {} and {}",
            r.len(),
            x.len()
        )));
    }
    check_pm1("r", r.iter().copied())?;
    check_pm1("x", x.iter().copied())?;
    check_sigma(sigma)?;
    let n1 = (r.len() - 1) as f64;
    let s: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
    let (den_sum, den_diff) = (n1 + s, n1 - s);
    if den_sum == 0.0 {
        return Err(Error::DegeneratePilot("no consecutive equal symbols; h0 + h1 is unobservable".into()));
    }
    if den_diff == 0.0 {
        return Err(Error::DegeneratePilot("no consecutive sign changes; h0 - h1 is unobservable".into()));
    }
    let (mut a, mut b) = (0.0, 0.0);
    for i in 1..r.len() {
        a += (x[i] + x[i - 1]) * r[i];
        b += (x[i] - x[i - 1]) * r[i];
    }
    let ea = erf_inv(a / den_sum)?;
    let eb = erf_inv(b / den_diff)?;
    let c = sigma / std::f64::consts::SQRT_2;
    Ok((c * (ea + eb), c * (ea - eb)))
}

/// 2×2 MIMO with sign outputs `R` (2×N) and pilots `X` (2×N).
///
/// `ĥ_ij = √(σ²/2)(erf⁻¹[(x₁+x₂)ᵀr_i/(N+x₁ᵀx₂)] + erf⁻¹[(x_j−x_j̄)ᵀr_i/(N−x₁ᵀx₂)])`
pub fn ml_mimo_2x2_one_bit(r: &DMatrix<f64>, x: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if r.nrows() != 2 || x.nrows() != 2 || r.ncols() != x.ncols() || r.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2×N outputs and pilots, got {:?} and {:?}",
            r.shape(),
            x.shape()
        )));
    }
    check_pm1("R", r.iter().copied())?;
    check_pm1("X", x.iter().copied())?;
    check_sigma(sigma)?;
    let n = r.ncols() as f64;
    let (x1, x2) = (x.row(0), x.row(1));
    let c = x1.dot(&x2);
    if n + c == 0.0 || n - c == 0.0 {
        return Err(Error::DegeneratePilot(format!("|x1ᵀx2| = N = {n}")));
    }
    let sum = x1 + x2;
    let diff = x1 - x2;
    let scale = sigma / std::f64::consts::SQRT_2;
    let mut h = DMatrix::zeros(2, 2);
    for i in 0..2 {
        let ri = r.row(i);
        let ea = erf_inv(sum.dot(&ri) / (n + c))?;
        let eb = erf_inv(diff.dot(&ri) / (n - c))?;
        h[(i, 0)] = scale * (ea + eb);
        h[(i, 1)] = scale * (ea - eb);
    }
    Ok(h)
}

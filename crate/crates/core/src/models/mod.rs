//! Differentiable system functions `θ ↦ f(x, θ) ∈ ℝᴺ`.
//!
//! The known input `x` (pilots, code waveform, array geometry) is fixed when a
//! model is built, so evaluation only takes the parameter vector.

mod gnss;
mod linear;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use gnss::{build_gnss_model, GnssModel, GnssParam};
pub use linear::{build_linear_model, mimo_pilot_matrix, one_tap_model, two_tap_model, LinearModel};

/// Relative step of the central differences used for non-analytic gradients.
pub const FD_REL_STEP: f64 = 1e-6;

pub trait SystemModel: Send + Sync {
    fn param_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;

    /// `N × P` matrix whose row `i` is `∇_θ f_i`.
    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn grad(&self, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        if i >= self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "output index {i} out of range for N = {}",
                self.output_dim()
            )));
        }
        Ok(self.jacobian(theta)?.row(i).transpose())
    }

    /// The matrix `X` when `f = Xθ`.
    fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

pub(crate) fn check_theta(theta: &DVector<f64>, p: usize) -> Result<()> {
    if theta.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector has length {}, model expects {p}",
            theta.len()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter vector"));
    }
    Ok(())
}

/// Central-difference step for parameter value `v`.
#[inline]
pub fn fd_step(v: f64) -> f64 {
    FD_REL_STEP * (1.0 + v.abs())
}

/// Central-difference Jacobian columns for the parameters in `cols`.
pub fn fd_jacobian_columns<F>(eval: F, theta: &DVector<f64>, cols: &[usize], out: &mut DMatrix<f64>) -> Result<()>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut probe = theta.clone();
    for &p in cols {
        let h = fd_step(theta[p]);
        probe[p] = theta[p] + h;
        let plus = eval(&probe)?;
        probe[p] = theta[p] - h;
        let minus = eval(&probe)?;
        probe[p] = theta[p];
        out.set_column(p, &((plus - minus) / (2.0 * h)));
    }
    Ok(())
}

/// Full central-difference Jacobian of any model; a test oracle for analytic gradients.
pub fn fd_jacobian(model: &dyn SystemModel, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let cols: Vec<usize> = (0..model.param_dim()).collect();
    let mut out = DMatrix::zeros(model.output_dim(), model.param_dim());
    fd_jacobian_columns(|t| model.eval(t), theta, &cols, &mut out)?;
    Ok(out)
}

/// `[Re(z); Im(z)]`.
pub fn stack_complex(z: &[Complex64]) -> DVector<f64> {
    let n = z.len();
    DVector::from_fn(2 * n, |i, _| if i < n { z[i].re } else { z[i - n].im })
}

pub fn unstack_complex(v: &DVector<f64>) -> Result<Vec<Complex64>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!("stacked vector length {} is odd", v.len())));
    }
    let n = v.len() / 2;
    Ok((0..n).map(|i| Complex64::new(v[i], v[n + i])).collect())
}

use nalgebra::{DMatrix, DVector};

use super::{check_theta, SystemModel};
use crate::error::{Error, Result};

/// `f = Xθ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    x: DMatrix<f64>,
}

impl LinearModel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }
}

pub fn build_linear_model(x: DMatrix<f64>) -> Result<LinearModel> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::DimensionMismatch("pilot matrix is empty".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pilot matrix"));
    }
    Ok(LinearModel { x })
}

/// Scalar channel `f_i = h·x_i`.
pub fn one_tap_model(pilot: &[f64]) -> Result<LinearModel> {
    build_linear_model(DMatrix::from_column_slice(pilot.len(), 1, pilot))
}

/// Two-tap ISI channel `f_i = h₀x_i + h₁x_{i-1}` for `i = 2..N`.
///
/// The first output has no predecessor symbol and is dropped, so the model
/// has `N - 1` outputs.
pub fn two_tap_model(pilot: &[f64]) -> Result<LinearModel> {
    if pilot.len() < 2 {
        return Err(Error::DimensionMismatch("two-tap model needs N >= 2".into()));
    }
    let n = pilot.len() - 1;
    build_linear_model(DMatrix::from_fn(n, 2, |i, j| pilot[i + 1 - j]))
}

/// Vectorized MIMO model `Y = H P` with `H` of size `M × L` and pilots `P` of size `L × N`.
///
/// Parameters are `H` in row-major order (`h_11, …, h_1L, h_21, …`) and
/// outputs are `Y` in row-major order, so `X = I_M ⊗ Pᵀ` and receive rows
/// decouple.
pub fn mimo_pilot_matrix(pilots: &DMatrix<f64>, receivers: usize) -> Result<DMatrix<f64>> {
    if receivers == 0 || pilots.nrows() == 0 || pilots.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty MIMO dimensions".into()));
    }
    let (l, n) = pilots.shape();
    let mut x = DMatrix::zeros(receivers * n, receivers * l);
    for m in 0..receivers {
        x.view_mut((m * n, m * l), (n, l)).copy_from(&pilots.transpose());
    }
    Ok(x)
}

impl SystemModel for LinearModel {
    fn param_dim(&self) -> usize {
        self.x.ncols()
    }

    fn output_dim(&self) -> usize {
        self.x.nrows()
    }

    fn eval(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_theta(theta, self.param_dim())?;
        Ok(&self.x * theta)
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_theta(theta, self.param_dim())?;
        Ok(self.x.clone())
    }

    fn grad(&self, theta: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        check_theta(theta, self.param_dim())?;
        if i >= self.output_dim() {
            return Err(Error::DimensionMismatch(format!("output index {i} out of range")));
        }
        Ok(self.x.row(i).transpose())
    }

    fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        Some(&self.x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fd_jacobian;
    use proptest::prelude::*;

    #[test]
    fn one_tap_all_ones() {
        let m = one_tap_model(&[1.0; 5]).unwrap();
        let f = m.eval(&DVector::from_element(1, 0.7)).unwrap();
        assert!(f.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn two_tap_direct_substitution() {
        let m = two_tap_model(&[1.0, -1.0, 1.0]).unwrap();
        assert_eq!(m.output_dim(), 2);
        let (h0, h1) = (0.8, 0.3);
        let f = m.eval(&DVector::from_vec(vec![h0, h1])).unwrap();
        // second symbol: x_2 h0 + x_1 h1
        assert_eq!(f[0], -h0 + h1);
        assert_eq!(f[1], h0 - h1);
    }

    #[test]
    fn orthogonal_mimo_pilots_give_orthonormal_columns() {
        let n = 8;
        let h4 = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
        let p = DMatrix::from_fn(4, n, |r, c| h4[r][c % 4] / (n as f64).sqrt());
        let x = mimo_pilot_matrix(&p, 4).unwrap();
        let gram = x.transpose() * &x;
        assert!((gram - DMatrix::identity(16, 16)).amax() < 1e-14);
    }

    #[test]
    fn mimo_rows_decouple() {
        let p = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let m = build_linear_model(mimo_pilot_matrix(&p, 2).unwrap()).unwrap();
        let h = DVector::from_vec(vec![2.0, 1.5, 0.5, -1.0]);
        let f = m.eval(&h).unwrap();
        assert_eq!(f.as_slice(), &[3.5, -0.5, 0.5, -0.5, -1.5, 1.5]);
    }

    #[test]
    fn dimension_errors() {
        assert!(build_linear_model(DMatrix::zeros(0, 1)).is_err());
        let m = one_tap_model(&[1.0, 1.0]).unwrap();
        assert!(matches!(m.eval(&DVector::zeros(2)), Err(Error::DimensionMismatch(_))));
        assert!(two_tap_model(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn linear_superposition_and_fd_gradient(
            entries in proptest::collection::vec(-2.0f64..2.0, 12),
            t1 in proptest::collection::vec(-3.0f64..3.0, 3),
            t2 in proptest::collection::vec(-3.0f64..3.0, 3),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let m = build_linear_model(DMatrix::from_vec(4, 3, entries)).unwrap();
            let (t1, t2) = (DVector::from_vec(t1), DVector::from_vec(t2));
            let lhs = m.eval(&(&t1 * a + &t2 * b)).unwrap();
            let rhs = m.eval(&t1).unwrap() * a + m.eval(&t2).unwrap() * b;
            prop_assert!((lhs - rhs).amax() < 1e-12);
            let fd = fd_jacobian(&m, &t1).unwrap();
            let an = m.jacobian(&t1).unwrap();
            prop_assert!((fd - &an).amax() <= 1e-5 * (1.0 + an.amax()));
        }
    }
}

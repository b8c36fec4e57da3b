//! Likelihood evaluation, closed-form single-bit ML estimators and the EM
//! algorithms for pilot-based and blind estimation.
//!
//! Observations are passed as cell indices of the quantizer in use; the
//! closed-form single-bit estimators take the ±1 outputs directly.

mod blind;
mod closed_form;
mod em;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::SystemModel;
use crate::numerics::{cell_stats, CellStats};
use crate::quantizer::Quantizer;

pub use blind::{blind_log_likelihood, blind_moment_init, em_blind_siso};
pub use closed_form::{ml_mimo_2x2_one_bit, ml_siso_one_bit, ml_siso_two_tap};
pub use em::em_pilot;

/// Parameter prior `p_θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    /// Flat prior: the estimate is plain maximum likelihood.
    Uniform,
    /// Zero-mean Gaussian with covariance `R`; stores `R⁻¹`.
    Gaussian { precision: DMatrix<f64> },
}

impl Prior {
    pub fn gaussian(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(Error::DimensionMismatch("prior covariance must be square".into()));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::InvalidArgument("prior covariance is not symmetric".into()));
        }
        let chol = covariance
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("prior covariance is not positive definite".into()))?;
        Ok(Prior::Gaussian { precision: chol.inverse() })
    }

    pub fn precision(&self) -> Option<&DMatrix<f64>> {
        match self {
            Prior::Uniform => None,
            Prior::Gaussian { precision } => Some(precision),
        }
    }

    fn check(&self, p: usize) -> Result<()> {
        match self.precision() {
            Some(m) if m.nrows() != p => {
                Err(Error::DimensionMismatch(format!("prior has dimension {}, model has {p} parameters", m.nrows())))
            }
            _ => Ok(()),
        }
    }

    /// `log p_θ(θ)` up to an additive constant.
    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        match self.precision() {
            None => 0.0,
            Some(p) => -0.5 * theta.dot(&(p * theta)),
        }
    }

    pub fn grad_log_density(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self.precision() {
            None => DVector::zeros(theta.len()),
            Some(p) => -(p * theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the sup-norm parameter change falls below this.
    pub tol: f64,
    /// Stop and flag the trace if the log-likelihood ever decreases.
    pub likelihood_check: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-8, likelihood_check: true }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }
}

/// Result of an EM run. A run that hit `max_iters` is returned with
/// `converged = false` rather than as an error.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrace {
    pub theta_hat: DVector<f64>,
    pub iterations: usize,
    /// Log-posterior (log-likelihood plus log-prior) at every iterate, starting with `θ⁰`.
    pub loglik_per_iter: Vec<f64>,
    pub converged: bool,
    /// False when the likelihood check caught a decrease.
    pub monotone: bool,
}

/// Allowed decrease between consecutive EM log-likelihoods.
pub(crate) fn monotone_slack(l: f64) -> f64 {
    1e-9 + 1e-12 * l.abs()
}

fn check_observations(model: &dyn SystemModel, q: &Quantizer, cells: &[usize]) -> Result<()> {
    if cells.len() != model.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations for a model with {} outputs",
            cells.len(),
            model.output_dim()
        )));
    }
    if let Some(&bad) = cells.iter().find(|&&c| c >= q.num_cells()) {
        return Err(Error::DimensionMismatch(format!(
            "cell index {bad} out of range for a {}-cell quantizer",
            q.num_cells()
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

/// Per-output cell statistics at the current mean `f`.
pub(crate) fn observation_stats(
    q: &Quantizer,
    cells: &[usize],
    f: &DVector<f64>,
    sigma: f64,
) -> Result<Vec<CellStats>> {
    cells.iter().zip(f.iter()).map(|(&c, &fi)| cell_stats(&q.cell(c), fi, sigma)).collect()
}

/// `Σ_i log P(r_i | f_i(θ), σ) + log p_θ(θ)`.
pub fn log_likelihood(
    model: &dyn SystemModel,
    q: &Quantizer,
    cells: &[usize],
    theta: &DVector<f64>,
    sigma: f64,
    prior: &Prior,
) -> Result<f64> {
    check_observations(model, q, cells)?;
    check_sigma(sigma)?;
    prior.check(model.param_dim())?;
    let f = model.eval(theta)?;
    let stats = observation_stats(q, cells, &f, sigma)?;
    Ok(stats.iter().map(|s| s.log_prob).sum::<f64>() + prior.log_density(theta))
}

/// Gradient of [`log_likelihood`]; zero at every interior stationary point.
///
/// Each output contributes `(φ(a_i) − φ(b_i)) / (σ P_i) · ∇f_i` with the
/// standardized cell edges `a_i, b_i`.
pub fn kkt_residual(
    model: &dyn SystemModel,
    q: &Quantizer,
    cells: &[usize],
    theta: &DVector<f64>,
    sigma: f64,
    prior: &Prior,
) -> Result<DVector<f64>> {
    check_observations(model, q, cells)?;
    check_sigma(sigma)?;
    prior.check(model.param_dim())?;
    let f = model.eval(theta)?;
    let stats = observation_stats(q, cells, &f, sigma)?;
    let score = DVector::from_iterator(stats.len(), stats.iter().map(|s| s.mean_z / sigma));
    let jac = model.jacobian(theta)?;
    Ok(jac.tr_mul(&score) + prior.grad_log_density(theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_linear_model, one_tap_model};
    use crate::numerics::std_normal_cdf;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn sign_quantizer_zero_mean_likelihood() {
        let m = one_tap_model(&[1.0; 7]).unwrap();
        let q = Quantizer::sign();
        let cells = [0, 1, 1, 0, 1, 0, 0];
        let l = log_likelihood(&m, &q, &cells, &DVector::zeros(1), 1.3, &Prior::Uniform).unwrap();
        assert!((l - 7.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn whole_line_cell_leaves_prior_only() {
        let m = one_tap_model(&[1.0]).unwrap();
        let q = Quantizer::make_custom(vec![1e300], vec![0.0, 2e300]).unwrap();
        let prior = Prior::gaussian(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let theta = DVector::from_element(1, 0.8);
        let l = log_likelihood(&m, &q, &[0], &theta, 1.0, &prior).unwrap();
        assert!((l - (-0.5 * 0.64 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn one_tap_likelihood_reference() {
        let m = one_tap_model(&[1.0, 1.0, 1.0]).unwrap();
        let q = Quantizer::sign();
        let l = log_likelihood(&m, &q, &[1, 1, 0], &DVector::from_element(1, 0.5), 1.0, &Prior::Uniform).unwrap();
        let want = 2.0 * std_normal_cdf(0.5).unwrap().ln() + std_normal_cdf(-0.5).unwrap().ln();
        assert!((l - want).abs() < 1e-14);
        // mpmath: 2 ln Φ(0.5) + ln Φ(−0.5)
        assert!((l - (-1.913_804_592_170_931)).abs() < 1e-12);
    }

    #[test]
    fn balanced_sign_data_has_zero_score_at_origin() {
        let m = one_tap_model(&[1.0; 6]).unwrap();
        let r = kkt_residual(&m, &Quantizer::sign(), &[0, 1, 0, 1, 1, 0], &DVector::zeros(1), 0.9, &Prior::Uniform)
            .unwrap();
        assert!(r[0].abs() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let m = one_tap_model(&[1.0; 3]).unwrap();
        let q = Quantizer::sign();
        let t = DVector::zeros(1);
        assert!(matches!(log_likelihood(&m, &q, &[0, 1], &t, 1.0, &Prior::Uniform), Err(Error::DimensionMismatch(_))));
        assert!(matches!(
            log_likelihood(&m, &q, &[0, 1, 2], &t, 1.0, &Prior::Uniform),
            Err(Error::DimensionMismatch(_))
        ));
        let prior = Prior::gaussian(DMatrix::identity(2, 2)).unwrap();
        assert!(log_likelihood(&m, &q, &[0, 1, 1], &t, 1.0, &prior).is_err());
        assert!(Prior::gaussian(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    fn random_instance(seed: u64) -> (crate::models::LinearModel, Quantizer, Vec<usize>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 20;
        let x = DMatrix::from_fn(n, 3, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let m = build_linear_model(x).unwrap();
        let q = Quantizer::make_midriser(2, 0.8).unwrap();
        let theta = DVector::from_fn(3, |_, _| rng.random_range(-0.7..0.7));
        let sigma = 0.9;
        let f = m.eval(&theta).unwrap();
        let cells = f.iter().map(|fi| q.index_of(fi + sigma * rng.sample::<f64, _>(StandardNormal))).collect();
        (m, q, cells, sigma)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn residual_matches_finite_differences(seed in 0u64..10_000, t in proptest::collection::vec(-1.5f64..1.5, 3)) {
            let (m, q, cells, sigma) = random_instance(seed);
            let prior = Prior::gaussian(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5]))).unwrap();
            let theta = DVector::from_vec(t);
            let g = kkt_residual(&m, &q, &cells, &theta, sigma, &prior).unwrap();
            for p in 0..3 {
                let h = 1e-5;
                let mut a = theta.clone();
                a[p] += h;
                let mut b = theta.clone();
                b[p] -= h;
                let fd = (log_likelihood(&m, &q, &cells, &a, sigma, &prior).unwrap()
                    - log_likelihood(&m, &q, &cells, &b, sigma, &prior).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[p]).abs() < 1e-6 * (1.0 + g[p].abs()), "{} vs {}", fd, g[p]);
            }
        }

        #[test]
        fn linear_likelihood_is_concave_along_lines(
            seed in 0u64..10_000,
            t in proptest::collection::vec(-2.0f64..2.0, 3),
            d in proptest::collection::vec(-1.0f64..1.0, 3),
        ) {
            let (m, q, cells, sigma) = random_instance(seed);
            let theta = DVector::from_vec(t);
            let d = DVector::from_vec(d);
            let h = 1e-3;
            let l = |s: f64| log_likelihood(&m, &q, &cells, &(&theta + &d * s), sigma, &Prior::Uniform).unwrap();
            let second = l(h) - 2.0 * l(0.0) + l(-h);
            prop_assert!(second <= 1e-8, "{}", second);
        }
    }
}

use nalgebra::{DMatrix, DVector};

use super::{check_observations, check_sigma, monotone_slack, observation_stats, EmConfig, EstimateTrace, Prior};
use crate::error::{Error, Result};
use crate::models::SystemModel;
use crate::quantizer::Quantizer;

const NEWTON_STEPS: usize = 8;
const HESSIAN_REL_STEP: f64 = 1e-4;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

/// EM for known-input models `r = Q(f(x, θ) + η)`.
///
/// The E-step replaces every quantized output by the conditional mean of the
/// unquantized one, `ŷ_i = f_i(θˡ) + E[η_i | r_i, θˡ]`. The M-step maximizes
/// `−‖ŷ − f(θ)‖²/(2σ²) + log p_θ(θ)`: regularized least squares for linear
/// models, damped Newton otherwise.
pub fn em_pilot(
    model: &dyn SystemModel,
    q: &Quantizer,
    cells: &[usize],
    sigma: f64,
    prior: &Prior,
    theta0: &DVector<f64>,
    cfg: &EmConfig,
) -> Result<EstimateTrace> {
    cfg.validate()?;
    check_observations(model, q, cells)?;
    check_sigma(sigma)?;
    prior.check(model.param_dim())?;
    if theta0.len() != model.param_dim() {
        return Err(Error::DimensionMismatch("theta0 has the wrong length".into()));
    }
    let linear = match model.linear_matrix() {
        Some(x) => Some(LinearStep::new(x, sigma, prior)?),
        None => None,
    };

    let mut theta = theta0.clone();
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut converged = false;
    let mut monotone = true;
    let mut iterations = 0;
    loop {
        // E-step; the cell log-probabilities give the likelihood at θˡ for free.
        let f = model.eval(&theta)?;
        let stats = observation_stats(q, cells, &f, sigma)?;
        let loglik = stats.iter().map(|s| s.log_prob).sum::<f64>() + prior.log_density(&theta);
        if let Some(&prev) = trace.last() {
            if cfg.likelihood_check && loglik < prev - monotone_slack(prev) {
                monotone = false;
                trace.push(loglik);
                break;
            }
        }
        trace.push(loglik);
        if converged || iterations == cfg.max_iters {
            break;
        }
        let y_hat = DVector::from_iterator(f.len(), f.iter().zip(&stats).map(|(fi, s)| fi + sigma * s.mean_z));

        let next = match &linear {
            Some(step) => step.solve(&y_hat),
            None => newton_m_step(model, &y_hat, sigma, prior, &theta, cfg.tol)?,
        };
        let change = (&next - &theta).amax();
        theta = next;
        iterations += 1;
        converged = change < cfg.tol;
    }
    Ok(EstimateTrace { theta_hat: theta, iterations, loglik_per_iter: trace, converged, monotone })
}

/// Cached factorization of `XᵀX + σ²R⁻¹`.
struct LinearStep<'a> {
    x: &'a DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> LinearStep<'a> {
    fn new(x: &'a DMatrix<f64>, sigma: f64, prior: &Prior) -> Result<Self> {
        let mut a = x.tr_mul(x);
        if let Some(p) = prior.precision() {
            a += p * (sigma * sigma);
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::DegeneratePilot("XᵀX is singular and the prior does not regularize it".into()))?;
        Ok(Self { x, chol })
    }

    fn solve(&self, y_hat: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(&self.x.tr_mul(y_hat))
    }
}

struct Surrogate<'a> {
    model: &'a dyn SystemModel,
    y_hat: &'a DVector<f64>,
    sigma2: f64,
    prior: &'a Prior,
}

impl Surrogate<'_> {
    fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        let f = self.model.eval(theta)?;
        Ok(-(self.y_hat - f).norm_squared() / (2.0 * self.sigma2) + self.prior.log_density(theta))
    }

    /// Gradient plus the Jacobian it was built from.
    fn gradient(&self, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let f = self.model.eval(theta)?;
        let jac = self.model.jacobian(theta)?;
        let g = jac.tr_mul(&(self.y_hat - f)) / self.sigma2 + self.prior.grad_log_density(theta);
        Ok((g, jac))
    }

    fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let p = theta.len();
        let mut h = DMatrix::zeros(p, p);
        let mut probe = theta.clone();
        for k in 0..p {
            let step = HESSIAN_REL_STEP * (1.0 + theta[k].abs());
            probe[k] = theta[k] + step;
            let (gp, _) = self.gradient(&probe)?;
            probe[k] = theta[k] - step;
            let (gm, _) = self.gradient(&probe)?;
            probe[k] = theta[k];
            h.set_column(k, &((gp - gm) / (2.0 * step)));
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    fn gauss_newton(&self, jac: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = -jac.tr_mul(jac) / self.sigma2;
        if let Some(p) = self.prior.precision() {
            h -= p;
        }
        h
    }
}

/// A few damped Newton steps on the surrogate with Armijo backtracking.
///
/// A Hessian that is not negative definite is replaced by its Gauss-Newton
/// approximation, which always gives an ascent direction. Every accepted step
/// increases the surrogate, so the EM sequence stays monotone.
fn newton_m_step(
    model: &dyn SystemModel,
    y_hat: &DVector<f64>,
    sigma: f64,
    prior: &Prior,
    start: &DVector<f64>,
    tol: f64,
) -> Result<DVector<f64>> {
    let s = Surrogate { model, y_hat, sigma2: sigma * sigma, prior };
    let mut theta = start.clone();
    let mut value = s.value(&theta)?;
    for _ in 0..NEWTON_STEPS {
        let (g, jac) = s.gradient(&theta)?;
        let h = s.hessian(&theta)?;
        let dir = match (-&h).cholesky() {
            Some(c) => c.solve(&g),
            None => match (-s.gauss_newton(&jac)).cholesky() {
                Some(c) => c.solve(&g),
                None => g.clone(),
            },
        };
        let slope = g.dot(&dir);
        if !(slope > 0.0) {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = &theta + &dir * alpha;
            if let Ok(v) = s.value(&trial) {
                if v >= value + ARMIJO_C * alpha * slope {
                    accepted = Some((trial, v));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        let change = (&next - &theta).amax();
        theta = next;
        value = v;
        if change < 0.1 * tol {
            break;
        }
    }
    Ok(theta)
}

//! Fisher information, Cramér-Rao bounds and closed-form baselines.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::Prior;
use crate::models::SystemModel;
use crate::numerics::{cell_stats, erfcx, log_cell_prob, Interval};
use crate::quantizer::Quantizer;

/// Cells farther than this many noise deviations from the mean carry no information.
const CELL_WINDOW: f64 = 40.0;
const RCOND_MIN: f64 = 1e-12;
const MARGINAL_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub theta: DVector<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues
    }
}

/// `Σ_cells (φ(a) − φ(b))² / (P σ²)`: the information one output carries
/// about its own mean.
pub fn output_fisher_weight(q: &Quantizer, mean: f64, sigma: f64) -> f64 {
    let th = q.thresholds();
    let first = th.partition_point(|&t| t <= mean - CELL_WINDOW * sigma);
    let last = th.partition_point(|&t| t < mean + CELL_WINDOW * sigma);
    (first..=last).filter_map(|k| cell_stats(&q.cell(k), mean, sigma).ok()).map(|s| s.fisher_weight()).sum::<f64>()
        / (sigma * sigma)
}

/// Sign-quantizer weight `e^{−f²/σ²} / (2πσ² Φ(f/σ) Φ(−f/σ))`, evaluated
/// without cancellation for large `|f|/σ`.
pub fn one_bit_fisher_weight(mean: f64, sigma: f64) -> f64 {
    let u = (mean / sigma).abs() / std::f64::consts::SQRT_2;
    // Φ(|f|/σ)·Φ(−|f|/σ) = ½(1 − ½erfc(u))·erfc(u) with erfc(u) = e^{−u²}erfcx(u)
    let ex = erfcx(u);
    let big = 1.0 - 0.5 * (-u * u).exp() * ex;
    (-u * u).exp() / (std::f64::consts::PI * sigma * sigma * big * ex)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")))
    }
}

fn weighted_gram(jac: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = jac.clone();
    for (mut row, &wi) in scaled.row_iter_mut().zip(w) {
        row *= wi;
    }
    let g = jac.tr_mul(&scaled);
    (&g + g.transpose()) * 0.5
}

/// Exact Fisher information of quantized observations with known input:
/// `J = Σ_i w_i ∇f_i ∇f_iᵀ`, with `w_i` from [`output_fisher_weight`].
pub fn fisher_pilot(model: &dyn SystemModel, q: &Quantizer, theta: &DVector<f64>, sigma: f64) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    let f = model.eval(theta)?;
    let jac = model.jacobian(theta)?;
    let w: Vec<f64> = f.as_slice().par_iter().map(|&fi| output_fisher_weight(q, fi, sigma)).collect();
    Ok(FisherMatrix { matrix: weighted_gram(&jac, &w), theta: theta.clone() })
}

/// `Σ ∇f_i ∇f_iᵀ / σ²`.
pub fn fisher_unquantized(model: &dyn SystemModel, theta: &DVector<f64>, sigma: f64) -> Result<FisherMatrix> {
    check_sigma(sigma)?;
    let jac = model.jacobian(theta)?;
    let g = jac.tr_mul(&jac) / (sigma * sigma);
    Ok(FisherMatrix { matrix: (&g + g.transpose()) * 0.5, theta: theta.clone() })
}

/// Low-SNR approximation `ρ_Q(σ)/σ² · Σ ∇f_i ∇f_iᵀ`.
pub fn fisher_low_snr(
    model: &dyn SystemModel,
    q: &Quantizer,
    theta: &DVector<f64>,
    sigma: f64,
) -> Result<FisherMatrix> {
    let mut j = fisher_unquantized(model, theta, sigma)?;
    j.matrix *= q.rho_q(sigma);
    Ok(j)
}

/// One component of a finite mixture: prior weight and the map `θ ↦ (mean, σ)`.
pub type MixtureComponent<'a> = (f64, &'a (dyn Fn(&DVector<f64>) -> (f64, f64) + Sync));

fn marginal_probabilities(q: &Quantizer, mixture: &[MixtureComponent<'_>], theta: &DVector<f64>) -> Result<Vec<f64>> {
    let mut p = vec![0.0; q.num_cells()];
    for (w, comp) in mixture {
        let (mean, sigma) = comp(theta);
        check_sigma(sigma)?;
        for (k, cell) in q.cells().enumerate() {
            match log_cell_prob(&cell, mean, sigma) {
                Ok(l) => p[k] += w * l.exp(),
                Err(Error::EmptyCell) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(p)
}

/// Fisher information of `n` i.i.d. outputs whose mean is drawn from a finite
/// mixture, `p(r | θ) = Σ_x p(x) P(r; m_x(θ), σ_x(θ))`.
///
/// Uses `J = n Σ_r ∇p ∇pᵀ / p` with central differences of step
/// `1e-5(1 + |θ_p|)`.
pub fn fisher_marginal_discrete(
    q: &Quantizer,
    mixture: &[MixtureComponent<'_>],
    theta: &DVector<f64>,
    n: usize,
) -> Result<FisherMatrix> {
    if mixture.is_empty() {
        return Err(Error::InvalidArgument("empty mixture".into()));
    }
    let dim = theta.len();
    let p0 = marginal_probabilities(q, mixture, theta)?;
    let mut grads = DMatrix::zeros(q.num_cells(), dim);
    let mut probe = theta.clone();
    for k in 0..dim {
        let h = MARGINAL_FD_STEP * (1.0 + theta[k].abs());
        probe[k] = theta[k] + h;
        let pp = marginal_probabilities(q, mixture, &probe)?;
        probe[k] = theta[k] - h;
        let pm = marginal_probabilities(q, mixture, &probe)?;
        probe[k] = theta[k];
        for r in 0..q.num_cells() {
            grads[(r, k)] = (pp[r] - pm[r]) / (2.0 * h);
        }
    }
    let w: Vec<f64> = p0.iter().map(|&p| if p > 1e-300 { n as f64 / p } else { 0.0 }).collect();
    Ok(FisherMatrix { matrix: weighted_gram(&grads, &w), theta: theta.clone() })
}

/// Fisher information for `θ = (h, σ)` of `n` blind outputs with equiprobable ±1 symbols.
pub fn fisher_blind(q: &Quantizer, h: f64, sigma: f64, n: usize) -> Result<FisherMatrix> {
    let plus = |t: &DVector<f64>| (t[0], t[1]);
    let minus = |t: &DVector<f64>| (-t[0], t[1]);
    fisher_marginal_discrete(q, &[(0.5, &plus), (0.5, &minus)], &DVector::from_vec(vec![h, sigma]), n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbResult {
    /// `J⁻¹`, or the pseudo-inverse when `singular`.
    pub covariance: DMatrix<f64>,
    /// Per-parameter bounds; `+∞` for parameters touching the null space.
    pub diag: Vec<f64>,
    pub singular: bool,
}

/// Inverse Fisher information.
///
/// When the reciprocal condition number is at most `1e-12` the result carries
/// the pseudo-inverse and `singular = true` instead of failing.
pub fn crb(j: &FisherMatrix) -> Result<CrbResult> {
    let m = &j.matrix;
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::DimensionMismatch("Fisher matrix must be square".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Fisher matrix"));
    }
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let singular = !(lmax > 0.0) || lmin / lmax <= RCOND_MIN;
    let cut = RCOND_MIN * lmax.max(0.0);
    let inv_vals = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    let covariance = v * DMatrix::from_diagonal(&inv_vals) * v.transpose();
    let diag = (0..m.nrows())
        .map(|p| {
            let touches_null = eig.eigenvalues.iter().enumerate().any(|(k, &l)| l <= cut && v[(p, k)].abs() > 1e-6);
            if touches_null {
                f64::INFINITY
            } else {
                covariance[(p, p)]
            }
        })
        .collect();
    Ok(CrbResult { covariance, diag, singular })
}

/// Normalized one-bit SISO information `h²J(h)/N` at `SNR = h²/σ²`:
/// `γ e^{−γ} / (2π Φ(√γ) Φ(−√γ))`.
pub fn siso_normalized_fisher(snr: f64) -> f64 {
    if snr <= 0.0 {
        return 0.0;
    }
    // e^{−γ}/Φ(−√γ) = 2 e^{−γ/2} / erfcx(√(γ/2))
    let u = (snr / 2.0).sqrt();
    let upper = 1.0 - 0.5 * (-u * u).exp() * erfcx(u);
    snr * 2.0 * (-snr / 2.0).exp() / (erfcx(u) * upper) / (2.0 * std::f64::consts::PI)
}

/// SNR maximizing [`siso_normalized_fisher`], as `(linear, dB)`.
pub fn siso_optimal_snr() -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.1f64, 20.0f64);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (siso_normalized_fisher(c), siso_normalized_fisher(d));
    while b - a > 1e-10 {
        if fc > fd {
            (b, d, fd) = (d, c, fc);
            c = b - INV_PHI * (b - a);
            fc = siso_normalized_fisher(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + INV_PHI * (b - a);
            fd = siso_normalized_fisher(d);
        }
    }
    let snr = 0.5 * (a + b);
    (snr, 10.0 * snr.log10())
}

/// MSE of the unquantized linear estimator: `σ² tr((XᵀX)⁻¹)` for a flat
/// prior, `σ² tr((XᵀX + σ²R⁻¹)⁻¹)` for the Gaussian-prior MMSE.
pub fn unquantized_mse_linear(x: &DMatrix<f64>, sigma: f64, prior: &Prior) -> Result<f64> {
    check_sigma(sigma)?;
    let mut a = x.tr_mul(x);
    if let Some(p) = prior.precision() {
        if p.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch("prior dimension".into()));
        }
        a += p * (sigma * sigma);
    }
    let inv = a.cholesky().ok_or(Error::SingularFisher)?.inverse();
    Ok(sigma * sigma * inv.trace())
}

/// Cell probability vector of one output; handy for enumeration oracles.
pub fn cell_probabilities(q: &Quantizer, mean: f64, sigma: f64) -> Vec<f64> {
    q.cells().map(|c: Interval| log_cell_prob(&c, mean, sigma).map_or(0.0, f64::exp)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::kkt_residual;
    use crate::models::{build_linear_model, mimo_pilot_matrix, one_tap_model};
    use crate::quantizer::{optimize_quantizer, DesignMode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    #[test]
    fn one_tap_at_zero_gain() {
        let m = one_tap_model(&vec![1.0; 200]).unwrap();
        let j = fisher_pilot(&m, &Quantizer::sign(), &DVector::zeros(1), 1.0).unwrap();
        assert!((j.matrix[(0, 0)] - 400.0 / PI).abs() < 1e-10);
        let c = crb(&j).unwrap();
        assert!(!c.singular);
        assert!((c.diag[0] - PI / 400.0).abs() < 1e-15);
    }

    #[test]
    fn one_bit_specialization_matches_cell_sum() {
        for (f, s) in [(0.0, 1.0), (0.3, 0.7), (-1.2, 0.5), (4.0, 0.6), (-9.0, 1.0)] {
            let a = output_fisher_weight(&Quantizer::sign(), f, s);
            let b = one_bit_fisher_weight(f, s);
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{f} {s}: {a} vs {b}");
        }
    }

    #[test]
    fn mimo_orthogonal_pilots_at_zero() {
        let p = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let m = build_linear_model(mimo_pilot_matrix(&p, 2).unwrap()).unwrap();
        let j = fisher_pilot(&m, &Quantizer::sign(), &DVector::zeros(4), 1.0).unwrap();
        assert!((j.matrix.clone() - DMatrix::identity(4, 4) * (8.0 / PI)).amax() < 1e-12);
        let c = crb(&j).unwrap();
        for d in c.diag {
            assert!((d - PI / 8.0).abs() < 1e-14);
        }
    }

    #[test]
    fn crb_block_diagonal_and_singular() {
        let j = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 4.0]);
        let c = crb(&FisherMatrix { matrix: j, theta: DVector::zeros(3) }).unwrap();
        let inv2 = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0;
        assert!((c.covariance.view((0, 0), (2, 2)) - inv2).amax() < 1e-14);
        assert!((c.covariance[(2, 2)] - 0.25).abs() < 1e-15);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let c = crb(&FisherMatrix { matrix: s, theta: DVector::zeros(2) }).unwrap();
        assert!(c.singular);
        assert_eq!(c.diag[0], 1.0);
        assert!(c.diag[1].is_infinite());
    }

    #[test]
    fn optimal_snr() {
        let (lin, db) = siso_optimal_snr();
        // independent bounded scalar search of the same objective
        assert!((lin - 2.480_739).abs() < 1e-5, "{lin}");
        assert!((db - 3.945_811).abs() < 1e-5, "{db}");
        assert!(siso_normalized_fisher(lin) > siso_normalized_fisher(1.0));
        assert!(siso_normalized_fisher(lin) > siso_normalized_fisher(10.0));
    }

    #[test]
    fn normalized_fisher_matches_direct_formula() {
        for g in [0.01f64, 0.5, 2.0, 7.0, 30.0] {
            let h = g.sqrt();
            let direct = h * h * one_bit_fisher_weight(h, 1.0);
            assert!((siso_normalized_fisher(g) - direct).abs() < 1e-12 * direct, "{g}");
        }
        assert!(siso_normalized_fisher(200.0) > 0.0);
    }

    #[test]
    fn normalized_fisher_decreases_past_optimum() {
        let (lin, _) = siso_optimal_snr();
        let mut prev = siso_normalized_fisher(lin);
        for k in 1..200 {
            let v = siso_normalized_fisher(lin + 0.1 * k as f64);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn unquantized_mse_examples() {
        let x = DMatrix::identity(16, 16);
        let s = 0.8f64;
        assert!((unquantized_mse_linear(&x, s, &Prior::Uniform).unwrap() - 16.0 * s * s).abs() < 1e-12);
        let g = Prior::gaussian(DMatrix::identity(16, 16)).unwrap();
        let want = 16.0 * s * s / (1.0 + s * s);
        assert!((unquantized_mse_linear(&x, s, &g).unwrap() - want).abs() < 1e-12);
        let one = DMatrix::from_element(50, 1, -1.0);
        assert!((unquantized_mse_linear(&one, s, &Prior::Uniform).unwrap() - s * s / 50.0).abs() < 1e-15);
        let rank1 = DMatrix::from_element(4, 2, 1.0);
        assert_eq!(unquantized_mse_linear(&rank1, s, &Prior::Uniform), Err(Error::SingularFisher));
    }

    #[test]
    fn low_snr_approximation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random_range(-1.0..1.0));
        let m = build_linear_model(x).unwrap();
        let theta = DVector::from_vec(vec![0.02, -0.015]);
        let sigma = 1.0;
        let f = m.eval(&theta).unwrap();
        assert!(f.amax() / sigma < 0.05);
        for b in 1..=3 {
            let q = optimize_quantizer(b, sigma, DesignMode::Uniform).unwrap().quantizer;
            let exact = fisher_pilot(&m, &q, &theta, sigma).unwrap().matrix;
            let approx = fisher_low_snr(&m, &q, &theta, sigma).unwrap().matrix;
            assert!((&exact - &approx).norm() / exact.norm() < 0.01);
        }
        let one = one_tap_model(&[1.0; 10]).unwrap();
        let j = fisher_low_snr(&one, &Quantizer::sign(), &DVector::zeros(1), 2.0).unwrap();
        assert!((j.matrix[(0, 0)] - 2.0 / PI * 10.0 / 4.0).abs() < 1e-12);
        let fine = optimize_quantizer(8, 1.0, DesignMode::Uniform).unwrap().quantizer;
        let j = fisher_low_snr(&one, &fine, &DVector::zeros(1), 1.0).unwrap();
        assert!((j.matrix[(0, 0)] - 10.0).abs() < 1e-3);
    }

    #[test]
    fn blind_fisher_symmetries() {
        let q3 = optimize_quantizer(3, 1.0, DesignMode::Uniform).unwrap().quantizer;
        let j0 = fisher_blind(&q3, 0.0, 1.0, 1000).unwrap();
        assert!(j0.matrix[(0, 0)].abs() < 1e-9 * j0.matrix[(1, 1)]);
        assert!(crb(&j0).unwrap().diag[0].is_infinite());
        for h in [0.3, 1.0, 2.0] {
            let j = fisher_blind(&Quantizer::sign(), h, 1.0, 1000).unwrap();
            assert!(j.matrix[(0, 0)].abs() < 1e-6, "{h}");
            assert!(crb(&j).unwrap().singular);
        }
    }

    /// Expected negative Hessian of the per-sample log-likelihood by outcome enumeration.
    #[test]
    fn blind_fisher_matches_expected_hessian() {
        let q = optimize_quantizer(3, 1.0, DesignMode::Uniform).unwrap().quantizer;
        let (h, s, n) = (1.0, 1.0, 1000);
        let j = fisher_blind(&q, h, s, n).unwrap().matrix;
        let logp = |a: f64, b: f64| -> Vec<f64> {
            let pp = cell_probabilities(&q, a, b);
            let pm = cell_probabilities(&q, -a, b);
            pp.iter().zip(&pm).map(|(x, y)| (0.5 * x + 0.5 * y).ln()).collect()
        };
        let p0: Vec<f64> = logp(h, s).iter().map(|l| l.exp()).collect();
        let d = 1e-4;
        let second = |da: [f64; 2], db: [f64; 2]| -> f64 {
            let f = |u: f64, v: f64| logp(h + u * da[0] + v * db[0], s + u * da[1] + v * db[1]);
            let (pp, pm, mp, mm) = (f(d, d), f(d, -d), f(-d, d), f(-d, -d));
            (0..q.num_cells()).map(|r| p0[r] * (pp[r] - pm[r] - mp[r] + mm[r]) / (4.0 * d * d)).sum::<f64>()
        };
        let oracle = [
            [-second([1.0, 0.0], [1.0, 0.0]), -second([1.0, 0.0], [0.0, 1.0])],
            [-second([0.0, 1.0], [1.0, 0.0]), -second([0.0, 1.0], [0.0, 1.0])],
        ];
        for a in 0..2 {
            for b in 0..2 {
                let o = oracle[a][b] * n as f64;
                assert!(
                    (j[(a, b)] - o).abs() < 1e-3 * j[(a, a)].abs().max(j[(b, b)].abs()),
                    "({a},{b}) {} vs {o}",
                    j[(a, b)]
                );
            }
        }
    }

    #[test]
    fn fisher_equals_score_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.7, 1.0, 0.3, -1.2]);
        let m = build_linear_model(x).unwrap();
        let q = Quantizer::make_midriser(2, 0.9).unwrap();
        let theta = DVector::from_vec(vec![0.4, -0.2]);
        let sigma = 0.8;
        let j = fisher_pilot(&m, &q, &theta, sigma).unwrap().matrix;
        let f = m.eval(&theta).unwrap();
        let draws = 1_000_000;
        let mut sum = DMatrix::<f64>::zeros(2, 2);
        let mut sum_sq = DMatrix::<f64>::zeros(2, 2);
        let mut mean = DVector::<f64>::zeros(2);
        for _ in 0..draws {
            let cells: Vec<usize> =
                f.iter().map(|fi| q.index_of(fi + sigma * rng.sample::<f64, _>(StandardNormal))).collect();
            let s = kkt_residual(&m, &q, &cells, &theta, sigma, &Prior::Uniform).unwrap();
            let outer = &s * s.transpose();
            sum_sq += outer.component_mul(&outer);
            sum += outer;
            mean += s;
        }
        let nd = draws as f64;
        mean /= nd;
        let est = &sum / nd;
        for a in 0..2 {
            let se_mean = (j[(a, a)] / nd).sqrt();
            assert!(mean[a].abs() < 4.0 * se_mean);
            for b in 0..2 {
                let var = sum_sq[(a, b)] / nd - est[(a, b)] * est[(a, b)];
                let se = (var / nd).sqrt();
                assert!((est[(a, b)] - j[(a, b)]).abs() < 3.0 * se, "({a},{b}) {} vs {}", est[(a, b)], j[(a, b)]);
            }
        }
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn fisher_psd_and_dominated_by_unquantized(
            seed in 0u64..1000,
            th in proptest::collection::vec(-3.0f64..3.0, 1..8),
            t in proptest::collection::vec(-1.5f64..1.5, 3),
            sigma in 0.2f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
            let m = build_linear_model(x).unwrap();
            let q = Quantizer::from_thresholds(sorted(th)).unwrap();
            let theta = DVector::from_vec(t);
            let j = fisher_pilot(&m, &q, &theta, sigma).unwrap();
            prop_assert!((&j.matrix - j.matrix.transpose()).amax() <= 1e-12 * j.matrix.amax().max(1.0));
            prop_assert!(j.eigenvalues().min() >= -1e-10);
            let u = fisher_unquantized(&m, &theta, sigma).unwrap().matrix;
            let gap = SymmetricEigen::new(&u - &j.matrix).eigenvalues.min();
            prop_assert!(gap >= -1e-10 * u.amax().max(1.0), "{}", gap);
        }

        #[test]
        fn refinement_never_loses_information(
            th in proptest::collection::vec(-3.0f64..3.0, 1..8),
            extra in -4.0f64..4.0,
            mean in -2.0f64..2.0,
            sigma in 0.2f64..2.0,
        ) {
            let base = sorted(th);
            let mut finer = base.clone();
            finer.push(extra);
            let finer = sorted(finer);
            let coarse = Quantizer::from_thresholds(base).unwrap();
            let fine = Quantizer::from_thresholds(finer).unwrap();
            let m = one_tap_model(&[1.0, -0.5, 0.8]).unwrap();
            let theta = DVector::from_element(1, mean);
            let a = fisher_pilot(&m, &coarse, &theta, sigma).unwrap().matrix.trace();
            let b = fisher_pilot(&m, &fine, &theta, sigma).unwrap().matrix.trace();
            prop_assert!(b >= a - 1e-12 * a.max(1.0), "{} < {}", b, a);
        }
    }
}

//! Blind gain and noise estimation for `y_i = h x_i + η_i` with unknown
//! equiprobable symbols `x_i ∈ {−1, +1}`.

use nalgebra::DVector;

use super::{monotone_slack, EmConfig, EstimateTrace};
use crate::error::{Error, Result};
use crate::numerics::{cell_stats, CellStats};
use crate::quantizer::Quantizer;

const SYMBOLS: [f64; 2] = [-1.0, 1.0];

fn check(cells: &[usize], q: &Quantizer, h: f64, sigma: f64) -> Result<()> {
    if q.num_cells() < 4 {
        return Err(Error::InsufficientResolution(format!(
            "blind estimation needs at least 2 bits, quantizer has {} cells",
            q.num_cells()
        )));
    }
    if cells.is_empty() {
        return Err(Error::DimensionMismatch("no observations".into()));
    }
    if cells.iter().any(|&c| c >= q.num_cells()) {
        return Err(Error::DimensionMismatch("cell index out of range".into()));
    }
    if !h.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("bad starting point h = {h}, sigma = {sigma}")));
    }
    Ok(())
}

/// Per-symbol statistics of one output; `None` when the cell is unreachable from that symbol.
fn symbol_stats(q: &Quantizer, cell: usize, h: f64, sigma: f64) -> Result<[Option<CellStats>; 2]> {
    let interval = q.cell(cell);
    let mut out = [None, None];
    for (k, x) in SYMBOLS.iter().enumerate() {
        match cell_stats(&interval, x * h, sigma) {
            Ok(s) => out[k] = Some(s),
            Err(Error::EmptyCell) => {}
            Err(e) => return Err(e),
        }
    }
    if out.iter().all(Option::is_none) {
        return Err(Error::EmptyCell);
    }
    Ok(out)
}

/// `ln(½e^a + ½e^b)` and the normalized weights, with `None` standing for `−∞`.
fn mixture(lp: [Option<f64>; 2]) -> (f64, [f64; 2]) {
    let top = lp.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = lp.map(|l| l.map_or(0.0, |l| (l - top).exp()));
    let s = e[0] + e[1];
    (top + (0.5 * s).ln(), [e[0] / s, e[1] / s])
}

/// Marginal log-likelihood `Σ_i ln(½P(r_i | h, σ) + ½P(r_i | −h, σ))`.
pub fn blind_log_likelihood(cells: &[usize], q: &Quantizer, h: f64, sigma: f64) -> Result<f64> {
    if cells.iter().any(|&c| c >= q.num_cells()) {
        return Err(Error::DimensionMismatch("cell index out of range".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let mut total = 0.0;
    for &c in cells {
        let st = symbol_stats(q, c, h, sigma)?;
        total += mixture(st.map(|s| s.map(|s| s.log_prob))).0;
    }
    Ok(total)
}

/// Moment starting point `(h, σ)` from (approximately) unquantized samples.
///
/// For a ±h mixture in Gaussian noise, `2h⁴ = 3m₂² − m₄`. Degenerate moment
/// estimates are clamped so that both components stay positive.
pub fn blind_moment_init(samples: &[f64]) -> (f64, f64) {
    let n = samples.len().max(1) as f64;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return (0.0, 1.0);
    }
    let h4 = (3.0 * m2 * m2 - m4) / 2.0;
    let h2 = if h4 > 0.0 { h4.sqrt() } else { 0.0 };
    let h2 = h2.clamp(0.05 * m2, 0.95 * m2);
    (h2.sqrt(), (m2 - h2).sqrt())
}

/// EM over `θ = (h, σ)`; symbols are the latent variables together with the noise.
///
/// Both updates come from one joint M-step of the complete-data likelihood:
///
/// ```text
/// h⁺  = (1/N) Σ_i Σ_x w_ix · x · E[y_i | x, r_i]
/// σ⁺² = (1/N) Σ_i Σ_x w_ix · E[(y_i − x h⁺)² | x, r_i]
/// ```
///
/// where `w_ix` is the posterior symbol probability. The reported gain is
/// nonnegative, since `(h, σ)` and `(−h, σ)` are indistinguishable.
pub fn em_blind_siso(cells: &[usize], q: &Quantizer, sigma0: f64, h0: f64, cfg: &EmConfig) -> Result<EstimateTrace> {
    cfg.validate()?;
    check(cells, q, h0, sigma0)?;
    let n = cells.len() as f64;
    let (mut h, mut sigma) = (h0, sigma0);
    let mut trace: Vec<f64> = Vec::with_capacity(cfg.max_iters + 1);
    let (mut converged, mut monotone, mut iterations) = (false, true, 0);
    loop {
        let mut loglik = 0.0;
        let (mut s_y, mut s_y2) = (0.0, 0.0);
        for &c in cells {
            let st = symbol_stats(q, c, h, sigma)?;
            let (l, w) = mixture(st.map(|s| s.map(|s| s.log_prob)));
            loglik += l;
            for (k, s) in st.iter().enumerate() {
                let Some(s) = s else { continue };
                let x = SYMBOLS[k];
                let ey = x * h + sigma * s.mean_z;
                let ey2 = h * h + 2.0 * x * h * sigma * s.mean_z + sigma * sigma * (s.mean_z * s.mean_z + s.var_z);
                s_y += w[k] * x * ey;
                s_y2 += w[k] * ey2;
            }
        }
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
        let h_new = s_y / n;
        // Σ w (E[y²] − 2x h⁺ E[y] + h⁺²) / N
        let var = (s_y2 - 2.0 * h_new * s_y) / n + h_new * h_new;
        let sigma_new = var.max(f64::MIN_POSITIVE).sqrt();
        let change = (h_new - h).abs().max((sigma_new - sigma).abs());
        h = h_new;
        sigma = sigma_new;
        iterations += 1;
        converged = change < cfg.tol;
    }
    Ok(EstimateTrace {
        theta_hat: DVector::from_vec(vec![h.abs(), sigma]),
        iterations,
        loglik_per_iter: trace,
        converged,
        monotone,
    })
}

//! `estimate`: ML/MAP estimates from a TOML observation file.
//!
//! ```toml
//! sigma = 0.8
//! estimator = "em"            # or "closed_form" (sign quantizer only)
//! pilots = [[1, -1, 1, 1]]    # one row per transmit antenna
//! outputs = [[1, -1, -1, 1]]  # one row per receive antenna, quantized values
//! [quantizer]
//! bits = 1                    # alone: sign quantizer; with delta: mid-riser
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use quantest::estimators::{
    blind_moment_init, em_blind_siso, em_pilot, log_likelihood, ml_mimo_2x2_one_bit, ml_siso_one_bit, ml_siso_two_tap,
    EstimateTrace, Prior,
};
use quantest::harness::{EmSettings, EstimatorKind, Scenario};
use quantest::models::{build_linear_model, mimo_pilot_matrix, one_tap_model, two_tap_model, SystemModel};
use quantest::Quantizer;

use crate::{parse_toml, print_json, CliError, CliResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizerInput {
    bits: Option<u32>,
    delta: Option<f64>,
    thresholds: Option<Vec<f64>>,
    representatives: Option<Vec<f64>>,
}

impl QuantizerInput {
    fn build(self) -> CliResult<Quantizer> {
        Ok(match (self.bits, self.delta, self.thresholds, self.representatives) {
            (Some(1), None, None, None) => Quantizer::sign(),
            (Some(b), Some(d), None, None) => Quantizer::make_midriser(b, d)?,
            (None, None, Some(t), None) => Quantizer::from_thresholds(t)?,
            (None, None, Some(t), Some(r)) => Quantizer::make_custom(t, r)?,
            _ => {
                return Err(CliError::config(
                    "quantizer: give `bits = 1`, `bits` + `delta`, or `thresholds` (+ `representatives`)",
                ))
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateInput {
    /// Noise standard deviation; the blind estimator ignores it.
    sigma: Option<f64>,
    quantizer: QuantizerInput,
    #[serde(default)]
    pilots: Vec<Vec<f64>>,
    /// Quantizer outputs (any value inside the observed cell).
    outputs: Vec<Vec<f64>>,
    estimator: Option<EstimatorKind>,
    /// Variance of an i.i.d. Gaussian prior on the parameters.
    prior_variance: Option<f64>,
    #[serde(default)]
    em: EmSettings,
}

#[derive(Debug, Serialize)]
struct EstimateOut {
    scenario: Scenario,
    estimator: EstimatorKind,
    parameters: Vec<String>,
    theta_hat: Vec<f64>,
    iterations: usize,
    converged: bool,
    monotone: bool,
    log_posterior: Option<f64>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::config(format!("{what} must be a non-empty rectangular array")));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn names(scenario: Scenario, rx: usize, tx: usize) -> Vec<String> {
    match scenario {
        Scenario::Siso1Tap => vec!["h".into()],
        Scenario::Siso2Tap => vec!["h0".into(), "h1".into()],
        Scenario::Blind => vec!["h".into(), "sigma".into()],
        _ => (0..rx).flat_map(|i| (0..tx).map(move |j| format!("h{}{}", i + 1, j + 1))).collect(),
    }
}

pub fn run(json: bool, scenario: Scenario, input: &Path) -> CliResult<()> {
    let inp: EstimateInput = parse_toml(input)?;
    let q = inp.quantizer.build()?;
    let cfg = inp.em.em_config();
    let y = matrix(&inp.outputs, "outputs")?;
    // cells in row-major order, matching the vectorized models
    let cells: Vec<usize> = y.transpose().iter().map(|&v| q.index_of(v)).collect();
    let is_sign = q.thresholds() == [0.0];
    let estimator = inp.estimator.unwrap_or(EstimatorKind::Em);
    if estimator == EstimatorKind::ClosedForm && !(is_sign && scenario != Scenario::Blind) {
        return Err(CliError::config("closed_form needs the sign quantizer and a pilot scenario"));
    }

    let trace = if scenario == Scenario::Blind {
        let reps: Vec<f64> = cells.iter().map(|&c| q.representatives()[c]).collect();
        let (h0, s0) = blind_moment_init(&reps);
        em_blind_siso(&cells, &q, s0, h0, &cfg)?
    } else {
        let sigma = inp.sigma.ok_or_else(|| CliError::config("sigma is required"))?;
        let x = matrix(&inp.pilots, "pilots")?;
        let model = match scenario {
            Scenario::Siso1Tap => one_tap_model(x.row(0).transpose().as_slice())?,
            Scenario::Siso2Tap => two_tap_model(x.row(0).transpose().as_slice())?,
            Scenario::Mimo2x2 | Scenario::MimoNxN => build_linear_model(mimo_pilot_matrix(&x, y.nrows())?)?,
            _ => return Err(CliError::config(format!("estimate does not support scenario {scenario}"))),
        };
        let pilot_rows = match scenario {
            Scenario::Siso1Tap | Scenario::Siso2Tap => 1,
            Scenario::Mimo2x2 => 2,
            _ => x.nrows(),
        };
        if x.nrows() != pilot_rows {
            return Err(CliError::config(format!("{scenario} needs {pilot_rows} pilot row(s)")));
        }
        // the two-tap model has no output for the first symbol
        let cells = if scenario == Scenario::Siso2Tap { cells[1..].to_vec() } else { cells };
        let prior = match inp.prior_variance {
            Some(v) => {
                let p = model.param_dim();
                Prior::gaussian(DMatrix::identity(p, p) * v)?
            }
            None => Prior::Uniform,
        };
        match estimator {
            EstimatorKind::Em => {
                let p = model.param_dim();
                em_pilot(&model, &q, &cells, sigma, &prior, &DVector::zeros(p), &cfg)?
            }
            EstimatorKind::ClosedForm => {
                let sign: Vec<f64> = y.iter().map(|&v| if q.index_of(v) == 0 { -1.0 } else { 1.0 }).collect();
                let theta =
                    match scenario {
                        Scenario::Siso1Tap => vec![ml_siso_one_bit(&sign, x.row(0).transpose().as_slice(), sigma)?],
                        Scenario::Siso2Tap => {
                            let (a, b) = ml_siso_two_tap(&sign, x.row(0).transpose().as_slice(), sigma)?;
                            vec![a, b]
                        }
                        Scenario::Mimo2x2 => {
                            let r = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
                                if q.index_of(y[(i, j)]) == 0 {
                                    -1.0
                                } else {
                                    1.0
                                }
                            });
                            let h = ml_mimo_2x2_one_bit(&r, &x, sigma)?;
                            vec![h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]]
                        }
                        _ => return Err(CliError::config(format!("no closed form for {scenario}"))),
                    };
                let theta = DVector::from_vec(theta);
                let l = log_likelihood(&model, &q, &cells, &theta, sigma, &prior)?;
                EstimateTrace {
                    theta_hat: theta,
                    iterations: 0,
                    loglik_per_iter: vec![l],
                    converged: true,
                    monotone: true,
                }
            }
        }
    };
    let rx = y.nrows();
    let tx = inp.pilots.len();
    let out = EstimateOut {
        scenario,
        estimator,
        parameters: names(scenario, rx, tx),
        theta_hat: trace.theta_hat.iter().copied().collect(),
        iterations: trace.iterations,
        converged: trace.converged,
        monotone: trace.monotone,
        log_posterior: trace.loglik_per_iter.last().copied(),
    };
    if json {
        return print_json(&out);
    }
    for (n, v) in out.parameters.iter().zip(&out.theta_hat) {
        println!("{n} = {v:.9}");
    }
    println!("iterations = {}, converged = {}, monotone = {}", out.iterations, out.converged, out.monotone);
    if !out.converged {
        eprintln!("warning: EM stopped before converging");
    }
    Ok(())
}

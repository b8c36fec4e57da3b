//! GPS L1 C/A two-path scenarios: code generation, ULA steering, sampled
//! waveforms, CRB reports in physical units, and an EM estimator with grid
//! initialization.
//!
//! Internal parameter units are chips for delay, kHz for Doppler and radians
//! for azimuth; reports use meters, Hz and degrees.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::{crb, fisher_pilot, fisher_unquantized};
use crate::error::{Error, Result};
use crate::estimators::{em_pilot, EmConfig, EstimateTrace, Prior};
use crate::models::{build_gnss_model, GnssModel, GnssParam, SystemModel};
use crate::quantizer::Quantizer;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const CODE_LENGTH: usize = 1023;
pub const DEFAULT_CHIP_DURATION: f64 = 977.52e-9;
pub const DEFAULT_BANDWIDTH: f64 = 1.023e6;

/// G2 output taps (1-based register stages) selecting the code phase of each PRN.
const G2_TAPS: [(usize, usize); 32] = [
    (2, 6),
    (3, 7),
    (4, 8),
    (5, 9),
    (1, 9),
    (2, 10),
    (1, 8),
    (2, 9),
    (3, 10),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (1, 4),
    (2, 5),
    (3, 6),
    (4, 7),
    (5, 8),
    (6, 9),
    (1, 3),
    (4, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 6),
    (2, 7),
    (3, 8),
    (4, 9),
];

/// C/A Gold code of satellite `prn` as ±1 chips (logic 0 ↦ +1).
pub fn gen_ca_code(prn: u32) -> Result<Vec<f64>> {
    if !(1..=32).contains(&prn) {
        return Err(Error::InvalidScenario(format!("PRN must be in 1..=32, got {prn}")));
    }
    let (s1, s2) = G2_TAPS[prn as usize - 1];
    let mut g1 = [1u8; 10];
    let mut g2 = [1u8; 10];
    let mut chips = Vec::with_capacity(CODE_LENGTH);
    for _ in 0..CODE_LENGTH {
        let bit = g1[9] ^ g2[s1 - 1] ^ g2[s2 - 1];
        chips.push(if bit == 0 { 1.0 } else { -1.0 });
        let f1 = g1[2] ^ g1[9];
        let f2 = g2[1] ^ g2[2] ^ g2[5] ^ g2[7] ^ g2[8] ^ g2[9];
        g1.rotate_right(1);
        g2.rotate_right(1);
        g1[0] = f1;
        g2[0] = f2;
    }
    Ok(chips)
}

/// Half-wavelength ULA steering vector, `a_m = exp(jπ m sin φ)`.
pub fn steering_vector(phi_deg: f64, antennas: usize) -> Result<Vec<Complex64>> {
    if antennas == 0 {
        return Err(Error::InvalidScenario("array needs at least one antenna".into()));
    }
    if !(phi_deg.abs() <= 90.0) {
        return Err(Error::InvalidScenario(format!("azimuth {phi_deg} outside [-90, 90]")));
    }
    Ok(steering_rad(phi_deg.to_radians(), antennas))
}

pub(crate) fn steering_rad(phi: f64, antennas: usize) -> Vec<Complex64> {
    let step = std::f64::consts::PI * phi.sin();
    (0..antennas).map(|m| Complex64::from_polar(1.0, step * m as f64)).collect()
}

/// Periodic code value at fractional chip position `u`, linearly interpolated.
#[inline]
pub(crate) fn code_at(code: &[f64], u: f64) -> f64 {
    let n = code.len() as f64;
    let u = u.rem_euclid(n);
    let i = u.floor();
    let frac = u - i;
    let i = i as usize % code.len();
    let j = (i + 1) % code.len();
    code[i] * (1.0 - frac) + code[j] * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    /// Complex amplitude as `[re, im]`.
    pub gamma: [f64; 2],
    /// Code delay in seconds.
    pub tau: f64,
    /// Doppler in Hz.
    #[serde(default)]
    pub nu: f64,
    /// Azimuth in degrees.
    #[serde(default)]
    pub phi: f64,
}

impl PathSpec {
    pub fn gamma(&self) -> Complex64 {
        Complex64::new(self.gamma[0], self.gamma[1])
    }
}

fn default_chip_duration() -> f64 {
    DEFAULT_CHIP_DURATION
}
fn default_bandwidth() -> f64 {
    DEFAULT_BANDWIDTH
}
fn default_sample_rate() -> f64 {
    2.0 * DEFAULT_BANDWIDTH
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnssScenario {
    pub prn: u32,
    #[serde(default = "default_chip_duration")]
    pub chip_duration: f64,
    /// Also the chip rate of the code.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "default_one")]
    pub antennas: usize,
    pub paths: Vec<PathSpec>,
    /// `|γ₁|² E|c|² / (2σ²)` in dB, per antenna and real dimension pair.
    pub snr_db: f64,
    /// When set, every reflected path is rescaled to `|γ₁|/10^(smr/20)` keeping its phase.
    #[serde(default)]
    pub smr_db: Option<f64>,
    /// Number of code periods observed.
    #[serde(default = "default_one")]
    pub periods: usize,
}

impl GnssScenario {
    /// One antenna, one path with unit amplitude at a quarter-chip delay.
    pub fn single_antenna(snr_db: f64) -> Self {
        Self {
            prn: 1,
            chip_duration: DEFAULT_CHIP_DURATION,
            bandwidth: DEFAULT_BANDWIDTH,
            sample_rate: 2.0 * DEFAULT_BANDWIDTH,
            antennas: 1,
            paths: vec![PathSpec { gamma: [1.0, 0.0], tau: 0.25 * DEFAULT_CHIP_DURATION, nu: 0.0, phi: 0.0 }],
            snr_db,
            smr_db: None,
            periods: 1,
        }
    }

    /// Eight-antenna line-of-sight plus in-phase reflection:
    /// azimuths −30°/62°, delay separation 0.3 chip, zero Doppler,
    /// SNR −22.8 dB and SMR 5 dB.
    pub fn two_path_array() -> Self {
        let tau1 = 0.25 * DEFAULT_CHIP_DURATION;
        Self {
            prn: 1,
            chip_duration: DEFAULT_CHIP_DURATION,
            bandwidth: DEFAULT_BANDWIDTH,
            sample_rate: 2.0 * DEFAULT_BANDWIDTH,
            antennas: 8,
            paths: vec![
                PathSpec { gamma: [1.0, 0.0], tau: tau1, nu: 0.0, phi: -30.0 },
                PathSpec { gamma: [1.0, 0.0], tau: tau1 + 0.3 * DEFAULT_CHIP_DURATION, nu: 0.0, phi: 62.0 },
            ],
            snr_db: -22.8,
            smr_db: Some(5.0),
            periods: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !(1..=32).contains(&self.prn) {
            return bad(format!("PRN must be in 1..=32, got {}", self.prn));
        }
        for (name, v) in
            [("chip_duration", self.chip_duration), ("bandwidth", self.bandwidth), ("sample_rate", self.sample_rate)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.antennas == 0 {
            return bad("antennas must be >= 1".into());
        }
        if self.periods == 0 {
            return bad("periods must be >= 1".into());
        }
        if self.paths.is_empty() {
            return bad("at least one path is required".into());
        }
        if !self.snr_db.is_finite() || self.smr_db.is_some_and(|s| !s.is_finite()) {
            return bad("SNR and SMR must be finite".into());
        }
        let period = self.code_period();
        for (k, p) in self.paths.iter().enumerate() {
            if p.gamma.iter().chain([&p.tau, &p.nu, &p.phi]).any(|v| !v.is_finite()) {
                return bad(format!("path {} has non-finite fields", k + 1));
            }
            if p.tau.abs() >= period {
                return bad(format!("path {} delay exceeds the code period", k + 1));
            }
            if p.phi.abs() > 90.0 {
                return bad(format!("path {} azimuth outside [-90, 90]", k + 1));
            }
        }
        if self.paths[0].gamma() == Complex64::new(0.0, 0.0) {
            return bad("line-of-sight amplitude must be nonzero".into());
        }
        let spc = self.samples_per_chip();
        if (spc * CODE_LENGTH as f64 - (spc * CODE_LENGTH as f64).round()).abs() > 1e-6 {
            return bad("sample_rate/bandwidth must give an integer number of samples per period".into());
        }
        Ok(())
    }

    pub fn code_period(&self) -> f64 {
        CODE_LENGTH as f64 * self.chip_duration
    }

    pub fn samples_per_chip(&self) -> f64 {
        self.sample_rate / self.bandwidth
    }

    pub fn samples_per_period(&self) -> usize {
        (self.samples_per_chip() * CODE_LENGTH as f64).round() as usize
    }

    pub fn samples(&self) -> usize {
        self.samples_per_period() * self.periods
    }

    /// Path amplitudes after applying the SMR rule.
    pub fn effective_gammas(&self) -> Vec<Complex64> {
        let g1 = self.paths[0].gamma();
        self.paths
            .iter()
            .enumerate()
            .map(|(k, p)| match (k, self.smr_db) {
                (0, _) | (_, None) => p.gamma(),
                (_, Some(smr)) => {
                    let mag = g1.norm() * 10f64.powf(-smr / 20.0);
                    let g = p.gamma();
                    let phase = if g.norm() > 0.0 { g.arg() } else { g1.arg() };
                    Complex64::from_polar(mag, phase)
                }
            })
            .collect()
    }

    /// Noise standard deviation per real dimension implied by `snr_db`.
    pub fn noise_sigma(&self) -> f64 {
        let snr = 10f64.powf(self.snr_db / 10.0);
        self.paths[0].gamma().norm() / (2.0 * snr).sqrt()
    }

    /// Full internal parameter vector `[Re γ, Im γ, τ (chips), ν (kHz), φ (rad)]`.
    pub fn true_parameters(&self) -> DVector<f64> {
        let np = self.paths.len();
        let g = self.effective_gammas();
        let mut v = DVector::zeros(5 * np);
        for (k, p) in self.paths.iter().enumerate() {
            v[k] = g[k].re;
            v[np + k] = g[k].im;
            v[2 * np + k] = p.tau / self.chip_duration;
            v[3 * np + k] = p.nu * 1e-3;
            v[4 * np + k] = p.phi.to_radians();
        }
        v
    }
}

/// Real code waveform `c(t_k − τ)` over the scenario's observation window.
pub fn sample_code(code: &[f64], tau: f64, scenario: &GnssScenario) -> Result<Vec<f64>> {
    scenario.validate()?;
    if code.len() != CODE_LENGTH {
        return Err(Error::InvalidScenario(format!("code length {} != 1023", code.len())));
    }
    if !tau.is_finite() || tau.abs() >= scenario.code_period() {
        return Err(Error::InvalidScenario("delay must lie within one code period".into()));
    }
    let spc = scenario.samples_per_chip();
    let shift = tau / scenario.chip_duration;
    let period = scenario.samples_per_period();
    Ok((0..scenario.samples()).map(|k| code_at(code, (k % period) as f64 / spc - shift)).collect())
}

/// Physical unit of a reported bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Unitless,
    Meters,
    Hz,
    Degrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbEntry {
    pub parameter: String,
    pub unit: Unit,
    pub sqrt_crb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub sigma: f64,
    pub entries: Vec<CrbEntry>,
}

impl CrbReport {
    pub fn get(&self, parameter: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.parameter == parameter).map(|e| e.sqrt_crb)
    }
}

/// Conversion factor from internal units to reported units.
fn unit_of(param: GnssParam, scenario: &GnssScenario) -> (Unit, f64) {
    match param {
        GnssParam::ReGamma(_) | GnssParam::ImGamma(_) => (Unit::Unitless, 1.0),
        GnssParam::Tau(_) => (Unit::Meters, scenario.chip_duration * SPEED_OF_LIGHT),
        GnssParam::Nu(_) => (Unit::Hz, 1e3),
        GnssParam::Phi(_) => (Unit::Degrees, 180.0 / std::f64::consts::PI),
    }
}

/// √CRB of the free parameters of `scenario`.
///
/// `quantizer` is applied component-wise to I and Q in absolute units; pass
/// `None` for unquantized observations.
pub fn gnss_crb_report(
    scenario: &GnssScenario,
    quantizer: Option<&Quantizer>,
    free: &[GnssParam],
) -> Result<CrbReport> {
    let model = build_gnss_model(scenario, free)?;
    let sigma = scenario.noise_sigma();
    let theta = model.free_parameters(&scenario.true_parameters());
    let fisher = match quantizer {
        Some(q) => fisher_pilot(&model, q, &theta, sigma)?,
        None => fisher_unquantized(&model, &theta, sigma)?,
    };
    let bound = crb(&fisher)?;
    if bound.singular {
        return Err(Error::SingularFisher);
    }
    let entries = model
        .free_params()
        .iter()
        .zip(bound.diag.iter())
        .map(|(&p, &v)| {
            let (unit, scale) = unit_of(p, scenario);
            CrbEntry { parameter: p.name(), unit, sqrt_crb: v.sqrt() * scale }
        })
        .collect();
    Ok(CrbReport { sigma, entries })
}

/// Noisy quantized observation of the scenario: returns cell indices.
pub fn simulate_observation<R: Rng + ?Sized>(
    model: &GnssModel,
    theta: &DVector<f64>,
    sigma: f64,
    quantizer: &Quantizer,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let f = model.eval(theta)?;
    Ok(f.iter()
        .map(|&fi| {
            let eta: f64 = rng.sample(StandardNormal);
            quantizer.index_of(fi + sigma * eta)
        })
        .collect())
}

/// Least-squares complex amplitudes for fixed unit-amplitude path signals.
fn fit_gammas(signals: &[Vec<Complex64>], y: &[Complex64]) -> Option<Vec<Complex64>> {
    let p = signals.len();
    let gram = nalgebra::DMatrix::from_fn(p, p, |a, b| {
        signals[a].iter().zip(&signals[b]).map(|(u, v)| u.conj() * v).sum::<Complex64>()
    });
    let rhs =
        nalgebra::DVector::from_fn(p, |a, _| signals[a].iter().zip(y).map(|(u, v)| u.conj() * v).sum::<Complex64>());
    gram.lu().solve(&rhs).map(|v| v.iter().copied().collect())
}

/// Coarse-to-fine grid initializer for the two-path array model.
///
/// Path 1 comes from a beamformed correlation search over a full code period
/// in half-sample delay steps and a 1° azimuth grid, refined locally. Path 2
/// is then searched on a local delay window and the full azimuth range with
/// the two amplitudes refit jointly by least squares. Doppler starts at zero.
pub fn grid_initialize(model: &GnssModel, y: &DVector<f64>) -> Result<DVector<f64>> {
    let np = model.num_paths();
    if np > 2 {
        return Err(Error::InvalidScenario("grid initializer supports at most two paths".into()));
    }
    let m_ant = model.antennas();
    let k_len = model.samples();
    let yc: Vec<Complex64> = (0..m_ant * k_len).map(|i| Complex64::new(y[i], y[m_ant * k_len + i])).collect();
    let spc = model.samples_per_chip();
    let code = model.code();

    // Per-antenna correlation against the code on a half-sample delay grid.
    let steps = (2.0 * spc * CODE_LENGTH as f64).round() as usize;
    let delay = |s: usize| s as f64 / (2.0 * spc);
    let wave: Vec<Vec<f64>> =
        (0..steps).map(|s| (0..k_len).map(|k| code_at(code, k as f64 / spc - delay(s))).collect()).collect();
    let corr: Vec<Vec<Complex64>> = wave
        .iter()
        .map(|w| {
            (0..m_ant)
                .map(|m| {
                    let row = &yc[m * k_len..(m + 1) * k_len];
                    row.iter().zip(w).map(|(v, c)| v * c).sum()
                })
                .collect()
        })
        .collect();
    let phis: Vec<f64> = (-90..=90).map(|d| (d as f64).to_radians()).collect();
    let steer: Vec<Vec<Complex64>> = phis.iter().map(|&p| steering_rad(p, m_ant)).collect();
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (s, c) in corr.iter().enumerate() {
        for (a, st) in steer.iter().enumerate() {
            let v: Complex64 = st.iter().zip(c).map(|(s, c)| s.conj() * c).sum();
            if v.norm_sqr() > best.2 {
                best = (s, a, v.norm_sqr());
            }
        }
    }
    let score = |tau: f64, phi: f64| -> f64 {
        let sig = model.unit_path_signal(tau, 0.0, phi);
        let v: Complex64 = sig.iter().zip(&yc).map(|(s, y)| s.conj() * y).sum();
        v.norm_sqr()
    };
    let (mut tau1, mut phi1) = (delay(best.0), phis[best.1]);
    // Local refinement of path 1.
    let mut span = (1.0 / (2.0 * spc), 1f64.to_radians());
    for _ in 0..4 {
        let mut local = (tau1, phi1, score(tau1, phi1));
        for i in -4..=4 {
            for j in -4..=4 {
                let t = tau1 + span.0 * i as f64 / 4.0;
                let p = (phi1 + span.1 * j as f64 / 4.0).clamp(-1.5, 1.5);
                let v = score(t, p);
                if v > local.2 {
                    local = (t, p, v);
                }
            }
        }
        tau1 = local.0;
        phi1 = local.1;
        span = (span.0 / 4.0, span.1 / 4.0);
    }
    let s1 = model.unit_path_signal(tau1, 0.0, phi1);
    let mut taus = vec![tau1];
    let mut phis_out = vec![phi1];
    let gammas = if np == 1 {
        fit_gammas(&[s1], &yc).ok_or(Error::SingularFisher)?
    } else {
        let residual = |tau2: f64, phi2: f64| -> Option<(f64, Vec<Complex64>)> {
            let s2 = model.unit_path_signal(tau2, 0.0, phi2);
            let sig = [s1.clone(), s2];
            let g = fit_gammas(&sig, &yc)?;
            let r: f64 = (0..yc.len()).map(|i| (yc[i] - g[0] * sig[0][i] - g[1] * sig[1][i]).norm_sqr()).sum();
            Some((r, g))
        };
        let mut best2: Option<(f64, f64, f64, Vec<Complex64>)> = None;
        for i in -12i32..=12 {
            let t = tau1 + i as f64 * 0.125;
            for d in (-88..=88).step_by(4) {
                let p = (d as f64).to_radians();
                if (p - phi1).abs() < 4f64.to_radians() && i.abs() < 2 {
                    continue;
                }
                if let Some((r, g)) = residual(t, p) {
                    if best2.as_ref().is_none_or(|b| r < b.0) {
                        best2 = Some((r, t, p, g));
                    }
                }
            }
        }
        let (mut r2, mut t2, mut p2, mut g2) = best2.ok_or(Error::SingularFisher)?;
        let mut span = (0.125, 4f64.to_radians());
        for _ in 0..4 {
            let (ct, cp) = (t2, p2);
            for i in -2..=2 {
                for j in -2..=2 {
                    let t = ct + span.0 * i as f64 / 2.0;
                    let p = (cp + span.1 * j as f64 / 2.0).clamp(-1.5, 1.5);
                    if let Some((r, g)) = residual(t, p) {
                        if r < r2 {
                            (r2, t2, p2, g2) = (r, t, p, g);
                        }
                    }
                }
            }
            span = (span.0 / 2.0, span.1 / 2.0);
        }
        taus.push(t2);
        phis_out.push(p2);
        g2
    };
    let mut full = DVector::zeros(5 * np);
    for k in 0..np {
        full[k] = gammas[k].re;
        full[np + k] = gammas[k].im;
        full[2 * np + k] = taus[k];
        full[4 * np + k] = phis_out[k];
    }
    Ok(full)
}

/// One Monte Carlo run: simulate, grid-initialize, refine by EM.
///
/// Returns the estimated free-parameter vector and the EM trace.
pub fn gnss_em_trial<R: Rng + ?Sized>(
    scenario: &GnssScenario,
    quantizer: &Quantizer,
    free: &[GnssParam],
    cfg: &EmConfig,
    rng: &mut R,
) -> Result<EstimateTrace> {
    let model = build_gnss_model(scenario, free)?;
    let sigma = scenario.noise_sigma();
    let truth = model.free_parameters(&scenario.true_parameters());
    let cells = simulate_observation(&model, &truth, sigma, quantizer, rng)?;
    let reps = DVector::from_iterator(cells.len(), cells.iter().map(|&c| quantizer.representatives()[c]));
    let init_full = grid_initialize(&model, &reps)?;
    let theta0 = model.free_parameters(&init_full);
    em_pilot(&model, quantizer, &cells, sigma, &Prior::Uniform, &theta0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{optimize_quantizer, DesignMode};

    fn octal_prefix(code: &[f64]) -> u32 {
        code[..10].iter().fold(0, |acc, &c| (acc << 1) | u32::from(c < 0.0))
    }

    #[test]
    fn ca_code_reference_chips() {
        // first ten chips in octal, from a reference shift-register implementation
        for (prn, want) in [(1, 0o1440), (2, 0o1620), (3, 0o1710), (7, 0o1131), (19, 0o1633), (32, 0o1712)] {
            assert_eq!(octal_prefix(&gen_ca_code(prn).unwrap()), want, "PRN {prn}");
        }
    }

    #[test]
    fn ca_code_balance_and_correlation() {
        for prn in 1..=32 {
            let c = gen_ca_code(prn).unwrap();
            assert_eq!(c.len(), CODE_LENGTH);
            assert_eq!(c.iter().sum::<f64>(), -1.0);
            assert_eq!(c.iter().map(|v| v * v).sum::<f64>(), 1023.0);
        }
        let a = gen_ca_code(1).unwrap();
        let b = gen_ca_code(2).unwrap();
        let worst = (0..CODE_LENGTH)
            .map(|k| (0..CODE_LENGTH).map(|i| a[i] * b[(i + k) % CODE_LENGTH]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert!(worst <= 65.0);
        assert!(gen_ca_code(0).is_err() && gen_ca_code(33).is_err());
    }

    #[test]
    fn steering_examples() {
        assert!(steering_vector(0.0, 4).unwrap().iter().all(|a| (a - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = steering_vector(30.0, 2).unwrap();
        assert!((a[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        for a in steering_vector(47.0, 8).unwrap() {
            assert!((a.norm() - 1.0).abs() < 1e-15);
        }
        assert!(steering_vector(91.0, 2).is_err());
        assert!(steering_vector(10.0, 0).is_err());
    }

    #[test]
    fn sampled_code_alignment_and_shift() {
        let sc = GnssScenario::single_antenna(0.0);
        let code = gen_ca_code(1).unwrap();
        let s0 = sample_code(&code, 0.0, &sc).unwrap();
        assert_eq!(s0.len(), 2046);
        for k in 0..2046 {
            if k % 2 == 0 {
                assert_eq!(s0[k], code[k / 2]);
            }
        }
        let s1 = sample_code(&code, sc.chip_duration, &sc).unwrap();
        for k in 0..2046 {
            assert_eq!(s1[(k + 2) % 2046], s0[k]);
        }
        let e0: f64 = s0.iter().map(|v| v * v).sum();
        for frac in [0.1, 0.25, 0.37, 0.5, 0.8] {
            let s = sample_code(&code, frac * sc.chip_duration, &sc).unwrap();
            let e: f64 = s.iter().map(|v| v * v).sum();
            // interpolation between ±1 chips loses energy only at transitions
            assert!((e / e0 - 1.0).abs() < 0.5 && e <= e0 + 1e-9);
        }
        assert!(sample_code(&code, 2e-3, &sc).is_err());
    }

    #[test]
    fn scenario_units_and_validation() {
        let sc = GnssScenario::two_path_array();
        sc.validate().unwrap();
        assert_eq!(sc.samples(), 2046);
        let g = sc.effective_gammas();
        assert!((g[0].norm() / g[1].norm() - 10f64.powf(0.25)).abs() < 1e-12);
        assert!((g[0].arg() - g[1].arg()).abs() < 1e-15);
        let snr = 10f64.powf(-2.28);
        assert!((sc.noise_sigma() - 1.0 / (2.0 * snr).sqrt()).abs() < 1e-12);
        let mut bad = sc.clone();
        bad.prn = 40;
        assert!(bad.validate().is_err());
        let text = toml::to_string(&sc).unwrap();
        let back: GnssScenario = toml::from_str(&text).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn crb_ratio_one_bit_vs_fine_at_low_snr() {
        let sc = GnssScenario::single_antenna(-30.0);
        let sigma = sc.noise_sigma();
        let tau = [GnssParam::Tau(0)];
        let one = Quantizer::sign().scaled(sigma).unwrap();
        let fine = optimize_quantizer(8, sigma, DesignMode::Uniform).unwrap().quantizer;
        let r1 = gnss_crb_report(&sc, Some(&one), &tau).unwrap().get("tau1").unwrap();
        let r8 = gnss_crb_report(&sc, Some(&fine), &tau).unwrap().get("tau1").unwrap();
        let want = (std::f64::consts::PI / 2.0).sqrt();
        assert!((r1 / r8 / want - 1.0).abs() < 0.01, "{}", r1 / r8);
    }

    #[test]
    fn coincident_paths_are_singular() {
        let mut sc = GnssScenario::two_path_array();
        sc.paths[1].tau = sc.paths[0].tau;
        sc.paths[1].phi = sc.paths[0].phi;
        let all = GnssParam::all(2);
        let r = gnss_crb_report(&sc, None, &all);
        assert_eq!(r, Err(Error::SingularFisher));
    }

    #[test]
    fn fisher_additive_over_periods() {
        let mut sc = GnssScenario::single_antenna(-20.0);
        let tau = [GnssParam::Tau(0), GnssParam::ReGamma(0), GnssParam::ImGamma(0)];
        let one = gnss_crb_report(&sc, None, &tau).unwrap().get("tau1").unwrap();
        sc.periods = 4;
        let four = gnss_crb_report(&sc, None, &tau).unwrap().get("tau1").unwrap();
        assert!((one / four - 2.0).abs() < 1e-9);
    }
}

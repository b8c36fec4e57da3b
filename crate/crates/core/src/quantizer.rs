//! Scalar quantizers, the low-SNR information factor ρ_Q, and quantizer
//! design that maximizes ρ_Q.
//!
//! A [`Quantizer`] is a partition of the real line into `K` half-open cells
//! `(-∞, t₁), [t₁, t₂), …, [t_{K-1}, ∞)` with one representative value per
//! cell. Inference only ever uses the cell bounds; representatives are labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cell_stats, Interval};

const MAX_MIDRISER_BITS: u32 = 8;

/// Output of [`Quantizer::quantize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantized {
    pub index: usize,
    pub rep: f64,
    pub cell: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantizerRecord", into = "QuantizerRecord")]
pub struct Quantizer {
    thresholds: Vec<f64>,
    representatives: Vec<f64>,
    bits: Option<u32>,
    delta: Option<f64>,
}

/// Structured-text form of a quantizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub thresholds: Vec<f64>,
    pub representatives: Vec<f64>,
}

impl TryFrom<QuantizerRecord> for Quantizer {
    type Error = Error;

    fn try_from(rec: QuantizerRecord) -> Result<Self> {
        let mut q = Quantizer::make_custom(rec.thresholds, rec.representatives)?;
        q.bits = rec.bits;
        q.delta = rec.delta;
        Ok(q)
    }
}

impl From<Quantizer> for QuantizerRecord {
    fn from(q: Quantizer) -> Self {
        QuantizerRecord { bits: q.bits, delta: q.delta, thresholds: q.thresholds, representatives: q.representatives }
    }
}

impl Quantizer {
    /// Uniform symmetric mid-riser quantizer with `2^bits` levels and step `delta`.
    ///
    /// Representatives are `(k - 2^b/2 - 1/2)Δ` for `k = 1..=2^b`; the two
    /// outermost cells extend to ∓∞.
    pub fn make_midriser(bits: u32, delta: f64) -> Result<Self> {
        if bits == 0 || bits > MAX_MIDRISER_BITS {
            return Err(Error::InvalidQuantizer(format!(
                "mid-riser bit count must be in 1..={MAX_MIDRISER_BITS}, got {bits}"
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidQuantizer(format!("step size must be positive and finite, got {delta}")));
        }
        let levels = 1usize << bits;
        let half = levels as f64 / 2.0;
        let representatives = (1..=levels).map(|k| (k as f64 - half - 0.5) * delta).collect();
        let thresholds = (1..levels).map(|k| (k as f64 - half) * delta).collect();
        Ok(Self { thresholds, representatives, bits: Some(bits), delta: Some(delta) })
    }

    /// The 1-bit sign quantizer with representatives ±1.
    pub fn sign() -> Self {
        Self { thresholds: vec![0.0], representatives: vec![-1.0, 1.0], bits: Some(1), delta: None }
    }

    pub fn make_custom(thresholds: Vec<f64>, representatives: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidQuantizer("need at least one threshold".into()));
        }
        if representatives.len() != thresholds.len() + 1 {
            return Err(Error::InvalidQuantizer(format!(
                "{} thresholds need {} representatives, got {}",
                thresholds.len(),
                thresholds.len() + 1,
                representatives.len()
            )));
        }
        if thresholds.iter().chain(&representatives).any(|v| !v.is_finite()) {
            return Err(Error::InvalidQuantizer("non-finite threshold or representative".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidQuantizer("thresholds must be strictly increasing".into()));
        }
        Ok(Self { thresholds, representatives, bits: None, delta: None })
    }

    /// Custom quantizer with representatives derived from the thresholds:
    /// cell midpoints inside, outermost thresholds ∓ the mean gap outside.
    pub fn from_thresholds(thresholds: Vec<f64>) -> Result<Self> {
        let n = thresholds.len();
        if n == 0 {
            return Err(Error::InvalidQuantizer("need at least one threshold".into()));
        }
        let gap = if n > 1 { (thresholds[n - 1] - thresholds[0]) / (n - 1) as f64 } else { 1.0 };
        let mut reps = Vec::with_capacity(n + 1);
        reps.push(thresholds[0] - gap / 2.0);
        reps.extend(thresholds.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        reps.push(thresholds[n - 1] + gap / 2.0);
        Self::make_custom(thresholds, reps)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn representatives(&self) -> &[f64] {
        &self.representatives
    }

    pub fn bits(&self) -> Option<u32> {
        self.bits
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn num_cells(&self) -> usize {
        self.representatives.len()
    }

    pub fn cell(&self, index: usize) -> Interval {
        let lo = if index == 0 { f64::NEG_INFINITY } else { self.thresholds[index - 1] };
        let up = self.thresholds.get(index).copied().unwrap_or(f64::INFINITY);
        Interval { lo, up }
    }

    pub fn cells(&self) -> impl Iterator<Item = Interval> + '_ {
        (0..self.num_cells()).map(move |k| self.cell(k))
    }

    /// Cell index of `y` with the lower-inclusive convention `[lo, up)`.
    #[inline]
    pub fn index_of(&self, y: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= y)
    }

    pub fn quantize(&self, y: f64) -> Result<Quantized> {
        if y.is_nan() {
            return Err(Error::NonFinite("quantize"));
        }
        let index = self.index_of(y);
        Ok(Quantized { index, rep: self.representatives[index], cell: self.cell(index) })
    }

    /// Same partition scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidQuantizer(format!("scale must be positive, got {c}")));
        }
        Ok(Self {
            thresholds: self.thresholds.iter().map(|t| t * c).collect(),
            representatives: self.representatives.iter().map(|r| r * c).collect(),
            bits: self.bits,
            delta: self.delta.map(|d| d * c),
        })
    }

    /// Low-SNR Fisher information factor of this quantizer for noise `sigma`:
    ///
    /// ```text
    /// ρ_Q = 1/(2π) Σ_cells (exp(-up²/2σ²) - exp(-lo²/2σ²))² / (Φ(up/σ) - Φ(lo/σ))
    /// ```
    ///
    /// Cells whose probability underflows contribute nothing.
    ///
    /// # Panics
    /// If `sigma` is not positive and finite.
    pub fn rho_q(&self, sigma: f64) -> f64 {
        assert!(sigma > 0.0 && sigma.is_finite(), "rho_q needs sigma > 0");
        self.cells().filter_map(|c| cell_stats(&c, 0.0, sigma).ok()).map(|s| s.fisher_weight()).sum()
    }
}

/// Shape constraint for [`optimize_quantizer`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    /// Uniform mid-riser: one free step size.
    #[default]
    Uniform,
    /// Arbitrary symmetric thresholds (0 plus ± pairs).
    Free,
}

impl std::str::FromStr for DesignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DesignMode::Uniform),
            "free" => Ok(DesignMode::Free),
            other => Err(Error::InvalidArgument(format!("unknown design mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedQuantizer {
    pub quantizer: Quantizer,
    pub rho: f64,
    /// Optimal step normalized by σ (uniform mode, b ≥ 2).
    pub delta_normalized: Option<f64>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `f` on `[a, b]` down to bracket width `tol`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

fn uniform_rho(bits: u32, step: f64) -> f64 {
    Quantizer::make_midriser(bits, step).map(|q| q.rho_q(1.0)).unwrap_or(f64::NEG_INFINITY)
}

/// Best uniform step for unit noise: coarse scan then golden-section refinement.
fn optimize_uniform_step(bits: u32) -> (f64, f64) {
    const LO: f64 = 1e-3;
    const HI: f64 = 10.0;
    const SCAN: usize = 200;
    let grid: Vec<f64> = (0..SCAN).map(|i| LO + (HI - LO) * i as f64 / (SCAN - 1) as f64).collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &d)| (i, uniform_rho(bits, d)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(SCAN - 1)];
    golden_max(|d| uniform_rho(bits, d), a, b, 1e-8)
}

fn symmetric_thresholds(gaps: &[f64]) -> Vec<f64> {
    let mut pos = Vec::with_capacity(gaps.len());
    let mut acc = 0.0;
    for g in gaps {
        acc += g;
        pos.push(acc);
    }
    let mut th: Vec<f64> = pos.iter().rev().map(|t| -t).collect();
    th.push(0.0);
    th.extend(pos);
    th
}

fn free_rho(gaps: &[f64]) -> f64 {
    if gaps.iter().any(|g| !(*g > 0.0)) {
        return f64::NEG_INFINITY;
    }
    Quantizer::from_thresholds(symmetric_thresholds(gaps)).map(|q| q.rho_q(1.0)).unwrap_or(f64::NEG_INFINITY)
}

/// Coordinate-wise golden-section ascent over the positive threshold gaps.
fn optimize_free_gaps(bits: u32, start_step: f64) -> Result<(Vec<f64>, f64)> {
    const MAX_SWEEPS: usize = 20_000;
    let m = (1usize << (bits - 1)) - 1;
    let mut gaps = vec![start_step; m];
    let mut rho = free_rho(&gaps);
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for i in 0..m {
            let g0 = gaps[i];
            let objective = |g: f64| {
                let mut trial = gaps.clone();
                trial[i] = g;
                free_rho(&trial)
            };
            let (g, r) = golden_max(objective, g0 / 3.0, g0 * 3.0, 1e-11);
            if r >= rho {
                max_change = max_change.max((g - g0).abs());
                gaps[i] = g;
                rho = r;
            }
        }
        if max_change < 1e-9 {
            return Ok((gaps, rho));
        }
    }
    Err(Error::NotConverged { iterations: MAX_SWEEPS })
}

/// Quantizer maximizing ρ_Q for `bits` bits and noise `sigma`.
pub fn optimize_quantizer(bits: u32, sigma: f64, mode: DesignMode) -> Result<OptimizedQuantizer> {
    if bits == 0 || bits > MAX_MIDRISER_BITS {
        return Err(Error::InvalidQuantizer(format!("bit count must be in 1..={MAX_MIDRISER_BITS}, got {bits}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if bits == 1 {
        // Any step gives the sign quantizer; representatives at ±σ.
        let q = Quantizer::make_midriser(1, 2.0 * sigma)?;
        let rho = q.rho_q(sigma);
        return Ok(OptimizedQuantizer { quantizer: Quantizer { delta: None, ..q }, rho, delta_normalized: None });
    }
    let (step, uniform_best) = optimize_uniform_step(bits);
    match mode {
        DesignMode::Uniform => {
            let quantizer = Quantizer::make_midriser(bits, step * sigma)?;
            Ok(OptimizedQuantizer { quantizer, rho: uniform_best, delta_normalized: Some(step) })
        }
        DesignMode::Free => {
            let (gaps, rho) = optimize_free_gaps(bits, step)?;
            let mut quantizer = Quantizer::from_thresholds(symmetric_thresholds(&gaps))?.scaled(sigma)?;
            quantizer.bits = Some(bits);
            Ok(OptimizedQuantizer { quantizer, rho: rho.max(uniform_best), delta_normalized: None })
        }
    }
}

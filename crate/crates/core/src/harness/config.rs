use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimators::EmConfig;
use crate::gnss::GnssScenario;
use crate::models::GnssParam;
use crate::quantizer::{DesignMode, Quantizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "siso1tap")]
    Siso1Tap,
    #[serde(rename = "siso2tap")]
    Siso2Tap,
    #[serde(rename = "blind")]
    Blind,
    #[serde(rename = "mimo2x2")]
    Mimo2x2,
    #[serde(rename = "mimoNxN")]
    MimoNxN,
    #[serde(rename = "gnss")]
    Gnss,
}

impl Scenario {
    pub const ALL: [Scenario; 6] =
        [Scenario::Siso1Tap, Scenario::Siso2Tap, Scenario::Blind, Scenario::Mimo2x2, Scenario::MimoNxN, Scenario::Gnss];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Siso1Tap => "siso1tap",
            Scenario::Siso2Tap => "siso2tap",
            Scenario::Blind => "blind",
            Scenario::Mimo2x2 => "mimo2x2",
            Scenario::MimoNxN => "mimoNxN",
            Scenario::Gnss => "gnss",
        }
    }

    /// Pilot length used when the config does not set one.
    pub fn default_pilot_length(self) -> usize {
        match self {
            Scenario::Blind | Scenario::MimoNxN => 1000,
            Scenario::Gnss => 0,
            _ => 200,
        }
    }

    fn has_closed_form(self) -> bool {
        matches!(self, Scenario::Siso1Tap | Scenario::Siso2Tap | Scenario::Mimo2x2)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Snr,
    Bits,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Snr => "snr",
            Axis::Bits => "bits",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ClosedForm,
    Em,
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(EstimatorKind::ClosedForm),
            "em" => Ok(EstimatorKind::Em),
            _ => Err(Error::Config(format!("unknown estimator '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrUnit {
    #[default]
    Linear,
    Db,
}

/// Bit resolution; `Unquantized` is the `b → ∞` reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Bits(u32),
    Unquantized,
}

impl Resolution {
    pub fn bits(self) -> Option<u32> {
        match self {
            Resolution::Bits(b) => Some(b),
            Resolution::Unquantized => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.bits().map_or(f64::INFINITY, f64::from)
    }

    fn from_f64(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Resolution::Unquantized)
        } else if v.fract() == 0.0 && (1.0..=8.0).contains(&v) {
            Ok(Resolution::Bits(v as u32))
        } else {
            Err(Error::Config(format!("bits must be an integer in 1..=8 or \"inf\", got {v}")))
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolution::Bits(b) => write!(f, "{b}"),
            Resolution::Unquantized => f.write_str("inf"),
        }
    }
}

impl FromStr for Resolution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" | "unquantized" => Ok(Resolution::Unquantized),
            t => t
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse bits '{s}'")))
                .and_then(Resolution::from_f64),
        }
    }
}

/// A config scalar that may be written as a number or as a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Number(f64),
    Text(String),
}

impl AxisValue {
    fn to_resolution(&self) -> Result<Resolution> {
        match self {
            AxisValue::Number(v) => Resolution::from_f64(*v),
            AxisValue::Text(s) => s.parse(),
        }
    }

    fn to_f64(&self) -> Result<f64> {
        match self {
            AxisValue::Number(v) => Ok(*v),
            AxisValue::Text(s) => s.parse().map_err(|_| Error::Config(format!("axis value '{s}' is not a number"))),
        }
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(b) => s.serialize_u32(*b),
            Resolution::Unquantized => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        AxisValue::deserialize(d)?.to_resolution().map_err(serde::de::Error::custom)
    }
}

/// How the quantizer of every sweep point is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSpec {
    /// Optimal design for the point's bit count, scaled by the noise σ.
    #[serde(default)]
    pub mode: DesignMode,
    /// Fixed quantizer in absolute units; overrides `mode` and rules out a bits axis.
    #[serde(default)]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub representatives: Option<Vec<f64>>,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self { mode: DesignMode::Uniform, thresholds: None, representatives: None }
    }
}

impl QuantizerSpec {
    pub fn custom(&self) -> Result<Option<Quantizer>> {
        match (&self.thresholds, &self.representatives) {
            (None, None) => Ok(None),
            (Some(t), None) => Quantizer::from_thresholds(t.clone()).map(Some),
            (Some(t), Some(r)) => Quantizer::make_custom(t.clone(), r.clone()).map(Some),
            (None, Some(_)) => Err(Error::Config("quantizer representatives given without thresholds".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSettings {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iters() -> usize {
    EmConfig::default().max_iters
}
fn default_tol() -> f64 {
    EmConfig::default().tol
}

impl Default for EmSettings {
    fn default() -> Self {
        Self { max_iters: default_max_iters(), tol: default_tol() }
    }
}

impl EmSettings {
    pub fn em_config(&self) -> EmConfig {
        EmConfig { max_iters: self.max_iters, tol: self.tol, likelihood_check: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnssPreset {
    SingleAntenna,
    TwoPathArray,
}

/// GNSS scenario source: a preset or a full description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnssSettings {
    #[serde(default)]
    pub preset: Option<GnssPreset>,
    #[serde(default)]
    pub scenario: Option<GnssScenario>,
    /// Estimated parameters by name (`tau1`, `re_gamma2`, …). When absent,
    /// every parameter except the azimuths of a single-antenna receiver.
    #[serde(default)]
    pub free: Option<Vec<String>>,
}

impl GnssSettings {
    pub fn base_scenario(&self) -> Result<GnssScenario> {
        let sc = match (&self.preset, &self.scenario) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either gnss.preset or gnss.scenario, not both".into()))
            }
            (Some(GnssPreset::SingleAntenna), None) => GnssScenario::single_antenna(-20.0),
            (Some(GnssPreset::TwoPathArray), None) | (None, None) => GnssScenario::two_path_array(),
            (None, Some(s)) => s.clone(),
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn free_params(&self, scenario: &GnssScenario) -> Result<Vec<GnssParam>> {
        match &self.free {
            None => Ok(GnssParam::all(scenario.paths.len())
                .into_iter()
                .filter(|p| scenario.antennas > 1 || !matches!(p, GnssParam::Phi(_)))
                .collect()),
            Some(names) => names.iter().map(|n| GnssParam::parse(n)).collect(),
        }
    }
}

/// One Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub axis: Axis,
    pub axis_values: Vec<AxisValue>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the closed form where one exists for single-bit points, EM otherwise.
    #[serde(default)]
    pub estimator: Option<EstimatorKind>,
    /// Unit of `snr` and of SNR axis values.
    #[serde(default)]
    pub snr_unit: SnrUnit,
    /// Fixed SNR for a bits axis.
    #[serde(default)]
    pub snr: Option<f64>,
    /// Fixed resolution for an SNR axis.
    #[serde(default)]
    pub bits: Option<Resolution>,
    /// Pilot (or block) length `N`.
    #[serde(default)]
    pub pilot_length: Option<usize>,
    /// Transmit/receive count for `mimoNxN`; a power of two.
    #[serde(default)]
    pub mimo_size: Option<usize>,
    #[serde(default)]
    pub quantizer: QuantizerSpec,
    #[serde(default)]
    pub em: EmSettings,
    #[serde(default)]
    pub gnss: Option<GnssSettings>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_trials() -> usize {
    1000
}

/// A resolved sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub axis_value: f64,
    pub snr_db: f64,
    pub resolution: Resolution,
    pub estimator: EstimatorKind,
}

impl SweepConfig {
    /// Minimal config for `scenario` sweeping SNR (linear) at the given resolution.
    pub fn new(scenario: Scenario, axis: Axis, axis_values: Vec<AxisValue>) -> Self {
        Self {
            scenario,
            axis,
            axis_values,
            trials: default_trials(),
            seed: 0,
            estimator: None,
            snr_unit: SnrUnit::Linear,
            snr: None,
            bits: None,
            pilot_length: None,
            mimo_size: None,
            quantizer: QuantizerSpec::default(),
            em: EmSettings::default(),
            gnss: None,
            output: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pilot_length(&self) -> usize {
        self.pilot_length.unwrap_or(self.scenario.default_pilot_length())
    }

    pub fn mimo_size(&self) -> usize {
        self.mimo_size.unwrap_or(4)
    }

    pub fn gnss_settings(&self) -> GnssSettings {
        self.gnss.clone().unwrap_or(GnssSettings { preset: None, scenario: None, free: None })
    }

    fn snr_to_db(&self, v: f64) -> Result<f64> {
        match self.snr_unit {
            SnrUnit::Db if v.is_finite() => Ok(v),
            SnrUnit::Linear if v > 0.0 && v.is_finite() => Ok(10.0 * v.log10()),
            _ => Err(Error::Config(format!("invalid SNR value {v}"))),
        }
    }

    /// SNR values in dB for a GNSS scenario default to the scenario's own.
    fn fixed_snr_db(&self) -> Result<f64> {
        match (self.snr, self.scenario) {
            (Some(v), _) => self.snr_to_db(v),
            (None, Scenario::Gnss) => Ok(self.gnss_settings().base_scenario()?.snr_db),
            (None, _) => Err(Error::Config("a bits axis needs a fixed `snr`".into())),
        }
    }

    /// Resolve the axis into sweep points and check every scenario constraint.
    pub fn points(&self) -> Result<Vec<Point>> {
        if self.axis_values.is_empty() {
            return Err(Error::Config("axis_values must not be empty".into()));
        }
        let custom = self.quantizer.custom()?;
        let mut out = Vec::with_capacity(self.axis_values.len());
        for v in &self.axis_values {
            let (axis_value, snr_db, resolution) = match self.axis {
                Axis::Snr => {
                    let x = v.to_f64()?;
                    let res = self.bits.unwrap_or(Resolution::Bits(1));
                    (x, self.snr_to_db(x)?, res)
                }
                Axis::Bits => {
                    if custom.is_some() {
                        return Err(Error::Config("a bits axis cannot use a fixed custom quantizer".into()));
                    }
                    let r = v.to_resolution()?;
                    (r.as_f64(), self.fixed_snr_db()?, r)
                }
            };
            let resolution = match &custom {
                Some(q) => q.bits().map_or(resolution, Resolution::Bits),
                None => resolution,
            };
            let one_bit = resolution == Resolution::Bits(1) && custom.is_none();
            let estimator = match self.estimator {
                Some(EstimatorKind::ClosedForm) => {
                    if !(self.scenario.has_closed_form() && one_bit) || resolution == Resolution::Unquantized {
                        return Err(Error::Config(format!(
                            "no closed-form estimator for {} at {resolution} bits",
                            self.scenario
                        )));
                    }
                    EstimatorKind::ClosedForm
                }
                Some(EstimatorKind::Em) => EstimatorKind::Em,
                None if self.scenario.has_closed_form() && one_bit => EstimatorKind::ClosedForm,
                None => EstimatorKind::Em,
            };
            out.push(Point { axis_value, snr_db, resolution, estimator });
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        self.em.em_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        let points = self.points()?;
        let n = self.pilot_length();
        match self.scenario {
            Scenario::Siso1Tap | Scenario::Siso2Tap | Scenario::Mimo2x2 | Scenario::Blind if n < 2 => {
                return Err(Error::Config("pilot_length must be >= 2".into()))
            }
            Scenario::MimoNxN => {
                let m = self.mimo_size();
                if !m.is_power_of_two() || m < 2 {
                    return Err(Error::Config(format!("mimo_size must be a power of two >= 2, got {m}")));
                }
                if !n.is_multiple_of(m) || n == 0 {
                    return Err(Error::Config(format!(
                        "pilot_length {n} must be a positive multiple of mimo_size {m}"
                    )));
                }
            }
            Scenario::Gnss => {
                let g = self.gnss_settings();
                let sc = g.base_scenario().map_err(|e| Error::Config(e.to_string()))?;
                let free = g.free_params(&sc).map_err(|e| Error::Config(e.to_string()))?;
                if !free.contains(&GnssParam::Tau(0)) {
                    return Err(Error::Config("gnss sweeps report tau1, which must be free".into()));
                }
            }
            _ => {}
        }
        if self.gnss.is_some() && self.scenario != Scenario::Gnss {
            return Err(Error::Config("[gnss] section given for a non-gnss scenario".into()));
        }
        for p in &points {
            match (self.scenario, p.resolution) {
                (Scenario::Blind, Resolution::Bits(1)) => {
                    return Err(Error::Config("blind estimation needs at least 2 bits".into()))
                }
                (Scenario::Blind | Scenario::Gnss, Resolution::Unquantized) => {
                    return Err(Error::Config(format!("{} has no unquantized estimator", self.scenario)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

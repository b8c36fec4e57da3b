//! `gnss-crb`: √CRB of every free GNSS parameter per bit resolution.
//!
//! ```toml
//! preset = "single_antenna"   # or "two_path_array", or a [scenario] table
//! snr_db = -20
//! bits = [1, 2, 3, 4, "inf"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use quantest::gnss::CrbReport;
use quantest::harness::{GnssPreset, GnssSettings, Resolution};
use quantest::quantizer::{optimize_quantizer, DesignMode};
use quantest::{gnss::gnss_crb_report, GnssScenario};

use crate::{parse_toml, print_json, CliResult};

fn default_bits() -> Vec<Resolution> {
    vec![Resolution::Bits(1), Resolution::Bits(2), Resolution::Bits(3), Resolution::Bits(4), Resolution::Unquantized]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GnssCrbInput {
    preset: Option<GnssPreset>,
    scenario: Option<GnssScenario>,
    /// Overrides the scenario's SNR.
    snr_db: Option<f64>,
    #[serde(default = "default_bits")]
    bits: Vec<Resolution>,
    #[serde(default)]
    mode: DesignMode,
    free: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct Row {
    bits: Resolution,
    #[serde(flatten)]
    report: CrbReport,
}

pub fn run(json: bool, config: &Path) -> CliResult<()> {
    let inp: GnssCrbInput = parse_toml(config)?;
    let settings = GnssSettings { preset: inp.preset, scenario: inp.scenario, free: inp.free };
    let mut scenario = settings.base_scenario()?;
    if let Some(s) = inp.snr_db {
        scenario.snr_db = s;
        scenario.validate()?;
    }
    let free = settings.free_params(&scenario)?;
    let sigma = scenario.noise_sigma();

    let mut rows = Vec::with_capacity(inp.bits.len());
    for &bits in &inp.bits {
        let q = match bits {
            Resolution::Bits(b) => Some(optimize_quantizer(b, sigma, inp.mode)?.quantizer),
            Resolution::Unquantized => None,
        };
        rows.push(Row { bits, report: gnss_crb_report(&scenario, q.as_ref(), &free)? });
    }
    if json {
        return print_json(&rows);
    }
    println!("snr_db={} sigma={sigma:.6}", scenario.snr_db);
    for r in &rows {
        let cols: Vec<String> = r
            .report
            .entries
            .iter()
            .map(|e| format!("{}={:.6} {:?}", e.parameter, e.sqrt_crb, e.unit).to_lowercase())
            .collect();
        println!("bits={} {}", r.bits, cols.join(" "));
    }
    Ok(())
}

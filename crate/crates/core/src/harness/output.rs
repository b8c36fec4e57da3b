use std::io::Write;

use serde::Serialize;

use super::{SweepConfig, SweepRow, RNG_ALGORITHM};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scenario,axis,axis_value,bits,snr_db,mse,rmse,crb,trials,failures,seed";

/// Shortest decimal text of `v` with nine significant digits, `%g` style:
/// plain notation for exponents in `-5..9`, scientific otherwise.
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn csv_line(r: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.scenario,
        r.axis.name(),
        format_sig(r.axis_value),
        r.bits,
        format_sig(r.snr_db),
        format_sig(r.mse),
        format_sig(r.rmse),
        format_sig(r.crb),
        r.trials,
        r.failures,
        r.seed
    )
}

pub fn write_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
    writeln!(w, "{CSV_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(w, "{}", csv_line(r)).map_err(io)?;
    }
    Ok(())
}

/// Provenance written next to every set of rows.
#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub rng: &'static str,
    pub version: &'static str,
    pub config: SweepConfig,
}

impl SweepMetadata {
    pub fn new(config: &SweepConfig) -> Self {
        Self { rng: RNG_ALGORITHM, version: env!("CARGO_PKG_VERSION"), config: config.clone() }
    }
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    metadata: SweepMetadata,
    rows: &'a [SweepRow],
}

/// JSON mirror of the CSV rows; non-finite numbers become `null`.
pub fn write_json<W: Write>(w: W, config: &SweepConfig, rows: &[SweepRow]) -> Result<()> {
    let doc = JsonDoc { metadata: SweepMetadata::new(config), rows };
    serde_json::to_writer_pretty(w, &doc).map_err(|e| Error::Config(format!("write failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(2.4807), "2.4807");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(-123456.789012), "-123456.789");
        assert_eq!(format_sig(0.008218035237563603), "0.00821803524");
        assert_eq!(format_sig(1.5e-7), "1.5e-07");
        assert_eq!(format_sig(6.02214076e23), "6.02214076e+23");
        assert_eq!(format_sig(123456789.4), "123456789");
        assert_eq!(format_sig(1234567894.0), "1.23456789e+09");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        assert_eq!(format_sig(f64::NAN), "nan");
    }

    #[test]
    fn rounding_carries_into_exponent() {
        assert_eq!(format_sig(9.9999999996), "10");
        assert_eq!(format_sig(0.000099999999996), "0.0001");
    }
}

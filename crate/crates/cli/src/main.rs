mod estimate;
mod gnss_crb;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use quantest::harness::{
    write_csv, write_json, Axis, AxisValue, Resolution, Scenario, SnrUnit, Sweep, SweepConfig, SweepMetadata,
};
use quantest::quantizer::{optimize_quantizer, DesignMode};
use quantest::Error;

#[derive(Parser, Debug)]
#[command(name = "quantest", version, about = "Estimation and Cramér-Rao bounds from quantized observations")]
struct Cli {
    /// Override the seed of a sweep config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the trial count of a sweep config.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal quantizer for a bit budget (thresholds in units of σ).
    QuantizerOpt {
        #[arg(long)]
        bits: u32,
        #[arg(long, default_value = "uniform")]
        mode: DesignMode,
    },
    /// Bound matching the MSE column of a sweep point.
    Crb(CrbArgs),
    /// Estimate parameters from an observation file.
    Estimate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run a Monte Carlo sweep and write CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; defaults to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// √CRB table of a GNSS scenario per bit resolution.
    GnssCrb {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct CrbArgs {
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Sweep config; every axis point is reported.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Linear SNR.
    #[arg(long, conflicts_with = "snr_db")]
    snr: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// Bit resolution or `inf`.
    #[arg(long, default_value = "1")]
    bits: Resolution,
    #[arg(short = 'N', long = "pilot-length")]
    pilot_length: Option<usize>,
    #[arg(long, default_value = "uniform")]
    mode: DesignMode,
}

/// Failure with its exit status: 2 for configuration problems, 3 for numerical ones.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidScenario(_)
            | Error::InvalidArgument(_)
            | Error::InvalidQuantizer(_)
            | Error::DimensionMismatch(_) => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// Parse a TOML file; parse errors keep the line/column context from the parser.
pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn load_sweep(path: &Path, cli: &Cli) -> CliResult<SweepConfig> {
    let mut cfg: SweepConfig = parse_toml(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.validate().map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct QuantizerOut {
    bits: u32,
    mode: DesignMode,
    delta: Option<f64>,
    rho: f64,
    thresholds: Vec<f64>,
    representatives: Vec<f64>,
}

fn quantizer_opt(cli: &Cli, bits: u32, mode: DesignMode) -> CliResult<()> {
    let o = optimize_quantizer(bits, 1.0, mode)?;
    let out = QuantizerOut {
        bits,
        mode,
        delta: o.delta_normalized,
        rho: o.rho,
        thresholds: o.quantizer.thresholds().to_vec(),
        representatives: o.quantizer.representatives().to_vec(),
    };
    if cli.json {
        return print_json(&out);
    }
    let list = |v: &[f64]| v.iter().map(|t| format!("{t:.6}")).collect::<Vec<_>>().join(" ");
    match out.delta {
        Some(d) => println!("b={bits} Δ={d:.6} ρ={:.6}", out.rho),
        None => println!("b={bits} ρ={:.6}", out.rho),
    }
    println!("thresholds: {}", list(&out.thresholds));
    Ok(())
}

#[derive(Serialize)]
struct CrbOut {
    scenario: Scenario,
    snr_db: f64,
    bits: Resolution,
    sigma: f64,
    crb: f64,
}

fn crb_cmd(cli: &Cli, args: &CrbArgs) -> CliResult<()> {
    let cfg = match (&args.config, args.scenario) {
        (Some(path), _) => {
            let mut c = load_sweep(path, cli)?;
            if let Some(s) = args.scenario {
                c.scenario = s;
            }
            c
        }
        (None, Some(scenario)) => {
            let (value, unit) = match (args.snr, args.snr_db) {
                (Some(v), None) => (v, SnrUnit::Linear),
                (None, Some(v)) => (v, SnrUnit::Db),
                (None, None) if scenario == Scenario::Gnss => (f64::NAN, SnrUnit::Db),
                _ => return Err(CliError::config("give --snr or --snr-db")),
            };
            let mut c = SweepConfig::new(scenario, Axis::Bits, vec![AxisValue::Number(args.bits.as_f64())]);
            if value.is_finite() {
                c.snr = Some(value);
            }
            c.snr_unit = unit;
            c.pilot_length = args.pilot_length;
            c.quantizer.mode = args.mode;
            c
        }
        (None, None) => return Err(CliError::config("give --scenario or --config")),
    };
    let sweep = Sweep::new(cfg)?;
    let rows: Vec<CrbOut> = sweep
        .points()
        .iter()
        .map(|p| CrbOut {
            scenario: sweep.config().scenario,
            snr_db: p.point.snr_db,
            bits: p.point.resolution,
            sigma: p.sigma,
            crb: p.crb,
        })
        .collect();
    if cli.json {
        return print_json(&rows);
    }
    for r in &rows {
        println!(
            "scenario={} snr_db={:.6} bits={} sigma={:.9} crb={:.9e}",
            r.scenario, r.snr_db, r.bits, r.sigma, r.crb
        );
    }
    Ok(())
}

fn sweep_cmd(cli: &Cli, config: &Path, out: Option<&Path>) -> CliResult<()> {
    let cfg = load_sweep(config, cli)?;
    let rows = Sweep::new(cfg.clone())?.run()?;
    let dest = out.map(Path::to_path_buf).or_else(|| cfg.output.clone());
    let io = |p: &Path, e: std::io::Error| CliError::config(format!("cannot write {}: {e}", p.display()));
    match dest {
        Some(path) => {
            let f = fs::File::create(&path).map_err(|e| io(&path, e))?;
            write_csv(std::io::BufWriter::new(f), &rows)?;
            let meta = path.with_extension("meta.json");
            let text =
                serde_json::to_string_pretty(&SweepMetadata::new(&cfg)).map_err(|e| CliError::config(e.to_string()))?;
            fs::write(&meta, text).map_err(|e| io(&meta, e))?;
            if cli.json {
                write_json(std::io::stdout().lock(), &cfg, &rows)?;
                println!();
            } else {
                eprintln!("wrote {} rows to {}", rows.len(), path.display());
            }
        }
        None if cli.json => {
            write_json(std::io::stdout().lock(), &cfg, &rows)?;
            println!();
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            write_csv(&mut stdout, &rows)?;
            stdout.flush().ok();
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::QuantizerOpt { bits, mode } => quantizer_opt(cli, *bits, *mode),
        Command::Crb(args) => crb_cmd(cli, args),
        Command::Estimate { scenario, input } => estimate::run(cli.json, *scenario, input),
        Command::Sweep { config, out } => sweep_cmd(cli, config, out.as_deref()),
        Command::GnssCrb { config } => gnss_crb::run(cli.json, config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

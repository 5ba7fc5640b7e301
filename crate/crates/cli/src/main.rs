use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use ces_core::bell::{chsh_from_counts, BellResult};
use ces_core::config::{defaults, from_overrides, load_config, ExperimentConfig};
use ces_core::fit::{fit_lifetime, LifetimeFit};
use ces_core::io::{read_count_records, read_density, read_series, read_tomography, write_json, BellJson, MatrixJson};
use ces_core::measures::{report, EntanglementReport};
use ces_core::pipeline::{analyze_dataset, chsh_angles, run_pipeline, run_rates, Method, Mode, RunOptions};
use ces_core::tomography::{bootstrap_errors, BootstrapReport, MleOptions};
use ces_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "ces", version, about = "Single-atom cavity photon-photon entanglement simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON file of overrides on the defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sequences per Bell setting and per tomography basis pair
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::Mle)]
    method: MethodArg,
    /// Bootstrap resamples for tomography error bars
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mle,
    Linear,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mle => Method::Mle,
            MethodArg::Linear => Method::Linear,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate Bell counts and a tomography dataset
    Simulate,
    /// CHSH analysis; simulates unless a count CSV is given
    Bell { counts: Option<PathBuf> },
    /// State reconstruction; simulates unless a tomography CSV is given
    Tomo { data: Option<PathBuf> },
    /// Entanglement measures of a density matrix JSON
    Measures { state: PathBuf },
    /// Gaussian lifetime fit of a negativity series CSV
    Fit { series: PathBuf },
    /// Rate budget
    Rates,
    /// Tomography at every storage time of the sweep, then a lifetime fit
    Sweep,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::NonConvergence => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => load_config(path)?,
        None => defaults()?,
    };
    if g.seed.is_none() && g.trials.is_none() {
        return Ok(cfg);
    }
    let mut over = serde_json::to_value(&cfg)?;
    if let Some(seed) = g.seed {
        over["seed"] = json!(seed);
    }
    if let Some(n) = g.trials {
        over["n_sequences"] = json!(n);
        over["n_per_basis"] = json!(n);
    }
    cfg = from_overrides(&over)?;
    Ok(cfg)
}

fn options(g: &Global) -> RunOptions {
    RunOptions { method: g.method.into(), bootstrap: g.bootstrap }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => pipeline(g, Mode::Simulate),
        Command::Bell { counts: None } => pipeline(g, Mode::Bell),
        Command::Tomo { data: None } => pipeline(g, Mode::Tomo),
        Command::Sweep => pipeline(g, Mode::Sweep),
        Command::Rates => {
            let r = run_rates(&config(g)?)?;
            println!("{:<28}{:>12}", "quantity", "value");
            println!("{:<28}{:>12.4e}", "p_pair_detect", r.p_pair_detect);
            println!("{:<28}{:>12.2}", "pairs_produced_per_s", r.pairs_produced_per_s);
            println!("{:<28}{:>12.2}", "pairs_detected_per_s", r.pairs_detected_per_s);
            if g.out.is_some() {
                pipeline(g, Mode::Rates)?;
            }
            Ok(())
        }
        Command::Bell { counts: Some(path) } => emit(g, "bell.json", &bell_from_file(path)?),
        Command::Tomo { data: Some(path) } => emit(g, "tomo.json", &tomo_from_file(g, path)?),
        Command::Measures { state } => {
            let rep: EntanglementReport = report(&read_density(state)?)?;
            emit(g, "measures.json", &rep)
        }
        Command::Fit { series } => {
            let fit: LifetimeFit = fit_lifetime(&read_series(series)?)?;
            emit(g, "fit.json", &fit)?;
            if !fit.converged {
                return Err(Error::NonConvergence(format!("lifetime fit stopped after {} iterations", fit.iterations)));
            }
            Ok(())
        }
    }
}

fn pipeline(g: &Global, mode: Mode) -> Result<()> {
    let cfg = config(g)?;
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let manifest = run_pipeline(&cfg, mode, &dir, &options(g))?;
    for o in &manifest.outputs {
        println!("{}", dir.join(&o.file).display());
    }
    Ok(())
}

/// Prints `value` as JSON and, with `--out`, also writes it there.
fn emit<T: Serialize>(g: &Global, name: &str, value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join(name), value)?;
    }
    Ok(())
}

/// Rows are read in blocks of four, each block one CHSH set in the order
/// `(α,β), (α,β′), (α′,β), (α′,β′)`. One block gives an object, several an
/// array.
fn bell_from_file(path: &Path) -> Result<Value> {
    let records = read_count_records(path)?;
    if records.len() % 4 != 0 {
        return Err(Error::Parse(format!(
            "{}: {} rows, expected a multiple of 4 (one CHSH set per block)",
            path.display(),
            records.len()
        )));
    }
    let mut results: Vec<BellJson> = Vec::new();
    for block in records.chunks(4) {
        let settings: Vec<_> = block.iter().map(|r| r.setting).collect();
        let angles = chsh_angles(&settings).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let r: BellResult = chsh_from_counts(block, &angles)?;
        results.push((&r).into());
    }
    Ok(if results.len() == 1 {
        serde_json::to_value(&results[0])?
    } else {
        serde_json::to_value(&results)?
    })
}

#[derive(Serialize)]
struct TomoOutput {
    #[serde(flatten)]
    state: MatrixJson,
    method: Method,
    converged: bool,
    iterations: usize,
    log_likelihood: f64,
    metrics: EntanglementReport,
    metrics_from_projection: bool,
    bootstrap: Option<BootstrapReport>,
}

fn tomo_from_file(g: &Global, path: &Path) -> Result<TomoOutput> {
    let ds = read_tomography(path)?;
    let method: Method = g.method.into();
    let (result, metrics, projected) = analyze_dataset(&ds, method)?;
    let bootstrap = match g.bootstrap {
        Some(n) => Some(bootstrap_errors(&ds, n, g.seed.unwrap_or(0), &MleOptions::default())?),
        None => None,
    };
    Ok(TomoOutput {
        state: MatrixJson::from_matrix(&result.estimate),
        method,
        converged: result.converged,
        iterations: result.iterations,
        log_likelihood: result.log_likelihood,
        metrics,
        metrics_from_projection: projected,
        bootstrap,
    })
}

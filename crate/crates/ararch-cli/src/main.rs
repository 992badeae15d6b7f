//! Batch CLI for the AR-ARCH toolkit: simulate paths, fit the empirical
//! model family, certify stability, and emit plot-ready diagnostics.
//!
//! Exit codes: 0 ok, 10 configuration error, 20 data error, 30 numeric
//! error (including a failed stability verdict), 40 non-convergence.

mod config;

use ararch::estim::{fit, residual_diagnostics, FitSpec};
use ararch::sim::{acf, simulate};
use ararch::stability::{ergodicity_report, ErgodicityOptions};
use clap::Parser;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::Config;

const EXIT_CONFIG: u8 = 10;
const EXIT_DATA: u8 = 20;
const EXIT_NUMERIC: u8 = 30;
const EXIT_NONCONVERGENCE: u8 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Command {
    Simulate,
    Fit,
    Check,
    Diagnose,
}

/// Simulation, estimation, and stability certification for nonlinear
/// AR-ARCH time series models.
#[derive(Debug, Parser)]
#[command(name = "ararch", version)]
struct Cli {
    /// Workflow to run.
    #[arg(long, value_enum)]
    command: Command,

    /// Key-value configuration file (flat keys with dotted sections).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Input CSV (date,value with a header row) for fit/diagnose.
    #[arg(long)]
    input: Option<PathBuf>,

    /// Output directory (created if absent). Overridable via ARARCH_OUT.
    #[arg(long, default_value = "ararch-out")]
    out: PathBuf,

    /// RNG seed. Overridable via ARARCH_SEED.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Print progress notes to stderr.
    #[arg(long, short)]
    verbose: bool,
}

enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
    NonConvergence(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Numeric(m)
            | CliError::NonConvergence(m) => m,
        }
    }
}

fn classify(err: ararch::Error) -> CliError {
    use ararch::Error::*;
    match err {
        InvalidArgument(m) | InvalidParameter(m) => CliError::Config(m),
        DimensionMismatch(m) | DegenerateInput(m) | InsufficientData(m) => CliError::Data(m),
        DivergentMoment(m) | QuadratureFailed(m) | Numeric(m) => CliError::Numeric(m),
        Explosion { index } => {
            CliError::Numeric(format!("simulated path exploded at step {index}"))
        }
        NonConvergence(m) => CliError::NonConvergence(m),
    }
}

fn main() -> ExitCode {
    let mut cli = Cli::parse();
    if let Ok(seed) = std::env::var("ARARCH_SEED") {
        match seed.parse() {
            Ok(s) => cli.seed = s,
            Err(_) => {
                eprintln!("error(config): ARARCH_SEED is not an integer: {seed}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    if let Ok(dir) = std::env::var("ARARCH_OUT") {
        cli.out = PathBuf::from(dir);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Config(_) => "config",
                CliError::Data(_) => "data",
                CliError::Numeric(_) => "numeric",
                CliError::NonConvergence(_) => "non-convergence",
            };
            eprintln!("error({kind}): {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::from_file(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => Config::empty(),
    };
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Config(format!("cannot create output dir: {e}")))?;

    write_metadata(cli, &config)?;

    match cli.command {
        Command::Simulate => run_simulate(cli, &config),
        Command::Fit => run_fit(cli, &config),
        Command::Check => run_check(cli, &config),
        Command::Diagnose => run_diagnose(cli, &config),
    }
}

fn write_metadata(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let meta = serde_json::json!({
        "tool": "ararch",
        "version": env!("CARGO_PKG_VERSION"),
        "command": format!("{:?}", cli.command).to_lowercase(),
        "seed": cli.seed,
        "input": cli.input.as_ref().map(|p| p.display().to_string()),
        "config": config.echo(),
    });
    write_file(
        &cli.out.join("run_metadata.json"),
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Read a two-column date,value CSV with a header row. Rows whose value is
/// "." or empty (the missing-data convention of common data providers) are
/// dropped and counted.
fn ingest_csv(path: &Path) -> Result<(Vec<f64>, usize), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut dropped = 0usize;
    for (lineno, line) in raw.lines().enumerate() {
        if lineno == 0 {
            continue; // header
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let value_field = match (fields.next(), fields.next()) {
            (Some(_), Some(v)) => v.trim(),
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected at least two comma-separated columns",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        if value_field.is_empty() || value_field == "." {
            dropped += 1;
            continue;
        }
        match value_field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) => {
                return Err(CliError::Data(format!(
                    "{}:{}: cannot parse value {value_field:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok((values, dropped))
}

fn run_simulate(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let model = config.model().map_err(CliError::Config)?;
    let n = config.usize_or("sim.n", 1000).map_err(CliError::Config)?;
    let burn_in = config
        .usize_or("sim.burn_in", 1000)
        .map_err(CliError::Config)?;
    // Optional explicit initial state: `sim.initial` gives the p+q lagged
    // observations (newest first); squared-error lags default to exact
    // reconstruction from those observations unless `sim.initial_e2`
    // supplies them directly.
    let initial = config.initial_state(&model).map_err(CliError::Config)?;
    let path =
        simulate(&model, n, burn_in, initial.as_ref(), cli.seed).map_err(classify)?;
    write_file(&cli.out.join("path.csv"), &path.to_csv())?;
    if cli.verbose {
        eprintln!("simulated {n} observations after {burn_in} burn-in steps");
    }
    println!(
        "simulate: n={n} burn_in={burn_in} seed={} -> {}",
        cli.seed,
        cli.out.join("path.csv").display()
    );
    Ok(())
}

fn load_series(cli: &Cli, min_len: usize) -> Result<Vec<f64>, CliError> {
    let input = cli
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("--input is required for this command".into()))?;
    let (series, dropped) = ingest_csv(input)?;
    if dropped > 0 {
        eprintln!("note: dropped {dropped} rows with missing values");
    }
    if series.len() < min_len {
        return Err(CliError::Data(format!(
            "insufficient data: {} usable rows, need at least {min_len}",
            series.len()
        )));
    }
    Ok(series)
}

fn run_fit(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let q = config.usize_or("fit.q", 3).map_err(CliError::Config)?;
    let series = load_series(cli, q + 3)?;
    let mut spec = FitSpec::new(config.fit_template(&series, q).map_err(CliError::Config)?);
    if let Some(v) = config.maybe_usize("fit.nm_max_iter").map_err(CliError::Config)? {
        spec.nm_max_iter = v;
    }
    if let Some(v) = config.maybe_usize("fit.bfgs_max_iter").map_err(CliError::Config)? {
        spec.bfgs_max_iter = v;
    }

    let result = fit(&series, &spec).map_err(classify)?;
    write_file(&cli.out.join("fit.json"), &result.to_json())?;

    let mut resid_csv = String::from("t,residual,sigma,fitted_mean\n");
    for i in 0..result.residuals.len() {
        resid_csv.push_str(&format!(
            "{},{},{},{}\n",
            i + 1 + result.conditioned,
            result.residuals[i],
            result.sigma[i],
            result.fitted_mean[i]
        ));
    }
    write_file(&cli.out.join("residuals.csv"), &resid_csv)?;

    let diag = residual_diagnostics(&result).map_err(classify)?;
    write_file(
        &cli.out.join("acf_residuals.csv"),
        &diag.acf_residuals.to_csv(),
    )?;
    write_file(
        &cli.out.join("acf_squared_residuals.csv"),
        &diag.acf_squared_residuals.to_csv(),
    )?;
    write_file(&cli.out.join("histogram.csv"), &diag.histogram_csv())?;
    write_file(&cli.out.join("density_curve.csv"), &diag.density_csv())?;
    write_file(&cli.out.join("qq.csv"), &diag.qq_csv())?;

    for (i, name) in result.names.iter().enumerate() {
        println!(
            "fit: {name} = {:.6} (se {:.6})",
            result.estimates[i], result.standard_errors[i]
        );
    }
    println!("fit: loglik = {:.4}", result.loglik);

    if !result.convergence.converged {
        return Err(CliError::NonConvergence(format!(
            "optimizer: {} (partial results written to {})",
            result.convergence.message,
            cli.out.display()
        )));
    }
    println!("fit: converged in {} iterations", result.convergence.iterations);
    Ok(())
}

fn run_check(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let model = config.model().map_err(CliError::Config)?;
    let params = config.drift_params(&model).map_err(CliError::Config)?;
    let mut opts = ErgodicityOptions {
        seed: cli.seed,
        ..Default::default()
    };
    if let Some(v) = config.maybe_usize("check.draws").map_err(CliError::Config)? {
        opts.draws = v;
    }
    if let Some(v) = config.maybe_f64("check.z1_max").map_err(CliError::Config)? {
        opts.z1_max = Some(v);
    }
    if let Some(v) = config.maybe_usize("check.z1_points").map_err(CliError::Config)? {
        opts.z1_points = v;
    }
    if let Some(v) = config
        .maybe_f64("check.petite_bound")
        .map_err(CliError::Config)?
    {
        opts.petite_bound = Some(v);
    }

    let report = ergodicity_report(&model, &params, &opts).map_err(classify)?;
    write_file(&cli.out.join("ergodicity_report.json"), &report.to_json())?;
    if let Some(drift) = &report.drift {
        write_file(&cli.out.join("drift_report.json"), &drift.to_json())?;
        write_file(&cli.out.join("margins.csv"), &drift.margins_csv())?;
    }
    println!(
        "check: verdict={} rate_exponent={} moment_order={}",
        report.verdict, report.rate_exponent, report.moment_order
    );
    if report.verdict.starts_with("failed:") {
        return Err(CliError::Numeric(format!(
            "stability check failed: {}",
            report.verdict
        )));
    }
    Ok(())
}

fn run_diagnose(cli: &Cli, config: &Config) -> Result<(), CliError> {
    let _ = config;
    let series = load_series(cli, 32)?;
    let max_lag = 100.min(series.len() - 1);
    let series_acf = acf(&series, max_lag).map_err(classify)?;
    write_file(&cli.out.join("acf.csv"), &series_acf.to_csv())?;
    let squared: Vec<f64> = series.iter().map(|v| v * v).collect();
    let acf_sq = acf(&squared, max_lag).map_err(classify)?;
    write_file(&cli.out.join("acf_squared.csv"), &acf_sq.to_csv())?;

    // Histogram and normal-reference Q-Q of the standardized series.
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let sd = (series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd == 0.0 {
        return Err(CliError::Data("series is constant".into()));
    }
    let std_series: Vec<f64> = series.iter().map(|v| (v - mean) / sd).collect();
    let mut sorted = std_series.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let normal = ararch::dist::Innovation::new(ararch::dist::InnovationSpec::UnitNormal)
        .map_err(classify)?;
    let mut qq = String::from("theoretical,empirical\n");
    for (i, v) in sorted.iter().enumerate() {
        qq.push_str(&format!(
            "{},{}\n",
            normal.quantile((i as f64 + 0.5) / n as f64),
            v
        ));
    }
    write_file(&cli.out.join("qq.csv"), &qq)?;

    let quant = |p: f64| sorted[((n - 1) as f64 * p) as usize];
    let iqr = quant(0.75) - quant(0.25);
    let width = if iqr > 0.0 {
        2.0 * iqr / (n as f64).cbrt()
    } else {
        0.5
    };
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, 400);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &std_series {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let mut hist = String::from("lo,hi,count,density\n");
    for (i, c) in counts.iter().enumerate() {
        hist.push_str(&format!(
            "{},{},{},{}\n",
            lo + i as f64 * width,
            lo + (i + 1) as f64 * width,
            c,
            *c as f64 / (n as f64 * width)
        ));
    }
    write_file(&cli.out.join("histogram.csv"), &hist)?;

    println!(
        "diagnose: n={} acf_band=±{:.4} outside_band={}",
        n,
        series_acf.band,
        series_acf.outside_band()
    );
    Ok(())
}

//! `plcsynth` command-line front end: fit, generate, metrics, validate.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use plcsynth::data_model::{load_ensemble, save_ensemble, Ensemble, EnsembleKind};
use plcsynth::estimation::SamplingMode;
use plcsynth::generator::{fit_mimo, fit_siso, generate_mimo, generate_siso, load_model, save_model, ChannelModel};
use plcsynth::metrics::{compute_metrics, MetricsReport, NoiseModel, TxSpec};
use plcsynth::validation::{validate, Thresholds, QUANTILE_LEVELS};

#[derive(Parser)]
#[command(name = "plcsynth", version, about = "Fit and synthesize power-line channel ensembles")]
struct Cli {
    /// Worker threads for per-realization work (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a statistical model to a measured ensemble.
    Fit(FitArgs),
    /// Draw realizations from a fitted model.
    Generate(GenerateArgs),
    /// Compute ACG, RMS delay spread, coherence bandwidth and capacity.
    Metrics(MetricsArgs),
    /// Compare a reference ensemble with a simulated one.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Ensemble manifest (JSON) with its c128le payload alongside.
    #[arg(long)]
    input: PathBuf,
    /// Model file to write (JSON); f64 sidecars are written next to it.
    #[arg(long)]
    output: PathBuf,
    /// Keep every F-th frequency sample before fitting (1 = no decimation).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    decimate: u64,
    /// Phase-slope sampling for MIMO models; ignored for SISO.
    #[arg(long, value_name = "empirical|gaussian")]
    slope_mode: Option<SamplingMode>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Model file written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// Ensemble manifest to write (JSON); the payload goes to <stem>.bin.
    #[arg(long)]
    output: PathBuf,
    /// Number of realizations (≥ 1).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Master seed (unsigned 64-bit). Identical (model, n, seed) gives identical output.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the model's phase-slope sampling (MIMO only).
    #[arg(long, value_name = "empirical|gaussian")]
    slope_mode: Option<SamplingMode>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Ensemble manifest (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Output directory; receives metrics.json and metrics.csv.
    #[arg(long)]
    output: PathBuf,
    /// Transmit PSD file, dBm/Hz (default: flat -55 dBm/Hz).
    #[arg(long)]
    tx: Option<PathBuf>,
    /// Noise model file, PSD in dBm/Hz per receive mode. Required for MIMO input;
    /// SISO defaults to white -110 dBm/Hz.
    #[arg(long)]
    noise: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Reference ensemble, then simulated ensemble (pass the flag twice).
    #[arg(long, num_args = 1, required = true, value_name = "PATH")]
    input: Vec<PathBuf>,
    /// Output directory; receives report.json, report.txt, ccdf.csv, covariance.csv.
    #[arg(long)]
    output: PathBuf,
    /// Transmit PSD file, dBm/Hz (default: flat -55 dBm/Hz).
    #[arg(long)]
    tx: Option<PathBuf>,
    /// Noise model file, dBm/Hz. Required for MIMO input.
    #[arg(long)]
    noise: Option<PathBuf>,
    /// Threshold file (JSON). Default: ACG within 2 dB, RMS-DS within 0.05 us.
    #[arg(long)]
    thresholds: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(plcsynth::Error),
    Thresholds,
}

impl From<plcsynth::Error> for Failure {
    fn from(e: plcsynth::Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use plcsynth::Error as E;
        match self {
            Failure::Thresholds => 1,
            Failure::Usage(_) | Failure::Lib(E::InvalidArgument(_)) => 2,
            Failure::Lib(E::Io { .. }) => 3,
            Failure::Lib(
                E::NotSymmetric(_)
                | E::IndefiniteMatrix { .. }
                | E::InvalidCorrelation(_)
                | E::SingularNoise { .. }
                | E::DegenerateGrid(_),
            ) => 5,
            Failure::Lib(_) => 4,
        }
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn opt_path(p: &Option<PathBuf>) -> Value {
    p.as_deref().map_or(Value::Null, |p| Value::String(path_str(p)))
}

fn echo(command: &str, fields: Value) -> Value {
    let mut v = json!({ "tool": "plcsynth", "version": env!("CARGO_PKG_VERSION"), "command": command });
    if let (Value::Object(base), Value::Object(extra)) = (&mut v, fields) {
        base.extend(extra);
    }
    v
}

fn fit(args: &FitArgs) -> Result<(), Failure> {
    let ens = load_ensemble(&args.input)?;
    let factor = args.decimate as usize;
    let mut model = match ens {
        Ensemble::Siso(e) => ChannelModel::Siso(fit_siso(&e.decimate(factor)?)?),
        Ensemble::Mimo(m) => {
            let mut model = fit_mimo(&m.decimate(factor)?)?;
            if let Some(mode) = args.slope_mode {
                model.slope_dist = model.slope_dist.with_mode(mode)?;
            }
            ChannelModel::Mimo(model)
        }
    };
    model.fit_meta_mut().decimation = factor;
    let config =
        echo("fit", json!({ "input": path_str(&args.input), "decimate": factor, "slope_mode": args.slope_mode }));
    save_model(&model, &args.output, Some(config))?;

    let g = model.grid();
    match &model {
        ChannelModel::Siso(_) => println!("siso model: M = {}, N_M = {}", g.len(), model.fit_meta().source_n_meas),
        ChannelModel::Mimo(m) => println!(
            "mimo model: {}x{} modes, M = {}, N_M = {}, slope mean {:.6e} rad/Hz, std {:.6e} rad/Hz",
            m.n_r(),
            m.n_t(),
            g.len(),
            m.fit_meta.source_n_meas,
            m.slope_dist.mean(),
            m.slope_dist.std()
        ),
    }
    println!("band {:.6} - {:.6} MHz, decimation {factor}", g.f_start() * 1e-6, g.f_end() * 1e-6);
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let model = load_model(&args.model)?;
    let n = args.n as usize;
    let ens = match model {
        ChannelModel::Siso(m) => Ensemble::Siso(generate_siso(&m, n, args.seed)?),
        ChannelModel::Mimo(mut m) => {
            if let Some(mode) = args.slope_mode {
                m.slope_dist = m.slope_dist.with_mode(mode)?;
            }
            Ensemble::Mimo(generate_mimo(&m, n, args.seed)?)
        }
    };
    let config = echo(
        "generate",
        json!({ "model": path_str(&args.model), "n": n, "seed": args.seed, "slope_mode": args.slope_mode }),
    );
    save_ensemble(&ens, &args.output, Some(config))?;
    println!("wrote {n} realizations to {}", args.output.display());
    Ok(())
}

fn load_tx(path: &Option<PathBuf>) -> Result<TxSpec, Failure> {
    Ok(match path {
        Some(p) => TxSpec::load(p)?,
        None => TxSpec::default(),
    })
}

fn load_noise(path: &Option<PathBuf>, ensembles: &[&Ensemble]) -> Result<NoiseModel, Failure> {
    match path {
        Some(p) => Ok(NoiseModel::load(p)?),
        None if ensembles.iter().any(|e| e.kind() == EnsembleKind::Mimo) => {
            Err(Failure::Usage("MIMO input needs a noise model: pass --noise <file>".into()))
        }
        None => Ok(NoiseModel::default_for(1)),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|source| Failure::Lib(plcsynth::Error::Io { path: dir.to_path_buf(), source }))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|source| Failure::Lib(plcsynth::Error::Io { path: path.to_path_buf(), source }))
}

#[derive(Serialize)]
struct MetricsOutput<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    config: Value,
}

fn metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let ens = load_ensemble(&args.input)?;
    let tx = load_tx(&args.tx)?;
    let noise = load_noise(&args.noise, &[&ens])?;
    let report = compute_metrics(&ens.to_mimo(), &tx, &noise)?;
    let config = echo(
        "metrics",
        json!({ "input": path_str(&args.input), "tx": opt_path(&args.tx), "noise": opt_path(&args.noise) }),
    );
    create_dir(&args.output)?;
    let out = MetricsOutput { report: &report, config };
    let json = serde_json::to_string_pretty(&out).expect("metrics serialize");
    write_text(&args.output.join("metrics.json"), &json)?;
    write_text(&args.output.join("metrics.csv"), &report.to_csv())?;
    let a = &report.averages;
    println!(
        "ACG {:.2} dB, RMS-DS {:.4} us, CB(0.9) {:.2} kHz, C {:.4} Gbps over {} realizations",
        a.acg_db,
        a.rms_ds_s * 1e6,
        a.cb_hz * 1e-3,
        a.capacity_bps * 1e-9,
        report.acg_db.len()
    );
    Ok(())
}

fn validate_cmd(args: &ValidateArgs) -> Result<(), Failure> {
    let [ref_path, sim_path] = args.input.as_slice() else {
        return Err(Failure::Usage(format!(
            "validate needs exactly two --input paths (reference, simulated), got {}",
            args.input.len()
        )));
    };
    let reference = load_ensemble(ref_path)?;
    let simulated = load_ensemble(sim_path)?;
    let tx = load_tx(&args.tx)?;
    let noise = load_noise(&args.noise, &[&reference, &simulated])?;
    let thresholds = match &args.thresholds {
        Some(p) => Thresholds::load(p)?,
        None => Thresholds::default(),
    };
    let config = echo(
        "validate",
        json!({
            "reference": path_str(ref_path),
            "simulated": path_str(sim_path),
            "tx": opt_path(&args.tx),
            "noise": opt_path(&args.noise),
            "thresholds_file": opt_path(&args.thresholds),
            "thresholds": thresholds,
            "reference_provenance": provenance_of(ref_path),
            "simulated_provenance": provenance_of(sim_path),
            "ccdf_horizontal_method": format!(
                "max |q_ref(p) - q_sim(p)| over p = 0.01..0.99 ({QUANTILE_LEVELS} levels), linear interpolation at (n-1)p"
            ),
        }),
    );
    let (report, inputs) = validate(&reference, &simulated, &tx, &noise, &thresholds, config)?;
    report.write(&inputs, &args.output)?;
    print!("{}", report.to_text());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Thresholds)
    }
}

/// Seeds and model paths recorded by `generate`, if any.
fn provenance_of(path: &Path) -> Value {
    plcsynth::data_model::read_manifest(path).ok().and_then(|m| m.provenance).unwrap_or(Value::Null)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Generate(a) => generate(a),
        Command::Metrics(a) => metrics(a),
        Command::Validate(a) => validate_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::Thresholds => eprintln!("validation thresholds violated"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}

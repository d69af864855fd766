//! `psc` command implementations: `simulate`, `fit`, `validate`, `sweep`.
//!
//! Every command writes its outputs into `--out`, together with
//! `params.snapshot` (the fully resolved parameter set, re-loadable with
//! `--params`) and `manifest.json`. CSV outputs are byte-deterministic:
//! 12 significant digits in scientific notation and `\n` line endings.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use psc_core::electrochem::{polarization_csv, power_csv};
use psc_core::estimation::{segment_regimes, DEFAULT_K_BOUNDS};
use psc_core::format::sci;
use psc_core::params::PARAMETER_KEYS;
use psc_core::{
    fit_dataset, load_parameters, polarization_sweep, power_curve, run_sweep_parallel, validate,
    ExperimentalDataset, FittedRateProfile, KSource, ModelParameters, SweepParameter, SweepSpec,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "psc", version, about = "Micro photosynthetic power cell model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Polarization and power curves over a list of loads.
    Simulate(SimulateArgs),
    /// Fit the rate constant K per training load.
    Fit(FitArgs),
    /// Predict held-out loads from a fitted K profile.
    Validate(ValidateArgs),
    /// Polarization curves under variation of one design parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Parameter file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds of culture growth before each operating point.
    #[arg(long, default_value_t = 0.0)]
    pub dwell: f64,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct KArgs {
    /// Constant rate constant K, 1/m².
    #[arg(long)]
    pub k: Option<f64>,
    /// K profile file (`r_ext_ohm,k_per_m2`) produced by `fit`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Loads in Ω: `log:start:stop:count` or a comma-separated list.
    #[arg(long)]
    pub loads: String,
    #[command(flatten)]
    pub k: KArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset CSV `r_ext_ohm,v_volt,i_amp[,split]`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K_BOUNDS.0)]
    pub k_min: f64,
    #[arg(long, default_value_t = DEFAULT_K_BOUNDS.1)]
    pub k_max: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// One of A_E, L0, x0, A_s.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values of the swept parameter.
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value = "log:100:1e6:32")]
    pub loads: String,
    /// Constant K; when neither this nor `--profile` is given, K = 1e-4.
    #[arg(long, conflicts_with = "profile")]
    pub k: Option<f64>,
    /// K profile file produced by `fit`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Worker threads for the per-value curves.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<psc_core::Error> for CliError {
    fn from(e: psc_core::Error) -> Self {
        Self {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            },
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// What a command reports back besides its files.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub train_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    args: Vec<String>,
    parameters: serde_json::Map<String, serde_json::Value>,
    params_snapshot: &'static str,
    dwell_s: f64,
    k_source: Option<String>,
    inputs: Vec<InputDigest>,
    outputs: &'a [String],
    duration_s: f64,
}

const SNAPSHOT: &str = "params.snapshot";
const MANIFEST: &str = "manifest.json";

/// Parses argv (including the program name) and runs the command. Errors go
/// to stderr; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let recorded: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(&cli.command, &recorded) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(r) = outcome.train_rmse {
                println!("train RMSE: {}", sci(r));
            }
            if let Some(r) = outcome.test_rmse {
                println!("test RMSE: {}", sci(r));
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(command: &Command, argv: &[String]) -> CliResult<Outcome> {
    let started = Instant::now();
    let (name, common) = match command {
        Command::Simulate(a) => ("simulate", &a.common),
        Command::Fit(a) => ("fit", &a.common),
        Command::Validate(a) => ("validate", &a.common),
        Command::Sweep(a) => ("sweep", &a.common),
    };
    if !(common.dwell >= 0.0 && common.dwell.is_finite()) {
        return Err(CliError::input(format!(
            "--dwell {} must be non-negative",
            common.dwell
        )));
    }
    let params = match &common.params {
        Some(path) => load_parameters(path).map_err(|e| match e {
            psc_core::Error::Io { .. } => CliError::input(format!(
                "cannot read parameter file {}: {e}",
                path.display()
            )),
            other => CliError::input(format!("{}: {other}", path.display())),
        })?,
        None => ModelParameters::default(),
    };
    fs::create_dir_all(&common.out).map_err(|e| {
        CliError::input(format!(
            "cannot create output directory {}: {e}",
            common.out.display()
        ))
    })?;

    let mut inputs = Vec::new();
    if let Some(path) = &common.params {
        inputs.push(path.clone());
    }
    let (mut outcome, k_source) = match command {
        Command::Simulate(a) => cmd_simulate(a, &params, &mut inputs)?,
        Command::Fit(a) => (cmd_fit(a, &params, &mut inputs)?, None),
        Command::Validate(a) => (cmd_validate(a, &params, &mut inputs)?, None),
        Command::Sweep(a) => cmd_sweep(a, &params, &mut inputs)?,
    };

    write(&common.out, SNAPSHOT, &params.to_file_string())?;
    outcome.outputs.push(SNAPSHOT.to_string());

    let parameters = PARAMETER_KEYS
        .iter()
        .map(|&key| {
            let v = params.get(key).expect("canonical key");
            (key.to_string(), serde_json::json!(v))
        })
        .collect();
    let inputs = inputs
        .iter()
        .map(|p| {
            let bytes = fs::read(p)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        command: name,
        args: argv.to_vec(),
        parameters,
        params_snapshot: SNAPSHOT,
        dwell_s: common.dwell,
        k_source,
        inputs,
        outputs: &outcome.outputs,
        duration_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&common.out, MANIFEST, &(json + "\n"))?;
    Ok(outcome)
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// `log:start:stop:count` (geometric grid, endpoints included) or a
/// comma-separated list, optionally in brackets.
pub fn parse_loads(spec: &str) -> CliResult<Vec<f64>> {
    let spec = spec.trim();
    let loads = if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::input(format!(
                "load grid `{spec}` must be `log:start:stop:count`"
            )));
        }
        let start = parse_number(parts[0], "load grid start")?;
        let stop = parse_number(parts[1], "load grid stop")?;
        let count: usize = parts[2].trim().parse().map_err(|_| {
            CliError::input(format!("load grid count `{}` is not an integer", parts[2]))
        })?;
        if count == 0 || !(start > 0.0 && stop > 0.0) {
            return Err(CliError::input(format!(
                "load grid `{spec}` needs positive endpoints and count >= 1"
            )));
        }
        if count == 1 {
            vec![start]
        } else {
            let ratio = (stop / start).ln();
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        stop
                    } else {
                        start * (ratio * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    } else {
        let inner = spec.trim_start_matches('[').trim_end_matches(']');
        parse_list(inner, "load")?
    };
    if let Some(bad) = loads.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(CliError::input(format!("load {bad} must be positive")));
    }
    Ok(loads)
}

fn parse_number(s: &str, what: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::input(format!("{what} `{s}` is not a number")))
}

fn parse_list(s: &str, what: &str) -> CliResult<Vec<f64>> {
    let values = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_number(t, what))
        .collect::<CliResult<Vec<_>>>()?;
    if values.is_empty() {
        return Err(CliError::input(format!("at least one {what} is required")));
    }
    Ok(values)
}

fn resolve_k(k: &KArgs, inputs: &mut Vec<PathBuf>) -> CliResult<KSource> {
    match (k.k, &k.profile) {
        (Some(value), None) => {
            if !(value.is_finite() && value >= 0.0) {
                return Err(CliError::input(format!("--k {value} must be non-negative")));
            }
            Ok(KSource::Constant(value))
        }
        (None, Some(path)) => {
            let profile = FittedRateProfile::load(path)
                .map_err(|e| CliError::input(format!("profile {}: {e}", path.display())))?;
            inputs.push(path.clone());
            Ok(KSource::Profile(profile))
        }
        _ => Err(CliError::input(
            "exactly one of --k or --profile is required",
        )),
    }
}

fn range_warnings(source: &KSource, loads: &[f64]) -> Vec<String> {
    let KSource::Profile(profile) = source else {
        return Vec::new();
    };
    let (lo, hi) = profile.load_range();
    let outside = loads.iter().filter(|&&r| r < lo || r > hi).count();
    if outside == 0 {
        Vec::new()
    } else {
        vec![format!(
            "{outside} load(s) outside the profile range [{}, {}] ohm use the nearest end K",
            sci(lo),
            sci(hi)
        )]
    }
}

pub fn cmd_simulate(
    args: &SimulateArgs,
    params: &ModelParameters,
    inputs: &mut Vec<PathBuf>,
) -> CliResult<(Outcome, Option<String>)> {
    let loads = parse_loads(&args.loads)?;
    let k_source = resolve_k(&args.k, inputs)?;
    let points = polarization_sweep(&loads, &k_source, params, args.common.dwell)?;
    let out = &args.common.out;
    write(out, "polarization.csv", &polarization_csv(&points))?;
    write(out, "power.csv", &power_csv(&power_curve(&points, params)))?;
    let outcome = Outcome {
        outputs: vec!["polarization.csv".into(), "power.csv".into()],
        warnings: range_warnings(&k_source, &loads),
        ..Outcome::default()
    };
    Ok((outcome, Some(k_source.describe())))
}

fn load_dataset(path: &Path, inputs: &mut Vec<PathBuf>) -> CliResult<ExperimentalDataset> {
    let data = ExperimentalDataset::load(path)
        .map_err(|e| CliError::input(format!("dataset {}: {e}", path.display())))?;
    inputs.push(path.to_path_buf());
    Ok(data)
}

pub fn cmd_fit(
    args: &FitArgs,
    params: &ModelParameters,
    inputs: &mut Vec<PathBuf>,
) -> CliResult<Outcome> {
    let data = load_dataset(&args.data, inputs)?;
    let report = fit_dataset(&data, params, args.common.dwell, (args.k_min, args.k_max))?;
    let out = &args.common.out;
    write(out, "fit_report.csv", &report.to_csv())?;
    write(out, "k_profile.csv", &report.profile.to_csv())?;

    let regimes = if report.profile.entries.len() >= 4 {
        match segment_regimes(&report.profile) {
            Ok(s) => format!(
                "breakpoint_r_ext, slope_low, slope_high\n{}, {}, {}\n",
                sci(s.breakpoint_r_ext),
                sci(s.slope_low),
                sci(s.slope_high)
            ),
            Err(e) => format!("breakpoint_r_ext, slope_low, slope_high\n# not available: {e}\n"),
        }
    } else {
        "breakpoint_r_ext, slope_low, slope_high\n# not available: fewer than 4 fitted loads\n"
            .to_string()
    };
    write(out, "regimes.txt", &regimes)?;
    print!("{regimes}");

    Ok(Outcome {
        outputs: vec![
            "fit_report.csv".into(),
            "k_profile.csv".into(),
            "regimes.txt".into(),
        ],
        train_rmse: report.train_rmse,
        ..Outcome::default()
    })
}

pub fn cmd_validate(
    args: &ValidateArgs,
    params: &ModelParameters,
    inputs: &mut Vec<PathBuf>,
) -> CliResult<Outcome> {
    let data = load_dataset(&args.data, inputs)?;
    let k_args = KArgs {
        k: None,
        profile: Some(args.profile.clone()),
    };
    let source = resolve_k(&k_args, inputs)?;
    let KSource::Profile(profile) = &source else {
        unreachable!("profile argument resolves to a profile");
    };
    let report = validate(&data, profile, params, args.common.dwell)?;
    let test_loads: Vec<f64> = report.residuals.iter().map(|r| r.r_ext).collect();
    write(
        &args.common.out,
        "predictions.csv",
        &report.predictions_csv(),
    )?;
    Ok(Outcome {
        outputs: vec!["predictions.csv".into()],
        test_rmse: report.test_rmse,
        warnings: range_warnings(&source, &test_loads),
        ..Outcome::default()
    })
}

/// K used by `sweep` when no K source is given.
pub const DEFAULT_SWEEP_K: f64 = 1e-4;

/// File name of one sweep curve.
pub fn sweep_file_name(parameter: SweepParameter, value: f64) -> String {
    format!("sweep_{}_{}.csv", parameter.key(), value)
}

pub fn cmd_sweep(
    args: &SweepArgs,
    params: &ModelParameters,
    inputs: &mut Vec<PathBuf>,
) -> CliResult<(Outcome, Option<String>)> {
    let parameter: SweepParameter = args.param.parse()?;
    let values = parse_list(&args.values, "value")?;
    let loads = parse_loads(&args.loads)?;
    let k_args = KArgs {
        k: args.k.or(if args.profile.is_none() {
            Some(DEFAULT_SWEEP_K)
        } else {
            None
        }),
        profile: args.profile.clone(),
    };
    let k_source = resolve_k(&k_args, inputs)?;
    let mut description = k_source.describe();
    if args.k.is_none() && args.profile.is_none() {
        description.push_str(" (default)");
    }
    let warnings = range_warnings(&k_source, &loads);
    let spec = SweepSpec {
        parameter,
        values,
        loads,
        k_source,
    };
    let curves = run_sweep_parallel(&spec, params, args.common.dwell, args.workers)?;
    let mut outputs = Vec::with_capacity(curves.len());
    for (value, points) in &curves {
        let name = sweep_file_name(parameter, *value);
        write(&args.common.out, &name, &polarization_csv(points))?;
        outputs.push(name);
    }
    Ok((
        Outcome {
            outputs,
            warnings,
            ..Outcome::default()
        },
        Some(description),
    ))
}

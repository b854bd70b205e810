//! `cvqkd`: key-rate sweeps, single points, Wigner maps and self checks.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvqkd::optimizer::{distance_range, optimize_receiver, sweep};
use cvqkd::phase_space::{reference_state, symmetry_report, vacuum_map, wigner_map, WignerGrid};
use cvqkd::report::{self, Format};
use cvqkd::{ReceiverKind, ReceiverSpec};
use serde_json::json;

use config::{CommonArgs, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl From<cvqkd::Error> for CliError {
    fn from(e: cvqkd::Error) -> Self {
        match e {
            cvqkd::Error::InvalidParameter(m) => CliError::Config(m),
            cvqkd::Error::Output(m) => CliError::Io(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cvqkd", version, about = "Key rates of QPSK CV-QKD with discrimination receivers")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimized key rates over a distance range, one row per receiver.
    Sweep {
        #[arg(long, env = "CVQKD_D_MIN")]
        d_min: Option<f64>,
        #[arg(long, env = "CVQKD_D_MAX")]
        d_max: Option<f64>,
        #[arg(long, env = "CVQKD_D_STEP")]
        d_step: Option<f64>,
        /// pgm, kor, het or ff:N; repeatable.
        #[arg(long = "receiver", env = "CVQKD_RECEIVER", value_delimiter = ',')]
        receivers: Vec<ReceiverKind>,
        /// Feed-forward copy counts, each adding an ff:N receiver; repeatable.
        #[arg(long = "copies", env = "CVQKD_COPIES", value_delimiter = ',')]
        copies: Vec<usize>,
    },
    /// One optimized point as JSON.
    Point {
        #[arg(long, env = "CVQKD_RECEIVER")]
        receiver: Option<ReceiverKind>,
        #[arg(long, env = "CVQKD_DISTANCE")]
        distance: Option<f64>,
    },
    /// Wigner map of the reference measurement vector.
    Wigner {
        /// pgm or kor (phases optimized at the given distance).
        #[arg(long, env = "CVQKD_RECEIVER")]
        receiver: Option<ReceiverKind>,
        #[arg(long, env = "CVQKD_DISTANCE")]
        distance: Option<f64>,
        #[arg(long, env = "CVQKD_ALPHA2")]
        alpha2: Option<f64>,
        /// Scale the state to unit norm before mapping.
        #[arg(long)]
        normalize: bool,
        /// Emit the closed-form vacuum map instead.
        #[arg(long)]
        vacuum: bool,
        #[arg(long, default_value_t = cvqkd::phase_space::DEFAULT_NODES)]
        nodes: usize,
        #[arg(long, default_value_t = cvqkd::phase_space::DEFAULT_EXTENT)]
        extent: f64,
    },
    /// Fast invariant checks.
    Selftest,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Io(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_sidecar(path: Option<&Path>, value: &serde_json::Value) -> Result<(), CliError> {
    if let Some(p) = path {
        let mut name = p.as_os_str().to_owned();
        name.push(".meta.json");
        let f = File::create(&name)?;
        report::write_json(value, BufWriter::new(f))?;
    }
    Ok(())
}

fn cmd_sweep(
    cfg: &RunConfig,
    d_min: Option<f64>,
    d_max: Option<f64>,
    d_step: Option<f64>,
    mut receivers: Vec<ReceiverKind>,
    copies: Vec<usize>,
) -> Result<(), CliError> {
    let d_min = d_min.or(cfg.file_f64("d_min")?).unwrap_or(0.0);
    let d_max = d_max.or(cfg.file_f64("d_max")?).unwrap_or(150.0);
    let d_step = d_step.or(cfg.file_f64("d_step")?).unwrap_or(2.0);
    if receivers.is_empty() && copies.is_empty() {
        receivers = cfg.file_receivers()?.unwrap_or_default();
    }
    let copies = if copies.is_empty() {
        cfg.file_copies()?.unwrap_or_default()
    } else {
        copies
    };
    for n in copies {
        receivers.push(ReceiverKind::FeedForward(n));
    }
    if receivers.is_empty() {
        receivers = vec![ReceiverKind::Pgm, ReceiverKind::Kor, ReceiverKind::Heterodyne];
    }
    let distances = distance_range(d_min, d_max, d_step)?;
    let result = sweep(&distances, &receivers, cfg.beta, cfg.kappa, &cfg.budget)?;
    let mut out = open_output(cfg.out.as_deref())?;
    report::write_sweep(&result, &cfg.budget, cfg.format, &mut out)?;
    out.flush()?;
    if cfg.format == Format::Csv {
        write_sidecar(cfg.out.as_deref(), &report::sweep_metadata(&result, &cfg.budget))?;
    }
    let failures: Vec<String> = result
        .failures()
        .map(|r| {
            let e = r.point.as_ref().err().map(ToString::to_string).unwrap_or_default();
            format!("d = {} km, {}: {e}", r.distance_km, r.receiver)
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{} point(s) failed:\n  {}",
            failures.len(),
            failures.join("\n  ")
        )))
    }
}

fn cmd_point(cfg: &RunConfig, receiver: Option<ReceiverKind>, distance: Option<f64>) -> Result<(), CliError> {
    let kind = match receiver {
        Some(k) => k,
        None => cfg
            .file_receivers()?
            .and_then(|r| r.first().copied())
            .unwrap_or(ReceiverKind::Kor),
    };
    let d = distance.or(cfg.file_f64("distance")?).unwrap_or(0.0);
    let t = cfg.distance(d)?;
    let mut point = optimize_receiver(kind, t, cfg.beta, &cfg.budget)?;
    point.distance_km = d;
    let het = if kind == ReceiverKind::Heterodyne {
        point.rate
    } else {
        optimize_receiver(ReceiverKind::Heterodyne, t, cfg.beta, &cfg.budget)?.rate
    };
    let ratio = (het > 0.0).then(|| point.rate / het);
    let mut v = report::point_json(&point, ratio);
    v["seed"] = json!(cfg.seed);
    let mut out = open_output(cfg.out.as_deref())?;
    report::write_json(&v, &mut out)?;
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_wigner(
    cfg: &RunConfig,
    receiver: Option<ReceiverKind>,
    distance: Option<f64>,
    alpha2: Option<f64>,
    normalize: bool,
    vacuum: bool,
    nodes: usize,
    extent: f64,
) -> Result<(), CliError> {
    let grid = WignerGrid::new(extent, nodes)?;
    let normalize = normalize || cfg.file_bool("normalize")?.unwrap_or(false);
    let d = distance.or(cfg.file_f64("distance")?).unwrap_or(30.0);
    let a2 = alpha2.or(cfg.file_f64("alpha2")?).unwrap_or(1.0);
    let kind = receiver.unwrap_or(ReceiverKind::Pgm);
    let (map, phases) = if vacuum {
        (vacuum_map(&grid), Vec::new())
    } else {
        let t = cfg.distance(d)?;
        let spec = match kind {
            ReceiverKind::Pgm => ReceiverSpec::pgm(4),
            ReceiverKind::Kor => {
                let p = optimize_receiver(ReceiverKind::Kor, t, cfg.beta, &cfg.budget)?;
                ReceiverSpec::new(p.phases)?
            }
            other => {
                return Err(CliError::Config(format!(
                    "Wigner maps are defined for pgm and kor, not {other}"
                )))
            }
        };
        let state = reference_state(&spec, a2, t)?;
        (wigner_map(&state, &grid, normalize)?, spec.phases().to_vec())
    };
    let report_ = symmetry_report(&map);
    if map.boundary_warning {
        eprintln!(
            "warning: |W| reaches {:.3e} on the grid boundary; widen --extent",
            map.boundary_max
        );
    }
    let mut meta = report::wigner_diagnostics(&map, &report_);
    meta["receiver"] = json!(if vacuum { "vacuum".to_string() } else { kind.tag() });
    meta["d"] = json!(d);
    meta["alpha2"] = json!(a2);
    meta["phases"] = json!(phases.iter().map(|&x| report::round12(x)).collect::<Vec<_>>());
    let mut out = open_output(cfg.out.as_deref())?;
    match cfg.format {
        Format::Csv => {
            report::write_wigner_csv(&map, &mut out)?;
            write_sidecar(cfg.out.as_deref(), &meta)?;
            if cfg.out.is_some() {
                eprintln!("min W = {}", report::fmt_num(map.min_value));
            }
        }
        Format::Json => {
            let mut v = report::wigner_json(&map, &report_);
            v["diagnostics"] = meta;
            report::write_json(&v, &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let checks = cvqkd::selftest::run(cfg.seed);
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{failed} self check(s) failed")))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Sweep {
            d_min,
            d_max,
            d_step,
            receivers,
            copies,
        } => cmd_sweep(&cfg, d_min, d_max, d_step, receivers, copies),
        Command::Point { receiver, distance } => cmd_point(&cfg, receiver, distance),
        Command::Wigner {
            receiver,
            distance,
            alpha2,
            normalize,
            vacuum,
            nodes,
            extent,
        } => cmd_wigner(&cfg, receiver, distance, alpha2, normalize, vacuum, nodes, extent),
        Command::Selftest => cmd_selftest(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvqkd: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Run configuration: defaults, overridden by a `key = value` file, overridden
//! by environment variables and flags (clap resolves those two).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cvqkd::optimizer::OptimizationBudget;
use cvqkd::report::Format;
use cvqkd::ReceiverKind;

use crate::CliError;

pub const DEFAULT_BETA: f64 = 0.95;

const KEYS: [&str; 14] = [
    "beta", "kappa", "d_min", "d_max", "d_step", "receivers", "copies", "seed", "budget", "out",
    "format", "distance", "alpha2", "normalize",
];

/// Values read from a configuration file, still as text.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// `key = value` lines; `#` starts a comment; keys accept `-` or `_`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", no + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", no + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("bad value for {key}: {e}")))
            })
            .transpose()
    }

    fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| CliError::Config(format!("bad value for {key}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Options shared by every command, as given on the command line or in the
/// environment.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long, env = "CVQKD_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Reconciliation efficiency.
    #[arg(long, env = "CVQKD_BETA", global = true)]
    pub beta: Option<f64>,
    /// Fibre loss in dB/km.
    #[arg(long, env = "CVQKD_KAPPA", global = true)]
    pub kappa: Option<f64>,
    /// Optimization budget: quick, standard or thorough.
    #[arg(long, env = "CVQKD_BUDGET", global = true)]
    pub budget: Option<String>,
    /// Seed for multistart jitter and Monte Carlo checks.
    #[arg(long, env = "CVQKD_SEED", global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, env = "CVQKD_OUT", global = true)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, env = "CVQKD_FORMAT", global = true)]
    pub format: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub beta: f64,
    pub kappa: f64,
    pub budget: OptimizationBudget,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub file: FileConfig,
}

fn invalid(e: cvqkd::Error) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let beta = args.beta.or(file.get("beta")?).unwrap_or(DEFAULT_BETA);
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(CliError::Config(format!("beta must lie in (0, 1], got {beta}")));
        }
        let kappa = args
            .kappa
            .or(file.get("kappa")?)
            .unwrap_or(cvqkd::constellation::DEFAULT_KAPPA_DB_PER_KM);
        if !(kappa > 0.0) {
            return Err(CliError::Config(format!("kappa must be positive, got {kappa}")));
        }
        let seed = args.seed.or(file.get("seed")?).unwrap_or(0);
        let budget_name = args
            .budget
            .clone()
            .or(file.get("budget")?)
            .unwrap_or_else(|| "standard".into());
        let budget = budget_name
            .parse::<OptimizationBudget>()
            .map_err(invalid)?
            .with_seed(seed);
        let format = args
            .format
            .clone()
            .or(file.get("format")?)
            .unwrap_or_else(|| "csv".into())
            .parse::<Format>()
            .map_err(invalid)?;
        let out = args.out.clone().or(file.get("out")?);
        Ok(Self {
            beta,
            kappa,
            budget,
            seed,
            out,
            format,
            file,
        })
    }

    pub fn file_f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.file.get(key)
    }

    pub fn file_bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        self.file.get(key)
    }

    pub fn file_receivers(&self) -> Result<Option<Vec<ReceiverKind>>, CliError> {
        self.file.get_list("receivers")
    }

    pub fn file_copies(&self) -> Result<Option<Vec<usize>>, CliError> {
        self.file.get_list("copies")
    }

    pub fn distance(&self, d: f64) -> Result<f64, CliError> {
        cvqkd::constellation::transmissivity(d, self.kappa).map_err(invalid)
    }
}

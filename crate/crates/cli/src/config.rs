//! Layered configuration: documented defaults, then a TOML file, then flags.
//!
//! Every subcommand has a partial form (all fields optional, shared by clap
//! and the file parser) and a resolved form with defaults filled in. The
//! resolved form serializes to JSON with sorted keys, which is the canonical
//! text of a configuration.

use std::path::Path;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Prop21,
    Prop22,
    Thm31,
    Prop27,
    Feller,
    StationarityExact,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Self::Prop21 => "prop21",
            Self::Prop22 => "prop22",
            Self::Thm31 => "thm31",
            Self::Prop27 => "prop27",
            Self::Feller => "feller",
            Self::StationarityExact => "stationarity-exact",
        }
    }
}

fn default_out() -> String {
    "-".into()
}

fn default_z0() -> f64 {
    1.0 / 54.0
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GeometryArgs {
    /// Number of levels, equally spaced in θ = arccos(54z - 1) [default: 64]
    #[arg(long)]
    pub z_grid: Option<usize>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct GeometryConfig {
    pub z_grid: usize,
    pub out: String,
    pub format: Format,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            z_grid: 64,
            out: default_out(),
            format: Format::Csv,
        }
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ParticleArgs {
    /// Population size [default: 2000]
    #[arg(long)]
    pub n: Option<u64>,
    /// Intrinsic rate a >= 0 [default: 1]
    #[arg(long)]
    pub a: Option<f64>,
    /// Final time [default: 1]
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Number of independent runs [default: 1]
    #[arg(long)]
    pub runs: Option<u64>,
    /// Master seed; run r uses stream r [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated ascending observation times [default: 101 points on [0, t-final]]
    #[arg(long, value_delimiter = ',')]
    pub obs_times: Option<Vec<f64>>,
    /// `center` or `counts:N1,N2,N3` [default: center]
    #[arg(long)]
    pub init: Option<String>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct ParticleConfig {
    pub n: u64,
    pub a: f64,
    pub t_final: f64,
    pub runs: u64,
    pub seed: u64,
    pub obs_times: Vec<f64>,
    pub init: String,
    pub out: String,
    pub format: Format,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            a: 1.0,
            t_final: 1.0,
            runs: 1,
            seed: 0,
            obs_times: Vec::new(),
            init: "center".into(),
            out: default_out(),
            format: Format::Csv,
        }
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SdeArgs {
    /// Intrinsic rate a >= 0 [default: 2]
    #[arg(long)]
    pub a: Option<f64>,
    /// Initial level in (0, 1/27) [default: 1/54]
    #[arg(long)]
    pub z0: Option<f64>,
    /// Final time [default: 1]
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Euler-Maruyama step [default: 1e-4]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of independent paths [default: 100]
    #[arg(long)]
    pub paths: Option<u64>,
    /// Master seed; path i uses stream i [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated ascending observation times [default: 101 points on [0, t-final]]
    #[arg(long, value_delimiter = ',')]
    pub obs_times: Option<Vec<f64>>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct SdeConfig {
    pub a: f64,
    pub z0: f64,
    pub t_final: f64,
    pub dt: f64,
    pub paths: u64,
    pub seed: u64,
    pub obs_times: Vec<f64>,
    pub out: String,
    pub format: Format,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            a: 2.0,
            z0: default_z0(),
            t_final: 1.0,
            dt: 1e-4,
            paths: 100,
            seed: 0,
            obs_times: Vec::new(),
            out: default_out(),
            format: Format::Csv,
        }
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BoundariesArgs {
    /// Intrinsic rate a >= 0 [default: 0.5]
    #[arg(long)]
    pub a: Option<f64>,
    /// Interior anchor of the Feller integrals [default: 1/54]
    #[arg(long)]
    pub r: Option<f64>,
    /// Comma-separated truncation distances [default: 1e-3,1e-5,1e-7]
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct BoundariesConfig {
    pub a: f64,
    pub r: f64,
    pub eps: Vec<f64>,
    pub out: String,
}

impl Default for BoundariesConfig {
    fn default() -> Self {
        Self {
            a: 0.5,
            r: default_z0(),
            eps: vec![1e-3, 1e-5, 1e-7],
            out: default_out(),
        }
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct StationaryArgs {
    /// Intrinsic rate a > 0 [default: 2]
    #[arg(long)]
    pub a: Option<f64>,
    /// Number of tabulated levels, equally spaced in θ [default: 200]
    #[arg(long)]
    pub points: Option<usize>,
    /// Number of equal-mass bins reported in JSON output [default: 30]
    #[arg(long)]
    pub bins: Option<usize>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
    /// Output format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct StationaryConfig {
    pub a: f64,
    pub points: usize,
    pub bins: usize,
    pub out: String,
    pub format: Format,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            a: 2.0,
            points: 200,
            bins: 30,
            out: default_out(),
            format: Format::Csv,
        }
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyArgs {
    /// Check to run
    #[arg(value_enum)]
    pub check: Option<Check>,
    /// Population size [default depends on the check]
    #[arg(long)]
    pub n: Option<u64>,
    /// Intrinsic rate [default depends on the check]
    #[arg(long)]
    pub a: Option<f64>,
    /// Particle runs for prop22 and thm31 [default: 100 and 500]
    #[arg(long)]
    pub runs: Option<u64>,
    /// Diffusion paths for thm31 [default: 5000]
    #[arg(long)]
    pub paths: Option<u64>,
    /// Initial level for thm31 [default: 1/54]
    #[arg(long)]
    pub z0: Option<f64>,
    /// Master seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file, `-` for stdout [default: -]
    #[arg(long)]
    pub out: Option<String>,
}

/// Verify settings; fields left empty take the per-check defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", default)]
pub struct VerifyConfig {
    pub check: Option<Check>,
    pub n: Option<u64>,
    pub a: Option<f64>,
    pub runs: Option<u64>,
    pub paths: Option<u64>,
    pub z0: Option<f64>,
    pub seed: u64,
    pub out: String,
}

/// Reads a flat TOML table from `path`.
pub fn read_file(path: &Path) -> Result<toml::Table, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::Io)?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::Validation)
}

fn non_null(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Resolves `cli` over `file` over the defaults of `R`. Unknown or
/// ill-typed file keys are rejected with the key named.
pub fn resolve<P, R>(cli: &P, file: Option<&toml::Table>) -> Result<R, Failure>
where
    P: Serialize + DeserializeOwned,
    R: DeserializeOwned,
{
    let mut merged = Map::new();
    if let Some(table) = file {
        for (key, value) in table {
            let single = toml::Table::from_iter([(key.clone(), value.clone())]);
            let partial: P = single.try_into().map_err(|e: toml::de::Error| {
                Failure::Validation(anyhow!("config key `{key}`: {}", e.message().trim()))
            })?;
            merged.extend(non_null(serde_json::to_value(partial).expect("plain data")));
        }
    }
    merged.extend(non_null(serde_json::to_value(cli).expect("plain data")));
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Failure::Validation(anyhow!("invalid configuration: {e}")))
}

/// Canonical text: JSON with sorted keys.
pub fn canonical<R: Serialize>(config: &R) -> String {
    serde_json::to_value(config)
        .expect("plain data")
        .to_string()
}

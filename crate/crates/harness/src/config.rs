//! Experiment configuration files.
//!
//! Configs are TOML with one table per concern. Unknown keys are rejected.
//! `--set section.key=value` overrides are applied to the parsed table
//! before it is deserialized, so they go through the same validation.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationKind {
    Quadratic,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub kind: PopulationKind,
    pub clients: usize,
    pub dim: usize,
    #[serde(default = "one")]
    pub lipschitz: f64,
    #[serde(default = "one")]
    pub spread: f64,
    #[serde(default = "default_floor")]
    pub curvature_floor: f64,
    #[serde(default = "one_usize")]
    pub groups: usize,
    #[serde(default)]
    pub group_spread: f64,
    #[serde(default)]
    pub per_client_curvature: bool,
    #[serde(default = "default_samples")]
    pub samples_per_client: usize,
    #[serde(default = "one")]
    pub separation: f64,
    #[serde(default = "default_majority")]
    pub majority_fraction: f64,
    #[serde(default = "default_reg")]
    pub reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    None,
    Gaussian,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatternKind {
    Full,
    Independent,
    Permutation,
    Periodic,
    Markov,
}

/// `"random"` or a fixed round offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetSetting {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub kind: PatternKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participants: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_available: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_unavailable: Option<f64>,
}

/// A fixed interval, or `"aligned"` for the pattern's natural period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalSetting {
    Fixed(usize),
    Named(String),
}

/// A scalar fill value or an explicit starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartSetting {
    Fill(f64),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    Generalized,
    WaitMinibatch,
    WaitFull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_local_steps")]
    pub local_steps: usize,
    pub interval: IntervalSetting,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub mode: ModeName,
    #[serde(default = "default_start")]
    pub x0: StartSetting,
    #[serde(default)]
    pub simulate_all: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerName {
    #[default]
    NoiseAdaptive,
    NoiseAgnostic,
    TheoremCaps,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    #[serde(default)]
    pub planner: PlannerName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Initial optimality gap; computed exactly for quadratics when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Rounds,
    Interval,
    Participants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    /// With the participants axis, sets `rounds = hold_product / S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_product: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsConfig {
    #[serde(default)]
    pub master: u64,
    #[serde(default = "one_usize")]
    pub replications: usize,
}

impl Default for SeedsConfig {
    fn default() -> Self {
        Self {
            master: 0,
            replications: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnoseMethod {
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub intervals: Vec<usize>,
    #[serde(default)]
    pub method: DiagnoseMethod,
    #[serde(default = "default_ball_points")]
    pub ball_points: usize,
    #[serde(default = "one")]
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundName {
    Hoeffding,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub checks: Vec<BoundName>,
    pub intervals: Vec<usize>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_ratio_lags")]
    pub ratio_lags: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

/// Everything `run`, `sweep`, `diagnose` and `bounds` need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub pattern: PatternConfig,
    pub run: RunSection,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub seeds: SeedsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default = "default_title")]
    pub title: String,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            title: default_title(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotFile {
    #[serde(default)]
    pub plot: PlotConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Settings of the periodic-availability comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoConfig {
    pub clients: usize,
    pub groups: usize,
    pub block: usize,
    pub participants: usize,
    pub local_steps: usize,
    pub dim: usize,
    pub rounds: usize,
    pub eta: f64,
    pub sigma: f64,
    pub spread: f64,
    pub group_spread: f64,
    pub curvature_floor: f64,
    pub x0: f64,
    pub seeds: usize,
    /// Seeds that must show the expected ordering.
    pub required: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            clients: 50,
            groups: 5,
            block: 20,
            participants: 5,
            local_steps: 5,
            dim: 10,
            rounds: 2000,
            eta: 10.0,
            sigma: 1.0,
            spread: 0.5,
            group_spread: 3.0,
            curvature_floor: 0.5,
            x0: 3.0,
            seeds: 5,
            required: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoFile {
    #[serde(default)]
    pub demo: DemoConfig,
    #[serde(default)]
    pub seeds: SeedsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_floor() -> f64 {
    0.1
}
fn default_samples() -> usize {
    32
}
fn default_majority() -> f64 {
    0.95
}
fn default_reg() -> f64 {
    0.01
}
fn default_local_steps() -> usize {
    5
}
fn default_start() -> StartSetting {
    StartSetting::Fill(1.0)
}
fn default_ball_points() -> usize {
    64
}
fn default_c() -> f64 {
    0.05
}
fn default_trials() -> usize {
    10_000
}
fn default_max_lag() -> usize {
    64
}
fn default_ratio_lags() -> usize {
    5
}
fn default_dir() -> String {
    "out".to_string()
}
fn default_title() -> String {
    "squared gradient norm".to_string()
}

/// Parses `key=value` with a dotted key; the value is read as a TOML value
/// and falls back to a bare string.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| {
        CliError::Config(format!("override `{item}` is not of the form key=value"))
    })?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!(
            "override key `{key}` has an empty segment"
        )));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (path, value) = parse_override(item)?;
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut cur = &mut *table;
        for seg in parents {
            let entry = cur
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry.as_table_mut().ok_or_else(|| {
                CliError::Config(format!("override `{item}`: `{seg}` is not a table"))
            })?;
        }
        cur.insert(last.clone(), value);
    }
    Ok(())
}

/// Parses `text`, applies overrides and deserializes.
pub fn parse_with_overrides<T: DeserializeOwned>(
    text: &str,
    overrides: &[String],
) -> Result<T, CliError> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    apply_overrides(&mut table, overrides)?;
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

pub fn load<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_with_overrides(&text, overrides)
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("config serializes")
}

//! Run-configuration parsing: a strict TOML tree with `--set` dotted
//! overrides, mapped onto the core types with machine-parsable error
//! messages (`section.key: required`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use rsjd_core::model::families::ModelConfig;
use rsjd_core::simulate::{BatchOptions, ClockScheme, SimConfig};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub run: Option<RunSection>,
    pub experiment: Option<toml::Value>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t: Option<f64>,
    pub dt: Option<f64>,
    #[serde(alias = "n")]
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub guard_radius: Option<f64>,
    pub regime_ceiling: Option<usize>,
    /// Clock scheme: `grid` (integrated clock) or `thinning`.
    pub scheme: Option<String>,
    pub x0: Option<Vec<f64>>,
    pub k0: Option<usize>,
    /// Number of evenly spaced ensemble checkpoints.
    pub checkpoints: Option<usize>,
    pub burn_in: Option<f64>,
    /// Small-jump truncation level for σ-finite measures (documented
    /// approximation; the configured measure must be the truncation).
    pub truncation: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory (the `--out` flag wins).
    pub dir: Option<String>,
    /// How many paths are dumped as JSON-lines records.
    pub path_records: Option<usize>,
    /// Keep every n-th recorded node in path dumps.
    pub record_stride: Option<usize>,
}

fn required<T>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("{key}: required")))
}

impl FileConfig {
    pub fn model(&self) -> Result<&ModelConfig, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("model: required".into()))
    }

    pub fn run(&self) -> Result<&RunSection, CliError> {
        self.run
            .as_ref()
            .ok_or_else(|| CliError::Config("run: required".into()))
    }

    /// Deserialize the experiment section into the subcommand's struct;
    /// an absent section parses from an empty table (all defaults).
    pub fn experiment<T: serde::de::DeserializeOwned>(&self) -> Result<T, CliError> {
        let value = self
            .experiment
            .clone()
            .unwrap_or(toml::Value::Table(Default::default()));
        value
            .try_into()
            .map_err(|e| CliError::Config(format!("experiment: {e}")))
    }
}

impl RunSection {
    pub fn sim_config(&self, seed_override: Option<u64>) -> Result<SimConfig, CliError> {
        let t = required(self.t, "run.t")?;
        let dt = required(self.dt, "run.dt")?;
        let clock = match self.scheme.as_deref() {
            None | Some("grid") => ClockScheme::GridIntegrated,
            Some("thinning") => ClockScheme::Thinning,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "run.scheme: expected \"grid\" or \"thinning\", got {other:?}"
                )))
            }
        };
        let mut cfg = SimConfig::new(t, dt)
            .with_seed(seed_override.or(self.seed).unwrap_or(0))
            .with_paths(self.paths.unwrap_or(1))
            .with_clock(clock);
        if let Some(r) = self.guard_radius {
            cfg = cfg.with_guard(r);
        }
        if let Some(c) = self.regime_ceiling {
            cfg = cfg.with_ceiling(c);
        }
        cfg.truncation = self.truncation;
        Ok(cfg)
    }

    pub fn initial(&self, dim: usize) -> Result<(Vec<f64>, usize), CliError> {
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; dim]);
        if x0.len() != dim {
            return Err(CliError::Config(format!(
                "run.x0: expected {dim} coordinates, got {}",
                x0.len()
            )));
        }
        Ok((x0, self.k0.unwrap_or(0)))
    }

    pub fn batch_options(&self, t: f64) -> BatchOptions {
        BatchOptions::evenly_spaced(t, self.checkpoints.unwrap_or(20).max(1))
            .with_burn_in(self.burn_in.unwrap_or(0.0))
    }
}

/// Test-function selection: a registered name plus numeric parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl FunctionSpec {
    pub fn build(&self) -> Result<rsjd_core::generator::TestFunction, CliError> {
        rsjd_core::generator::test_functions::by_name(&self.name, &self.params)
            .map_err(CliError::from)
    }
}

/// Load the TOML file, apply `--set key=value` overrides, and parse.
/// Returns the parsed config together with the canonical text that is
/// hashed into the manifest.
pub fn load(path: &Path, overrides: &[String]) -> Result<(FileConfig, String), CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut value: toml::Value = toml::from_str(&raw)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for item in overrides {
        apply_override(&mut value, item)?;
    }
    let canonical =
        toml::to_string(&value).map_err(|e| CliError::Config(format!("serialize: {e}")))?;
    let cfg: FileConfig = value
        .try_into()
        .map_err(|e| CliError::Config(format!("{e}")))?;
    Ok((cfg, canonical))
}

fn apply_override(root: &mut toml::Value, item: &str) -> Result<(), CliError> {
    let (key, val) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {item:?}: expected key=value")))?;
    // parse the value as a TOML fragment, falling back to a bare string
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {val}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(val.to_string()),
    };
    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (idx, part) in parts.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: {part} is not a table")))?;
        if idx + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}

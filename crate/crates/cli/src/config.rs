//! Run configuration files.
//!
//! A config is a JSON object with a `schema_version` and the sections
//! `grid`, `bank`, `scenario`, and optionally `certify` and `output`. Unknown
//! keys are rejected everywhere. The grid frequency is given in Hz and
//! converted to rad/s as `2π·f`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vrcert_core::plant::{hz_to_rad_per_s, DEFAULT_I_REF_D};
use vrcert_core::sim::{PulseConfig, RandomResistanceConfig, Segment, DEFAULT_DT};
use vrcert_core::{
    scenario_random_resistance, scenario_voltage_pulse, Disturbance, DqVec, GridParams, PsiMode, Scenario,
    SearchConfig, VrBank,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DECIMATION: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_g: f64,
    pub l_g: f64,
    pub frequency_hz: f64,
    pub v_g_ref: DqVec,
    #[serde(default = "default_i_ref")]
    pub i_ref: DqVec,
}

fn default_i_ref() -> DqVec {
    DqVec::new(DEFAULT_I_REF_D, 0.0)
}

impl GridConfig {
    pub fn params(&self) -> Result<GridParams, CliError> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(CliError::field("grid.frequency_hz", "must be finite and > 0"));
        }
        GridParams::new(
            self.r_g,
            self.l_g,
            hz_to_rad_per_s(self.frequency_hz),
            self.v_g_ref,
            self.i_ref,
        )
        .map_err(|e| CliError::from_core(e).prefixed("grid"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    VoltagePulse(PulseConfig),
    RandomResistance(RandomResistanceConfig),
    Custom(CustomScenario),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub i_err0: DqVec,
    #[serde(default)]
    pub segments: Vec<Segment>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl ScenarioConfig {
    pub fn build(&self, p: &GridParams, seed_override: Option<u64>) -> Result<Scenario, CliError> {
        let res = match self {
            ScenarioConfig::VoltagePulse(c) => scenario_voltage_pulse(p, c),
            ScenarioConfig::RandomResistance(c) => {
                let mut c = *c;
                if let Some(s) = seed_override {
                    c.seed = s;
                }
                scenario_random_resistance(p, &c)
            }
            ScenarioConfig::Custom(c) => {
                let sc = Scenario {
                    t_end: c.t_end,
                    dt: c.dt,
                    i_err0: c.i_err0,
                    disturbance: Disturbance::Custom {
                        segments: c.segments.clone(),
                    },
                };
                sc.validate().map(|_| sc)
            }
        };
        res.map_err(|e| CliError::from_core(e).prefixed("scenario"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub mode: PsiMode,
    /// Interface resistances to certify jointly, as fractions of `grid.r_g`.
    #[serde(default = "default_vertices")]
    pub vertices: Vec<f64>,
    #[serde(default)]
    pub search: SearchConfig,
}

fn default_vertices() -> Vec<f64> {
    vec![1.0]
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            enabled: false,
            mode: PsiMode::default(),
            vertices: default_vertices(),
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_decimation() -> usize {
    DEFAULT_DECIMATION
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: None,
            decimation: DEFAULT_DECIMATION,
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub name: String,
    pub grid: GridConfig,
    pub bank: VrBank,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A parsed and validated config plus what was derived from it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub params: GridParams,
    pub sha256: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn vertices(&self) -> Result<Vec<GridParams>, CliError> {
        self.config
            .certify
            .vertices
            .iter()
            .map(|f| {
                self.params
                    .with_r_g(f * self.params.r_g())
                    .map_err(|e| CliError::from_core(e).prefixed("certify.vertices"))
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_config(bytes: &[u8]) -> Result<RunConfig, CliError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| CliError::config(None, format!("invalid JSON: {e}")))?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => {
            return Err(CliError::field(
                "schema_version",
                format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(CliError::field("schema_version", "missing or not an integer")),
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::config(None, e.to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.name.trim().is_empty() || cfg.name.contains(['/', '\\']) || cfg.name.starts_with('.') {
        return Err(CliError::field("name", "must be a non-empty plain file name"));
    }
    cfg.bank
        .validate()
        .map_err(|e| CliError::from_core(e).prefixed("bank"))?;
    if cfg.output.decimation == 0 {
        return Err(CliError::field("output.decimation", "must be >= 1"));
    }
    if cfg.certify.vertices.is_empty() {
        return Err(CliError::field("certify.vertices", "need at least one vertex"));
    }
    if cfg.certify.vertices.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(CliError::field("certify.vertices", "fractions must be finite and > 0"));
    }
    cfg.certify
        .search
        .validate()
        .map_err(|e| CliError::from_core(e).prefixed("certify.search"))?;
    Ok(())
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::config(None, format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config(&bytes)?;
    let params = config.grid.params()?;
    config.scenario.build(&params, None)?;
    Ok(LoadedConfig {
        config,
        params,
        sha256: sha256_hex(&bytes),
        path: path.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundled() -> Vec<PathBuf> {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut out = vec![root.join("scenario1.json")];
        for sub in ["scenario1", "scenario2", "certify"] {
            let mut v: Vec<PathBuf> = std::fs::read_dir(root.join(sub))
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            v.sort();
            out.extend(v);
        }
        out
    }

    #[test]
    fn bundled_configs_load() {
        let files = bundled();
        assert_eq!(files.len(), 14);
        for f in files {
            let c = load_config(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
            assert_eq!(c.config.schema_version, SCHEMA_VERSION);
        }
    }

    #[test]
    fn frequency_is_converted() {
        let c = load_config(&bundled()[0]).unwrap();
        assert_eq!(c.params.omega_g(), 2.0 * std::f64::consts::PI * 60.0);
    }

    #[test]
    fn missing_schema_version_rejected() {
        let e = parse_config(br#"{"name": "x"}"#).unwrap_err();
        assert!(matches!(e, CliError::Config { field: Some(ref f), .. } if f == "schema_version"));
    }
}

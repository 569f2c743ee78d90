//! Application configuration: the TOML or JSON main file, the gesture
//! taxonomy, the escalation-index CSV and the rule set, with bundled
//! defaults for each.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use cuelayer_core::gesture::Taxonomy;
use cuelayer_core::interpret::{EscalationIndexTable, IndexRecord, InterpreterConfig, RuleSet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisConfig;
use crate::error::{io_at, Error, Result};
use crate::sim::SimulatorConfig;

pub const BUNDLED_CONFIG: &str = include_str!("../config/cuelayer.toml");
pub const BUNDLED_TAXONOMY: &str = include_str!("../config/gestures.toml");
pub const BUNDLED_INDICES: &str = include_str!("../config/escalation_indices.csv");
pub const BUNDLED_RULES: &str = include_str!("../config/rules.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Upper bound on feature messages per stream and second.
    pub feature_rate_hz: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8765)),
            feature_rate_hz: 10.0,
        }
    }
}

/// Main configuration file. File references are relative to the file itself;
/// absent references fall back to the bundled data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub taxonomy: Option<PathBuf>,
    pub escalation_indices: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub interpreter: InterpreterConfig,
    pub analysis: AnalysisConfig,
    pub simulator: SimulatorConfig,
    pub service: ServiceConfig,
}

/// Everything loaded and validated from an [`AppConfig`].
#[derive(Debug, Clone)]
pub struct Resources {
    pub config: AppConfig,
    pub taxonomy: Taxonomy,
    pub table: EscalationIndexTable,
}

impl Resources {
    /// Loads `path`, or the bundled configuration when `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(io_at(p))?;
                let config: AppConfig = parse_by_extension(p, &text)?;
                let base = p.parent().unwrap_or(Path::new("."));
                Self::resolve(config, Some(base))
            }
            None => Self::bundled(),
        }
    }

    pub fn bundled() -> Result<Self> {
        let config: AppConfig =
            toml::from_str(BUNDLED_CONFIG).map_err(|e| config_error("bundled cuelayer.toml", e))?;
        let config = AppConfig {
            taxonomy: None,
            escalation_indices: None,
            rules: None,
            ..config
        };
        Self::resolve(config, None)
    }

    fn resolve(mut config: AppConfig, base: Option<&Path>) -> Result<Self> {
        let at = |p: &Path| base.map_or_else(|| p.to_path_buf(), |b| b.join(p));
        let taxonomy = match &config.taxonomy {
            Some(p) => load_taxonomy(&at(p))?,
            None => default_taxonomy()?,
        };
        let table = match &config.escalation_indices {
            Some(p) => load_index_table(&at(p))?,
            None => default_index_table()?,
        };
        config.interpreter.rules = match &config.rules {
            Some(p) => load_rules(&at(p))?,
            None => default_rules()?,
        };
        config.interpreter.validate()?;
        config.simulator.validate(&taxonomy)?;
        for g in &taxonomy.gestures {
            if !table.records().iter().any(|r| r.gesture_id == g.id) {
                log::warn!("gesture {} has no escalation index entry", g.id);
            }
        }
        Ok(Self {
            config,
            taxonomy,
            table,
        })
    }
}

fn config_error(path: impl Into<PathBuf>, e: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: e.to_string(),
    }
}

/// Parses JSON for `.json` paths and TOML otherwise.
pub fn parse_by_extension<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        serde_json::from_str(text).map_err(|e| config_error(path, e))
    } else {
        toml::from_str(text).map_err(|e| config_error(path, e))
    }
}

fn read_parsed<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse_by_extension(path, &text)
}

fn checked_taxonomy(t: Taxonomy, path: &Path) -> Result<Taxonomy> {
    t.validate().map_err(|e| config_error(path, e))?;
    Ok(t)
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    checked_taxonomy(read_parsed(path)?, path)
}

pub fn default_taxonomy() -> Result<Taxonomy> {
    let path = Path::new("gestures.toml");
    checked_taxonomy(parse_by_extension(path, BUNDLED_TAXONOMY)?, path)
}

pub fn load_rules(path: &Path) -> Result<RuleSet> {
    let rules: RuleSet = read_parsed(path)?;
    rules.validate().map_err(|e| config_error(path, e))?;
    Ok(rules)
}

pub fn default_rules() -> Result<RuleSet> {
    parse_by_extension(Path::new("rules.json"), BUNDLED_RULES)
}

/// Parses escalation-index CSV with the header
/// `gesture_id,scenario_id,officer_gender,citizen_demographics,index`.
pub fn parse_index_csv(text: &str, origin: &Path) -> Result<EscalationIndexTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for row in reader.deserialize::<IndexRecord>() {
        records.push(row.map_err(|e| config_error(origin, e))?);
    }
    EscalationIndexTable::from_records(records).map_err(|e| config_error(origin, e))
}

pub fn load_index_table(path: &Path) -> Result<EscalationIndexTable> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    parse_index_csv(&text, path)
}

pub fn default_index_table() -> Result<EscalationIndexTable> {
    parse_index_csv(BUNDLED_INDICES, Path::new("escalation_indices.csv"))
}

/// Writes an index table back to CSV.
pub fn write_index_csv(table: &EscalationIndexTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| config_error(path, e))?;
    for r in table.records() {
        w.serialize(&r).map_err(|e| config_error(path, e))?;
    }
    w.flush().map_err(io_at(path))?;
    Ok(())
}

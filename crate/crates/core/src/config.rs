//! TOML run configuration. See `configs/trade.toml` at the repository root
//! for every key.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attestation::AttestationMode;
use crate::chain_sim::ChainSpec;
use crate::engine::EngineKind;
use crate::protocol::CallPath;
use crate::scenarios::{Fault, ScenarioConfig, ScenarioKind, TradeParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("bad call path {0:?}")]
    Path(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub id: u64,
    pub name: String,
    #[serde(default = "default_signers")]
    pub signers: u32,
    #[serde(default = "default_threshold")]
    pub threshold: u32,
}

fn default_signers() -> u32 {
    3
}

fn default_threshold() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: ScenarioKind,
    pub faults: Vec<Fault>,
    pub retries: u32,
    pub agents: bool,
    pub allow_unsafe_byzantine: bool,
    pub value: u64,
    /// Pairs of dotted call paths that must not share a parallel step.
    pub conflicts: Vec<[String; 2]>,
    pub trade: TradeParams,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let base = ScenarioConfig::new(
            ScenarioKind::Read,
            AttestationMode::Direct,
            EngineKind::Serial,
        );
        Self {
            name: ScenarioKind::Read,
            faults: Vec::new(),
            retries: base.retries,
            agents: base.agents,
            allow_unsafe_byzantine: false,
            value: base.value,
            conflicts: Vec::new(),
            trade: TradeParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub mode: AttestationMode,
    pub engine: EngineKind,
    pub timeout_periods: u64,
    pub seed: u64,
    pub restrict_to_coordinator: bool,
    pub chains: Vec<ChainEntry>,
    pub scenario: ScenarioSection,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: AttestationMode::Direct,
            engine: EngineKind::Serial,
            timeout_periods: 20,
            seed: 1,
            restrict_to_coordinator: true,
            chains: Vec::new(),
            scenario: ScenarioSection::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let s = &self.scenario;
        let parse = |p: &String| CallPath::parse(p).ok_or_else(|| ConfigError::Path(p.clone()));
        let conflicts = s
            .conflicts
            .iter()
            .map(|[a, b]| Ok((parse(a)?, parse(b)?)))
            .collect::<Result<_, ConfigError>>()?;
        let mut cfg = ScenarioConfig::new(s.name, self.mode, self.engine);
        cfg.faults = s.faults.clone();
        cfg.timeout_periods = self.timeout_periods;
        cfg.retries = s.retries;
        cfg.seed = self.seed;
        cfg.restrict_to_coordinator = self.restrict_to_coordinator;
        cfg.agents = s.agents;
        cfg.allow_unsafe_byzantine = s.allow_unsafe_byzantine;
        cfg.value = s.value;
        cfg.trade = s.trade.clone();
        cfg.conflicts = conflicts;
        cfg.chains = self
            .chains
            .iter()
            .map(|c| ChainSpec {
                signers: c.signers,
                threshold: c.threshold,
                ..ChainSpec::new(c.id, &c.name)
            })
            .collect();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::CrashPoint;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(SimConfig::from_toml_str("").unwrap(), SimConfig::default());
    }

    #[test]
    fn full_document() {
        let cfg = SimConfig::from_toml_str(
            r#"
            mode = "header"
            engine = "parallel"
            timeout_periods = 9
            seed = 4
            [[chains]]
            id = 1
            name = "a"
            [[chains]]
            id = 2
            name = "b"
            signers = 4
            threshold = 3
            [scenario]
            name = "write"
            faults = ["crash:after-start", "byzantine:1"]
            conflicts = [["1", "1"]]
            "#,
        )
        .unwrap();
        let s = cfg.scenario_config().unwrap();
        assert_eq!(s.kind, ScenarioKind::Write);
        assert_eq!(s.mode, AttestationMode::Header);
        assert_eq!(s.faults[0], Fault::Crash(CrashPoint::AfterStart));
        assert_eq!(s.chains[1].threshold, 3);
        assert_eq!(s.timeout_periods, 9);
        s.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml_str("moed = \"direct\"").is_err());
        assert!(SimConfig::from_toml_str("[scenario]\nfaults = [\"melt:1\"]").is_err());
    }
}

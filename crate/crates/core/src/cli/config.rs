//! The declarative run configuration read by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::ConflictScope;
use crate::error::{Error, Result};
use crate::learners::{LearnerKind, TrainConfig};
use crate::netproto::DEFAULT_MAX_LINE;
use crate::orchestrator::{DataSource, FederationConfig, ParticipantConfig, SyntheticData};

fn default_alpha() -> f64 {
    0.3
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    InProcess,
    Serve,
    Join,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Address the coordinator listens on.
    pub bind: String,
    /// Address participants connect to.
    pub connect: String,
    /// Coordinator straggler timeout.
    pub timeout_secs: u64,
    /// How long a participant waits on the coordinator.
    pub join_timeout_secs: u64,
    pub max_line: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            bind: "127.0.0.1:7878".into(),
            connect: "127.0.0.1:7878".into(),
            timeout_secs: 60,
            join_timeout_secs: 600,
            max_line: DEFAULT_MAX_LINE,
        }
    }
}

/// A participant entry. `kind` is optional at parse time so a missing
/// learner can be reported with the participant's position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<LearnerKind>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub conflict_scope: ConflictScope,
    #[serde(default)]
    pub mode: Mode,
    /// Output directory, resolved against the output root when relative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub data: DataSource,
    /// When empty, a synthetic source gets `partition.n_participants`
    /// participants cycling through the built-in learners.
    #[serde(default)]
    pub participants: Vec<ParticipantEntry>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        RunConfigFile {
            master_seed: 0,
            alpha: default_alpha(),
            conflict_scope: ConflictScope::default(),
            mode: Mode::default(),
            output_dir: None,
            sweep: SweepConfig::default(),
            network: NetworkConfig::default(),
            data: DataSource::default(),
            participants: Vec::new(),
        }
    }
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<RunConfigFile> {
        let config: RunConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.federation()?;
        Ok(config)
    }

    /// Reads a config file. A relative manifest path is taken relative to
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<RunConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = RunConfigFile::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let DataSource::Files { manifest } = &mut config.data {
            if manifest.is_relative() {
                if let Some(dir) = path.parent() {
                    *manifest = dir.join(&*manifest);
                }
            }
        }
        Ok(config)
    }

    /// Canonical TOML rendering; parsing it yields an equal config.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The fully resolved federation, with every participant's learner set.
    pub fn federation(&self) -> Result<FederationConfig> {
        let mut data = self.data.clone();
        let participants = if self.participants.is_empty() {
            match &data {
                DataSource::Synthetic(s) => FederationConfig::mixed(s.clone(), self.alpha, self.master_seed).participants,
                DataSource::Files { .. } => {
                    return Err(Error::Config("file-backed data needs explicit [[participants]] entries".into()))
                }
            }
        } else {
            self.participants
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let kind = p
                        .kind
                        .ok_or_else(|| Error::Config(format!("participant {i}: missing learner `kind`")))?;
                    Ok(ParticipantConfig {
                        kind,
                        train: p.train.clone(),
                        weight: p.weight,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        if let DataSource::Synthetic(SyntheticData { partition, .. }) = &mut data {
            partition.n_participants = participants.len();
        }
        let config = FederationConfig {
            master_seed: self.master_seed,
            alpha: self.alpha,
            conflict_scope: self.conflict_scope,
            data,
            participants,
        };
        config.validate()?;
        Ok(config)
    }
}

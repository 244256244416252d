//! Plain-text (TOML) file format for [`ChipConfig`].
//!
//! The saver writes every field so that `load(save(cfg)) == cfg` holds
//! bit-exactly. The loader also accepts abbreviated files: missing
//! compartments are disabled and missing parameters take their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{
    soma_switch_count, AnalogParams, Block, ChipConfig, CompartmentConfig, CompartmentId, Line,
    Mode, SynapseCell, SynapseRow,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl ConfigError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ConfigError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        // toml reports line and column in its message
        ConfigError::Parse(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipFile {
    pub n_columns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soma_segment_switches: Option<SwitchFile>,
    #[serde(default)]
    pub compartments: Vec<CompartmentFile>,
    #[serde(default)]
    pub rows: Vec<RowFile>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchFile {
    #[serde(default)]
    pub upper: Vec<bool>,
    #[serde(default)]
    pub lower: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentFile {
    pub block: Block,
    pub column: usize,
    pub mode: Mode,
    #[serde(default)]
    pub exp_term: bool,
    #[serde(default)]
    pub merge_right: bool,
    #[serde(default)]
    pub merge_vertical: bool,
    #[serde(default)]
    pub soma_connect: bool,
    #[serde(default)]
    pub soma_bypass: bool,
    #[serde(default)]
    pub current_input: bool,
    #[serde(default)]
    pub params: AnalogParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowFile {
    pub block: Block,
    pub index: usize,
    #[serde(default = "default_line")]
    pub target_line: Line,
    pub addresses: Vec<u8>,
    pub weights: Vec<u8>,
}

fn default_line() -> Line {
    Line::A
}

impl ChipFile {
    pub fn from_config(cfg: &ChipConfig) -> Self {
        let compartments = cfg
            .compartment_ids()
            .map(|id| {
                let c = cfg.compartment(id);
                CompartmentFile {
                    block: id.block,
                    column: id.column,
                    mode: c.mode,
                    exp_term: c.exp_term_enabled,
                    merge_right: c.switch_merge_right,
                    merge_vertical: c.switch_merge_vertical,
                    soma_connect: c.soma_connect,
                    soma_bypass: c.soma_bypass,
                    current_input: c.current_input_enabled,
                    params: c.params,
                }
            })
            .collect();
        let rows = cfg
            .rows
            .iter()
            .map(|r| RowFile {
                block: r.block,
                index: r.index,
                target_line: r.target_line,
                addresses: r.cells.iter().map(|c| c.address).collect(),
                weights: r.cells.iter().map(|c| c.weight).collect(),
            })
            .collect();
        ChipFile {
            n_columns: cfg.n_columns,
            soma_segment_switches: Some(SwitchFile {
                upper: cfg.soma_segment_switches[0].clone(),
                lower: cfg.soma_segment_switches[1].clone(),
            }),
            compartments,
            rows,
        }
    }

    pub fn into_config(self) -> Result<ChipConfig, ConfigError> {
        let n = self.n_columns;
        if n == 0 {
            return Err(ConfigError::Invalid("n_columns must be at least 1".into()));
        }
        let mut cfg = ChipConfig::new(n);
        let mut seen = vec![false; 2 * n];
        for c in self.compartments {
            if c.column >= n {
                return Err(ConfigError::Invalid(format!(
                    "compartment {}:{} outside {n} columns",
                    c.block, c.column
                )));
            }
            let id = CompartmentId::new(c.block, c.column);
            let index = id.index(n);
            if std::mem::replace(&mut seen[index], true) {
                return Err(ConfigError::Invalid(format!(
                    "compartment {id} listed twice"
                )));
            }
            cfg.compartments[index] = CompartmentConfig {
                mode: c.mode,
                exp_term_enabled: c.exp_term,
                params: c.params,
                switch_merge_right: c.merge_right,
                switch_merge_vertical: c.merge_vertical,
                soma_connect: c.soma_connect,
                soma_bypass: c.soma_bypass,
                current_input_enabled: c.current_input,
            };
        }
        for r in self.rows {
            if r.addresses.len() != r.weights.len() {
                return Err(ConfigError::Invalid(format!(
                    "row {}:{} has {} addresses but {} weights",
                    r.block,
                    r.index,
                    r.addresses.len(),
                    r.weights.len()
                )));
            }
            cfg.rows.push(SynapseRow {
                block: r.block,
                index: r.index,
                target_line: r.target_line,
                cells: r
                    .addresses
                    .iter()
                    .zip(&r.weights)
                    .map(|(&address, &weight)| SynapseCell { address, weight })
                    .collect(),
            });
        }
        if let Some(sw) = self.soma_segment_switches {
            let expected = soma_switch_count(n);
            for (block, list) in [(Block::Upper, sw.upper), (Block::Lower, sw.lower)] {
                if list.is_empty() && expected > 0 {
                    continue;
                }
                cfg.soma_segment_switches[block.index()] = list;
            }
        }
        Ok(cfg)
    }
}

pub fn chip_to_string(cfg: &ChipConfig) -> String {
    toml::to_string(&ChipFile::from_config(cfg)).expect("chip config serializes")
}

pub fn chip_from_str(text: &str) -> Result<ChipConfig, ConfigError> {
    let file: ChipFile = toml::from_str(text)?;
    file.into_config()
}

pub fn load_chip(path: &Path) -> Result<ChipConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    chip_from_str(&text)
}

pub fn save_chip(cfg: &ChipConfig, path: &Path) -> Result<(), ConfigError> {
    std::fs::write(path, chip_to_string(cfg)).map_err(|e| ConfigError::io(path, e))
}

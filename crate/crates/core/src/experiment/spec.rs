//! Experiment description file (TOML). Times are given in microseconds of
//! hardware time, electrical quantities in SI units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chip::{Block, Line, Mode, SpikeType};
use crate::config_io::{ChipFile, ConfigError};
use crate::morph::CaBridge;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: EngineSection,
    /// Inline chip configuration.
    #[serde(default)]
    pub chip: Option<ChipFile>,
    /// Chip configuration file, relative to the spec file.
    #[serde(default)]
    pub chip_file: Option<String>,
    #[serde(default)]
    pub morphology: Option<MorphologySection>,
    #[serde(default)]
    pub compartments: Vec<CompartmentOverride>,
    #[serde(default)]
    pub synapses: Vec<SynapseSpec>,
    #[serde(default)]
    pub stimulus: StimulusSpec,
    #[serde(default)]
    pub probes: Vec<String>,
    #[serde(default)]
    pub routing: Vec<RouteSpec>,
    #[serde(default)]
    pub plasticity: Option<PlasticitySpec>,
    #[serde(default)]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub dt_us: f64,
    pub t_end_us: f64,
    pub record_stride: usize,
    pub i_exp_max: Option<f64>,
    pub loop_delay_steps: u64,
    pub bus_enforce: bool,
    pub bus_max_rate: f64,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            dt_us: 0.01,
            t_end_us: 100.0,
            record_stride: 1,
            i_exp_max: None,
            loop_delay_steps: 1,
            bus_enforce: false,
            bus_max_rate: 125e6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorphologySection {
    #[serde(default)]
    pub preset: Option<PresetSpec>,
    /// Morphology file, relative to the spec file.
    #[serde(default)]
    pub file: Option<String>,
    pub n_columns: usize,
    pub rows_per_block: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PresetSpec {
    Pyramidal {
        n_tuft: usize,
        n_basal: usize,
        #[serde(default)]
        bridge: CaBridge,
    },
    Point,
}

/// Changes to one compartment. `target` is a morphology label or
/// `<block>:<column>`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompartmentOverride {
    pub target: String,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub exp_term: Option<bool>,
    #[serde(default)]
    pub current_input: Option<bool>,
    #[serde(default)]
    pub soma_connect: Option<bool>,
    #[serde(default)]
    pub soma_bypass: Option<bool>,
    #[serde(default)]
    pub merge_right: Option<bool>,
    #[serde(default)]
    pub merge_vertical: Option<bool>,
    /// Analog parameters by name.
    #[serde(default)]
    pub params: toml::Table,
}

/// Writes the synapse in the target's column of row `row` of the target's
/// block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynapseSpec {
    pub target: String,
    pub row: usize,
    pub address: u8,
    pub weight: u8,
    /// Also sets the row's dendritic line.
    #[serde(default)]
    pub line: Option<Line>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusSpec {
    #[serde(default)]
    pub spikes: Vec<SpikeSpec>,
    #[serde(default)]
    pub trains: Vec<TrainSpec>,
    /// Stimulus record file, relative to the spec file.
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub current: Vec<PulseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    pub time_us: f64,
    pub block: Block,
    pub row_group: usize,
    pub address: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainKind {
    /// Every address on every listed bus fires at each tick.
    Regular,
    /// Independent Poisson process per bus and address.
    Poisson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub kind: TrainKind,
    pub block: Block,
    pub row_groups: Vec<usize>,
    pub addresses: Vec<u8>,
    pub start_us: f64,
    pub stop_us: f64,
    #[serde(default)]
    pub interval_us: Option<f64>,
    /// Events per second of hardware time.
    #[serde(default)]
    pub rate_hz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub start_us: f64,
    pub stop_us: f64,
    /// Amperes.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub source: String,
    pub spike_type: SpikeType,
    /// `<block>:<row_group>:<address>` each.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasticitySpec {
    pub period_us: f64,
    /// Kernel invocations; defaults to as many periods as fit in the run.
    #[serde(default)]
    pub periods: Option<usize>,
    /// Rows handed to the kernels, as `<block>:<index>`; default all rows.
    #[serde(default)]
    pub rows: Option<Vec<String>>,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub stdp: Option<StdpSection>,
    #[serde(default)]
    pub structural: Option<StructuralSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSection {
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_plus_us: f64,
    pub tau_minus_us: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection {
            a_plus: 1.0,
            a_minus: 1.0,
            tau_plus_us: 5.0,
            tau_minus_us: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StdpSection {
    pub eta: f64,
    /// Restrict weight updates to synapses with non-zero weight.
    #[serde(default = "yes")]
    pub established_only: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralSection {
    pub theta_corr: f64,
    pub w_init: u8,
    pub w_min: u8,
    /// Candidate addresses; default all 64.
    #[serde(default)]
    pub pool: Option<Vec<u8>>,
}

/// Named alternative run of the same experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Applied after the experiment's own overrides.
    #[serde(default)]
    pub compartments: Vec<CompartmentOverride>,
    /// Replaces the experiment's stimulus.
    #[serde(default)]
    pub stimulus: Option<StimulusSpec>,
    #[serde(default)]
    pub t_end_us: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
        Self::from_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }
}

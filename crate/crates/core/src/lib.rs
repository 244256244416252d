//! Behavioral simulator of a multi-compartment neuromorphic neuron: an
//! addressed synapse array, switched-conductance ion-channel circuits,
//! a configurable membrane and somatic-line switch fabric, and synapse-level
//! plasticity with rewiring.

pub mod chip;
pub mod config_io;
pub mod engine;
pub mod events;
pub mod experiment;
pub mod morph;
pub mod network;
pub mod plasticity;
pub mod router;

pub use chip::{validate_config, Block, ChipConfig, CompartmentId, Line, Mode, SpikeType};
pub use config_io::{load_chip, save_chip, ConfigError};
pub use engine::{EngineConfig, EngineError, Probe, Simulation};
pub use network::{derive_network, CircuitGraph};

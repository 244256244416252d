//! Experiment specs shipped with the crate.

use crate::config_io::ConfigError;

use super::ExperimentSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scenario {
    pub id: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
    /// Variant of the spec this scenario runs; `None` runs all of them.
    pub variant: Option<&'static str>,
}

impl Scenario {
    pub fn spec(&self) -> Result<ExperimentSpec, ConfigError> {
        ExperimentSpec::from_str(self.source)
    }
}

const NMDA_PP: &str = include_str!("../../scenarios/nmda_pp.toml");
const FIG7A: &str = include_str!("../../scenarios/fig7a.toml");
const FIG7B: &str = include_str!("../../scenarios/fig7b.toml");
const FIG7C: &str = include_str!("../../scenarios/fig7c.toml");
const PYRAMIDAL: &str = include_str!("../../scenarios/pyramidal.toml");
const STRUCTURAL: &str = include_str!("../../scenarios/structural_demo.toml");

const SCENARIOS: &[Scenario] = &[
    Scenario {
        id: "nmda_pp",
        summary: "plateau potential of a single NMDA-mode compartment",
        source: NMDA_PP,
        variant: None,
    },
    Scenario {
        id: "fig7a",
        summary: "sodium spike with exponential onset; coupled neighbor follows",
        source: FIG7A,
        variant: None,
    },
    Scenario {
        id: "fig7b",
        summary: "up-states of 9, 30 and 70 us pulling up a passive neighbor",
        source: FIG7B,
        variant: None,
    },
    Scenario {
        id: "fig7c",
        summary: "sodium compartment fires only during the neighbor's plateau",
        source: FIG7C,
        variant: None,
    },
    Scenario {
        id: "pyramidal_e",
        summary: "pyramidal neuron, tuft input only",
        source: PYRAMIDAL,
        variant: Some("e"),
    },
    Scenario {
        id: "pyramidal_f",
        summary: "pyramidal neuron, somatic current only",
        source: PYRAMIDAL,
        variant: Some("f"),
    },
    Scenario {
        id: "pyramidal_g",
        summary: "pyramidal neuron, somatic current followed by tuft input",
        source: PYRAMIDAL,
        variant: Some("g"),
    },
    Scenario {
        id: "structural_demo",
        summary: "rewiring towards inputs correlated with dendritic plateaus",
        source: STRUCTURAL,
        variant: None,
    },
];

pub fn scenario(id: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.id == id)
}

pub fn scenario_ids() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|s| s.id)
}

pub fn all() -> &'static [Scenario] {
    SCENARIOS
}

//! Files written for a run: trace, spikes, rewiring log, plot data, a JSON
//! summary and, after plasticity changed the chip, the final configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::chip::{Mode, ACCELERATION_FACTOR};
use crate::config_io::{chip_to_string, ConfigError};
use crate::engine::{format_trace, Trace};
use crate::events::format_spikes;
use crate::plasticity::format_rewire_log;

use super::RunResult;

/// File name to contents, in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts(pub BTreeMap<String, String>);

impl Artifacts {
    pub fn from_run(run: &RunResult) -> Self {
        let mut files = BTreeMap::new();
        files.insert("trace.tsv".to_string(), format_trace(&run.trace));
        files.insert("spikes.tsv".to_string(), format_spikes(&run.spikes));
        files.insert(
            "rewiring.tsv".to_string(),
            format_rewire_log(&run.final_chip, &run.rewiring),
        );
        files.insert("plot.tsv".to_string(), emit_plot_data(&run.trace));
        if !run.rewiring.is_empty() {
            files.insert(
                "final_chip.toml".to_string(),
                chip_to_string(&run.final_chip),
            );
        }
        let summary =
            serde_json::to_string_pretty(&Summary::from_run(run)).expect("summary serializes");
        files.insert("summary.json".to_string(), summary + "\n");
        Artifacts(files)
    }

    pub fn write(&self, dir: &Path) -> Result<(), ConfigError> {
        std::fs::create_dir_all(dir).map_err(|e| ConfigError::io(dir, e))?;
        for (name, text) in &self.0 {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| ConfigError::io(&path, e))?;
        }
        Ok(())
    }

    /// SHA-256 over file names and contents.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, text) in &self.0 {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// Trace with hardware time in microseconds and the equivalent biological
/// time in milliseconds, then the probes in declaration order.
pub fn emit_plot_data(trace: &Trace) -> String {
    let mut out = String::from("t_hw_us\tt_bio_ms");
    for n in &trace.names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (i, t) in trace.times.iter().enumerate() {
        let hw_us = t * 1e6;
        // biological milliseconds are numerically hardware microseconds
        let bio_ms = t * ACCELERATION_FACTOR * 1e3;
        let _ = write!(out, "{hw_us:.4}\t{bio_ms:.4}");
        for col in &trace.columns {
            let _ = write!(out, "\t{:.9}", col[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateauSummary {
    pub compartment: String,
    pub mode: String,
    pub start_us: f64,
    pub end_us: Option<f64>,
    pub length_us: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub variant: Option<String>,
    pub seed: u64,
    pub dt_us: f64,
    pub t_end_us: f64,
    pub labels: BTreeMap<String, String>,
    /// Per compartment, spike count per type.
    pub spike_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub plateaus: Vec<PlateauSummary>,
    pub rewiring_events: usize,
    pub dropped_events: u64,
}

fn round_us(t: f64) -> f64 {
    // trims float noise from step * dt products
    (t * 1e6 * 1e4).round() / 1e4
}

impl Summary {
    pub fn from_run(run: &RunResult) -> Self {
        let mut spike_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for s in &run.spikes {
            *spike_counts
                .entry(s.compartment.to_string())
                .or_default()
                .entry(s.spike_type.to_string())
                .or_default() += 1;
        }
        let mode_name = |m: Mode| format!("{m:?}").to_lowercase();
        let plateaus = run
            .alt_intervals
            .iter()
            .map(|a| PlateauSummary {
                compartment: a.compartment.to_string(),
                mode: mode_name(run.initial_chip.compartment(a.compartment).mode),
                start_us: round_us(a.start),
                end_us: a.end.map(round_us),
                length_us: a
                    .end_step
                    .map(|e| round_us((e - a.start_step) as f64 * run.dt)),
            })
            .collect();
        Summary {
            name: run.name.clone(),
            variant: run.variant.clone(),
            seed: run.seed,
            dt_us: round_us(run.dt),
            t_end_us: round_us(run.t_end),
            labels: run
                .labels
                .iter()
                .map(|(k, v)| (k.clone(), v.to_string()))
                .collect(),
            spike_counts,
            plateaus,
            rewiring_events: run.rewiring.len(),
            dropped_events: run.dropped_events,
        }
    }
}

//! Event records flowing into and out of the simulator, with their text
//! formats.

use std::fmt::Write as _;

use crate::chip::{Block, CompartmentId, SpikeType, SIX_BIT_MAX};
use crate::config_io::ConfigError;

/// A pre-synaptic event on one row-group bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresynEvent {
    /// Seconds, hardware time.
    pub time: f64,
    pub block: Block,
    pub row_group: usize,
    pub address: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeRecord {
    pub time: f64,
    pub compartment: CompartmentId,
    pub spike_type: SpikeType,
}

/// Parses stimulus records `time_us block row_group address`, separated by
/// whitespace or commas. `#` starts a comment. Output is sorted by time
/// (stable for equal times).
pub fn parse_stimulus(text: &str) -> Result<Vec<PresynEvent>, ConfigError> {
    let mut events = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Parse(format!("line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let time_us: f64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad time `{}`", fields[0])))?;
        if !time_us.is_finite() || time_us < 0.0 {
            return Err(err(format!(
                "time must be finite and non-negative, got {time_us}"
            )));
        }
        let block: Block = fields[1].parse().map_err(err)?;
        let row_group: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("bad row group `{}`", fields[2])))?;
        let address: u8 = fields[3]
            .parse()
            .ok()
            .filter(|a| *a <= SIX_BIT_MAX)
            .ok_or_else(|| err(format!("address `{}` is not a 6-bit value", fields[3])))?;
        events.push(PresynEvent {
            time: time_us / 1e6,
            block,
            row_group,
            address,
        });
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(events)
}

pub fn format_stimulus(events: &[PresynEvent]) -> String {
    let mut out = String::from("# time_us block row_group address\n");
    for e in events {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            e.time * 1e6,
            e.block,
            e.row_group,
            e.address
        );
    }
    out
}

/// Spike output: one `time_us compartment type` record per line.
pub fn format_spikes(spikes: &[SpikeRecord]) -> String {
    let mut out = String::from("time_us\tcompartment\ttype\n");
    for s in spikes {
        let _ = writeln!(
            out,
            "{:.4}\t{}\t{}",
            s.time * 1e6,
            s.compartment,
            s.spike_type
        );
    }
    out
}

//! Address-matched delivery of pre-synaptic events to synapse rows, bus rate
//! limiting, and routing of emitted spikes back onto row buses.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::chip::{Block, ChipConfig, CompartmentId, Line, SpikeType, SIX_BIT_MAX};
use crate::config_io::ConfigError;
use crate::events::{PresynEvent, SpikeRecord};

/// Charge injection onto one dendritic line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Injection {
    pub compartment: CompartmentId,
    pub line: Line,
    pub weight: u8,
}

/// A synapse: position of its row in `ChipConfig::rows` and its column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SynapseRef {
    pub row: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Delivery {
    pub injections: Vec<Injection>,
    /// Every synapse whose stored address matched, including weight 0.
    pub matches: Vec<SynapseRef>,
}

/// Rows reachable from each `(block, row_group)` bus.
#[derive(Debug, Clone)]
pub struct RowIndex {
    groups: BTreeMap<(Block, usize), Vec<usize>>,
}

impl RowIndex {
    pub fn new(chip: &ChipConfig) -> Self {
        let mut groups: BTreeMap<(Block, usize), Vec<usize>> = BTreeMap::new();
        for (pos, row) in chip.rows.iter().enumerate() {
            groups
                .entry((row.block, row.row_group()))
                .or_default()
                .push(pos);
        }
        for rows in groups.values_mut() {
            rows.sort_by_key(|&p| chip.rows[p].index);
        }
        RowIndex { groups }
    }

    pub fn rows(&self, block: Block, row_group: usize) -> &[usize] {
        self.groups
            .get(&(block, row_group))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn deliver_into(&self, event: &PresynEvent, chip: &ChipConfig, out: &mut Delivery) {
        for &pos in self.rows(event.block, event.row_group) {
            let row = &chip.rows[pos];
            for (column, cell) in row.cells.iter().enumerate() {
                if cell.address != event.address {
                    continue;
                }
                out.matches.push(SynapseRef { row: pos, column });
                if cell.weight > 0 {
                    out.injections.push(Injection {
                        compartment: CompartmentId::new(row.block, column),
                        line: row.target_line,
                        weight: cell.weight,
                    });
                }
            }
        }
    }
}

/// Delivers a batch of events that are due at the same time.
pub fn deliver(events: &[PresynEvent], chip: &ChipConfig) -> Delivery {
    let index = RowIndex::new(chip);
    let mut out = Delivery::default();
    for e in events {
        index.deliver_into(e, chip, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RouteTarget {
    pub block: Block,
    pub row_group: usize,
    pub address: u8,
}

/// Maps `(source compartment, spike type)` to bus targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTable {
    pub entries: BTreeMap<(CompartmentId, SpikeType), Vec<RouteTarget>>,
}

impl RoutingTable {
    pub fn add(&mut self, source: CompartmentId, spike_type: SpikeType, target: RouteTarget) {
        self.entries
            .entry((source, spike_type))
            .or_default()
            .push(target);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Targets that reference a row group with no rows on the chip.
    pub fn dangling_targets(&self, chip: &ChipConfig) -> Vec<RouteTarget> {
        let index = RowIndex::new(chip);
        self.entries
            .values()
            .flatten()
            .filter(|t| index.rows(t.block, t.row_group).is_empty())
            .copied()
            .collect()
    }
}

/// Events produced by a spike, `delay` seconds later.
pub fn route_spike(spike: &SpikeRecord, table: &RoutingTable, delay: f64) -> Vec<PresynEvent> {
    table
        .entries
        .get(&(spike.compartment, spike.spike_type))
        .map(|targets| {
            targets
                .iter()
                .map(|t| PresynEvent {
                    time: spike.time + delay,
                    block: t.block,
                    row_group: t.row_group,
                    address: t.address,
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Parses routing records `<compartment> <type> -> <block>:<group>:<address> ...`.
pub fn parse_routing(text: &str) -> Result<RoutingTable, ConfigError> {
    let mut table = RoutingTable::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ConfigError::Parse(format!("line {}: {msg}", lineno + 1));
        let (lhs, rhs) = line
            .split_once("->")
            .ok_or_else(|| err("expected `<compartment> <type> -> targets`".into()))?;
        let mut head = lhs.split_whitespace();
        let source: CompartmentId = head
            .next()
            .ok_or_else(|| err("missing source compartment".into()))?
            .parse()
            .map_err(err)?;
        let spike_type: SpikeType = head
            .next()
            .ok_or_else(|| err("missing spike type".into()))?
            .parse()
            .map_err(err)?;
        let targets: Vec<&str> = rhs.split_whitespace().collect();
        if targets.is_empty() {
            return Err(err("no targets".into()));
        }
        for t in targets {
            table.add(source, spike_type, parse_target(t).map_err(err)?);
        }
    }
    Ok(table)
}

pub fn parse_target(s: &str) -> Result<RouteTarget, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("target `{s}` is not `<block>:<group>:<address>`"));
    }
    let block = parts[0].parse()?;
    let row_group = parts[1]
        .parse()
        .map_err(|_| format!("bad row group in `{s}`"))?;
    let address = parts[2]
        .parse::<u8>()
        .ok()
        .filter(|a| *a <= SIX_BIT_MAX)
        .ok_or_else(|| format!("address in `{s}` is not a 6-bit value"))?;
    Ok(RouteTarget {
        block,
        row_group,
        address,
    })
}

pub fn format_routing(table: &RoutingTable) -> String {
    let mut out = String::new();
    for ((source, ty), targets) in &table.entries {
        let _ = write!(out, "{source} {ty} ->");
        for t in targets {
            let _ = write!(out, " {}:{}:{}", t.block, t.row_group, t.address);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusModel {
    /// Events per second on one row-group bus.
    pub max_rate: f64,
    pub enforce: bool,
}

impl Default for BusModel {
    fn default() -> Self {
        BusModel {
            max_rate: 125e6,
            enforce: false,
        }
    }
}

/// Drops events that arrive on a bus sooner than `1 / max_rate` after the
/// previous accepted one.
#[derive(Debug, Clone, Default)]
pub struct BusArbiter {
    pub model: BusModel,
    last: BTreeMap<(Block, usize), f64>,
    pub dropped: u64,
}

impl BusArbiter {
    pub fn new(model: BusModel) -> Self {
        BusArbiter {
            model,
            last: BTreeMap::new(),
            dropped: 0,
        }
    }

    pub fn admit(&mut self, event: &PresynEvent) -> bool {
        if !self.model.enforce {
            return true;
        }
        let spacing = 1.0 / self.model.max_rate;
        let key = (event.block, event.row_group);
        match self.last.get(&key) {
            // small slack so events exactly one slot apart pass
            Some(&prev) if event.time - prev < spacing * (1.0 - 1e-9) => {
                self.dropped += 1;
                false
            }
            _ => {
                self.last.insert(key, event.time);
                true
            }
        }
    }
}

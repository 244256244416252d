//! Per-synapse correlation sensors and the synchronous kernel interface that
//! reads synapse state and writes back weights, addresses and neuron
//! parameters.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::chip::{ChipConfig, CompartmentId, ParamKind, ADDRESSES_PER_BUS, SIX_BIT_MAX};

#[derive(Debug, Error, PartialEq)]
pub enum PlasticityError {
    #[error("row {row}: no unused candidate address left in the pool")]
    PoolExhausted { row: usize },
    #[error("write to row {row} column {column}: {what} {value} exceeds 6 bits")]
    OutOfRange {
        row: usize,
        column: usize,
        what: &'static str,
        value: u8,
    },
    #[error("write references missing synapse row {row} column {column}")]
    NoSuchSynapse { row: usize, column: usize },
    #[error("parameter write to {0} is outside the chip")]
    NoSuchCompartment(CompartmentId),
}

/// Amplitudes and time constants of the exponential pairing kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorParams {
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            a_plus: 1.0,
            a_minus: 1.0,
            tau_plus: 5e-6,
            tau_minus: 5e-6,
        }
    }
}

/// Nearest-neighbor correlation sensor of one synapse.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorrelationState {
    pub c_causal: f64,
    pub c_acausal: f64,
    pub last_pre: Option<f64>,
    pub last_post: Option<f64>,
}

impl CorrelationState {
    /// A pre-synaptic event at `t` pairs with the latest unpaired post event.
    pub fn on_pre(&mut self, t: f64, p: &SensorParams) {
        if let Some(post) = self.last_post.take() {
            self.c_acausal += p.a_minus * libm::exp(-(t - post) / p.tau_minus);
        }
        self.last_pre = Some(t);
    }

    /// A post-synaptic event at `t` pairs with the latest unpaired pre event.
    pub fn on_post(&mut self, t: f64, p: &SensorParams) {
        if let Some(pre) = self.last_pre.take() {
            self.c_causal += p.a_plus * libm::exp(-(t - pre) / p.tau_plus);
        }
        self.last_post = Some(t);
    }
}

/// Sensors for every cell of every synapse row, indexed like
/// `ChipConfig::rows`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    rows: Vec<Vec<CorrelationState>>,
}

impl SensorArray {
    pub fn new(chip: &ChipConfig) -> Self {
        SensorArray {
            rows: chip
                .rows
                .iter()
                .map(|r| vec![CorrelationState::default(); r.cells.len()])
                .collect(),
        }
    }

    pub fn get(&self, row: usize, column: usize) -> &CorrelationState {
        &self.rows[row][column]
    }

    pub fn get_mut(&mut self, row: usize, column: usize) -> &mut CorrelationState {
        &mut self.rows[row][column]
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseView {
    pub row: usize,
    pub column: usize,
    pub weight: u8,
    pub address: u8,
    pub c_causal: f64,
    pub c_acausal: f64,
}

impl SynapseView {
    pub fn established(&self) -> bool {
        self.weight > 0
    }
}

/// Snapshot handed to a kernel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelView {
    /// Grouped by row in request order, columns ascending.
    pub synapses: Vec<SynapseView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynapseWrite {
    pub row: usize,
    pub column: usize,
    pub weight: u8,
    pub address: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamWrite {
    pub compartment: CompartmentId,
    pub param: ParamKind,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelWrites {
    pub synapses: Vec<SynapseWrite>,
    pub params: Vec<ParamWrite>,
}

/// One changed synapse, as written to the rewiring log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewireRecord {
    pub time: f64,
    pub row: usize,
    pub column: usize,
    pub old_address: u8,
    pub new_address: u8,
    pub old_weight: u8,
    pub new_weight: u8,
}

/// Snapshots the given rows and zeroes their accumulators.
pub fn kernel_read_reset(
    chip: &ChipConfig,
    sensors: &mut SensorArray,
    rows: &[usize],
) -> KernelView {
    let mut synapses = Vec::new();
    for &row in rows {
        for (column, cell) in chip.rows[row].cells.iter().enumerate() {
            let s = sensors.get_mut(row, column);
            synapses.push(SynapseView {
                row,
                column,
                weight: cell.weight,
                address: cell.address,
                c_causal: s.c_causal,
                c_acausal: s.c_acausal,
            });
            s.c_causal = 0.0;
            s.c_acausal = 0.0;
        }
    }
    KernelView { synapses }
}

/// Applies kernel writes to the chip. Synapse writes are validated before
/// anything changes; returns a record for every synapse that changed.
pub fn apply_writes(
    chip: &mut ChipConfig,
    writes: &KernelWrites,
    time: f64,
) -> Result<Vec<RewireRecord>, PlasticityError> {
    for w in &writes.synapses {
        if chip
            .rows
            .get(w.row)
            .and_then(|r| r.cells.get(w.column))
            .is_none()
        {
            return Err(PlasticityError::NoSuchSynapse {
                row: w.row,
                column: w.column,
            });
        }
        for (what, value) in [("weight", w.weight), ("address", w.address)] {
            if value > SIX_BIT_MAX {
                return Err(PlasticityError::OutOfRange {
                    row: w.row,
                    column: w.column,
                    what,
                    value,
                });
            }
        }
    }
    for p in &writes.params {
        if p.compartment.column >= chip.n_columns {
            return Err(PlasticityError::NoSuchCompartment(p.compartment));
        }
    }
    let mut log = Vec::new();
    for w in &writes.synapses {
        let cell = &mut chip.rows[w.row].cells[w.column];
        if cell.weight != w.weight || cell.address != w.address {
            log.push(RewireRecord {
                time,
                row: w.row,
                column: w.column,
                old_address: cell.address,
                new_address: w.address,
                old_weight: cell.weight,
                new_weight: w.weight,
            });
            cell.weight = w.weight;
            cell.address = w.address;
        }
    }
    for p in &writes.params {
        chip.compartment_mut(p.compartment)
            .params
            .set(p.param, p.value);
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralParams {
    /// Minimum causal correlation for establishing a synapse.
    pub theta_corr: f64,
    pub w_init: u8,
    /// Established synapses below this weight are replaced.
    pub w_min: u8,
    /// Candidate addresses for rows without an entry in `row_pools`.
    pub pool: Vec<u8>,
    /// Per-row overrides, keyed by row position.
    pub row_pools: Vec<(usize, Vec<u8>)>,
    pub rng_seed: u64,
}

impl Default for StructuralParams {
    fn default() -> Self {
        StructuralParams {
            theta_corr: 1.0,
            w_init: 32,
            w_min: 8,
            pool: (0..ADDRESSES_PER_BUS as u8).collect(),
            row_pools: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl StructuralParams {
    pub fn pool_for(&self, row: usize) -> &[u8] {
        self.row_pools
            .iter()
            .find(|(r, _)| *r == row)
            .map(|(_, p)| p.as_slice())
            .unwrap_or(&self.pool)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.w_init == 0 || self.w_init > SIX_BIT_MAX {
            return Err(format!("w_init must be in 1..=63, got {}", self.w_init));
        }
        if self.w_min >= self.w_init {
            return Err(format!(
                "w_min ({}) must be below w_init ({})",
                self.w_min, self.w_init
            ));
        }
        let pools = std::iter::once(&self.pool).chain(self.row_pools.iter().map(|(_, p)| p));
        for pool in pools {
            if let Some(a) = pool.iter().find(|&&a| a > SIX_BIT_MAX) {
                return Err(format!("pool address {a} exceeds 6 bits"));
            }
        }
        Ok(())
    }
}

/// Keeps correlated synapses, establishes new ones and rewires the rest to
/// random unused addresses of their row's pool.
pub fn structural_step<R: Rng>(
    view: &KernelView,
    params: &StructuralParams,
    rng: &mut R,
) -> Result<KernelWrites, PlasticityError> {
    let mut writes = KernelWrites::default();
    let mut start = 0;
    while start < view.synapses.len() {
        let row = view.synapses[start].row;
        let end = start
            + view.synapses[start..]
                .iter()
                .take_while(|s| s.row == row)
                .count();
        let cells = &view.synapses[start..end];
        let mut used: BTreeSet<u8> = cells.iter().map(|s| s.address).collect();
        let mut established: BTreeSet<u8> = cells
            .iter()
            .filter(|s| s.established() && s.weight >= params.w_min)
            .map(|s| s.address)
            .collect();
        for s in cells {
            let keep_established = s.established() && s.weight >= params.w_min;
            if keep_established {
                continue;
            }
            let promote = !s.established()
                && s.c_causal >= params.theta_corr
                && !established.contains(&s.address);
            if promote {
                established.insert(s.address);
                writes.synapses.push(SynapseWrite {
                    row,
                    column: s.column,
                    weight: params.w_init,
                    address: s.address,
                });
                continue;
            }
            let candidates: Vec<u8> = params
                .pool_for(row)
                .iter()
                .copied()
                .filter(|a| !used.contains(a))
                .collect();
            if candidates.is_empty() {
                return Err(PlasticityError::PoolExhausted { row });
            }
            let address = candidates[rng.random_range(0..candidates.len())];
            used.insert(address);
            writes.synapses.push(SynapseWrite {
                row,
                column: s.column,
                weight: 0,
                address,
            });
        }
        start = end;
    }
    Ok(writes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpParams {
    pub eta: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams { eta: 1.0 }
    }
}

/// `weight' = clamp(weight + round(eta * (c_causal - c_acausal)), 0, 63)`;
/// writes only synapses whose weight changes.
pub fn stdp_kernel(view: &KernelView, params: &StdpParams) -> KernelWrites {
    let synapses = view
        .synapses
        .iter()
        .filter_map(|s| {
            let step = (params.eta * (s.c_causal - s.c_acausal)).round();
            let weight = (f64::from(s.weight) + step).clamp(0.0, f64::from(SIX_BIT_MAX)) as u8;
            (weight != s.weight).then_some(SynapseWrite {
                row: s.row,
                column: s.column,
                weight,
                address: s.address,
            })
        })
        .collect();
    KernelWrites {
        synapses,
        params: Vec::new(),
    }
}

pub fn format_rewire_log(chip: &ChipConfig, log: &[RewireRecord]) -> String {
    let mut out = String::from("time_us\trow\tcolumn\told_addr\tnew_addr\told_w\tnew_w\n");
    for r in log {
        let row = &chip.rows[r.row];
        let _ = writeln!(
            out,
            "{:.4}\t{}:{}\t{}\t{}\t{}\t{}\t{}",
            r.time * 1e6,
            row.block,
            row.index,
            r.column,
            r.old_address,
            r.new_address,
            r.old_weight,
            r.new_weight
        );
    }
    out
}

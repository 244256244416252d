//! Fixed-step integration of membrane nodes, dendritic lines, somatic lines
//! and the switched ion-channel circuits.
//!
//! One step from `t_n` to `t_{n+1}` runs, in order: event delivery at `t_n`,
//! exact line decay, somatic-line solve at `V(t_n)`, exponential Euler for
//! every membrane node, ion-channel update at `V(t_{n+1})`, probe recording.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::chip::{
    validate_config, AnalogParams, Block, ChipConfig, CompartmentId, Line, Mode, SpikeType,
    Violation,
};
use crate::events::{PresynEvent, SpikeRecord};
use crate::network::{derive_network, CircuitGraph, Coupling};
use crate::plasticity::{
    apply_writes, kernel_read_reset, KernelView, KernelWrites, PlasticityError, RewireRecord,
    SensorArray, SensorParams,
};
use crate::router::{route_spike, BusArbiter, BusModel, Delivery, RoutingTable, RowIndex};

/// Voltages outside `±GUARD_BAND` volts abort the run.
pub const GUARD_BAND: f64 = 10.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid chip configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),
    #[error("invalid engine configuration: {0}")]
    InvalidEngineConfig(String),
    #[error("somatic line segment {block} columns {start}..{end}: bypasses of {a} and {b} short two different membranes")]
    MultipleBypassConflict {
        block: Block,
        start: usize,
        end: usize,
        a: CompartmentId,
        b: CompartmentId,
    },
    #[error("numerical overflow at t = {:.4} us: node {node} ({}) reached {voltage} V", .time * 1e6, join(.compartments))]
    NumericalOverflow {
        time: f64,
        node: usize,
        voltage: f64,
        compartments: Vec<CompartmentId>,
    },
    #[error("current stimulus given but no compartment has current input enabled")]
    NoCurrentTarget,
    #[error(transparent)]
    Plasticity(#[from] PlasticityError),
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A recorded quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Voltage of the membrane node the compartment belongs to.
    Membrane(CompartmentId),
    Line(CompartmentId, Line),
    /// Somatic-line segment covering the compartment's column; NaN while
    /// floating.
    SomaLine(CompartmentId),
    /// 1 while the ion-channel circuit holds its alternate setting.
    AltMode(CompartmentId),
}

impl Probe {
    fn compartment(&self) -> CompartmentId {
        match *self {
            Probe::Membrane(c) | Probe::Line(c, _) | Probe::SomaLine(c) | Probe::AltMode(c) => c,
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Membrane(c) => write!(f, "v:{c}"),
            Probe::Line(c, l) => write!(f, "line:{c}:{l}"),
            Probe::SomaLine(c) => write!(f, "soma:{c}"),
            Probe::AltMode(c) => write!(f, "alt:{c}"),
        }
    }
}

impl FromStr for Probe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("probe `{s}` has no kind prefix"))?;
        match kind {
            "v" => Ok(Probe::Membrane(rest.parse()?)),
            "soma" => Ok(Probe::SomaLine(rest.parse()?)),
            "alt" => Ok(Probe::AltMode(rest.parse()?)),
            "line" => {
                let (comp, line) = rest.rsplit_once(':').ok_or_else(|| {
                    format!("line probe `{s}` needs `line:<block>:<column>:<A|B>`")
                })?;
                Ok(Probe::Line(comp.parse()?, line.parse()?))
            }
            other => Err(format!("unknown probe kind `{other}` in `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub dt: f64,
    pub t_end: f64,
    pub probes: Vec<Probe>,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Exponential-term clamp. `None` means `C_mem * 1 V/us` per compartment.
    pub i_exp_max: Option<f64>,
    /// Steps between a spike and the events it is routed to.
    pub loop_delay_steps: u64,
    pub bus: BusModel,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dt: 1e-8,
            t_end: 100e-6,
            probes: Vec::new(),
            record_stride: 1,
            i_exp_max: None,
            loop_delay_steps: 1,
            bus: BusModel::default(),
        }
    }
}

impl EngineConfig {
    pub fn check(&self, chip: &ChipConfig) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidEngineConfig(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if let Some(max) = self.i_exp_max {
            if !(max >= 0.0) {
                return bad(format!("i_exp_max must be non-negative, got {max}"));
            }
        }
        let min_tau = chip
            .compartments
            .iter()
            .filter(|c| c.mode != Mode::Disabled)
            .flat_map(|c| [c.params.tau_syn_a, c.params.tau_syn_b])
            .filter(|&t| t > 0.0)
            .fold(f64::INFINITY, f64::min);
        if self.dt > min_tau / 10.0 {
            return bad(format!(
                "dt = {} s exceeds a tenth of the shortest synaptic time constant ({} s)",
                self.dt, min_tau
            ));
        }
        for p in &self.probes {
            if p.compartment().column >= chip.n_columns {
                return bad(format!("probe {p} is outside the chip"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }
}

/// Time-varying state of one compartment circuit. The membrane voltage
/// lives on its node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompartmentState {
    /// Deviation of dendritic lines A and B from rest.
    pub line: [f64; 2],
    /// Steps left in the alternate setting.
    pub monoflop_steps: u64,
    pub in_alt_mode: bool,
    pub comparator_high: bool,
}

/// Linearized current `source - conductance * V`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drive {
    pub conductance: f64,
    pub source: f64,
}

impl Drive {
    pub fn add_conductance(&mut self, g: f64, reversal: f64) {
        self.conductance += g;
        self.source += g * reversal;
    }

    pub fn add_current(&mut self, i: f64) {
        self.source += i;
    }

    pub fn current(&self, v: f64) -> f64 {
        self.source - self.conductance * v
    }

    /// One exponential Euler step of `C dV/dt = current(V)`.
    pub fn advance(&self, v: f64, capacitance: f64, dt: f64) -> f64 {
        if self.conductance > 0.0 {
            let v_inf = self.source / self.conductance;
            v_inf + (v - v_inf) * libm::exp(-self.conductance * dt / capacitance)
        } else {
            v + self.current(v) * dt / capacitance
        }
    }
}

/// Exponential soft-threshold current, clamped at `i_max`.
pub fn exp_term_current(p: &AnalogParams, v: f64, i_max: f64) -> f64 {
    (p.g_leak * p.delta_t * libm::exp((v - p.v_exp_th) / p.delta_t)).min(i_max)
}

/// Drive from the compartment's own circuit: active leak or alternate
/// setting, both synaptic inputs and the exponential term.
pub fn local_drive(
    p: &AnalogParams,
    exp_term: bool,
    state: &CompartmentState,
    v: f64,
    i_exp_max: f64,
) -> Drive {
    let mut d = Drive::default();
    if state.in_alt_mode {
        d.add_conductance(p.g_alt, p.v_alt);
    } else {
        d.add_conductance(p.g_leak, p.v_leak);
    }
    for line in [Line::A, Line::B] {
        let g = p.g_syn_scale(line) * state.line[line.index()];
        d.add_conductance(g, p.e_rev(line));
    }
    if exp_term {
        d.add_current(exp_term_current(p, v, i_exp_max));
    }
    d
}

/// Adds the charge of one synaptic pulse to a dendritic line.
pub fn apply_synaptic_event(
    state: &mut CompartmentState,
    p: &AnalogParams,
    line: Line,
    weight: u8,
) {
    state.line[line.index()] += p.line_step(weight);
}

/// Comparator and mono-flop. Returns the spike type on a rising edge that
/// arrives while the circuit is in its normal setting.
pub fn ion_channel_update(
    state: &mut CompartmentState,
    mode: Mode,
    v: f64,
    v_th: f64,
    pulse_steps: u64,
) -> Option<SpikeType> {
    let was_alt = state.in_alt_mode;
    if state.in_alt_mode {
        state.monoflop_steps = state.monoflop_steps.saturating_sub(1);
        if state.monoflop_steps == 0 {
            state.in_alt_mode = false;
        }
    }
    let high = v >= v_th;
    let rising = high && !state.comparator_high;
    state.comparator_high = high;
    if !rising || was_alt {
        return None;
    }
    let spike_type = mode.spike_type()?;
    if pulse_steps > 0 {
        state.in_alt_mode = true;
        state.monoflop_steps = pulse_steps;
    }
    Some(spike_type)
}

/// Voltage of a somatic-line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentVoltage {
    Driven(f64),
    /// Shorted to a membrane node.
    Bypassed {
        node: usize,
        voltage: f64,
    },
    /// No bypass and zero total conductance.
    Floating,
}

impl SegmentVoltage {
    pub fn voltage(&self) -> Option<f64> {
        match *self {
            SegmentVoltage::Driven(v) | SegmentVoltage::Bypassed { voltage: v, .. } => Some(v),
            SegmentVoltage::Floating => None,
        }
    }
}

pub fn solve_soma_lines(
    graph: &CircuitGraph,
    v: &[f64],
) -> Result<Vec<SegmentVoltage>, EngineError> {
    let mut out = Vec::with_capacity(graph.segments.len());
    for seg in &graph.segments {
        if let Some((a, b)) = seg.bypass_conflict() {
            return Err(EngineError::MultipleBypassConflict {
                block: seg.block,
                start: seg.columns.start,
                end: seg.columns.end,
                a,
                b,
            });
        }
        out.push(solve_segment(seg, v));
    }
    Ok(out)
}

fn solve_segment(seg: &crate::network::SomaSegment, v: &[f64]) -> SegmentVoltage {
    if let Some(node) = seg.bypass_node() {
        return SegmentVoltage::Bypassed {
            node,
            voltage: v[node],
        };
    }
    let (mut g_sum, mut gv_sum) = (0.0, 0.0);
    for tap in &seg.taps {
        if let Coupling::Conductance(g) = tap.coupling {
            g_sum += g;
            gv_sum += g * v[tap.node];
        }
    }
    if g_sum > 0.0 {
        SegmentVoltage::Driven(gv_sum / g_sum)
    } else {
        SegmentVoltage::Floating
    }
}

/// Square current pulse into the compartment with current input enabled.
/// Start and stop snap to the nearest step; the pulse drives the steps
/// `start <= t_n < stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentPulse {
    pub start: f64,
    pub stop: f64,
    /// Amperes.
    pub amplitude: f64,
}

/// Recorded probe values, one column per probe.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl Trace {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Columnar text: a header line, then one record per sample.
pub fn format_trace(trace: &Trace) -> String {
    let mut out = String::from("time_us");
    for n in &trace.names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (i, t) in trace.times.iter().enumerate() {
        let _ = write!(out, "{:.4}", t * 1e6);
        for col in &trace.columns {
            let _ = write!(out, "\t{:.9}", col[i]);
        }
        out.push('\n');
    }
    out
}

/// One stay in the alternate setting. `end` is `None` if still active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltInterval {
    pub compartment: CompartmentId,
    pub start: f64,
    pub end: Option<f64>,
    pub start_step: u64,
    pub end_step: Option<u64>,
}

/// Per-compartment values that only change with the configuration.
#[derive(Debug, Clone)]
struct Derived {
    node: usize,
    decay: [f64; 2],
    pulse_steps: u64,
    i_exp_max: f64,
}

pub struct Simulation {
    chip: ChipConfig,
    graph: CircuitGraph,
    cfg: EngineConfig,
    derived: Vec<Derived>,
    rows: RowIndex,
    /// Rows of each block, for post-synaptic sensor updates.
    block_rows: [Vec<usize>; 2],
    sensors: SensorArray,
    sensor_params: SensorParams,
    routing: RoutingTable,
    arbiter: BusArbiter,
    v: Vec<f64>,
    comp: Vec<CompartmentState>,
    segments: Vec<SegmentVoltage>,
    drives: Vec<Drive>,
    queue: BTreeMap<u64, Vec<PresynEvent>>,
    current: Vec<CurrentPulse>,
    current_node: Option<usize>,
    step: u64,
    spikes: Vec<SpikeRecord>,
    trace: Trace,
    open_alt: Vec<Option<u64>>,
    alt_intervals: Vec<AltInterval>,
    delivery: Delivery,
}

impl Simulation {
    pub fn new(
        chip: ChipConfig,
        cfg: EngineConfig,
        sensor_params: SensorParams,
        routing: RoutingTable,
    ) -> Result<Self, EngineError> {
        let violations = validate_config(&chip);
        if !violations.is_empty() {
            return Err(EngineError::InvalidConfig(violations));
        }
        cfg.check(&chip)?;
        let graph = derive_network(&chip);
        let mut v = vec![0.0; graph.nodes.len()];
        for (node, m) in graph.nodes.iter().enumerate() {
            let (mut g, mut gv, mut plain) = (0.0, 0.0, 0.0);
            for &id in &m.members {
                let p = &chip.compartment(id).params;
                g += p.g_leak;
                gv += p.g_leak * p.v_leak;
                plain += p.v_leak;
            }
            v[node] = if g > 0.0 {
                gv / g
            } else {
                plain / m.members.len() as f64
            };
        }
        let segments = solve_soma_lines(&graph, &v)?;
        let mut block_rows = [Vec::new(), Vec::new()];
        for (pos, row) in chip.rows.iter().enumerate() {
            block_rows[row.block.index()].push(pos);
        }
        let n_comp = chip.compartments.len();
        let trace = Trace {
            names: cfg.probes.iter().map(ToString::to_string).collect(),
            times: Vec::new(),
            columns: vec![Vec::new(); cfg.probes.len()],
        };
        let mut sim = Simulation {
            rows: RowIndex::new(&chip),
            sensors: SensorArray::new(&chip),
            arbiter: BusArbiter::new(cfg.bus),
            drives: vec![Drive::default(); graph.nodes.len()],
            derived: Vec::new(),
            comp: vec![CompartmentState::default(); n_comp],
            open_alt: vec![None; n_comp],
            block_rows,
            chip,
            graph,
            cfg,
            sensor_params,
            routing,
            v,
            segments,
            queue: BTreeMap::new(),
            current: Vec::new(),
            current_node: None,
            step: 0,
            spikes: Vec::new(),
            trace,
            alt_intervals: Vec::new(),
            delivery: Delivery::default(),
        };
        sim.refresh_derived();
        for i in 0..n_comp {
            let v = sim.v[sim.derived[i].node];
            sim.comp[i].comparator_high = v >= sim.chip.compartments[i].params.v_th;
        }
        sim.record();
        Ok(sim)
    }

    fn refresh_derived(&mut self) {
        let dt = self.cfg.dt;
        self.derived = self
            .chip
            .compartments
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let p = &c.params;
                let decay = |tau: f64| if tau > 0.0 { libm::exp(-dt / tau) } else { 0.0 };
                Derived {
                    node: self.graph.node_of[i],
                    decay: [decay(p.tau_syn_a), decay(p.tau_syn_b)],
                    pulse_steps: (p.t_pulse / dt).round() as u64,
                    i_exp_max: self.cfg.i_exp_max.unwrap_or(p.c_mem * 1e6),
                }
            })
            .collect();
    }

    /// Queues events; each is delivered at the step nearest its time, or at
    /// the next step if that lies in the past.
    pub fn schedule(&mut self, events: &[PresynEvent]) {
        for e in events {
            let step = ((e.time / self.cfg.dt).round() as u64).max(self.step);
            self.queue.entry(step).or_default().push(*e);
        }
    }

    pub fn set_current(&mut self, pulses: Vec<CurrentPulse>) -> Result<(), EngineError> {
        if pulses.is_empty() {
            self.current_node = None;
            self.current.clear();
            return Ok(());
        }
        let target = self
            .chip
            .current_input_target()
            .ok_or(EngineError::NoCurrentTarget)?;
        self.current_node = Some(self.graph.node_of(target));
        self.current = pulses;
        Ok(())
    }

    pub fn chip(&self) -> &ChipConfig {
        &self.chip
    }

    pub fn graph(&self) -> &CircuitGraph {
        &self.graph
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.cfg.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn voltage(&self, id: CompartmentId) -> f64 {
        self.v[self.graph.node_of(id)]
    }

    pub fn node_voltages(&self) -> &[f64] {
        &self.v
    }

    /// Overrides the voltage of the node containing `id`.
    pub fn set_voltage(&mut self, id: CompartmentId, v: f64) {
        let node = self.graph.node_of(id);
        self.v[node] = v;
    }

    pub fn state(&self, id: CompartmentId) -> &CompartmentState {
        &self.comp[id.index(self.chip.n_columns)]
    }

    pub fn segment_voltages(&self) -> &[SegmentVoltage] {
        &self.segments
    }

    pub fn spikes(&self) -> &[SpikeRecord] {
        &self.spikes
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn dropped_events(&self) -> u64 {
        self.arbiter.dropped
    }

    pub fn sensors(&self) -> &SensorArray {
        &self.sensors
    }

    /// Closed intervals followed by the ones still active.
    pub fn alt_intervals(&self) -> Vec<AltInterval> {
        let dt = self.cfg.dt;
        let mut out = self.alt_intervals.clone();
        for (i, open) in self.open_alt.iter().enumerate() {
            if let Some(start_step) = *open {
                out.push(AltInterval {
                    compartment: CompartmentId::from_index(i, self.chip.n_columns),
                    start: start_step as f64 * dt,
                    end: None,
                    start_step,
                    end_step: None,
                });
            }
        }
        out
    }

    /// Total membrane current into `node` at the present state.
    pub fn membrane_current(&self, node: usize) -> f64 {
        let mut drives = vec![Drive::default(); self.graph.nodes.len()];
        self.collect_drives(&mut drives);
        drives[node].current(self.v[node])
    }

    pub fn kernel_read_reset(&mut self, rows: &[usize]) -> KernelView {
        kernel_read_reset(&self.chip, &mut self.sensors, rows)
    }

    /// Applies kernel writes between steps.
    pub fn apply_writes(
        &mut self,
        writes: &KernelWrites,
    ) -> Result<Vec<RewireRecord>, EngineError> {
        let now = self.time();
        let log = apply_writes(&mut self.chip, writes, now)?;
        if !writes.params.is_empty() {
            let violations = validate_config(&self.chip);
            if !violations.is_empty() {
                return Err(EngineError::InvalidConfig(violations));
            }
            // switches are not writable, so node numbering is unchanged
            self.graph = derive_network(&self.chip);
            self.refresh_derived();
        }
        Ok(log)
    }

    pub fn run(&mut self) -> Result<(), EngineError> {
        let end = self.cfg.steps();
        while self.step < end {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until the clock reaches `t` (rounded to the grid).
    pub fn run_until(&mut self, t: f64) -> Result<(), EngineError> {
        let end = (t / self.cfg.dt).round() as u64;
        while self.step < end {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), EngineError> {
        let dt = self.cfg.dt;
        let n = self.step;
        let t_now = n as f64 * dt;
        let n_cols = self.chip.n_columns;

        // (1) events due now
        if let Some(mut batch) = self.queue.remove(&n) {
            batch.sort_by_key(|e| (e.block, e.row_group, e.address));
            self.delivery.injections.clear();
            self.delivery.matches.clear();
            for e in &batch {
                if self.arbiter.admit(e) {
                    self.rows.deliver_into(e, &self.chip, &mut self.delivery);
                }
            }
            for m in &self.delivery.matches {
                self.sensors
                    .get_mut(m.row, m.column)
                    .on_pre(t_now, &self.sensor_params);
            }
            for inj in &self.delivery.injections {
                let i = inj.compartment.index(n_cols);
                let c = &self.chip.compartments[i];
                if c.mode != Mode::Disabled {
                    apply_synaptic_event(&mut self.comp[i], &c.params, inj.line, inj.weight);
                }
            }
        }

        // (2) exact line decay
        for (state, d) in self.comp.iter_mut().zip(&self.derived) {
            state.line[0] *= d.decay[0];
            state.line[1] *= d.decay[1];
        }

        // (3) somatic lines at V(t_n), (4) exponential Euler
        for (seg, out) in self.graph.segments.iter().zip(self.segments.iter_mut()) {
            *out = solve_segment(seg, &self.v);
        }
        let mut drives = std::mem::take(&mut self.drives);
        self.collect_drives(&mut drives);
        for (node, d) in drives.iter().enumerate() {
            let c = self.graph.nodes[node].capacitance;
            let v = d.advance(self.v[node], c, dt);
            if !(v.abs() <= GUARD_BAND) {
                return Err(EngineError::NumericalOverflow {
                    time: t_now + dt,
                    node,
                    voltage: v,
                    compartments: self.graph.nodes[node].members.clone(),
                });
            }
            self.v[node] = v;
        }
        self.drives = drives;

        // (5) ion channels at t_{n+1}
        self.step = n + 1;
        let t_next = self.step as f64 * dt;
        for i in 0..self.comp.len() {
            let c = &self.chip.compartments[i];
            let d = &self.derived[i];
            let was_alt = self.comp[i].in_alt_mode;
            let fired = ion_channel_update(
                &mut self.comp[i],
                c.mode,
                self.v[d.node],
                c.params.v_th,
                d.pulse_steps,
            );
            let id = CompartmentId::from_index(i, n_cols);
            if was_alt && !self.comp[i].in_alt_mode {
                let start_step = self.open_alt[i].take().unwrap_or(n);
                self.alt_intervals.push(AltInterval {
                    compartment: id,
                    start: start_step as f64 * dt,
                    end: Some(t_next),
                    start_step,
                    end_step: Some(self.step),
                });
            }
            if self.comp[i].in_alt_mode && !was_alt {
                self.open_alt[i] = Some(self.step);
            }
            if let Some(spike_type) = fired {
                self.emit(SpikeRecord {
                    time: t_next,
                    compartment: id,
                    spike_type,
                });
            }
        }

        // (6) probes
        if self.step % self.cfg.record_stride as u64 == 0 {
            self.record();
        }
        Ok(())
    }

    fn emit(&mut self, spike: SpikeRecord) {
        let column = spike.compartment.column;
        for &row in &self.block_rows[spike.compartment.block.index()] {
            self.sensors
                .get_mut(row, column)
                .on_post(spike.time, &self.sensor_params);
        }
        let delay = self.cfg.loop_delay_steps as f64 * self.cfg.dt;
        let due = self.step + self.cfg.loop_delay_steps;
        for e in route_spike(&spike, &self.routing, delay) {
            self.queue.entry(due).or_default().push(e);
        }
        self.spikes.push(spike);
    }

    fn collect_drives(&self, drives: &mut [Drive]) {
        for d in drives.iter_mut() {
            *d = Drive::default();
        }
        for (i, c) in self.chip.compartments.iter().enumerate() {
            let node = self.derived[i].node;
            drives[node] = sum(
                drives[node],
                local_drive(
                    &c.params,
                    c.exp_term_enabled,
                    &self.comp[i],
                    self.v[node],
                    self.derived[i].i_exp_max,
                ),
            );
        }
        for (seg, sol) in self.graph.segments.iter().zip(&self.segments) {
            match *sol {
                SegmentVoltage::Floating => {}
                SegmentVoltage::Driven(v_line) => {
                    for tap in &seg.taps {
                        if let Coupling::Conductance(g) = tap.coupling {
                            drives[tap.node].add_conductance(g, v_line);
                        }
                    }
                }
                SegmentVoltage::Bypassed { node: hub, voltage } => {
                    for tap in &seg.taps {
                        if let Coupling::Conductance(g) = tap.coupling {
                            if tap.node != hub {
                                drives[tap.node].add_conductance(g, voltage);
                                drives[hub].add_conductance(g, self.v[tap.node]);
                            }
                        }
                    }
                }
            }
        }
        if let Some(node) = self.current_node {
            let on_grid = |time: f64| (time / self.cfg.dt).round().max(0.0) as u64;
            let i: f64 = self
                .current
                .iter()
                .filter(|p| on_grid(p.start) <= self.step && self.step < on_grid(p.stop))
                .map(|p| p.amplitude)
                .sum();
            drives[node].add_current(i);
        }
    }

    fn record(&mut self) {
        let n_cols = self.chip.n_columns;
        self.trace.times.push(self.time());
        for (probe, col) in self.cfg.probes.iter().zip(self.trace.columns.iter_mut()) {
            let value = match *probe {
                Probe::Membrane(c) => self.v[self.graph.node_of(c)],
                Probe::Line(c, l) => self.comp[c.index(n_cols)].line[l.index()],
                Probe::SomaLine(c) => self
                    .graph
                    .segment_at(c.block, c.column)
                    .and_then(|s| solve_segment(&self.graph.segments[s], &self.v).voltage())
                    .unwrap_or(f64::NAN),
                Probe::AltMode(c) => f64::from(u8::from(self.comp[c.index(n_cols)].in_alt_mode)),
            };
            col.push(value);
        }
    }
}

fn sum(a: Drive, b: Drive) -> Drive {
    Drive {
        conductance: a.conductance + b.conductance,
        source: a.source + b.source,
    }
}

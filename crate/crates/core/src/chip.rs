//! Static configuration of the chip: compartments, synapse rows, switches and
//! the analog parameters of each compartment circuit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Somatic-line segment switches sit between every `SOMA_SEGMENT_PERIOD`
/// compartments.
pub const SOMA_SEGMENT_PERIOD: usize = 4;

/// Upper bound on distinct analog values stored per compartment.
pub const ANALOG_PARAM_BUDGET: usize = 24;

/// Largest value of a 6-bit field (address or weight).
pub const SIX_BIT_MAX: u8 = 63;

/// Number of addresses a row-group bus can carry.
pub const ADDRESSES_PER_BUS: usize = 64;

/// Duration of the current pulse a synapse sinks from its dendritic line.
pub const SYNAPTIC_PULSE_WIDTH: f64 = 4e-9;

/// Capacitance of a dendritic input line. Only the ratio
/// `i_unit * SYNAPTIC_PULSE_WIDTH / LINE_CAPACITANCE` matters.
pub const LINE_CAPACITANCE: f64 = 1e-12;

/// Time constants on the chip are this factor shorter than in biology.
pub const ACCELERATION_FACTOR: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Upper,
    Lower,
}

impl Block {
    pub const ALL: [Block; 2] = [Block::Upper, Block::Lower];

    pub fn index(self) -> usize {
        match self {
            Block::Upper => 0,
            Block::Lower => 1,
        }
    }

    pub fn other(self) -> Block {
        match self {
            Block::Upper => Block::Lower,
            Block::Lower => Block::Upper,
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Block::Upper => "upper",
            Block::Lower => "lower",
        })
    }
}

impl FromStr for Block {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "upper" | "u" => Ok(Block::Upper),
            "lower" | "l" => Ok(Block::Lower),
            other => Err(format!("unknown block `{other}`")),
        }
    }
}

/// Dendritic input line of a compartment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Line {
    A,
    B,
}

impl Line {
    pub fn index(self) -> usize {
        match self {
            Line::A => 0,
            Line::B => 1,
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Line::A => "A",
            Line::B => "B",
        })
    }
}

impl FromStr for Line {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Line::A),
            "B" | "b" => Ok(Line::B),
            other => Err(format!("unknown dendritic line `{other}`")),
        }
    }
}

/// Configuration of the compartment's ion-channel circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ion channel circuit switched off; leak only.
    Passive,
    Na,
    Ca,
    Nmda,
    /// Compartment not in use: no spikes and no synaptic input.
    #[default]
    Disabled,
}

impl Mode {
    pub fn spike_type(self) -> Option<SpikeType> {
        match self {
            Mode::Na => Some(SpikeType::Na),
            Mode::Ca => Some(SpikeType::Ca),
            Mode::Nmda => Some(SpikeType::Nmda),
            Mode::Passive | Mode::Disabled => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikeType {
    Na,
    Ca,
    Nmda,
}

impl fmt::Display for SpikeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpikeType::Na => "na",
            SpikeType::Ca => "ca",
            SpikeType::Nmda => "nmda",
        })
    }
}

impl FromStr for SpikeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "na" => Ok(SpikeType::Na),
            "ca" => Ok(SpikeType::Ca),
            "nmda" => Ok(SpikeType::Nmda),
            other => Err(format!("unknown spike type `{other}`")),
        }
    }
}

/// Position of a compartment circuit on the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompartmentId {
    pub block: Block,
    pub column: usize,
}

impl CompartmentId {
    pub fn new(block: Block, column: usize) -> Self {
        CompartmentId { block, column }
    }

    /// Flat index: upper block first, then lower block.
    pub fn index(self, n_columns: usize) -> usize {
        self.block.index() * n_columns + self.column
    }

    pub fn from_index(index: usize, n_columns: usize) -> Self {
        let block = if index < n_columns {
            Block::Upper
        } else {
            Block::Lower
        };
        CompartmentId {
            block,
            column: index % n_columns,
        }
    }
}

impl fmt::Display for CompartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.block, self.column)
    }
}

impl FromStr for CompartmentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (block, column) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `<block>:<column>`, got `{s}`"))?;
        let column = column
            .parse()
            .map_err(|_| format!("bad column in compartment `{s}`"))?;
        Ok(CompartmentId {
            block: block.parse()?,
            column,
        })
    }
}

/// Analog parameters of one compartment circuit, in SI units on the
/// hardware time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalogParams {
    pub v_leak: f64,
    pub g_leak: f64,
    /// Reversal potential of the alternate setting (reset or plateau level).
    pub v_alt: f64,
    pub g_alt: f64,
    /// Comparator threshold.
    pub v_th: f64,
    /// Mono-flop duration.
    pub t_pulse: f64,
    pub c_mem: f64,
    pub e_rev_a: f64,
    pub e_rev_b: f64,
    pub tau_syn_a: f64,
    pub tau_syn_b: f64,
    /// Transconductance from line deviation to synaptic conductance (S/V).
    pub g_syn_scale_a: f64,
    pub g_syn_scale_b: f64,
    /// Synaptic pulse current per weight LSB.
    pub i_unit: f64,
    pub v_exp_th: f64,
    pub delta_t: f64,
    /// Conductance towards the somatic line.
    pub g_ic: f64,
}

/// Number of analog values held by [`AnalogParams`].
pub const ANALOG_PARAM_COUNT: usize = 17;

const _: () = assert!(ANALOG_PARAM_COUNT <= ANALOG_PARAM_BUDGET);

impl Default for AnalogParams {
    fn default() -> Self {
        AnalogParams {
            v_leak: 0.65,
            g_leak: 2e-7,
            v_alt: 0.5,
            g_alt: 1e-5,
            v_th: 0.9,
            t_pulse: 2e-6,
            c_mem: 2e-12,
            e_rev_a: 1.2,
            e_rev_b: 0.3,
            tau_syn_a: 2e-6,
            tau_syn_b: 2e-6,
            g_syn_scale_a: 1e-6,
            g_syn_scale_b: 1e-6,
            i_unit: 4e-7,
            v_exp_th: 0.8,
            delta_t: 0.02,
            g_ic: 0.0,
        }
    }
}

impl AnalogParams {
    /// Sodium-like point neuron: reset below rest for a short refractory time.
    pub fn na_default() -> Self {
        AnalogParams::default()
    }

    /// Plateau potential: threshold at the NMDA gating voltage, alternate
    /// setting pulls towards the NMDA reversal potential.
    pub fn nmda_default() -> Self {
        AnalogParams {
            v_th: 0.8,
            v_alt: 1.0,
            g_alt: 2e-6,
            t_pulse: 30e-6,
            e_rev_a: 1.0,
            ..AnalogParams::default()
        }
    }

    /// Calcium spike: a shorter, higher-threshold plateau.
    pub fn ca_default() -> Self {
        AnalogParams {
            v_th: 0.85,
            v_alt: 1.05,
            g_alt: 4e-6,
            t_pulse: 15e-6,
            ..AnalogParams::default()
        }
    }

    pub fn tau_syn(&self, line: Line) -> f64 {
        match line {
            Line::A => self.tau_syn_a,
            Line::B => self.tau_syn_b,
        }
    }

    pub fn e_rev(&self, line: Line) -> f64 {
        match line {
            Line::A => self.e_rev_a,
            Line::B => self.e_rev_b,
        }
    }

    pub fn g_syn_scale(&self, line: Line) -> f64 {
        match line {
            Line::A => self.g_syn_scale_a,
            Line::B => self.g_syn_scale_b,
        }
    }

    /// Line deviation added by one synaptic pulse of the given weight.
    pub fn line_step(&self, weight: u8) -> f64 {
        f64::from(weight) * self.i_unit * SYNAPTIC_PULSE_WIDTH / LINE_CAPACITANCE
    }

    pub fn get(&self, param: ParamKind) -> f64 {
        *self.field(param)
    }

    pub fn set(&mut self, param: ParamKind, value: f64) {
        *self.field_mut(param) = value;
    }

    fn field(&self, param: ParamKind) -> &f64 {
        match param {
            ParamKind::VLeak => &self.v_leak,
            ParamKind::GLeak => &self.g_leak,
            ParamKind::VAlt => &self.v_alt,
            ParamKind::GAlt => &self.g_alt,
            ParamKind::VTh => &self.v_th,
            ParamKind::TPulse => &self.t_pulse,
            ParamKind::CMem => &self.c_mem,
            ParamKind::ERevA => &self.e_rev_a,
            ParamKind::ERevB => &self.e_rev_b,
            ParamKind::TauSynA => &self.tau_syn_a,
            ParamKind::TauSynB => &self.tau_syn_b,
            ParamKind::GSynScaleA => &self.g_syn_scale_a,
            ParamKind::GSynScaleB => &self.g_syn_scale_b,
            ParamKind::IUnit => &self.i_unit,
            ParamKind::VExpTh => &self.v_exp_th,
            ParamKind::DeltaT => &self.delta_t,
            ParamKind::GIc => &self.g_ic,
        }
    }

    fn field_mut(&mut self, param: ParamKind) -> &mut f64 {
        match param {
            ParamKind::VLeak => &mut self.v_leak,
            ParamKind::GLeak => &mut self.g_leak,
            ParamKind::VAlt => &mut self.v_alt,
            ParamKind::GAlt => &mut self.g_alt,
            ParamKind::VTh => &mut self.v_th,
            ParamKind::TPulse => &mut self.t_pulse,
            ParamKind::CMem => &mut self.c_mem,
            ParamKind::ERevA => &mut self.e_rev_a,
            ParamKind::ERevB => &mut self.e_rev_b,
            ParamKind::TauSynA => &mut self.tau_syn_a,
            ParamKind::TauSynB => &mut self.tau_syn_b,
            ParamKind::GSynScaleA => &mut self.g_syn_scale_a,
            ParamKind::GSynScaleB => &mut self.g_syn_scale_b,
            ParamKind::IUnit => &mut self.i_unit,
            ParamKind::VExpTh => &mut self.v_exp_th,
            ParamKind::DeltaT => &mut self.delta_t,
            ParamKind::GIc => &mut self.g_ic,
        }
    }
}

/// Names one analog parameter; used by overrides and plasticity kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    VLeak,
    GLeak,
    VAlt,
    GAlt,
    VTh,
    TPulse,
    CMem,
    ERevA,
    ERevB,
    TauSynA,
    TauSynB,
    GSynScaleA,
    GSynScaleB,
    IUnit,
    VExpTh,
    DeltaT,
    GIc,
}

impl ParamKind {
    pub const ALL: [ParamKind; ANALOG_PARAM_COUNT] = [
        ParamKind::VLeak,
        ParamKind::GLeak,
        ParamKind::VAlt,
        ParamKind::GAlt,
        ParamKind::VTh,
        ParamKind::TPulse,
        ParamKind::CMem,
        ParamKind::ERevA,
        ParamKind::ERevB,
        ParamKind::TauSynA,
        ParamKind::TauSynB,
        ParamKind::GSynScaleA,
        ParamKind::GSynScaleB,
        ParamKind::IUnit,
        ParamKind::VExpTh,
        ParamKind::DeltaT,
        ParamKind::GIc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::VLeak => "v_leak",
            ParamKind::GLeak => "g_leak",
            ParamKind::VAlt => "v_alt",
            ParamKind::GAlt => "g_alt",
            ParamKind::VTh => "v_th",
            ParamKind::TPulse => "t_pulse",
            ParamKind::CMem => "c_mem",
            ParamKind::ERevA => "e_rev_a",
            ParamKind::ERevB => "e_rev_b",
            ParamKind::TauSynA => "tau_syn_a",
            ParamKind::TauSynB => "tau_syn_b",
            ParamKind::GSynScaleA => "g_syn_scale_a",
            ParamKind::GSynScaleB => "g_syn_scale_b",
            ParamKind::IUnit => "i_unit",
            ParamKind::VExpTh => "v_exp_th",
            ParamKind::DeltaT => "delta_t",
            ParamKind::GIc => "g_ic",
        }
    }

    /// Parameters that must be non-negative.
    fn non_negative(self) -> bool {
        matches!(
            self,
            ParamKind::GLeak
                | ParamKind::GAlt
                | ParamKind::TPulse
                | ParamKind::CMem
                | ParamKind::TauSynA
                | ParamKind::TauSynB
                | ParamKind::GSynScaleA
                | ParamKind::GSynScaleB
                | ParamKind::IUnit
                | ParamKind::DeltaT
                | ParamKind::GIc
        )
    }
}

impl FromStr for ParamKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown analog parameter `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompartmentConfig {
    pub mode: Mode,
    pub exp_term_enabled: bool,
    pub params: AnalogParams,
    /// Membrane switch to the right-hand neighbor in the same block.
    pub switch_merge_right: bool,
    /// Membrane switch to the compartment in the same column of the other
    /// block. Both compartments of a column carry the same value.
    pub switch_merge_vertical: bool,
    pub soma_connect: bool,
    pub soma_bypass: bool,
    pub current_input_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SynapseCell {
    pub address: u8,
    pub weight: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynapseRow {
    pub block: Block,
    /// Row index within its block; rows `2k` and `2k + 1` share bus `k`.
    pub index: usize,
    pub target_line: Line,
    pub cells: Vec<SynapseCell>,
}

impl SynapseRow {
    pub fn row_group(&self) -> usize {
        self.index / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipConfig {
    pub n_columns: usize,
    /// Upper block first, then lower block, each in column order.
    pub compartments: Vec<CompartmentConfig>,
    pub rows: Vec<SynapseRow>,
    /// Per block, `true` = switch closed (line continuous). Switch `k` sits
    /// between columns `4(k+1) - 1` and `4(k+1)`.
    pub soma_segment_switches: [Vec<bool>; 2],
}

/// Number of somatic-line segment switches in a block of `n_columns`.
pub fn soma_switch_count(n_columns: usize) -> usize {
    n_columns.saturating_sub(1) / SOMA_SEGMENT_PERIOD
}

impl ChipConfig {
    /// All compartments disabled, all switches open, no synapse rows.
    pub fn new(n_columns: usize) -> Self {
        ChipConfig {
            n_columns,
            compartments: vec![CompartmentConfig::default(); 2 * n_columns],
            rows: Vec::new(),
            soma_segment_switches: [
                vec![false; soma_switch_count(n_columns)],
                vec![false; soma_switch_count(n_columns)],
            ],
        }
    }

    /// Adds `rows_per_block` empty rows to each block, targeting line A.
    pub fn with_rows(mut self, rows_per_block: usize) -> Self {
        for block in Block::ALL {
            for index in 0..rows_per_block {
                self.rows.push(SynapseRow {
                    block,
                    index,
                    target_line: Line::A,
                    cells: vec![SynapseCell::default(); self.n_columns],
                });
            }
        }
        self
    }

    pub fn compartment(&self, id: CompartmentId) -> &CompartmentConfig {
        &self.compartments[id.index(self.n_columns)]
    }

    pub fn compartment_mut(&mut self, id: CompartmentId) -> &mut CompartmentConfig {
        let n = self.n_columns;
        &mut self.compartments[id.index(n)]
    }

    pub fn compartment_ids(&self) -> impl Iterator<Item = CompartmentId> + '_ {
        (0..self.compartments.len()).map(move |i| CompartmentId::from_index(i, self.n_columns))
    }

    /// Position of the row with the given block and in-block index.
    pub fn row_position(&self, block: Block, index: usize) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.block == block && r.index == index)
    }

    pub fn current_input_target(&self) -> Option<CompartmentId> {
        self.compartment_ids()
            .find(|&id| self.compartment(id).current_input_enabled)
    }

    /// Sets the vertical merge switch of a column on both compartments.
    pub fn set_vertical_merge(&mut self, column: usize, closed: bool) {
        self.compartment_mut(CompartmentId::new(Block::Upper, column))
            .switch_merge_vertical = closed;
        self.compartment_mut(CompartmentId::new(Block::Lower, column))
            .switch_merge_vertical = closed;
    }
}

/// A broken configuration rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every configuration invariant; an empty list means the config is
/// usable.
pub fn validate_config(cfg: &ChipConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = cfg.n_columns;
    if n == 0 {
        out.push(Violation::new("n_columns", "must be at least 1"));
    }
    if cfg.compartments.len() != 2 * n {
        out.push(Violation::new(
            "compartments",
            format!(
                "expected {} entries, found {}",
                2 * n,
                cfg.compartments.len()
            ),
        ));
        return out;
    }

    for block in Block::ALL {
        let switches = &cfg.soma_segment_switches[block.index()];
        if switches.len() != soma_switch_count(n) {
            out.push(Violation::new(
                format!("soma_segment_switches.{block}"),
                format!(
                    "expected {} switches (one every {SOMA_SEGMENT_PERIOD} columns), found {}",
                    soma_switch_count(n),
                    switches.len()
                ),
            ));
        }
    }

    let mut current_inputs = Vec::new();
    for id in cfg.compartment_ids() {
        let c = cfg.compartment(id);
        let name = format!("compartment {id}");
        check_params(&name, c, &mut out);
        if c.soma_bypass && !c.soma_connect {
            out.push(Violation::new(
                format!("{name}.soma_bypass"),
                "bypass requires soma_connect",
            ));
        }
        if c.switch_merge_right && id.column + 1 == n {
            out.push(Violation::new(
                format!("{name}.switch_merge_right"),
                "last column has no right-hand neighbor",
            ));
        }
        if id.block == Block::Upper {
            let below = cfg.compartment(CompartmentId::new(Block::Lower, id.column));
            if below.switch_merge_vertical != c.switch_merge_vertical {
                out.push(Violation::new(
                    format!("{name}.switch_merge_vertical"),
                    "both compartments of a column must agree on the vertical switch",
                ));
            }
        }
        if c.current_input_enabled {
            current_inputs.push(id);
        }
    }
    if current_inputs.len() > 1 {
        let ids: Vec<String> = current_inputs.iter().map(ToString::to_string).collect();
        out.push(Violation::new(
            "current_input_enabled",
            format!(
                "at most one compartment may receive current input, found {}",
                ids.join(", ")
            ),
        ));
    }

    for (pos, row) in cfg.rows.iter().enumerate() {
        let name = format!("row {} ({}:{})", pos, row.block, row.index);
        if cfg.rows[..pos]
            .iter()
            .any(|r| r.block == row.block && r.index == row.index)
        {
            out.push(Violation::new(&name, "duplicate row index within block"));
        }
        if row.cells.len() != n {
            out.push(Violation::new(
                format!("{name}.cells"),
                format!("expected {n} cells, found {}", row.cells.len()),
            ));
        }
        for (column, cell) in row.cells.iter().enumerate() {
            if cell.address > SIX_BIT_MAX {
                out.push(Violation::new(
                    format!("{name}.cells[{column}].address"),
                    "address exceeds 6 bits",
                ));
            }
            if cell.weight > SIX_BIT_MAX {
                out.push(Violation::new(
                    format!("{name}.cells[{column}].weight"),
                    "weight exceeds 6 bits",
                ));
            }
        }
    }
    out
}

fn check_params(name: &str, c: &CompartmentConfig, out: &mut Vec<Violation>) {
    for kind in ParamKind::ALL {
        let value = c.params.get(kind);
        let field = format!("{name}.params.{}", kind.name());
        if !value.is_finite() {
            out.push(Violation::new(field, "must be finite"));
        } else if kind.non_negative() && value < 0.0 {
            out.push(Violation::new(field, "must be non-negative"));
        }
    }
    if !(c.params.c_mem > 0.0) {
        out.push(Violation::new(
            format!("{name}.params.c_mem"),
            "must be positive",
        ));
    }
    if c.exp_term_enabled && !(c.params.delta_t > 0.0) {
        out.push(Violation::new(
            format!("{name}.params.delta_t"),
            "must be positive when the exponential term is enabled",
        ));
    }
}

//! Compiles an abstract multi-compartment morphology into a chip
//! configuration: one compartment circuit per morphology node, membrane
//! switches for direct merges, and somatic-line junctions realized as
//! segments of a block's somatic line.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chip::{
    soma_switch_count, AnalogParams, Block, ChipConfig, CompartmentId, Mode, ParamKind,
    ADDRESSES_PER_BUS, SOMA_SEGMENT_PERIOD,
};
use crate::config_io::ConfigError;

#[derive(Debug, Error, PartialEq)]
pub enum MorphError {
    #[error("invalid morphology: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Spike mechanism of a morphology node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Na,
    Ca,
    Nmda,
    Passive,
}

impl Mechanism {
    pub fn mode(self) -> Mode {
        match self {
            Mechanism::Na => Mode::Na,
            Mechanism::Ca => Mode::Ca,
            Mechanism::Nmda => Mode::Nmda,
            Mechanism::Passive => Mode::Passive,
        }
    }

    pub fn default_params(self) -> AnalogParams {
        match self {
            Mechanism::Na | Mechanism::Passive => AnalogParams::na_default(),
            Mechanism::Ca => AnalogParams::ca_default(),
            Mechanism::Nmda => AnalogParams::nmda_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphNode {
    pub label: String,
    pub mechanism: Mechanism,
    /// Number of pre-synaptic inputs the node needs.
    pub fan_in_demand: usize,
    pub exp_term: bool,
    pub params: AnalogParams,
}

impl MorphNode {
    pub fn new(label: &str, mechanism: Mechanism) -> Self {
        MorphNode {
            label: label.to_string(),
            mechanism,
            fan_in_demand: 0,
            exp_term: false,
            params: mechanism.default_params(),
        }
    }
}

/// How a node couples to a junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TapKind {
    Conductance(f64),
    Bypass,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MorphEdge {
    /// Node coupled to a capacitance-free junction (a somatic line).
    SomaLine {
        node: usize,
        junction: usize,
        tap: TapKind,
    },
    /// Membranes shorted by a switch; the nodes must sit in adjacent cells.
    DirectMerge { a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MorphologyGraph {
    pub nodes: Vec<MorphNode>,
    /// Junction labels.
    pub junctions: Vec<String>,
    pub edges: Vec<MorphEdge>,
    /// Node whose spikes are the neuron's output.
    pub soma: Option<usize>,
}

impl MorphologyGraph {
    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    pub fn junction_index(&self, label: &str) -> Option<usize> {
        self.junctions.iter().position(|j| j == label)
    }

    pub fn taps(&self, junction: usize) -> impl Iterator<Item = (usize, TapKind)> + '_ {
        self.edges.iter().filter_map(move |e| match *e {
            MorphEdge::SomaLine {
                node,
                junction: j,
                tap,
            } if j == junction => Some((node, tap)),
            _ => None,
        })
    }

    /// Junction each node taps, if any.
    pub fn junction_of(&self, node: usize) -> Option<(usize, TapKind)> {
        self.edges.iter().find_map(|e| match *e {
            MorphEdge::SomaLine {
                node: n,
                junction,
                tap,
            } if n == node => Some((junction, tap)),
            _ => None,
        })
    }

    /// Groups of nodes joined by direct merges; each becomes one membrane
    /// node on the chip. Sorted by smallest member.
    pub fn membrane_groups(&self) -> Vec<Vec<usize>> {
        let mut group: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(g: &mut [usize], mut x: usize) -> usize {
            while g[x] != x {
                g[x] = g[g[x]];
                x = g[x];
            }
            x
        }
        for e in &self.edges {
            if let MorphEdge::DirectMerge { a, b } = *e {
                let (ra, rb) = (find(&mut group, a), find(&mut group, b));
                group[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut out: Vec<Vec<usize>> = Vec::new();
        let mut root_pos = vec![usize::MAX; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let r = find(&mut group, i);
            if root_pos[r] == usize::MAX {
                root_pos[r] = out.len();
                out.push(Vec::new());
            }
            out[root_pos[r]].push(i);
        }
        out
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        let bad = |m: String| Err(MorphError::Invalid(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut labels = BTreeSet::new();
        for n in &self.nodes {
            if !labels.insert(n.label.as_str()) {
                return bad(format!("duplicate node label `{}`", n.label));
            }
        }
        let mut jlabels = BTreeSet::new();
        for j in &self.junctions {
            if !jlabels.insert(j.as_str()) || labels.contains(j.as_str()) {
                return bad(format!("duplicate label `{j}`"));
            }
        }
        if let Some(s) = self.soma {
            if s >= self.nodes.len() {
                return bad(format!("soma index {s} out of range"));
            }
        }
        let mut tapped = vec![false; self.nodes.len()];
        for e in &self.edges {
            match *e {
                MorphEdge::SomaLine {
                    node,
                    junction,
                    tap,
                } => {
                    if node >= self.nodes.len() || junction >= self.junctions.len() {
                        return bad("edge references a missing node or junction".into());
                    }
                    if std::mem::replace(&mut tapped[node], true) {
                        return bad(format!(
                            "node `{}` couples to more than one junction",
                            self.nodes[node].label
                        ));
                    }
                    if let TapKind::Conductance(g) = tap {
                        if !(g >= 0.0 && g.is_finite()) {
                            return bad(format!(
                                "conductance {g} of node `{}`",
                                self.nodes[node].label
                            ));
                        }
                    }
                }
                MorphEdge::DirectMerge { a, b } => {
                    if a >= self.nodes.len() || b >= self.nodes.len() || a == b {
                        return bad("merge edge references a missing node or itself".into());
                    }
                }
            }
        }
        for (j, label) in self.junctions.iter().enumerate() {
            let taps: Vec<_> = self.taps(j).collect();
            if taps.is_empty() {
                return bad(format!("junction `{label}` has no taps"));
            }
            if taps.iter().filter(|(_, t)| *t == TapKind::Bypass).count() > 1 {
                return bad(format!("junction `{label}` has more than one bypass"));
            }
        }
        // connectivity over nodes and junctions
        let total = self.nodes.len() + self.junctions.len();
        let mut adj = vec![Vec::new(); total];
        for e in &self.edges {
            let (a, b) = match *e {
                MorphEdge::SomaLine { node, junction, .. } => (node, self.nodes.len() + junction),
                MorphEdge::DirectMerge { a, b } => (a, b),
            };
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; total];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !std::mem::replace(&mut seen[y], true) {
                    stack.push(y);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            let name = if i < self.nodes.len() {
                &self.nodes[i].label
            } else {
                &self.junctions[i - self.nodes.len()]
            };
            return bad(format!(
                "`{name}` is not connected to the rest of the morphology"
            ));
        }
        Ok(())
    }
}

/// Chip resources available to the compiler.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipDims {
    pub n_columns: usize,
    pub rows_per_block: usize,
    /// Cells already used by other neurons.
    pub occupied: Vec<CompartmentId>,
    /// Per block, indices of segment switches that must stay open.
    pub open_switches: [Vec<usize>; 2],
}

impl ChipDims {
    pub fn new(n_columns: usize, rows_per_block: usize) -> Self {
        ChipDims {
            n_columns,
            rows_per_block,
            occupied: Vec::new(),
            open_switches: [Vec::new(), Vec::new()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// Cell of each morphology node.
    pub cells: Vec<CompartmentId>,
    pub config: ChipConfig,
}

impl Placement {
    pub fn cell(&self, m: &MorphologyGraph, label: &str) -> Option<CompartmentId> {
        m.node_index(label).map(|i| self.cells[i])
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.config.n_columns;
        for block in Block::ALL {
            write!(f, "{block}:")?;
            for col in 0..n {
                let mode = self.config.compartment(CompartmentId::new(block, col)).mode;
                let tag = match mode {
                    Mode::Na => "Na",
                    Mode::Ca => "Ca",
                    Mode::Nmda => "NMDA",
                    Mode::Passive => "P",
                    Mode::Disabled => ".",
                };
                write!(f, " {tag}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Segment switch `k` of a block sits between columns `4(k+1) - 1` and
/// `4(k+1)`; returns the switches strictly inside `lo..=hi`.
fn switches_inside(lo: usize, hi: usize) -> impl Iterator<Item = usize> {
    (0..)
        .map(|k| (k, (k + 1) * SOMA_SEGMENT_PERIOD))
        .take_while(move |&(_, b)| b <= hi)
        .filter_map(move |(k, b)| (b > lo).then_some(k))
}

struct Search<'a> {
    m: &'a MorphologyGraph,
    dims: &'a ChipDims,
    cells: Vec<CompartmentId>,
    free: Vec<bool>,
    merges: Vec<Vec<usize>>,
    junction_block: Vec<Option<Block>>,
    assigned: Vec<Option<CompartmentId>>,
}

impl Search<'_> {
    fn solve(&mut self, i: usize) -> bool {
        if i == self.m.nodes.len() {
            return true;
        }
        for ci in 0..self.cells.len() {
            if !self.free[ci] {
                continue;
            }
            let cell = self.cells[ci];
            if !self.fits(i, cell) {
                continue;
            }
            let junction = self.m.junction_of(i).map(|(j, _)| j);
            let fresh = junction.is_some_and(|j| self.junction_block[j].is_none());
            if let (Some(j), true) = (junction, fresh) {
                self.junction_block[j] = Some(cell.block);
            }
            self.free[ci] = false;
            self.assigned[i] = Some(cell);
            if self.solve(i + 1) {
                return true;
            }
            self.assigned[i] = None;
            self.free[ci] = true;
            if let (Some(j), true) = (junction, fresh) {
                self.junction_block[j] = None;
            }
        }
        false
    }

    fn fits(&self, i: usize, cell: CompartmentId) -> bool {
        for &other in &self.merges[i] {
            if let Some(o) = self.assigned[other] {
                let adjacent = (o.block == cell.block && o.column.abs_diff(cell.column) == 1)
                    || (o.block != cell.block && o.column == cell.column);
                if !adjacent {
                    return false;
                }
            }
        }
        if let Some((j, _)) = self.m.junction_of(i) {
            match self.junction_block[j] {
                Some(b) if b != cell.block => return false,
                Some(_) => {}
                // one junction per block
                None => {
                    if self.junction_block.iter().any(|&b| b == Some(cell.block)) {
                        return false;
                    }
                }
            }
        }
        // all cells of the neuron in one block share one segment
        let (mut lo, mut hi) = (cell.column, cell.column);
        for c in self
            .assigned
            .iter()
            .flatten()
            .filter(|c| c.block == cell.block)
        {
            lo = lo.min(c.column);
            hi = hi.max(c.column);
        }
        let forced_open = &self.dims.open_switches[cell.block.index()];
        !switches_inside(lo, hi).any(|k| forced_open.contains(&k))
    }
}

/// Places the morphology onto the chip. Nodes are assigned in graph order to
/// the first legal cell (upper block first, columns ascending), with
/// backtracking, so a returned `Infeasible` means no placement exists.
pub fn compile(m: &MorphologyGraph, dims: &ChipDims) -> Result<Placement, MorphError> {
    m.validate()?;
    let n = dims.n_columns;
    if n == 0 {
        return Err(MorphError::Infeasible("chip has no columns".into()));
    }
    let occupied: BTreeSet<CompartmentId> = dims.occupied.iter().copied().collect();
    let cells: Vec<CompartmentId> = Block::ALL
        .into_iter()
        .flat_map(|b| (0..n).map(move |c| CompartmentId::new(b, c)))
        .collect();
    let free: Vec<bool> = cells.iter().map(|c| !occupied.contains(c)).collect();
    let n_free = free.iter().filter(|&&f| f).count();
    if m.nodes.len() > n_free {
        return Err(MorphError::Infeasible(format!(
            "morphology needs {} compartments, {} free",
            m.nodes.len(),
            n_free
        )));
    }
    let capacity = dims.rows_per_block * ADDRESSES_PER_BUS;
    if let Some(node) = m.nodes.iter().find(|x| x.fan_in_demand > capacity) {
        return Err(MorphError::Infeasible(format!(
            "node `{}` needs fan-in {} but {} rows x {} addresses allow {}",
            node.label, node.fan_in_demand, dims.rows_per_block, ADDRESSES_PER_BUS, capacity
        )));
    }
    if m.junctions.len() > Block::ALL.len() {
        return Err(MorphError::Infeasible(format!(
            "{} somatic-line junctions, at most one per block",
            m.junctions.len()
        )));
    }
    for (j, label) in m.junctions.iter().enumerate() {
        let taps = m.taps(j).count();
        let best = Block::ALL
            .into_iter()
            .map(|b| largest_region(dims, &occupied, b))
            .max()
            .unwrap_or(0);
        if taps > best {
            return Err(MorphError::Infeasible(format!(
                "junction `{label}` needs {taps} compartments on one somatic-line segment, at most {best} free"
            )));
        }
    }
    let mut merges = vec![Vec::new(); m.nodes.len()];
    for e in &m.edges {
        if let MorphEdge::DirectMerge { a, b } = *e {
            merges[a].push(b);
            merges[b].push(a);
        }
    }
    let mut search = Search {
        m,
        dims,
        cells,
        free,
        merges,
        junction_block: vec![None; m.junctions.len()],
        assigned: vec![None; m.nodes.len()],
    };
    if !search.solve(0) {
        return Err(MorphError::Infeasible(
            "no placement satisfies the adjacency, junction and segment-switch constraints".into(),
        ));
    }
    let placed: Vec<CompartmentId> = search
        .assigned
        .into_iter()
        .map(|c| c.expect("placed"))
        .collect();
    Ok(Placement {
        config: build_config(m, dims, &placed),
        cells: placed,
    })
}

/// Most free cells between two forced-open switches of a block.
fn largest_region(dims: &ChipDims, occupied: &BTreeSet<CompartmentId>, block: Block) -> usize {
    let forced = &dims.open_switches[block.index()];
    let (mut best, mut run) = (0, 0);
    for c in 0..dims.n_columns {
        if c > 0 && c % SOMA_SEGMENT_PERIOD == 0 && forced.contains(&(c / SOMA_SEGMENT_PERIOD - 1))
        {
            run = 0;
        }
        if !occupied.contains(&CompartmentId::new(block, c)) {
            run += 1;
            best = best.max(run);
        }
    }
    best
}

fn build_config(m: &MorphologyGraph, dims: &ChipDims, cells: &[CompartmentId]) -> ChipConfig {
    let mut cfg = ChipConfig::new(dims.n_columns).with_rows(dims.rows_per_block);
    for (node, &cell) in m.nodes.iter().zip(cells) {
        let c = cfg.compartment_mut(cell);
        c.mode = node.mechanism.mode();
        c.params = node.params;
        c.exp_term_enabled = node.exp_term;
    }
    for e in &m.edges {
        match *e {
            MorphEdge::SomaLine { node, tap, .. } => {
                let c = cfg.compartment_mut(cells[node]);
                c.soma_connect = true;
                match tap {
                    TapKind::Bypass => c.soma_bypass = true,
                    TapKind::Conductance(g) => c.params.g_ic = g,
                }
            }
            MorphEdge::DirectMerge { a, b } => {
                let (ca, cb) = (cells[a], cells[b]);
                if ca.block == cb.block {
                    let left = if ca.column < cb.column { ca } else { cb };
                    cfg.compartment_mut(left).switch_merge_right = true;
                } else {
                    cfg.set_vertical_merge(ca.column, true);
                }
            }
        }
    }
    for block in Block::ALL {
        let cols: Vec<usize> = cells
            .iter()
            .filter(|c| c.block == block)
            .map(|c| c.column)
            .collect();
        if let (Some(&lo), Some(&hi)) = (cols.iter().min(), cols.iter().max()) {
            for k in switches_inside(lo, hi) {
                cfg.soma_segment_switches[block.index()][k] = true;
            }
        }
    }
    debug_assert_eq!(
        cfg.soma_segment_switches[0].len(),
        soma_switch_count(dims.n_columns)
    );
    cfg
}

/// Mechanism layout of the calcium bridge between the apical junction and
/// the soma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaBridge {
    /// Calcium mechanism active in both merged compartments.
    #[default]
    BothActive,
    /// Only the apical-side compartment generates calcium spikes; the
    /// soma-side one contributes capacitance and coupling.
    SingleActive,
}

/// Pyramidal neuron: tuft NMDA nodes on an apical junction, a merged
/// calcium pair bridging apical junction and soma line, a sodium soma with
/// its bypass closed, and basal NMDA nodes on the soma line.
pub fn preset_pyramidal(
    n_tuft: usize,
    n_basal: usize,
    bridge: CaBridge,
) -> Result<MorphologyGraph, MorphError> {
    if n_tuft == 0 || n_basal == 0 {
        return Err(MorphError::Invalid(
            "pyramidal preset needs at least one tuft and one basal node".into(),
        ));
    }
    let g_dend = 1e-6;
    let mut m = MorphologyGraph {
        junctions: vec!["apical".into(), "soma_line".into()],
        ..Default::default()
    };
    let (apical, soma_line) = (0, 1);
    let push = |m: &mut MorphologyGraph, node: MorphNode, junction: usize, tap: TapKind| {
        m.nodes.push(node);
        let idx = m.nodes.len() - 1;
        m.edges.push(MorphEdge::SomaLine {
            node: idx,
            junction,
            tap,
        });
        idx
    };
    for i in 0..n_tuft {
        push(
            &mut m,
            MorphNode::new(&format!("tuft{i}"), Mechanism::Nmda),
            apical,
            TapKind::Conductance(g_dend),
        );
    }
    let ca_a = push(
        &mut m,
        MorphNode::new("ca_apical", Mechanism::Ca),
        apical,
        TapKind::Conductance(g_dend),
    );
    let basal_mech = match bridge {
        CaBridge::BothActive => Mechanism::Ca,
        CaBridge::SingleActive => Mechanism::Passive,
    };
    let mut ca_b_node = MorphNode::new("ca_basal", basal_mech);
    ca_b_node.params = AnalogParams::ca_default();
    let ca_b = push(&mut m, ca_b_node, soma_line, TapKind::Conductance(g_dend));
    m.edges.push(MorphEdge::DirectMerge { a: ca_a, b: ca_b });
    let mut soma = MorphNode::new("soma", Mechanism::Na);
    soma.exp_term = true;
    let soma = push(&mut m, soma, soma_line, TapKind::Bypass);
    m.soma = Some(soma);
    for i in 0..n_basal {
        push(
            &mut m,
            MorphNode::new(&format!("basal{i}"), Mechanism::Nmda),
            soma_line,
            TapKind::Conductance(g_dend),
        );
    }
    Ok(m)
}

/// Single sodium point neuron.
pub fn preset_point() -> MorphologyGraph {
    MorphologyGraph {
        nodes: vec![MorphNode::new("soma", Mechanism::Na)],
        soma: Some(0),
        ..Default::default()
    }
}

// ---- text format -----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MorphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soma: Option<String>,
    #[serde(default)]
    junctions: Vec<String>,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    edges: Vec<EdgeFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    label: String,
    mechanism: Mechanism,
    #[serde(default)]
    fan_in: usize,
    #[serde(default)]
    exp_term: bool,
    /// Overrides on top of the mechanism's defaults.
    #[serde(default)]
    params: toml::Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EdgeFile {
    SomaLine {
        node: String,
        junction: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        g: Option<f64>,
        #[serde(default)]
        bypass: bool,
    },
    Merge {
        a: String,
        b: String,
    },
}

/// Overlays `table` onto `params`; keys are parameter names.
pub fn apply_param_table(params: &mut AnalogParams, table: &toml::Table) -> Result<(), String> {
    for (key, value) in table {
        let kind: ParamKind = key.parse()?;
        let v = value
            .as_float()
            .or_else(|| value.as_integer().map(|i| i as f64))
            .ok_or_else(|| format!("parameter `{key}` must be a number"))?;
        params.set(kind, v);
    }
    Ok(())
}

pub fn morphology_from_str(text: &str) -> Result<MorphologyGraph, ConfigError> {
    let file: MorphFile = toml::from_str(text)?;
    let invalid = ConfigError::Invalid;
    let mut m = MorphologyGraph {
        junctions: file.junctions,
        ..Default::default()
    };
    for n in file.nodes {
        let mut params = n.mechanism.default_params();
        apply_param_table(&mut params, &n.params)
            .map_err(|e| invalid(format!("node `{}`: {e}", n.label)))?;
        m.nodes.push(MorphNode {
            label: n.label,
            mechanism: n.mechanism,
            fan_in_demand: n.fan_in,
            exp_term: n.exp_term,
            params,
        });
    }
    let node = |m: &MorphologyGraph, l: &str| {
        m.node_index(l)
            .ok_or_else(|| invalid(format!("unknown node `{l}`")))
    };
    for e in file.edges {
        let edge = match e {
            EdgeFile::SomaLine {
                node: n,
                junction,
                g,
                bypass,
            } => {
                let tap = match (g, bypass) {
                    (None, true) => TapKind::Bypass,
                    (Some(g), false) => TapKind::Conductance(g),
                    _ => {
                        return Err(invalid(format!(
                            "soma_line edge of `{n}` needs exactly one of `g` or `bypass = true`"
                        )))
                    }
                };
                MorphEdge::SomaLine {
                    node: node(&m, &n)?,
                    junction: m
                        .junction_index(&junction)
                        .ok_or_else(|| invalid(format!("unknown junction `{junction}`")))?,
                    tap,
                }
            }
            EdgeFile::Merge { a, b } => MorphEdge::DirectMerge {
                a: node(&m, &a)?,
                b: node(&m, &b)?,
            },
        };
        m.edges.push(edge);
    }
    if let Some(s) = file.soma {
        m.soma = Some(node(&m, &s)?);
    }
    m.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(m)
}

pub fn morphology_to_string(m: &MorphologyGraph) -> String {
    let nodes = m
        .nodes
        .iter()
        .map(|n| {
            let mut params = toml::Table::new();
            for kind in ParamKind::ALL {
                params.insert(kind.name().into(), toml::Value::Float(n.params.get(kind)));
            }
            NodeFile {
                label: n.label.clone(),
                mechanism: n.mechanism,
                fan_in: n.fan_in_demand,
                exp_term: n.exp_term,
                params,
            }
        })
        .collect();
    let edges = m
        .edges
        .iter()
        .map(|e| match *e {
            MorphEdge::SomaLine {
                node,
                junction,
                tap,
            } => EdgeFile::SomaLine {
                node: m.nodes[node].label.clone(),
                junction: m.junctions[junction].clone(),
                g: match tap {
                    TapKind::Conductance(g) => Some(g),
                    TapKind::Bypass => None,
                },
                bypass: tap == TapKind::Bypass,
            },
            MorphEdge::DirectMerge { a, b } => EdgeFile::Merge {
                a: m.nodes[a].label.clone(),
                b: m.nodes[b].label.clone(),
            },
        })
        .collect();
    let file = MorphFile {
        soma: m.soma.map(|s| m.nodes[s].label.clone()),
        junctions: m.junctions.clone(),
        nodes,
        edges,
    };
    toml::to_string(&file).expect("morphology serializes")
}

pub fn load_morphology(path: &Path) -> Result<MorphologyGraph, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::io(path, e))?;
    morphology_from_str(&text)
}

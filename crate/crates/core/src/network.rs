//! Electrical network implied by the switch states of a [`ChipConfig`].

use std::ops::Range;

use crate::chip::{soma_switch_count, Block, ChipConfig, CompartmentId, SOMA_SEGMENT_PERIOD};

/// Group of compartments whose membranes are shorted by closed switches.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneNode {
    /// Sorted by flat compartment index.
    pub members: Vec<CompartmentId>,
    pub capacitance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    Conductance(f64),
    /// Zero-resistance short between the membrane and the somatic line.
    Bypass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomaTap {
    pub compartment: CompartmentId,
    pub node: usize,
    pub coupling: Coupling,
}

/// A contiguous span of one block's somatic line, bounded by open segment
/// switches.
#[derive(Debug, Clone, PartialEq)]
pub struct SomaSegment {
    pub block: Block,
    pub columns: Range<usize>,
    pub taps: Vec<SomaTap>,
}

impl SomaSegment {
    /// Membrane node shorted to this segment, if any bypass is closed.
    /// Returns the first bypassed node; see [`SomaSegment::bypass_conflict`].
    pub fn bypass_node(&self) -> Option<usize> {
        self.taps
            .iter()
            .find(|t| t.coupling == Coupling::Bypass)
            .map(|t| t.node)
    }

    /// Two bypasses onto distinct membrane nodes short those nodes through
    /// the line; returns the offending pair.
    pub fn bypass_conflict(&self) -> Option<(CompartmentId, CompartmentId)> {
        let mut bypassed = self.taps.iter().filter(|t| t.coupling == Coupling::Bypass);
        let first = bypassed.next()?;
        bypassed
            .find(|t| t.node != first.node)
            .map(|t| (first.compartment, t.compartment))
    }
}

/// Conductance link between a membrane node and a somatic-line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductanceEdge {
    pub node: usize,
    pub segment: usize,
    pub coupling: Coupling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    pub n_columns: usize,
    /// Ordered by the smallest member index.
    pub nodes: Vec<MembraneNode>,
    /// Membrane node of each compartment, by flat index.
    pub node_of: Vec<usize>,
    /// Upper block segments first, left to right, then the lower block.
    pub segments: Vec<SomaSegment>,
}

impl CircuitGraph {
    pub fn node_of(&self, id: CompartmentId) -> usize {
        self.node_of[id.index(self.n_columns)]
    }

    pub fn edges(&self) -> Vec<ConductanceEdge> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(segment, s)| {
                s.taps.iter().map(move |t| ConductanceEdge {
                    node: t.node,
                    segment,
                    coupling: t.coupling,
                })
            })
            .collect()
    }

    /// Segment of the block's somatic line that covers `column`.
    pub fn segment_at(&self, block: Block, column: usize) -> Option<usize> {
        self.segments
            .iter()
            .position(|s| s.block == block && s.columns.contains(&column))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so the result is independent of union order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Builds membrane nodes from closed merge switches and somatic-line
/// segments from the segment switches. Expects a config that passes
/// [`crate::chip::validate_config`].
pub fn derive_network(cfg: &ChipConfig) -> CircuitGraph {
    let n = cfg.n_columns;
    let total = cfg.compartments.len();
    let mut sets = DisjointSet::new(total);
    for id in cfg.compartment_ids() {
        let c = cfg.compartment(id);
        let here = id.index(n);
        if c.switch_merge_right && id.column + 1 < n {
            sets.union(here, here + 1);
        }
        if c.switch_merge_vertical && id.block == Block::Upper {
            sets.union(here, CompartmentId::new(Block::Lower, id.column).index(n));
        }
    }

    let mut node_of = vec![usize::MAX; total];
    let mut nodes: Vec<MembraneNode> = Vec::new();
    let mut root_node = vec![usize::MAX; total];
    for i in 0..total {
        let root = sets.find(i);
        if root_node[root] == usize::MAX {
            root_node[root] = nodes.len();
            nodes.push(MembraneNode {
                members: Vec::new(),
                capacitance: 0.0,
            });
        }
        let node = root_node[root];
        node_of[i] = node;
        nodes[node].members.push(CompartmentId::from_index(i, n));
        nodes[node].capacitance += cfg.compartments[i].params.c_mem;
    }

    let mut segments = Vec::new();
    for block in Block::ALL {
        let switches = &cfg.soma_segment_switches[block.index()];
        let mut start = 0;
        for k in 0..soma_switch_count(n) {
            let closed = switches.get(k).copied().unwrap_or(false);
            if !closed {
                let end = (k + 1) * SOMA_SEGMENT_PERIOD;
                segments.push(make_segment(cfg, &node_of, block, start..end));
                start = end;
            }
        }
        segments.push(make_segment(cfg, &node_of, block, start..n));
    }

    CircuitGraph {
        n_columns: n,
        nodes,
        node_of,
        segments,
    }
}

fn make_segment(
    cfg: &ChipConfig,
    node_of: &[usize],
    block: Block,
    columns: Range<usize>,
) -> SomaSegment {
    let taps = columns
        .clone()
        .filter_map(|column| {
            let id = CompartmentId::new(block, column);
            let c = cfg.compartment(id);
            c.soma_connect.then(|| SomaTap {
                compartment: id,
                node: node_of[id.index(cfg.n_columns)],
                coupling: if c.soma_bypass {
                    Coupling::Bypass
                } else {
                    Coupling::Conductance(c.params.g_ic)
                },
            })
        })
        .collect();
    SomaSegment {
        block,
        columns,
        taps,
    }
}

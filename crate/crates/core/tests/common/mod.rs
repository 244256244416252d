//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use mcsim_core::chip::{
    soma_switch_count, validate_config, AnalogParams, Block, ChipConfig, CompartmentId, Line, Mode,
    ParamKind, SynapseCell, SynapseRow, SOMA_SEGMENT_PERIOD,
};
use mcsim_core::morph::{ChipDims, MorphEdge, MorphologyGraph, TapKind};
use mcsim_core::network::{CircuitGraph, Coupling};
use mcsim_core::plasticity::SensorParams;
use rand::Rng;

const MODES: [Mode; 5] = [
    Mode::Passive,
    Mode::Na,
    Mode::Ca,
    Mode::Nmda,
    Mode::Disabled,
];

fn random_params<R: Rng>(rng: &mut R) -> AnalogParams {
    let mut p = AnalogParams::default();
    for kind in ParamKind::ALL {
        // arbitrary bit patterns in a physical range, including awkward decimals
        let base = p.get(kind);
        let v = if base == 0.0 {
            rng.random::<f64>() * 1e-6
        } else {
            base * rng.random_range(0.1..10.0)
        };
        p.set(kind, v);
    }
    p.v_leak = rng.random_range(0.3..0.8);
    p.v_alt = rng.random_range(0.3..1.2);
    p.e_rev_b = rng.random_range(-0.2..0.5);
    p
}

/// A configuration that passes `validate_config`.
pub fn random_config<R: Rng>(rng: &mut R) -> ChipConfig {
    let n = rng.random_range(1..=12usize);
    let mut cfg = ChipConfig::new(n);
    for id in cfg.compartment_ids().collect::<Vec<_>>() {
        let c = cfg.compartment_mut(id);
        c.mode = MODES[rng.random_range(0..MODES.len())];
        c.params = random_params(rng);
        c.exp_term_enabled = rng.random_bool(0.3);
        c.switch_merge_right = id.column + 1 < n && rng.random_bool(0.4);
        c.soma_connect = rng.random_bool(0.5);
        c.soma_bypass = c.soma_connect && rng.random_bool(0.2);
    }
    for col in 0..n {
        cfg.set_vertical_merge(col, rng.random_bool(0.3));
    }
    if rng.random_bool(0.5) {
        let id = CompartmentId::from_index(rng.random_range(0..2 * n), n);
        cfg.compartment_mut(id).current_input_enabled = true;
    }
    for b in 0..2 {
        for s in cfg.soma_segment_switches[b].iter_mut() {
            *s = rng.random_bool(0.5);
        }
    }
    let rows = rng.random_range(0..=4usize);
    for block in Block::ALL {
        for index in 0..rows {
            cfg.rows.push(SynapseRow {
                block,
                index,
                target_line: if rng.random_bool(0.5) {
                    Line::A
                } else {
                    Line::B
                },
                cells: (0..n)
                    .map(|_| SynapseCell {
                        address: rng.random_range(0..64),
                        weight: rng.random_range(0..64),
                    })
                    .collect(),
            });
        }
    }
    debug_assert!(validate_config(&cfg).is_empty());
    cfg
}

/// Reachability over merge switches by repeated relaxation of a boolean
/// adjacency matrix (Floyd-Warshall).
pub fn brute_force_components(cfg: &ChipConfig) -> Vec<Vec<bool>> {
    let n = cfg.n_columns;
    let total = 2 * n;
    let mut reach = vec![vec![false; total]; total];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
    }
    for id in cfg.compartment_ids() {
        let c = cfg.compartment(id);
        let i = id.index(n);
        if c.switch_merge_right && id.column + 1 < n {
            let j = CompartmentId::new(id.block, id.column + 1).index(n);
            reach[i][j] = true;
            reach[j][i] = true;
        }
        if c.switch_merge_vertical {
            let j = CompartmentId::new(id.block.other(), id.column).index(n);
            if cfg
                .compartment(CompartmentId::new(id.block.other(), id.column))
                .switch_merge_vertical
            {
                reach[i][j] = true;
                reach[j][i] = true;
            }
        }
    }
    for k in 0..total {
        for i in 0..total {
            for j in 0..total {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    reach
}

/// Columns `c` and `c + 1` of a block share a somatic-line segment unless
/// an open segment switch separates them.
pub fn same_segment(cfg: &ChipConfig, block: Block, a: usize, b: usize) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    (lo..hi).all(|c| {
        if (c + 1) % SOMA_SEGMENT_PERIOD != 0 {
            return true;
        }
        let k = (c + 1) / SOMA_SEGMENT_PERIOD - 1;
        k >= soma_switch_count(cfg.n_columns) || cfg.soma_segment_switches[block.index()][k]
    })
}

/// Checks a derived graph against the brute-force oracles; returns a
/// description of the first mismatch.
pub fn check_network(cfg: &ChipConfig, g: &CircuitGraph) -> Result<(), String> {
    let n = cfg.n_columns;
    let reach = brute_force_components(cfg);
    let ids: Vec<CompartmentId> = cfg.compartment_ids().collect();
    for &a in &ids {
        for &b in &ids {
            let joined = g.node_of(a) == g.node_of(b);
            if joined != reach[a.index(n)][b.index(n)] {
                return Err(format!("{a} and {b}: graph says joined={joined}"));
            }
        }
    }
    for (k, node) in g.nodes.iter().enumerate() {
        let c: f64 = node
            .members
            .iter()
            .map(|&m| cfg.compartment(m).params.c_mem)
            .sum();
        if (c - node.capacitance).abs() > 1e-12 * c {
            return Err(format!("node {k}: capacitance {} vs {c}", node.capacitance));
        }
        if node.members.iter().any(|&m| g.node_of(m) != k) {
            return Err(format!("node {k}: member list disagrees with node_of"));
        }
    }
    // every column of each block covered by exactly one segment, and columns
    // share a segment exactly when the switch oracle says so
    for block in Block::ALL {
        for a in 0..n {
            let sa = g
                .segment_at(block, a)
                .ok_or(format!("{block}:{a} has no segment"))?;
            for b in 0..n {
                let sb = g
                    .segment_at(block, b)
                    .ok_or(format!("{block}:{b} has no segment"))?;
                if (sa == sb) != same_segment(cfg, block, a, b) {
                    return Err(format!("{block}: columns {a} and {b} segment mismatch"));
                }
            }
        }
    }
    let mut taps = 0;
    for seg in &g.segments {
        for t in &seg.taps {
            taps += 1;
            let c = cfg.compartment(t.compartment);
            if !c.soma_connect
                || t.compartment.block != seg.block
                || !seg.columns.contains(&t.compartment.column)
            {
                return Err(format!("tap {} misplaced", t.compartment));
            }
            let expected = if c.soma_bypass {
                Coupling::Bypass
            } else {
                Coupling::Conductance(c.params.g_ic)
            };
            if t.coupling != expected || t.node != g.node_of(t.compartment) {
                return Err(format!("tap {} coupling", t.compartment));
            }
        }
    }
    let connected = ids
        .iter()
        .filter(|&&id| cfg.compartment(id).soma_connect)
        .count();
    if taps != connected {
        return Err(format!(
            "{taps} taps for {connected} connected compartments"
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorEvent {
    Pre(f64),
    Post(f64),
}

/// Nearest-neighbor pairing without reuse: a pre/post pair contributes
/// exactly when the two events are adjacent in the sequence. Quadratic
/// scan over all ordered pairs.
pub fn brute_force_sensor(events: &[SensorEvent], p: &SensorParams) -> (f64, f64) {
    let (mut causal, mut acausal) = (0.0, 0.0);
    for j in 0..events.len() {
        for i in 0..j {
            if j - i != 1 {
                continue;
            }
            match (events[i], events[j]) {
                (SensorEvent::Pre(tp), SensorEvent::Post(tq)) => {
                    causal += p.a_plus * libm::exp(-(tq - tp) / p.tau_plus)
                }
                (SensorEvent::Post(tq), SensorEvent::Pre(tp)) => {
                    acausal += p.a_minus * libm::exp(-(tp - tq) / p.tau_minus)
                }
                _ => {}
            }
        }
    }
    (causal, acausal)
}

pub fn random_sensor_sequence<R: Rng>(rng: &mut R, max_len: usize) -> Vec<SensorEvent> {
    let len = rng.random_range(0..=max_len);
    let mut t = 0.0;
    (0..len)
        .map(|_| {
            t += rng.random_range(0.0..10e-6);
            if rng.random_bool(0.5) {
                SensorEvent::Pre(t)
            } else {
                SensorEvent::Post(t)
            }
        })
        .collect()
}

/// Exhaustive feasibility: tries every injective assignment of nodes to
/// free cells against the placement rules, stated independently of the
/// compiler's search order.
pub fn brute_force_feasible(m: &MorphologyGraph, dims: &ChipDims) -> bool {
    let cells: Vec<CompartmentId> = Block::ALL
        .into_iter()
        .flat_map(|b| (0..dims.n_columns).map(move |c| CompartmentId::new(b, c)))
        .filter(|c| !dims.occupied.contains(c))
        .collect();
    if m.nodes.len() > cells.len() {
        return false;
    }
    if m.nodes
        .iter()
        .any(|n| n.fan_in_demand > dims.rows_per_block * 64)
    {
        return false;
    }
    let mut assign = Vec::with_capacity(m.nodes.len());
    let mut used = vec![false; cells.len()];
    permute(m, dims, &cells, &mut assign, &mut used)
}

fn permute(
    m: &MorphologyGraph,
    dims: &ChipDims,
    cells: &[CompartmentId],
    assign: &mut Vec<CompartmentId>,
    used: &mut [bool],
) -> bool {
    if assign.len() == m.nodes.len() {
        return placement_ok(m, dims, assign);
    }
    for i in 0..cells.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        assign.push(cells[i]);
        let found = permute(m, dims, cells, assign, used);
        assign.pop();
        used[i] = false;
        if found {
            return true;
        }
    }
    false
}

pub fn placement_ok(m: &MorphologyGraph, dims: &ChipDims, cells: &[CompartmentId]) -> bool {
    for e in &m.edges {
        if let MorphEdge::DirectMerge { a, b } = *e {
            let (x, y) = (cells[a], cells[b]);
            let adjacent = if x.block == y.block {
                x.column.abs_diff(y.column) == 1
            } else {
                x.column == y.column
            };
            if !adjacent {
                return false;
            }
        }
    }
    let mut junction_blocks = Vec::new();
    for j in 0..m.junctions.len() {
        let blocks: Vec<Block> = m.taps(j).map(|(node, _)| cells[node].block).collect();
        if blocks.windows(2).any(|w| w[0] != w[1]) {
            return false;
        }
        if let Some(&b) = blocks.first() {
            if junction_blocks.contains(&b) {
                return false;
            }
            junction_blocks.push(b);
        }
    }
    for block in Block::ALL {
        let cols: Vec<usize> = cells
            .iter()
            .filter(|c| c.block == block)
            .map(|c| c.column)
            .collect();
        let (Some(&lo), Some(&hi)) = (cols.iter().min(), cols.iter().max()) else {
            continue;
        };
        for &k in &dims.open_switches[block.index()] {
            let boundary = (k + 1) * SOMA_SEGMENT_PERIOD;
            if lo < boundary && boundary <= hi {
                return false;
            }
        }
    }
    true
}

/// Checks that a compiled configuration realizes the morphology: merged
/// nodes share a membrane, others do not, and each junction's taps sit on
/// one segment of their own with the requested couplings.
pub fn check_realization(
    m: &MorphologyGraph,
    cells: &[CompartmentId],
    g: &CircuitGraph,
) -> Result<(), String> {
    let groups = m.membrane_groups();
    let group_of = |i: usize| {
        groups
            .iter()
            .position(|gr| gr.contains(&i))
            .expect("grouped")
    };
    for a in 0..m.nodes.len() {
        for b in 0..m.nodes.len() {
            let same = g.node_of(cells[a]) == g.node_of(cells[b]);
            if same != (group_of(a) == group_of(b)) {
                return Err(format!("nodes {a} and {b}: shared membrane = {same}"));
            }
        }
    }
    let mut segs = Vec::new();
    for j in 0..m.junctions.len() {
        let mut seg = None;
        for (node, tap) in m.taps(j) {
            let c = cells[node];
            let s = g.segment_at(c.block, c.column).ok_or("no segment")?;
            if *seg.get_or_insert(s) != s {
                return Err(format!("junction {j} split over segments"));
            }
            let t = g.segments[s]
                .taps
                .iter()
                .find(|t| t.compartment == c)
                .ok_or(format!("node {node} not tapped"))?;
            let ok = match (tap, t.coupling) {
                (TapKind::Bypass, Coupling::Bypass) => true,
                (TapKind::Conductance(a), Coupling::Conductance(b)) => a == b,
                _ => false,
            };
            if !ok {
                return Err(format!("node {node} coupling"));
            }
        }
        if let Some(s) = seg {
            if segs.contains(&s) {
                return Err("two junctions on one segment".into());
            }
            segs.push(s);
        }
    }
    let tapped: usize = g.segments.iter().map(|s| s.taps.len()).sum();
    let expected = m
        .edges
        .iter()
        .filter(|e| matches!(e, MorphEdge::SomaLine { .. }))
        .count();
    if tapped != expected {
        return Err(format!("{tapped} taps, expected {expected}"));
    }
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Index of the last sample before the trace first drops by more than
/// `eps`, searching from `from`.
pub fn last_before_decrease(v: &[f64], from: usize, eps: f64) -> Option<usize> {
    (from..v.len().saturating_sub(1)).find(|&i| v[i + 1] < v[i] - eps)
}

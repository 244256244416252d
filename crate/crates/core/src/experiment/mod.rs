//! Experiments: a chip (inline, from file, or compiled from a morphology),
//! stimulus, probes, routing and an optional plasticity schedule, resolved
//! into simulation inputs and run to a deterministic set of artifacts.

mod artifacts;
mod scenarios;
mod spec;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chip::{validate_config, Block, ChipConfig, CompartmentId, SIX_BIT_MAX};
use crate::config_io::{load_chip, ConfigError};
use crate::engine::{
    AltInterval, CurrentPulse, EngineConfig, EngineError, Probe, Simulation, Trace,
};
use crate::events::{parse_stimulus, PresynEvent, SpikeRecord};
use crate::morph::{
    apply_param_table, compile, load_morphology, preset_point, preset_pyramidal, ChipDims,
    MorphError,
};
use crate::plasticity::{
    stdp_kernel, structural_step, KernelView, RewireRecord, SensorParams, StdpParams,
    StructuralParams,
};
use crate::router::{parse_target, BusModel, RoutingTable};

pub use artifacts::{emit_plot_data, Artifacts, Summary};
pub use scenarios::{all as all_scenarios, scenario, scenario_ids, Scenario};
pub use spec::*;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Morph(#[from] MorphError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Spec(String),
}

fn spec_err<T>(msg: impl Into<String>) -> Result<T, ExperimentError> {
    Err(ExperimentError::Spec(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityPlan {
    pub period: f64,
    pub periods: usize,
    pub rows: Vec<usize>,
    pub stdp: Option<(StdpParams, bool)>,
    pub structural: Option<StructuralParams>,
}

/// Everything a simulation run needs.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub name: String,
    pub variant: Option<String>,
    pub seed: u64,
    pub chip: ChipConfig,
    pub labels: BTreeMap<String, CompartmentId>,
    pub engine: EngineConfig,
    pub sensor: SensorParams,
    pub routing: RoutingTable,
    pub events: Vec<PresynEvent>,
    pub current: Vec<CurrentPulse>,
    pub plasticity: Option<PlasticityPlan>,
}

/// Command-line style overrides applied before resolution.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt_us: Option<f64>,
    pub t_end_us: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(dt) = self.dt_us {
            spec.engine.dt_us = dt;
        }
        if let Some(t) = self.t_end_us {
            spec.engine.t_end_us = t;
            for v in &mut spec.variants {
                v.t_end_us = None;
            }
        }
    }
}

fn resolve_path(base: Option<&Path>, rel: &str) -> PathBuf {
    match base {
        Some(b) => b.join(rel),
        None => PathBuf::from(rel),
    }
}

fn lookup(
    labels: &BTreeMap<String, CompartmentId>,
    chip: &ChipConfig,
    target: &str,
) -> Result<CompartmentId, ExperimentError> {
    if let Some(&id) = labels.get(target) {
        return Ok(id);
    }
    match target.parse::<CompartmentId>() {
        Ok(id) if id.column < chip.n_columns => Ok(id),
        Ok(id) => spec_err(format!(
            "compartment {id} is outside the {}-column chip",
            chip.n_columns
        )),
        Err(_) => spec_err(format!("unknown compartment or label `{target}`")),
    }
}

fn build_chip(
    spec: &ExperimentSpec,
    base: Option<&Path>,
) -> Result<(ChipConfig, BTreeMap<String, CompartmentId>), ExperimentError> {
    let sources = [
        spec.chip.is_some(),
        spec.chip_file.is_some(),
        spec.morphology.is_some(),
    ];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return spec_err("exactly one of `chip`, `chip_file` or `morphology` must be given");
    }
    if let Some(c) = &spec.chip {
        return Ok((c.clone().into_config()?, BTreeMap::new()));
    }
    if let Some(f) = &spec.chip_file {
        return Ok((load_chip(&resolve_path(base, f))?, BTreeMap::new()));
    }
    let ms = spec.morphology.as_ref().expect("checked above");
    let m = match (&ms.preset, &ms.file) {
        (
            Some(PresetSpec::Pyramidal {
                n_tuft,
                n_basal,
                bridge,
            }),
            None,
        ) => preset_pyramidal(*n_tuft, *n_basal, *bridge)?,
        (Some(PresetSpec::Point), None) => preset_point(),
        (None, Some(f)) => load_morphology(&resolve_path(base, f))?,
        _ => return spec_err("morphology needs exactly one of `preset` or `file`"),
    };
    let placement = compile(&m, &ChipDims::new(ms.n_columns, ms.rows_per_block))?;
    let labels = m
        .nodes
        .iter()
        .zip(&placement.cells)
        .map(|(n, &c)| (n.label.clone(), c))
        .collect();
    Ok((placement.config, labels))
}

fn apply_override(
    chip: &mut ChipConfig,
    id: CompartmentId,
    o: &CompartmentOverride,
) -> Result<(), ExperimentError> {
    if let Some(v) = o.merge_vertical {
        chip.set_vertical_merge(id.column, v);
    }
    let c = chip.compartment_mut(id);
    if let Some(m) = o.mode {
        c.mode = m;
    }
    if let Some(v) = o.exp_term {
        c.exp_term_enabled = v;
    }
    if let Some(v) = o.current_input {
        c.current_input_enabled = v;
    }
    if let Some(v) = o.soma_connect {
        c.soma_connect = v;
    }
    if let Some(v) = o.soma_bypass {
        c.soma_bypass = v;
    }
    if let Some(v) = o.merge_right {
        c.switch_merge_right = v;
    }
    apply_param_table(&mut c.params, &o.params)
        .map_err(|e| ExperimentError::Spec(format!("compartment `{}`: {e}", o.target)))
}

fn us(t: f64) -> f64 {
    t / 1e6
}

fn build_events(
    stim: &StimulusSpec,
    base: Option<&Path>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PresynEvent>, ExperimentError> {
    let mut events = Vec::new();
    for s in &stim.spikes {
        if s.address > SIX_BIT_MAX {
            return spec_err(format!("stimulus address {} exceeds 6 bits", s.address));
        }
        events.push(PresynEvent {
            time: us(s.time_us),
            block: s.block,
            row_group: s.row_group,
            address: s.address,
        });
    }
    for t in &stim.trains {
        if let Some(a) = t.addresses.iter().find(|&&a| a > SIX_BIT_MAX) {
            return spec_err(format!("train address {a} exceeds 6 bits"));
        }
        match t.kind {
            TrainKind::Regular => {
                let Some(interval) = t.interval_us.filter(|&i| i > 0.0) else {
                    return spec_err("regular train needs a positive `interval_us`");
                };
                let mut k = 0u64;
                loop {
                    let time_us = t.start_us + k as f64 * interval;
                    if time_us >= t.stop_us {
                        break;
                    }
                    for &g in &t.row_groups {
                        for &a in &t.addresses {
                            events.push(PresynEvent {
                                time: us(time_us),
                                block: t.block,
                                row_group: g,
                                address: a,
                            });
                        }
                    }
                    k += 1;
                }
            }
            TrainKind::Poisson => {
                let Some(rate) = t.rate_hz.filter(|&r| r > 0.0) else {
                    return spec_err("poisson train needs a positive `rate_hz`");
                };
                for &g in &t.row_groups {
                    for &a in &t.addresses {
                        let mut time = us(t.start_us);
                        loop {
                            let u: f64 = rng.random();
                            time += -libm::log(1.0 - u) / rate;
                            if time >= us(t.stop_us) {
                                break;
                            }
                            events.push(PresynEvent {
                                time,
                                block: t.block,
                                row_group: g,
                                address: a,
                            });
                        }
                    }
                }
            }
        }
    }
    if let Some(f) = &stim.file {
        let path = resolve_path(base, f);
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::io(&path, e))?;
        let parsed = parse_stimulus(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        events.extend(parsed);
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(events)
}

/// Resolves every variant of the spec (or the whole spec if it has none).
/// `only` restricts the result to one named variant.
pub fn resolve(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    only: Option<&str>,
) -> Result<Vec<ResolvedExperiment>, ExperimentError> {
    let variants: Vec<Option<&Variant>> = if spec.variants.is_empty() {
        if let Some(name) = only {
            return spec_err(format!(
                "experiment `{}` has no variant `{name}`",
                spec.name
            ));
        }
        vec![None]
    } else {
        let selected: Vec<_> = spec
            .variants
            .iter()
            .filter(|v| only.is_none_or(|o| v.name == o))
            .map(Some)
            .collect();
        if selected.is_empty() {
            return spec_err(format!(
                "experiment `{}` has no variant `{}`",
                spec.name,
                only.unwrap_or_default()
            ));
        }
        selected
    };
    variants
        .into_iter()
        .map(|v| resolve_one(spec, base, v))
        .collect()
}

fn resolve_one(
    spec: &ExperimentSpec,
    base: Option<&Path>,
    variant: Option<&Variant>,
) -> Result<ResolvedExperiment, ExperimentError> {
    let (mut chip, labels) = build_chip(spec, base)?;
    let overrides = spec
        .compartments
        .iter()
        .chain(variant.into_iter().flat_map(|v| &v.compartments));
    for o in overrides {
        let id = lookup(&labels, &chip, &o.target)?;
        apply_override(&mut chip, id, o)?;
    }
    for s in &spec.synapses {
        let id = lookup(&labels, &chip, &s.target)?;
        let Some(pos) = chip.row_position(id.block, s.row) else {
            return spec_err(format!("no row {} in block {}", s.row, id.block));
        };
        let row = &mut chip.rows[pos];
        row.cells[id.column].address = s.address;
        row.cells[id.column].weight = s.weight;
        if let Some(l) = s.line {
            row.target_line = l;
        }
    }
    let violations = validate_config(&chip);
    if !violations.is_empty() {
        return Err(EngineError::InvalidConfig(violations).into());
    }

    let e = &spec.engine;
    let t_end_us = variant.and_then(|v| v.t_end_us).unwrap_or(e.t_end_us);
    let mut probes = Vec::new();
    for p in &spec.probes {
        probes.push(parse_probe(p, &labels, &chip)?);
    }
    let engine = EngineConfig {
        dt: us(e.dt_us),
        t_end: us(t_end_us),
        probes,
        record_stride: e.record_stride,
        i_exp_max: e.i_exp_max,
        loop_delay_steps: e.loop_delay_steps,
        bus: BusModel {
            max_rate: e.bus_max_rate,
            enforce: e.bus_enforce,
        },
    };
    engine.check(&chip)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stim = variant
        .and_then(|v| v.stimulus.as_ref())
        .unwrap_or(&spec.stimulus);
    let events = build_events(stim, base, &mut rng)?;
    let current = stim
        .current
        .iter()
        .map(|p| CurrentPulse {
            start: us(p.start_us),
            stop: us(p.stop_us),
            amplitude: p.amplitude,
        })
        .collect::<Vec<_>>();
    if !current.is_empty() && chip.current_input_target().is_none() {
        return Err(EngineError::NoCurrentTarget.into());
    }

    let mut routing = RoutingTable::default();
    for r in &spec.routing {
        let src = lookup(&labels, &chip, &r.source)?;
        for t in &r.targets {
            routing.add(
                src,
                r.spike_type,
                parse_target(t).map_err(ExperimentError::Spec)?,
            );
        }
    }
    if let Some(t) = routing.dangling_targets(&chip).first() {
        return spec_err(format!(
            "routing target {}:{}:{} has no synapse rows",
            t.block, t.row_group, t.address
        ));
    }

    let (sensor, plasticity) = match &spec.plasticity {
        None => (SensorParams::default(), None),
        Some(p) => resolve_plasticity(p, &chip, spec.seed, engine.t_end)?,
    };
    Ok(ResolvedExperiment {
        name: spec.name.clone(),
        variant: variant.map(|v| v.name.clone()),
        seed: spec.seed,
        chip,
        labels,
        engine,
        sensor,
        routing,
        events,
        current,
        plasticity,
    })
}

fn parse_probe(
    text: &str,
    labels: &BTreeMap<String, CompartmentId>,
    chip: &ChipConfig,
) -> Result<Probe, ExperimentError> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| ExperimentError::Spec(format!("bad probe `{text}`")))?;
    // labels may stand in for `<block>:<column>`
    let mut rewritten = rest.to_string();
    let head = rest.split(':').next().unwrap_or_default();
    if let Some(id) = labels.get(head) {
        rewritten = format!("{id}{}", &rest[head.len()..]);
    }
    let probe: Probe = format!("{kind}:{rewritten}")
        .parse()
        .map_err(ExperimentError::Spec)?;
    let id = match probe {
        Probe::Membrane(c) | Probe::Line(c, _) | Probe::SomaLine(c) | Probe::AltMode(c) => c,
    };
    lookup(labels, chip, &id.to_string())?;
    Ok(probe)
}

fn resolve_plasticity(
    p: &PlasticitySpec,
    chip: &ChipConfig,
    seed: u64,
    t_end: f64,
) -> Result<(SensorParams, Option<PlasticityPlan>), ExperimentError> {
    let s = &p.sensor;
    let sensor = SensorParams {
        a_plus: s.a_plus,
        a_minus: s.a_minus,
        tau_plus: us(s.tau_plus_us),
        tau_minus: us(s.tau_minus_us),
    };
    if !(sensor.tau_plus > 0.0 && sensor.tau_minus > 0.0) {
        return spec_err("sensor time constants must be positive");
    }
    let period = us(p.period_us);
    if !(period > 0.0) {
        return spec_err("plasticity period must be positive");
    }
    let rows = match &p.rows {
        None => (0..chip.rows.len()).collect(),
        Some(list) => {
            let mut rows = Vec::new();
            for r in list {
                let (block, index) = r
                    .split_once(':')
                    .and_then(|(b, i)| Some((b.parse::<Block>().ok()?, i.parse::<usize>().ok()?)))
                    .ok_or_else(|| {
                        ExperimentError::Spec(format!("bad row `{r}`, expected `<block>:<index>`"))
                    })?;
                rows.push(
                    chip.row_position(block, index)
                        .ok_or_else(|| ExperimentError::Spec(format!("no row {r}")))?,
                );
            }
            rows
        }
    };
    let structural = match &p.structural {
        None => None,
        Some(st) => {
            let params = StructuralParams {
                theta_corr: st.theta_corr,
                w_init: st.w_init,
                w_min: st.w_min,
                pool: st
                    .pool
                    .clone()
                    .unwrap_or_else(|| (0..=SIX_BIT_MAX).collect()),
                row_pools: Vec::new(),
                // separate stream from the stimulus generator
                rng_seed: seed.wrapping_add(1),
            };
            params.check().map_err(ExperimentError::Spec)?;
            Some(params)
        }
    };
    let periods = p
        .periods
        .unwrap_or(((t_end / period) + 1e-9).floor() as usize);
    Ok((
        sensor,
        Some(PlasticityPlan {
            period,
            periods,
            rows,
            stdp: p
                .stdp
                .as_ref()
                .map(|s| (StdpParams { eta: s.eta }, s.established_only)),
            structural,
        }),
    ))
}

/// Outputs of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub variant: Option<String>,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    /// Chip as configured at the start of the run.
    pub initial_chip: ChipConfig,
    /// Chip after plasticity writes.
    pub final_chip: ChipConfig,
    pub labels: BTreeMap<String, CompartmentId>,
    pub trace: Trace,
    pub spikes: Vec<SpikeRecord>,
    pub alt_intervals: Vec<AltInterval>,
    pub rewiring: Vec<RewireRecord>,
    pub dropped_events: u64,
}

impl RunResult {
    pub fn spikes_of(&self, id: CompartmentId) -> impl Iterator<Item = &SpikeRecord> + '_ {
        self.spikes.iter().filter(move |s| s.compartment == id)
    }

    pub fn label(&self, label: &str) -> Option<CompartmentId> {
        self.labels.get(label).copied()
    }
}

pub fn run_experiment(r: &ResolvedExperiment) -> Result<RunResult, ExperimentError> {
    let mut sim = Simulation::new(
        r.chip.clone(),
        r.engine.clone(),
        r.sensor,
        r.routing.clone(),
    )?;
    sim.schedule(&r.events);
    sim.set_current(r.current.clone())?;
    let mut rewiring = Vec::new();
    if let Some(plan) = &r.plasticity {
        let mut rng =
            ChaCha8Rng::seed_from_u64(plan.structural.as_ref().map_or(r.seed, |s| s.rng_seed));
        for k in 1..=plan.periods {
            let t = plan.period * k as f64;
            if t > r.engine.t_end * (1.0 + 1e-12) {
                break;
            }
            sim.run_until(t)?;
            let mut view = sim.kernel_read_reset(&plan.rows);
            if let Some((params, established_only)) = &plan.stdp {
                let subset = KernelView {
                    synapses: view
                        .synapses
                        .iter()
                        .filter(|s| !established_only || s.established())
                        .copied()
                        .collect(),
                };
                let writes = stdp_kernel(&subset, params);
                rewiring.extend(sim.apply_writes(&writes)?);
                for w in &writes.synapses {
                    if let Some(s) = view
                        .synapses
                        .iter_mut()
                        .find(|s| s.row == w.row && s.column == w.column)
                    {
                        s.weight = w.weight;
                    }
                }
            }
            if let Some(params) = &plan.structural {
                let writes = structural_step(&view, params, &mut rng).map_err(EngineError::from)?;
                rewiring.extend(sim.apply_writes(&writes)?);
            }
        }
    }
    sim.run()?;
    Ok(RunResult {
        name: r.name.clone(),
        variant: r.variant.clone(),
        seed: r.seed,
        dt: r.engine.dt,
        t_end: r.engine.t_end,
        initial_chip: r.chip.clone(),
        final_chip: sim.chip().clone(),
        labels: r.labels.clone(),
        trace: sim.trace().clone(),
        spikes: sim.spikes().to_vec(),
        alt_intervals: sim.alt_intervals(),
        rewiring,
        dropped_events: sim.dropped_events(),
    })
}

/// Loads, resolves and runs a spec file.
pub fn run_spec_file(
    path: &Path,
    overrides: Overrides,
    only: Option<&str>,
) -> Result<Vec<RunResult>, ExperimentError> {
    let mut spec = ExperimentSpec::load(path)?;
    overrides.apply(&mut spec);
    let base = path.parent();
    resolve(&spec, base, only)?
        .iter()
        .map(run_experiment)
        .collect()
}

/// Resolves and runs a shipped scenario.
pub fn run_scenario(id: &str, overrides: Overrides) -> Result<Vec<RunResult>, ExperimentError> {
    let sc =
        scenario(id).ok_or_else(|| ExperimentError::Spec(format!("unknown scenario `{id}`")))?;
    let mut spec = sc.spec()?;
    overrides.apply(&mut spec);
    resolve(&spec, None, sc.variant)?
        .iter()
        .map(run_experiment)
        .collect()
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcsim_core::config_io::{chip_to_string, load_chip, ConfigError};
use mcsim_core::experiment::{
    all_scenarios, resolve, run_experiment, run_scenario, run_spec_file, scenario, Artifacts,
    ExperimentError, Overrides, RunResult,
};
use mcsim_core::morph::{
    compile, load_morphology, preset_point, preset_pyramidal, CaBridge, ChipDims, MorphError,
};
use mcsim_core::{validate_config, EngineError};

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;
const EXIT_NUMERICAL: u8 = 6;

#[derive(Parser)]
#[command(
    name = "mcsim",
    version,
    about = "Multi-compartment neuromorphic neuron simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a chip configuration file against the hardware rules.
    Validate { chip: PathBuf },
    /// Place a morphology onto the compartment array and print the chip configuration.
    CompileMorphology {
        /// Morphology file, or `pyramidal` / `point` for a preset.
        morphology: String,
        #[arg(long, default_value_t = 4)]
        columns: usize,
        #[arg(long, default_value_t = 8)]
        rows: usize,
        #[arg(long, default_value_t = 2)]
        n_tuft: usize,
        #[arg(long, default_value_t = 2)]
        n_basal: usize,
        /// Calcium bridge of the pyramidal preset.
        #[arg(long, value_parser = ["both-active", "single-active"], default_value = "both-active")]
        bridge: String,
        /// Write the chip configuration here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a shipped scenario (by id) or an experiment file.
    Run {
        target: String,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Time step in microseconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated duration in microseconds.
        #[arg(long)]
        t_end: Option<f64>,
        /// Artifact directory; one subdirectory per variant when there are several.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped scenarios.
    ListScenarios,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_PARSE, e)
    }
}

impl From<MorphError> for Failure {
    fn from(e: MorphError) -> Self {
        let code = match e {
            MorphError::Invalid(_) => EXIT_VALIDATION,
            MorphError::Infeasible(_) => EXIT_INFEASIBLE,
        };
        Failure::new(code, e)
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::NumericalOverflow { .. } => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        };
        Failure::new(code, e)
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(e) => e.into(),
            ExperimentError::Morph(e) => e.into(),
            ExperimentError::Engine(e) => e.into(),
            ExperimentError::Spec(m) => Failure::new(EXIT_PARSE, m),
        }
    }
}

fn validate(path: &Path) -> Result<(), Failure> {
    let cfg = load_chip(path)?;
    let violations = validate_config(&cfg);
    if violations.is_empty() {
        println!("{}: ok", path.display());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::new(
        EXIT_VALIDATION,
        format!("{} violation(s)", violations.len()),
    ))
}

fn compile_morphology(
    source: &str,
    dims: ChipDims,
    n_tuft: usize,
    n_basal: usize,
    bridge: &str,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let m = match source {
        "pyramidal" => {
            let bridge = if bridge == "single-active" {
                CaBridge::SingleActive
            } else {
                CaBridge::BothActive
            };
            preset_pyramidal(n_tuft, n_basal, bridge)?
        }
        "point" => preset_point(),
        file => load_morphology(Path::new(file))?,
    };
    let placement = compile(&m, &dims)?;
    eprint!("{placement}");
    let text = chip_to_string(&placement.config);
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn report(run: &RunResult, artifacts: &Artifacts) {
    let name = match &run.variant {
        Some(v) => format!("{}/{v}", run.name),
        None => run.name.clone(),
    };
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for s in &run.spikes {
        *counts
            .entry(format!("{}:{}", s.compartment, s.spike_type))
            .or_default() += 1;
    }
    let counts: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
    println!(
        "{name}: {} spikes [{}], {} rewiring events, {} dropped, digest {}",
        run.spikes.len(),
        counts.join(" "),
        run.rewiring.len(),
        run.dropped_events,
        artifacts.digest()
    );
}

fn run(
    target: &str,
    variant: Option<&str>,
    overrides: Overrides,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let path = Path::new(target);
    let runs = if path.exists() || target.ends_with(".toml") {
        run_spec_file(path, overrides, variant)?
    } else {
        match variant {
            None => run_scenario(target, overrides)?,
            Some(v) => {
                let sc = scenario(target).ok_or_else(|| {
                    Failure::new(EXIT_PARSE, format!("unknown scenario `{target}`"))
                })?;
                if sc.variant.is_some_and(|fixed| fixed != v) {
                    return Err(Failure::new(
                        EXIT_PARSE,
                        format!("scenario `{target}` has no variant `{v}`"),
                    ));
                }
                let mut spec = sc.spec()?;
                overrides.apply(&mut spec);
                let resolved = resolve(&spec, None, Some(v))?;
                resolved
                    .iter()
                    .map(run_experiment)
                    .collect::<Result<Vec<_>, _>>()?
            }
        }
    };
    let several = runs.len() > 1;
    for r in &runs {
        let artifacts = Artifacts::from_run(r);
        report(r, &artifacts);
        if let Some(dir) = out {
            let dir = match (&r.variant, several) {
                (Some(v), true) => dir.join(v),
                _ => dir.to_path_buf(),
            };
            artifacts.write(&dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { chip } => validate(&chip),
        Command::CompileMorphology {
            morphology,
            columns,
            rows,
            n_tuft,
            n_basal,
            bridge,
            out,
        } => compile_morphology(
            &morphology,
            ChipDims::new(columns, rows),
            n_tuft,
            n_basal,
            &bridge,
            out.as_deref(),
        ),
        Command::Run {
            target,
            variant,
            seed,
            dt,
            t_end,
            out,
        } => {
            let overrides = Overrides {
                seed,
                dt_us: dt,
                t_end_us: t_end,
            };
            run(&target, variant.as_deref(), overrides, out.as_deref())
        }
        Command::ListScenarios => {
            for s in all_scenarios() {
                println!("{:<16} {}", s.id, s.summary);
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

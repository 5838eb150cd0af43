use std::path::PathBuf;
use std::process::ExitCode;

use bimbot_cli::{
    build_world_artifacts, derive, describe, load, report_from_files, simulate, validate, CliError, Overrides,
    RunConfig, EXIT_INPUT, EXIT_OK, EXIT_UNSATISFIED,
};
use clap::{Args, Parser, Subcommand};

/// 4D BIM to robot simulation pipeline.
///
/// Exit codes: 0 success; 1 input or I/O error; 2 unsatisfied modeling
/// requirements; 3 a plan failed during simulation.
#[derive(Parser)]
#[command(name = "bimbot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Scenario file (TOML) naming the inputs and parameters; flags override it.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Project manifest (TOML).
    #[arg(long)]
    project: Option<PathBuf>,
    /// Knowledge-base file; repeatable. Defaults to the bundled KB.
    #[arg(long)]
    kb: Vec<PathBuf>,
    /// Fleet file. Defaults to the bundled fleet.
    #[arg(long)]
    fleet: Option<PathBuf>,
    /// Worker scripts (TOML).
    #[arg(long)]
    agents: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct WorldArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Proceed past unsatisfied requirements; recorded in the manifest.
    #[arg(long)]
    force: bool,
    /// Occupancy map resolution in meters per cell.
    #[arg(long, allow_negative_numbers = true)]
    resolution: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the extra modeling requirements of the robotized tasks.
    Derive {
        #[command(flatten)]
        inputs: InputArgs,
        /// Also write requirements.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that all inputs load and fit together.
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Write the simulation world: SDF files, occupancy map and manifest.
    BuildWorld {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Build the world, compile plans, simulate and report.
    Simulate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Render report artifacts from a stored trace.
    Report {
        /// Trace file (JSON lines).
        #[arg(long)]
        trace: PathBuf,
        /// Map metadata (map.yaml) for the trajectory underlay.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// derive, then build-world, simulate and report in one run directory.
    Pipeline {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Trace time step in seconds.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    /// Stop after the first failed plan.
    #[arg(long)]
    abort_on_failure: bool,
}

fn overrides(i: &InputArgs, resolution: Option<f64>, sim: Option<&SimArgs>) -> Overrides {
    Overrides {
        scenario: i.scenario.clone(),
        project: i.project.clone(),
        kb: i.kb.clone(),
        fleet: i.fleet.clone(),
        agents: i.agents.clone(),
        resolution,
        dt: sim.and_then(|s| s.dt),
        abort_on_failure: sim.is_some_and(|s| s.abort_on_failure),
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Derive { inputs, out } => {
            let cfg = RunConfig::resolve(&overrides(&inputs, None, None))?;
            let loaded = load(&cfg)?;
            let report = derive(&loaded)?;
            print!("{}", report.table());
            if let Some(out) = out {
                std::fs::create_dir_all(&out).map_err(|e| CliError::Input(e.to_string()))?;
                let text = serde_json::to_string_pretty(&report).expect("serializes") + "\n";
                std::fs::write(out.join("requirements.json"), text).map_err(|e| CliError::Input(e.to_string()))?;
            }
            Ok(if report.pass { EXIT_OK } else { EXIT_UNSATISFIED })
        }
        Command::Validate { inputs } => {
            let cfg = RunConfig::resolve(&overrides(&inputs, None, None))?;
            let loaded = load(&cfg)?;
            for line in validate(&loaded)? {
                println!("{line}");
            }
            Ok(EXIT_OK)
        }
        Command::BuildWorld { inputs, world } => {
            let cfg = RunConfig::resolve(&overrides(&inputs, world.resolution, None))?;
            let loaded = load(&cfg)?;
            let built = build_world_artifacts(&cfg, &loaded, &world.out, world.force)?;
            println!(
                "wrote {} artifacts for {} scheduled element(s) to {}",
                built.manifest.artifacts.len(),
                built.manifest.scheduled_elements.len(),
                world.out.display()
            );
            for w in &built.manifest.warnings {
                eprintln!("warning: {w}");
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { inputs, world, sim } | Command::Pipeline { inputs, world, sim } => {
            let cfg = RunConfig::resolve(&overrides(&inputs, world.resolution, Some(&sim)))?;
            let loaded = load(&cfg)?;
            let report = derive(&loaded)?;
            print!("{}", report.table());
            let outcome = simulate(&cfg, &loaded, &world.out, world.force)?;
            print!("{}", describe(&outcome.summary));
            for f in &outcome.manifest.failures {
                eprintln!("failed: {f}");
            }
            Ok(outcome.exit_code())
        }
        Command::Report { trace, map, out } => {
            let summary = report_from_files(&trace, map.as_deref(), &out)?;
            print!("{}", describe(&summary));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    // usage errors share exit code 1 with other input errors; clap's own
    // default of 2 would read as unsatisfied requirements
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

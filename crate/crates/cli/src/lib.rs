//! Pipeline orchestration behind the `bimbot` command.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 unsatisfied modeling
//! requirements (without `--force`), 3 at least one plan failed.

use std::fmt;
use std::path::{Path, PathBuf};

use bimbot::analytics::{emit_report, ReportSummary};
use bimbot::fleet::{default_fleet, load_fleet, match_robots, RobotDescriptor};
use bimbot::kb::{load_kb, lookup_spec, resolve_skills, KnowledgeBase};
use bimbot::model::{load_project, Pose, Project};
use bimbot::reqs::{check_satisfaction, derive_requirements, SatisfactionReport};
use bimbot::sim::{compile_plan, load_agents, run, ActionKind, ActionPlan, AgentScript, EventKind, SimParams, Trace};
use bimbot::worldgen::{
    build_world, emit_sdf, file_artifact, sha256_hex, write_manifest, write_map_pgm, Artifact, SimWorld,
    WorldManifest, WorldParams,
};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNSATISFIED: i32 = 2;
pub const EXIT_PLAN_FAILED: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Unsatisfied(SatisfactionReport),
    PlanFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Unsatisfied(_) => EXIT_UNSATISFIED,
            CliError::PlanFailed(_) => EXIT_PLAN_FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "error: {m}"),
            CliError::Unsatisfied(r) => write!(
                f,
                "{} unsatisfied modeling requirement(s); augment the model or pass --force\n{}",
                r.unsatisfied().count(),
                r.table()
            ),
            CliError::PlanFailed(m) => write!(f, "plan failure: {m}"),
        }
    }
}

fn input<E: fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

/// Scenario file: input paths (relative to the file) and parameter sections.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    name: Option<String>,
    project: Option<PathBuf>,
    #[serde(default)]
    kb: Vec<PathBuf>,
    fleet: Option<PathBuf>,
    agents: Option<PathBuf>,
    #[serde(default)]
    world: WorldParams,
    #[serde(default)]
    sim: SimParams,
}

/// Fully resolved inputs of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub project: PathBuf,
    /// Empty means the bundled knowledge base.
    pub kb: Vec<PathBuf>,
    /// `None` means the bundled fleet.
    pub fleet: Option<PathBuf>,
    pub agents: Option<PathBuf>,
    pub world: WorldParams,
    pub sim: SimParams,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<PathBuf>,
    pub project: Option<PathBuf>,
    pub kb: Vec<PathBuf>,
    pub fleet: Option<PathBuf>,
    pub agents: Option<PathBuf>,
    pub resolution: Option<f64>,
    pub dt: Option<f64>,
    pub abort_on_failure: bool,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
        let (file, base) = match &o.scenario {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("cannot read scenario {}: {e}", path.display())))?;
                let file: ScenarioFile = toml::from_str(&text)
                    .map_err(|e| CliError::Input(format!("malformed scenario {}: {e}", path.display())))?;
                (file, path.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (ScenarioFile::default(), PathBuf::new()),
        };
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let project = o
            .project
            .clone()
            .or_else(|| file.project.clone().map(rel))
            .ok_or_else(|| CliError::Input("no project given (use --project or a scenario file)".into()))?;
        let mut kb: Vec<PathBuf> = file.kb.iter().cloned().map(rel).collect();
        kb.extend(o.kb.iter().cloned());
        let mut world = file.world;
        if let Some(r) = o.resolution {
            world.resolution = r;
        }
        let mut sim = file.sim;
        if let Some(dt) = o.dt {
            sim.dt = dt;
        }
        sim.abort_on_failure |= o.abort_on_failure;
        let name = file.name.clone().unwrap_or_else(|| {
            o.scenario
                .as_ref()
                .unwrap_or(&project)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into())
        });
        let cfg = RunConfig {
            name,
            project,
            kb,
            fleet: o.fleet.clone().or_else(|| file.fleet.clone().map(rel)),
            agents: o.agents.clone().or_else(|| file.agents.clone().map(rel)),
            world,
            sim,
        };
        for p in std::iter::once(&cfg.project)
            .chain(&cfg.kb)
            .chain(&cfg.fleet)
            .chain(&cfg.agents)
        {
            if !p.is_file() {
                return Err(CliError::Input(format!("input file not found: {}", p.display())));
            }
        }
        Ok(cfg)
    }
}

/// Parsed inputs.
pub struct Loaded {
    pub project: Project,
    pub kb: KnowledgeBase,
    pub fleet: Vec<RobotDescriptor>,
    pub agents: Vec<AgentScript>,
}

pub fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let project = load_project(&cfg.project).map_err(input)?;
    let kb = if cfg.kb.is_empty() {
        KnowledgeBase::default_kb()
    } else {
        load_kb(&cfg.kb).map_err(input)?
    };
    let fleet = match &cfg.fleet {
        Some(p) => load_fleet(p).map_err(input)?,
        None => default_fleet(),
    };
    let agents = match &cfg.agents {
        Some(p) => load_agents(p).map_err(input)?,
        None => Vec::new(),
    };
    Ok(Loaded {
        project,
        kb,
        fleet,
        agents,
    })
}

/// Requirements of every robotized task, checked against the project.
pub fn derive(l: &Loaded) -> Result<SatisfactionReport, CliError> {
    let reqs = derive_requirements(&l.project, &l.kb).map_err(input)?;
    Ok(check_satisfaction(&l.project, &reqs))
}

/// Checks inputs beyond parsing: specs exist, a robot matches every robotized
/// task, agent scripts are valid.
pub fn validate(l: &Loaded) -> Result<Vec<String>, CliError> {
    bimbot::reqs::validate_site_params(&l.project.site_params, &l.project).map_err(input)?;
    let mut notes = Vec::new();
    for task in l.project.robotized_tasks() {
        let robot = select_robot(l, &task.id)?;
        notes.push(format!("task {}: robot {}", task.id, robot.id));
    }
    notes.push(format!(
        "{} elements, {} tasks, {} agents",
        l.project.elements.len(),
        l.project.tasks.len(),
        l.agents.len()
    ));
    Ok(notes)
}

fn select_robot<'a>(l: &'a Loaded, task_id: &str) -> Result<&'a RobotDescriptor, CliError> {
    let task = l
        .project
        .task(task_id)
        .ok_or_else(|| CliError::Input(format!("unknown task {task_id}")))?;
    let spec = lookup_spec(&l.kb, task.task_spec_id.as_deref().unwrap_or_default()).map_err(input)?;
    let caps = resolve_skills(&l.kb, spec).required_capabilities;
    match_robots(&l.fleet, &caps, &l.project.site_params)
        .into_iter()
        .find(|r| r.supports_spec(spec).is_ok())
        .ok_or_else(|| {
            CliError::Input(format!(
                "no robot in the fleet can execute task {task_id} (needs {})",
                caps.iter().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
}

pub struct BuiltWorld {
    pub world: SimWorld,
    pub manifest: WorldManifest,
}

/// Gates on requirements, then writes SDF, map and manifest into `out`.
/// Nothing is written when the gate refuses.
pub fn build_world_artifacts(cfg: &RunConfig, l: &Loaded, out: &Path, force: bool) -> Result<BuiltWorld, CliError> {
    let report = derive(l)?;
    let unsatisfied = report.unsatisfied().count();
    if unsatisfied > 0 && !force {
        return Err(CliError::Unsatisfied(report));
    }
    let world = build_world(&l.project, &l.kb, cfg.world, force).map_err(input)?;
    let mut artifacts = emit_sdf(&world, out).map_err(input)?;
    let (pgm, yaml) = write_map_pgm(&world.grid, &out.join("map.pgm")).map_err(input)?;
    for p in [pgm, yaml] {
        artifacts.push(file_artifact(out, &p).map_err(input)?);
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = WorldManifest {
        project: cfg.project.display().to_string(),
        resolution: cfg.world.resolution,
        z_band: cfg.world.z_band,
        margin: cfg.world.margin,
        force_override: force && unsatisfied > 0,
        unsatisfied_requirements: unsatisfied,
        scheduled_elements: world.partition.scheduled.iter().map(|s| s.element.id.clone()).collect(),
        warnings: world.warnings.clone(),
        artifacts,
    };
    write_manifest(out, &manifest).map_err(input)?;
    Ok(BuiltWorld { world, manifest })
}

/// Plans for every robotized task in schedule order, with robot poses
/// chained from one plan to the next.
pub fn compile_all(l: &Loaded, world: &SimWorld, sim: &SimParams) -> Result<(RobotDescriptor, Vec<ActionPlan>), CliError> {
    let mut tasks: Vec<_> = l.project.robotized_tasks().collect();
    tasks.sort_by_key(|t| t.start_date);
    let mut start = sim.robot_start(world).map_err(input)?;
    let mut robot: Option<&RobotDescriptor> = None;
    let mut plans = Vec::new();
    for task in tasks {
        let r = select_robot(l, &task.id)?;
        if robot.is_some_and(|prev| prev.id != r.id) {
            return Err(CliError::Input(format!(
                "task {} needs robot {}, but only one robot per run is supported",
                task.id, r.id
            )));
        }
        robot = Some(r);
        let spec = lookup_spec(&l.kb, task.task_spec_id.as_deref().unwrap_or_default()).map_err(input)?;
        let compiled = compile_plan(task, spec, &l.kb, world, r, start, sim)
            .map_err(|e| CliError::PlanFailed(format!("cannot compile task {}: {e}", task.id)))?;
        if let Some(p) = last_destination(&compiled) {
            start = p;
        }
        plans.extend(compiled);
    }
    let robot = match robot {
        Some(r) => r.clone(),
        None => l
            .fleet
            .first()
            .cloned()
            .ok_or_else(|| CliError::Input("fleet is empty".into()))?,
    };
    Ok((robot, plans))
}

fn last_destination(plans: &[ActionPlan]) -> Option<Pose> {
    plans
        .iter()
        .flat_map(|p| &p.steps)
        .filter(|s| s.kind == ActionKind::Navigate)
        .filter_map(|s| s.pose_input("destination"))
        .last()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub project: String,
    pub force_override: bool,
    pub exit_code: i32,
    pub plans: usize,
    pub installs: usize,
    pub failures: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

pub struct SimOutcome {
    pub world: SimWorld,
    pub plans: Vec<ActionPlan>,
    pub trace: Trace,
    pub summary: ReportSummary,
    pub manifest: RunManifest,
}

impl SimOutcome {
    pub fn exit_code(&self) -> i32 {
        self.manifest.exit_code
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p != root.join("manifest.json") {
            let bytes = std::fs::read(&p).map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
            let rel = p.strip_prefix(root).expect("under root");
            out.push(Artifact {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    Ok(())
}

/// Full run into `out`: requirements gate, world under `world/`, plans,
/// trace, report under `report/`, and a run manifest hashing every file.
pub fn simulate(cfg: &RunConfig, l: &Loaded, out: &Path, force: bool) -> Result<SimOutcome, CliError> {
    let report = derive(l)?;
    if report.unsatisfied().count() > 0 && !force {
        return Err(CliError::Unsatisfied(report));
    }
    write(
        &out.join("requirements.json"),
        (serde_json::to_string_pretty(&report).expect("serializes") + "\n").as_bytes(),
    )?;
    let built = build_world_artifacts(cfg, l, &out.join("world"), force)?;
    let (robot, plans) = compile_all(l, &built.world, &cfg.sim)?;
    write(
        &out.join("plans.json"),
        (serde_json::to_string_pretty(&plans).expect("serializes") + "\n").as_bytes(),
    )?;
    let trace = run(&built.world, &robot, &plans, &l.agents, &cfg.sim).map_err(input)?;
    write(&out.join("trace.jsonl"), &trace.to_jsonl())?;
    let (summary, _) = emit_report(&trace, Some(&built.world.grid), &out.join("report")).map_err(input)?;

    let failures: Vec<String> = trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Failure { action_name, cause, .. } => {
                let plan = e.plan.and_then(|i| plans.get(i));
                Some(format!(
                    "plan {} ({}): {}: {}",
                    e.plan.map_or("-".into(), |i| i.to_string()),
                    plan.map_or("-", |p| p.element_id.as_str()),
                    action_name.as_deref().unwrap_or("-"),
                    cause
                ))
            }
            _ => None,
        })
        .collect();
    let exit_code = if failures.is_empty() { EXIT_OK } else { EXIT_PLAN_FAILED };
    let mut artifacts = Vec::new();
    collect_files(out, out, &mut artifacts)?;
    let manifest = RunManifest {
        name: cfg.name.clone(),
        project: cfg.project.display().to_string(),
        force_override: built.manifest.force_override,
        exit_code,
        plans: plans.len(),
        installs: trace.install_count(),
        failures,
        artifacts,
    };
    write(
        &out.join("manifest.json"),
        (serde_json::to_string_pretty(&manifest).expect("serializes") + "\n").as_bytes(),
    )?;
    Ok(SimOutcome {
        world: built.world,
        plans,
        trace,
        summary,
        manifest,
    })
}

/// Report artifacts for a stored trace; `map_yaml` adds the occupancy map
/// underlay.
pub fn report_from_files(trace_path: &Path, map_yaml: Option<&Path>, out: &Path) -> Result<ReportSummary, CliError> {
    let file = std::fs::File::open(trace_path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", trace_path.display())))?;
    let trace = Trace::read_jsonl(std::io::BufReader::new(file)).map_err(input)?;
    let map = match map_yaml {
        Some(p) => Some(bimbot::worldgen::read_map_pgm(p).map_err(input)?),
        None => None,
    };
    let (summary, _) = emit_report(&trace, map.as_ref(), out).map_err(input)?;
    Ok(summary)
}

/// Human-readable run summary.
pub fn describe(summary: &ReportSummary) -> String {
    let mut s = format!(
        "{} plan(s), {} install(s), {} failed; end time {:.1} s\n",
        summary.plans,
        summary.installs,
        summary.failed_plans.len(),
        summary.end_time
    );
    for p in &summary.separation {
        s.push_str(&format!(
            "min separation {} - {} ({}): {:.2} m at t = {:.1} s{}\n",
            p.a,
            p.b,
            p.b_role,
            p.min_distance,
            p.min_time,
            if p.below_threshold { "  [below 1 m]" } else { "" }
        ));
    }
    if let Some(n) = &summary.notice {
        s.push_str(n);
        s.push('\n');
    }
    for p in &summary.durations.plans {
        s.push_str(&format!(
            "plan {:>2} {:<10} {:>8.1} s{}\n",
            p.index,
            p.element_id,
            p.total,
            if p.failed { "  FAILED" } else { "" }
        ));
    }
    s.push_str(&format!("total {:.1} s ({:.2} min)\n", summary.durations.run_total, summary.durations.run_total / 60.0));
    s
}

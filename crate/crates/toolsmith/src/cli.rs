//! Command-line entry point. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use toolsmith_core::action::{
    run_control_loop, ControlConfig, NullPolicy, Policy, FailureInjection, ScriptedExpert, SimWorld,
};
use toolsmith_core::episodes::{save_episode, summarize_dataset, write_to_dataset, EPISODE_SCHEMA_VERSION};
use toolsmith_core::evaluation::{
    aggregate_report, generate_scenarios, generate_suite, nominal_setup, render_report, run_trials, Category,
    PerturbationRanges, ReportFormat, StageSample, TrialResult,
};
use toolsmith_core::mesh::{parse_mesh_text, scale_mesh_to_target, serialize_mesh, validate_mesh};
use toolsmith_core::scene::{formulate_tool_prompt, SceneSnapshot};
use toolsmith_core::Mesh;

use crate::config::PipelineConfig;
use crate::phase::{evaluate_scene, scene_files, SceneOutcome};
use crate::pipeline::{fabricate, prepare_mesh_text, run_pipeline, Backends, TaskKind, EPISODE_FILE};

pub const TRIALS_FILE: &str = "trials.json";
pub const STAGES_FILE: &str = "stages.json";

#[derive(Parser, Debug)]
#[command(name = "toolsmith", version, about = "Scene to printable tool to robot actions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Describe a scene and name the tool it needs.
    Interpret {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Generate mesh text for a prompt or tool name.
    Genmesh {
        #[arg(long, conflicts_with = "tool", required_unless_present = "tool")]
        prompt: Option<String>,
        #[arg(long)]
        tool: Option<String>,
    },
    /// Mesh checks and transforms.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Slice a mesh into G-code.
    Slice { mesh: PathBuf },
    /// Rollouts.
    #[command(subcommand)]
    Act(ActCommand),
    /// Record expert episodes into a dataset directory.
    Record {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value = "motion")]
        category: String,
    },
    /// Run evaluation trials, or per-stage scoring over a scene directory.
    Eval {
        /// Task for generated scenarios, or for rollouts on scene files.
        #[arg(long, default_value = "cut")]
        task: String,
        /// A category name or `all`.
        #[arg(long, default_value = "all")]
        category: String,
        /// Scenarios per category.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// expert, null, or expert+fail:<p>.
        #[arg(long, default_value = "expert")]
        policy: String,
        /// Perturbation ranges (TOML).
        #[arg(long)]
        ranges: Option<PathBuf>,
        /// Score each stage on the annotated scenes in this directory instead.
        #[arg(long)]
        scenes: Option<PathBuf>,
    },
    /// Full pipeline on one scene.
    Pipeline {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "cut")]
        task: String,
    },
    /// Render a report from saved trial and stage results.
    Report {
        /// Directory holding trials.json and/or stages.json.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dataset directory to summarize instead.
        #[arg(long, conflicts_with = "input")]
        dataset: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum MeshCommand {
    /// Report defects; exits 1 when any are found.
    Validate { mesh: PathBuf },
    /// Scale so the longest extent is fit_ratio times the target size.
    Scale {
        mesh: PathBuf,
        #[arg(long)]
        target_mm: f64,
        #[arg(long)]
        fit_ratio: Option<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum ActCommand {
    /// One rollout on a scene; writes the episode.
    Run {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "cut")]
        task: String,
    },
}

/// A failure reported with exit code 1.
struct Domain(String);

impl<E: std::fmt::Display> From<E> for Domain {
    fn from(e: E) -> Self {
        Domain(e.to_string())
    }
}

type Outcome = Result<(), Domain>;

/// Runs with the process streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// `argv[0]` is the program name.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(Domain(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn load_config(g: &Global) -> Result<PipelineConfig, Domain> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.output {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn read_mesh(path: &Path) -> Result<Mesh, Domain> {
    let text = std::fs::read_to_string(path).map_err(|e| Domain(format!("reading {}: {e}", path.display())))?;
    parse_mesh_text(&text).map_err(|e| Domain(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Domain(format!("writing {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Domain> {
    let text = std::fs::read_to_string(path).map_err(|e| Domain(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Domain(format!("{}: {e}", path.display())))
}

/// Prints `(key, value)` rows as `key: value` lines or a two-line CSV.
fn emit(out: &mut dyn Write, format: Format, rows: &[(&str, String)]) -> Outcome {
    match format {
        Format::Text => {
            for (k, v) in rows {
                writeln!(out, "{k}: {v}")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(rows.iter().map(|(k, _)| *k))?;
            w.write_record(rows.iter().map(|(_, v)| v.as_str()))?;
            out.write_all(&w.into_inner().map_err(|e| Domain(e.to_string()))?)?;
        }
    }
    Ok(())
}

fn parse_policy(spec: &str) -> Result<impl Fn(toolsmith_core::action::ActionLimits) -> Box<dyn Policy + Send> + Sync, Domain> {
    let fail = match spec {
        "expert" | "null" => None,
        other => match other.strip_prefix("expert+fail:") {
            Some(p) => {
                let p: f64 = p.parse().map_err(|_| Domain(format!("bad failure probability in {other:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Domain(format!("failure probability {p} is outside [0, 1]")));
                }
                Some(p)
            }
            None => return Err(Domain(format!("unknown policy {other:?} (expected expert, null or expert+fail:<p>)"))),
        },
    };
    let null = spec == "null";
    Ok(move |limits| -> Box<dyn Policy + Send> {
        match (null, fail) {
            (true, _) => Box::new(NullPolicy),
            (false, Some(p)) => Box::new(FailureInjection::new(ScriptedExpert::new(limits), p)),
            (false, None) => Box::new(ScriptedExpert::new(limits)),
        }
    })
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Text => ReportFormat::Text,
        Format::Csv => ReportFormat::Csv,
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Outcome {
    let g = &cli.global;
    match cli.command {
        Command::Interpret { scene } => {
            let cfg = load_config(g)?;
            let backends = Backends::from_config(&cfg)?;
            let snapshot = SceneSnapshot::load(&scene)?;
            let a = backends.interpreter.interpret(&snapshot)?;
            emit(
                out,
                g.format,
                &[
                    ("scene_id", snapshot.scene_id.clone()),
                    ("target", a.target.name.clone()),
                    ("target_size_mm", a.target.approx_size_mm.to_string()),
                    ("tool", a.tool_name.clone()),
                    ("prompt", a.tool_prompt.clone()),
                    ("description", a.description.clone()),
                ],
            )
        }
        Command::Genmesh { prompt, tool } => {
            let cfg = load_config(g)?;
            let backends = Backends::from_config(&cfg)?;
            let prompt = match (prompt, tool) {
                (Some(p), _) => p,
                (None, Some(t)) => formulate_tool_prompt(&t)?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let text = backends.generator.generate(&prompt, 1)?;
            parse_mesh_text::<f64>(&text)?;
            match &g.output {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join(crate::pipeline::MESH_FILE);
                    std::fs::write(&path, &text)?;
                    emit(out, g.format, &[("mesh", path.display().to_string())])
                }
                None => Ok(out.write_all(text.as_bytes())?),
            }
        }
        Command::Mesh(MeshCommand::Validate { mesh }) => {
            let m = read_mesh(&mesh)?;
            let report = validate_mesh(&m);
            match g.format {
                Format::Text => {
                    writeln!(out, "watertight: {}", report.watertight)?;
                    writeln!(out, "edge_manifold: {}", report.edge_manifold)?;
                    writeln!(out, "oriented_consistently: {}", report.oriented_consistently)?;
                    writeln!(out, "signed_volume_mm3: {}", report.signed_volume_mm3)?;
                    writeln!(out, "defects: {}", report.defects.len())?;
                    for d in &report.defects {
                        writeln!(out, "  {d}")?;
                    }
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["kind", "at", "detail"])?;
                    for d in &report.defects {
                        w.write_record([d.kind.to_string(), d.at.to_string(), d.detail.clone()])?;
                    }
                    out.write_all(&w.into_inner().map_err(|e| Domain(e.to_string()))?)?;
                }
            }
            if report.passes() {
                Ok(())
            } else {
                Err(Domain(format!("{}: {} defect(s)", mesh.display(), report.defects.len())))
            }
        }
        Command::Mesh(MeshCommand::Scale { mesh, target_mm, fit_ratio }) => {
            let cfg = load_config(g)?;
            let m = read_mesh(&mesh)?;
            let scaled = scale_mesh_to_target(&m, target_mm, fit_ratio.unwrap_or(cfg.fit_ratio))?;
            let text = serialize_mesh(&scaled);
            match &g.output {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let name = mesh.file_name().map(PathBuf::from).unwrap_or_else(|| "scaled.obj".into());
                    let path = dir.join(name);
                    std::fs::write(&path, text)?;
                    emit(
                        out,
                        g.format,
                        &[("mesh", path.display().to_string()), ("longest_mm", scaled.bounding_box().max_extent().to_string())],
                    )
                }
                None => Ok(out.write_all(text.as_bytes())?),
            }
        }
        Command::Slice { mesh } => {
            let cfg = load_config(g)?;
            let text = std::fs::read_to_string(&mesh).map_err(|e| Domain(format!("reading {}: {e}", mesh.display())))?;
            let (m, _) = prepare_mesh_text(&text).map_err(|e| Domain(format!("{}: {e}", mesh.display())))?;
            let placed = m.placed_on_bed(cfg.printer.bed_size_mm)?;
            let (gcode, stats) = fabricate(&placed, &cfg)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join(crate::pipeline::GCODE_FILE);
            std::fs::write(&path, gcode)?;
            emit(
                out,
                g.format,
                &[
                    ("gcode", path.display().to_string()),
                    ("layers", stats.layer_count.to_string()),
                    ("extruded_path_mm", format!("{:.3}", stats.extruded_path_mm)),
                    ("travel_path_mm", format!("{:.3}", stats.travel_path_mm)),
                    ("filament_mm", format!("{:.5}", stats.filament_mm)),
                    ("estimated_seconds", format!("{:.1}", stats.estimated_seconds)),
                ],
            )
        }
        Command::Act(ActCommand::Run { scene, task }) => {
            let cfg = load_config(g)?;
            let kind: TaskKind = task.parse().map_err(Domain)?;
            let backends = Backends::from_config(&cfg)?;
            let snapshot = SceneSnapshot::load(&scene)?;
            let target = snapshot.target().ok_or_else(|| Domain("scene has no target object".into()))?;
            let mut world = SimWorld::from_scene(&snapshot, SimWorld::default_workspace());
            let mut spec = kind.task_for(&target.name, &world).map_err(Domain)?;
            if let Some(n) = cfg.control.max_steps {
                spec.max_steps = n;
            }
            let control = ControlConfig {
                hz: cfg.control.hz,
                mode: cfg.control.mode,
                limits: cfg.control.limits,
                seed: cfg.seed,
                episode_id: format!("{}-{}", snapshot.scene_id, spec.task_name),
                ..ControlConfig::default()
            };
            let mut policy = (backends.policy)();
            let ep = run_control_loop(policy.as_mut(), &mut world, &spec, &control)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join(EPISODE_FILE);
            save_episode(&ep, &path)?;
            emit(
                out,
                g.format,
                &[
                    ("episode", path.display().to_string()),
                    ("steps", ep.steps.len().to_string()),
                    ("success", ep.success.to_string()),
                ],
            )?;
            if ep.success {
                Ok(())
            } else {
                Err(Domain(ep.metadata.error.unwrap_or_else(|| "goal not reached".into())))
            }
        }
        Command::Record { task, episodes, category } => {
            let cfg = load_config(g)?;
            let category: Category = category.parse()?;
            let setup = nominal_setup(&task)?;
            let scenarios = generate_scenarios(&setup, category, episodes, cfg.seed, &PerturbationRanges::default())?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let mut recorded = 0usize;
            for sc in &scenarios {
                let mut world = sc.world.clone();
                let control = ControlConfig {
                    hz: cfg.control.hz,
                    mode: cfg.control.mode,
                    limits: cfg.control.limits,
                    seed: sc.seed,
                    episode_id: sc.scenario_id.clone(),
                    ..ControlConfig::default()
                };
                let mut policy = ScriptedExpert::new(cfg.control.limits);
                let ep = run_control_loop(&mut policy, &mut world, &sc.task, &control)?;
                write_to_dataset(&cfg.output_dir, &ep)?;
                recorded += 1;
            }
            let (summary, problems) = summarize_dataset(&cfg.output_dir)?;
            emit(
                out,
                g.format,
                &[
                    ("dataset", cfg.output_dir.display().to_string()),
                    ("schema_version", EPISODE_SCHEMA_VERSION.to_string()),
                    ("recorded", recorded.to_string()),
                    ("episodes", summary.episode_count.to_string()),
                    ("successes", summary.success_count.to_string()),
                    ("unreadable", problems.len().to_string()),
                ],
            )
        }
        Command::Eval { task, category, n, policy, ranges, scenes } => {
            let cfg = load_config(g)?;
            if let Some(dir) = scenes {
                return eval_scenes(&dir, &task, &cfg, g, out);
            }
            let ranges = match ranges {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Domain(format!("reading {}: {e}", p.display())))?;
                    toml::from_str::<PerturbationRanges>(&text).map_err(|e| Domain(format!("{}: {e}", p.display())))?
                }
                None => PerturbationRanges::default(),
            };
            let make = parse_policy(&policy)?;
            let setup = nominal_setup(&task)?;
            let scenarios = if category == "all" {
                generate_suite(&setup, n, cfg.seed, &ranges)?
            } else {
                generate_scenarios(&setup, category.parse()?, n, cfg.seed, &ranges)?
            };
            let limits = cfg.control.limits;
            let results = run_trials(|| make(limits), &scenarios, limits);
            if g.output.is_some() || g.config.is_some() {
                std::fs::create_dir_all(&cfg.output_dir)?;
                write_json(&cfg.output_dir.join(TRIALS_FILE), &results)?;
            }
            let report = aggregate_report(&results, &[])?;
            write!(out, "{}", render_report(&report, report_format(g.format)))?;
            Ok(())
        }
        Command::Pipeline { scene, task } => {
            let cfg = load_config(g)?;
            let kind: TaskKind = task.parse().map_err(Domain)?;
            let backends = Backends::from_config(&cfg)?;
            let record = run_pipeline(&scene, kind, &cfg, &backends)?;
            let art = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
            let stats = record.gcode.unwrap_or_default();
            emit(
                out,
                g.format,
                &[
                    ("scene_id", record.scene_id.clone()),
                    ("tool", record.analysis.as_ref().map(|a| a.tool_name.clone()).unwrap_or_default()),
                    ("attempts", record.attempts.to_string()),
                    ("mesh", art(&record.artifacts.mesh)),
                    ("gcode", art(&record.artifacts.gcode)),
                    ("episode", art(&record.artifacts.episode)),
                    ("layers", stats.layer_count.to_string()),
                    ("filament_mm", format!("{:.5}", stats.filament_mm)),
                    ("episode_steps", record.episode_steps.to_string()),
                    ("success", record.success.to_string()),
                    ("total_s", format!("{:.3}", record.timings.total_s)),
                ],
            )?;
            if record.success {
                Ok(())
            } else {
                Err(Domain(record.error.unwrap_or_else(|| "pipeline did not succeed".into())))
            }
        }
        Command::Report { input, dataset } => {
            if let Some(dir) = dataset {
                let (s, problems) = summarize_dataset(&dir)?;
                let mut rows = vec![
                    ("episodes", s.episode_count.to_string()),
                    ("successes", s.success_count.to_string()),
                    ("mean_steps", format!("{:.2}", s.mean_steps)),
                    ("unreadable", problems.len().to_string()),
                ];
                let per_task: Vec<(String, String)> =
                    s.per_task_counts.iter().map(|(k, v)| (format!("task_{k}"), v.to_string())).collect();
                rows.extend(per_task.iter().map(|(k, v)| (k.as_str(), v.clone())));
                return emit(out, g.format, &rows);
            }
            let dir = input
                .or_else(|| g.output.clone())
                .ok_or_else(|| Domain("report needs --input <dir> or --dataset <dir>".into()))?;
            let trials_path = dir.join(TRIALS_FILE);
            let stages_path = dir.join(STAGES_FILE);
            let results: Vec<TrialResult> = if trials_path.exists() { read_json(&trials_path)? } else { Vec::new() };
            let stages: Vec<StageSample> = if stages_path.exists() { read_json(&stages_path)? } else { Vec::new() };
            let report = aggregate_report(&results, &stages)
                .map_err(|e| Domain(format!("{}: {e}", dir.display())))?;
            write!(out, "{}", render_report(&report, report_format(g.format)))?;
            Ok(())
        }
    }
}

fn eval_scenes(dir: &Path, task: &str, cfg: &PipelineConfig, g: &Global, out: &mut dyn Write) -> Outcome {
    let kind: TaskKind = task.parse().map_err(Domain)?;
    let backends = Backends::from_config(cfg)?;
    let files = scene_files(dir).map_err(|e| Domain(format!("reading {}: {e}", dir.display())))?;
    if files.is_empty() {
        return Err(Domain(format!("no scene files in {}", dir.display())));
    }
    let mut outcomes: Vec<SceneOutcome> = Vec::new();
    for f in &files {
        let snapshot = SceneSnapshot::load(f)?;
        outcomes.push(evaluate_scene(&snapshot, kind, cfg, &backends));
    }
    let samples: Vec<StageSample> = outcomes.iter().flat_map(|o| o.samples()).collect();
    if g.output.is_some() || g.config.is_some() {
        std::fs::create_dir_all(&cfg.output_dir)?;
        write_json(&cfg.output_dir.join(STAGES_FILE), &samples)?;
        write_json(&cfg.output_dir.join("scenes.json"), &outcomes)?;
    }
    let report = aggregate_report(&[], &samples)?;
    write!(out, "{}", render_report(&report, report_format(g.format)))?;
    Ok(())
}

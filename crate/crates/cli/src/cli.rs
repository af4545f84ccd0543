//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lumaproxy_core::camera::{plan_camera, CameraTrajectory, Intrinsics};
use lumaproxy_core::dsl::{parse_prompt, CameraClause, MoveKind};
use lumaproxy_core::envlight::{
    load_env_index, load_envmap, procedural_sky, rotate_envmap, rotation_schedule, select_envmap, write_lenv, EnvMap,
    EnvSelection,
};
use lumaproxy_core::eval::{
    compute_ate, compute_miou, compute_rpe, lighting_instability, load_mask_dir, per_frame_csv, per_object_iou,
    si_mse_sequence, umeyama_sim3, EvalReport, ScaleMode,
};
use lumaproxy_core::render::render_proxy;
use lumaproxy_core::scene::{build_scene_graph, solve_layout, SceneAssembly};
use lumaproxy_latent::checkpoint::write_checkpoint;
use lumaproxy_latent::data::{toy_dataset, ToySource};
use lumaproxy_latent::model::ToyModel;
use lumaproxy_latent::train::{evaluate, pretrain_backbone, run_stage, trace_csv, Stage, StageConfig, ToyRecipe};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::output::{sha256_hex, OutputDir, RunManifest};
use crate::pipeline::{load_library, make_syn, run_pipeline, write_sample, RotationRecord, SampleArtifacts};
use crate::{parse_err, runtime_err, CliError, Result, EXIT_OK, EXIT_USAGE};

/// Environment variable that overrides `--threads`.
pub const THREADS_ENV: &str = "LIVER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "lumaproxy",
    version,
    about = "Scene proxies for lighting- and camera-controlled video generation"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Render threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Pipeline settings, TOML or JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// File holding the prompt.
    #[arg(long, conflicts_with = "text")]
    pub prompt: Option<PathBuf>,
    /// Prompt given inline.
    #[arg(long)]
    pub text: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct RenderOverrides {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Samples per pixel for every pass.
    #[arg(long)]
    pub spp: Option<u32>,
    /// Total environment yaw over the clip, degrees.
    #[arg(long)]
    pub rotation: Option<f64>,
}

impl RenderOverrides {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(v) = self.width {
            c.width = v;
        }
        if let Some(v) = self.height {
            c.height = v;
        }
        if let Some(v) = self.frames {
            c.frames = v;
        }
        if let Some(v) = self.spp {
            c.spp_diffuse = v;
            c.spp_glossy = v;
        }
        if let Some(v) = self.rotation {
            c.rotation_deg = v;
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a prompt, retrieve assets and solve the layout into scene.json.
    BuildScene {
        #[command(flatten)]
        prompt: PromptArgs,
    },
    /// Plan a camera trajectory around a scene into traj.txt.
    PlanCamera {
        #[arg(long)]
        scene: PathBuf,
        /// Take the camera clause from this prompt.
        #[command(flatten)]
        prompt: PromptArgs,
        /// Camera move when no prompt is given.
        #[arg(long = "move", default_value = "orbit")]
        move_kind: String,
        /// Move parameter, `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[command(flatten)]
        render: RenderOverrides,
    },
    /// Environment map tools.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Render the three proxy passes for a scene and trajectory.
    RenderProxy {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        /// LENV or RGBE map; the procedural sky when absent.
        #[arg(long)]
        env: Option<PathBuf>,
        #[command(flatten)]
        render: RenderOverrides,
    },
    /// Sample and render procedural synthetic clips.
    MakeSyn {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[command(flatten)]
        render: RenderOverrides,
    },
    /// Train the toy conditioning adapter through its stages.
    TrainToy(TrainArgs),
    /// Control-fidelity metrics.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Prompt to scene, trajectory, lighting and proxy in one go.
    Run {
        #[command(flatten)]
        prompt: PromptArgs,
        #[command(flatten)]
        render: RenderOverrides,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnvCommand {
    /// Rotate a map about the vertical axis.
    Rotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        yaw: f64,
        #[arg(long, default_value = "rotated.lenv")]
        output: String,
    },
    /// Generate the analytic sky.
    Sky {
        #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
        azimuth: f64,
        #[arg(long, default_value_t = 30.0)]
        elevation: f64,
        #[arg(long, default_value_t = 0.5)]
        warmth: f64,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value = "sky.lenv")]
        output: String,
    },
    /// Pick the catalog map best matching some lighting tags.
    Select {
        #[arg(long)]
        index: PathBuf,
        /// Comma-separated tags.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    PerFrame,
    PerSequence,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// ATE and RPE of a predicted trajectory against ground truth.
    Traj {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1)]
        delta: usize,
    },
    /// Scale-invariant lighting error of environment-map sequences.
    Light {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "per-frame")]
        scale: ScaleArg,
    },
    /// Mean IoU of object-ID mask sequences.
    Layout {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated stage list.
    #[arg(long, default_value = "A,B", value_delimiter = ',')]
    pub stages: Vec<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
    #[arg(long)]
    pub steps_a: Option<usize>,
    #[arg(long)]
    pub steps_b: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub steps_c: usize,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got '{s}'"))?;
    let v: f64 = value.parse().map_err(|_| format!("'{value}' is not a number"))?;
    Ok((name.trim().to_ascii_lowercase(), v))
}

/// `LIVER_THREADS`, then `--threads`, then the core count.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<usize> {
    if let Some(v) = env {
        return match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            ))),
        };
    }
    match flag {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn read_prompt(p: &PromptArgs) -> Result<Option<String>> {
    match (&p.prompt, &p.text) {
        (Some(path), _) => std::fs::read_to_string(path).map(Some).map_err(parse_err("prompt")),
        (None, Some(t)) => Ok(Some(t.clone())),
        (None, None) => Ok(None),
    }
}

fn require_prompt(p: &PromptArgs) -> Result<String> {
    read_prompt(p)?.ok_or_else(|| CliError::Usage("one of --prompt or --text is required".into()))
}

/// Write a single-output command's result and manifest, cleaning up on error.
fn with_output<F>(root: &Path, command: &str, f: F) -> Result<RunManifest>
where
    F: FnOnce(&mut OutputDir, &mut RunManifest) -> Result<()>,
{
    let mut out = OutputDir::create(root)?;
    let mut manifest = RunManifest::new(command);
    match f(&mut out, &mut manifest) {
        Ok(()) => out.finish(manifest),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    serde_json::to_vec_pretty(v).map_err(runtime_err("write"))
}

fn load_frames(dir: &Path) -> Result<Vec<EnvMap>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(parse_err("env sequence"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_"))
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("lenv") || e.eq_ignore_ascii_case("hdr"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_envmap(p).map_err(parse_err("env sequence")))
        .collect()
}

fn load_scene(path: &Path, config: &PipelineConfig) -> Result<SceneAssembly> {
    let library = load_library(config)?;
    SceneAssembly::load_json(path, &library).map_err(parse_err("scene"))
}

fn load_traj(path: &Path) -> Result<CameraTrajectory> {
    CameraTrajectory::load(path).map_err(parse_err("trajectory"))
}

pub fn run(cli: Cli) -> Result<RunManifest> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let env_threads = std::env::var(THREADS_ENV).ok();
    let threads = resolve_threads(cli.threads, env_threads.as_deref())?;
    let seed = cli.seed;
    let out = cli.out.as_path();

    match cli.command {
        Command::Run { prompt, render } => {
            render.apply(&mut config);
            let text = require_prompt(&prompt)?;
            run_pipeline(&text, &config, out, seed, threads)
        }
        Command::MakeSyn { count, render } => {
            render.apply(&mut config);
            make_syn(count, &config, out, seed, threads)
        }
        Command::BuildScene { prompt } => {
            let text = require_prompt(&prompt)?;
            let ast = parse_prompt(&text).map_err(parse_err("parse_prompt"))?;
            let library = load_library(&config)?;
            with_output(out, "build-scene", |o, m| {
                let built = build_scene_graph(&ast, &library).map_err(runtime_err("retrieve_asset"))?;
                let assembly = solve_layout(&built.graph, &built.meshes, seed);
                o.write("scene.json", &json(&assembly.to_file())?)?;
                o.write(
                    "matches.json",
                    &json(
                        &built
                            .matches
                            .iter()
                            .map(|a| (&a.asset_id, a.score, a.zero_score))
                            .collect::<Vec<_>>(),
                    )?,
                )?;
                m.inputs.insert("prompt".into(), sha256_hex(text.as_bytes()));
                m.seeds.insert("layout".into(), seed);
                Ok(())
            })
        }
        Command::PlanCamera {
            scene,
            prompt,
            move_kind,
            params,
            render,
        } => {
            render.apply(&mut config);
            let assembly = load_scene(&scene, &config)?;
            let clause = match read_prompt(&prompt)? {
                Some(text) => parse_prompt(&text)
                    .map_err(parse_err("parse_prompt"))?
                    .camera
                    .unwrap_or_else(|| CameraClause::new(MoveKind::Orbit)),
                None => CameraClause {
                    move_kind: MoveKind::from_token(&move_kind.to_ascii_lowercase())
                        .ok_or_else(|| CliError::Usage(format!("unknown camera move '{move_kind}'")))?,
                    params,
                },
            };
            with_output(out, "plan-camera", |o, m| {
                let traj = plan_camera(
                    &clause,
                    &assembly,
                    config.frames,
                    Intrinsics::default_for(config.width, config.height),
                )
                .map_err(runtime_err("plan_camera"))?;
                o.write("traj.txt", traj.to_text().as_bytes())?;
                m.settings = serde_json::json!({ "move": clause.move_kind.as_str(), "params": clause.params, "frames": config.frames });
                Ok(())
            })
        }
        Command::Env { command } => run_env(command, &config, out),
        Command::RenderProxy {
            scene,
            traj,
            env,
            render,
        } => {
            render.apply(&mut config);
            let assembly = load_scene(&scene, &config)?;
            let trajectory = load_traj(&traj)?;
            let env_map = match &env {
                Some(p) => load_envmap(p).map_err(parse_err("load_envmap"))?,
                None => procedural_sky(
                    config.sky_azimuth,
                    config.sky_elevation,
                    config.sky_warmth,
                    config.env_height,
                )
                .map_err(parse_err("procedural_sky"))?,
            };
            let first = trajectory.poses.first().map(|p| p.intrinsics);
            if let Some(i) = first {
                // Image size follows the trajectory's principal point.
                if render.width.is_none() && render.height.is_none() {
                    config.width = (2.0 * i.cx).round() as usize;
                    config.height = (2.0 * i.cy).round() as usize;
                }
            }
            with_output(out, "render-proxy", |o, m| {
                let yaws = rotation_schedule(config.rotation_deg, trajectory.frame_count().max(1));
                let stack = render_proxy(
                    &assembly,
                    &env_map,
                    &trajectory,
                    &yaws,
                    &config.render_settings(seed),
                    threads,
                )
                .map_err(runtime_err("render_proxy"))?;
                let artifacts = SampleArtifacts {
                    assembly: &assembly,
                    trajectory: &trajectory,
                    env: &env_map,
                    rotation: RotationRecord {
                        total_deg: config.rotation_deg,
                        yaws_deg: yaws,
                    },
                    stack: &stack,
                    caption: String::new(),
                };
                m.proxy.push(write_sample(o, "", &artifacts, config.previews)?);
                m.seeds.insert("render".into(), seed);
                m.settings = serde_json::to_value(&config).unwrap_or_default();
                Ok(())
            })
        }
        Command::TrainToy(args) => run_train(args, out, seed),
        Command::Eval { command } => run_eval(command, out),
    }
}

fn run_env(command: EnvCommand, config: &PipelineConfig, out: &Path) -> Result<RunManifest> {
    match command {
        EnvCommand::Rotate { input, yaw, output } => {
            let map = load_envmap(&input).map_err(parse_err("load_envmap"))?;
            if !yaw.is_finite() {
                return Err(CliError::Usage("--yaw must be finite".into()));
            }
            with_output(out, "env rotate", |o, m| {
                o.write(&output, &write_lenv(&rotate_envmap(&map, yaw)))?;
                m.settings = serde_json::json!({ "yaw_deg": yaw });
                Ok(())
            })
        }
        EnvCommand::Sky {
            azimuth,
            elevation,
            warmth,
            height,
            output,
        } => {
            let map = procedural_sky(azimuth, elevation, warmth, height).map_err(parse_err("procedural_sky"))?;
            with_output(out, "env sky", |o, m| {
                o.write(&output, &write_lenv(&map))?;
                m.settings = serde_json::json!({ "azimuth": azimuth, "elevation": elevation, "warmth": warmth, "height": height });
                Ok(())
            })
        }
        EnvCommand::Select { index, tags } => {
            let entries = load_env_index(&index).map_err(parse_err("env index"))?;
            let tags: Vec<String> = tags
                .iter()
                .map(|t| t.trim().to_ascii_lowercase())
                .filter(|t| !t.is_empty())
                .collect();
            let selection = match select_envmap(&tags, &entries) {
                EnvSelection::Env(id) => serde_json::json!({ "env_id": id, "procedural_fallback": false }),
                EnvSelection::ProceduralFallback => serde_json::json!({
                    "env_id": null,
                    "procedural_fallback": true,
                    "sky": { "azimuth": config.sky_azimuth, "elevation": config.sky_elevation, "warmth": config.sky_warmth },
                }),
            };
            println!("{selection}");
            with_output(out, "env select", |o, _| {
                o.write("selection.json", &json(&selection)?)?;
                Ok(())
            })
        }
    }
}

#[derive(Debug, Serialize)]
struct StageSummary {
    stage: String,
    steps: usize,
    eval_loss: f64,
    batches_per_source: [usize; 2],
}

#[derive(Debug, Serialize)]
struct TrainReport {
    initial_loss: f64,
    stages: Vec<StageSummary>,
}

fn run_train(args: TrainArgs, out: &Path, seed: u64) -> Result<RunManifest> {
    let d = ToyRecipe::default();
    let recipe = ToyRecipe {
        samples: args.samples.unwrap_or(d.samples),
        size: args.size.unwrap_or(d.size),
        pretrain_steps: args.pretrain_steps.unwrap_or(d.pretrain_steps),
        stage_a_steps: args.steps_a.unwrap_or(d.stage_a_steps),
        stage_b_steps: args.steps_b.unwrap_or(d.stage_b_steps),
        batch_size: args.batch.unwrap_or(d.batch_size),
        lr: args.lr.unwrap_or(d.lr),
        ..d
    };
    let stages = args
        .stages
        .iter()
        .map(|s| Stage::parse(s.trim()).ok_or_else(|| CliError::Usage(format!("unknown stage '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    with_output(out, "train-toy", |o, m| {
        let syn =
            toy_dataset(ToySource::Synthetic, recipe.samples, recipe.size, seed).map_err(runtime_err("toy data"))?;
        let real = if stages.contains(&Stage::C) {
            toy_dataset(ToySource::Real, recipe.samples, recipe.size, seed.wrapping_add(1))
                .map_err(runtime_err("toy data"))?
        } else {
            Vec::new()
        };
        let mut model = ToyModel::new(seed.wrapping_add(1));
        let trace = pretrain_backbone(
            &mut model,
            &syn,
            recipe.pretrain_steps,
            recipe.pretrain_batch,
            recipe.lr,
            seed.wrapping_add(2),
        )
        .map_err(runtime_err("pretrain"))?;
        o.write("trace_pretrain.csv", trace_csv(&trace).as_bytes())?;
        let eval_seed = seed.wrapping_add(99);
        let initial_loss = evaluate(&model, &syn, recipe.eval_draws, eval_seed).map_err(runtime_err("evaluate"))?;
        let mut report = TrainReport {
            initial_loss,
            stages: Vec::new(),
        };
        for (i, &stage) in stages.iter().enumerate() {
            let steps = match stage {
                Stage::A => recipe.stage_a_steps,
                Stage::B => recipe.stage_b_steps,
                Stage::C => args.steps_c,
            };
            let config = StageConfig {
                batch_size: recipe.batch_size,
                lr: recipe.lr,
                ..StageConfig::new(stage, steps)
            };
            let r = run_stage(&mut model, &config, &syn, &real, seed.wrapping_add(3 + i as u64))
                .map_err(runtime_err("run_stage"))?;
            let label = stage.label();
            o.write(&format!("trace_{label}.csv"), trace_csv(&r.trace).as_bytes())?;
            o.write(
                &format!("checkpoint_{label}.lckp"),
                &write_checkpoint(&model, label, &stage.trainable()),
            )?;
            let eval_loss = evaluate(&model, &syn, recipe.eval_draws, eval_seed).map_err(runtime_err("evaluate"))?;
            println!("stage {label}: {steps} steps, eval loss {eval_loss:.6} (initial {initial_loss:.6})");
            report.stages.push(StageSummary {
                stage: label.to_string(),
                steps,
                eval_loss,
                batches_per_source: r.batches_per_source,
            });
        }
        o.write("train_report.json", &json(&report)?)?;
        m.seeds.insert("train".into(), seed);
        m.settings = serde_json::json!({
            "samples": recipe.samples, "size": recipe.size, "pretrain_steps": recipe.pretrain_steps,
            "batch_size": recipe.batch_size, "lr": recipe.lr, "stages": args.stages,
        });
        Ok(())
    })
}

fn run_eval(command: EvalCommand, out: &Path) -> Result<RunManifest> {
    let mut report = EvalReport::default();
    let (csv, name) = match command {
        EvalCommand::Traj { pred, gt, delta } => {
            let (p, g) = (load_traj(&pred)?, load_traj(&gt)?);
            let pc: Vec<_> = p.poses.iter().map(|x| x.center()).collect();
            let gc: Vec<_> = g.poses.iter().map(|x| x.center()).collect();
            if pc.len() != gc.len() {
                return Err(runtime_err("eval traj")(format!("{} vs {} frames", pc.len(), gc.len())));
            }
            let sim = umeyama_sim3(&pc, &gc).map_err(runtime_err("eval traj"))?;
            let errors: Vec<f64> = pc
                .iter()
                .zip(&gc)
                .map(|(a, b)| 100.0 * (sim.apply(a) - b).norm())
                .collect();
            report.ate = Some(compute_ate(&p, &g).map_err(runtime_err("eval traj"))?);
            let (t, r) = compute_rpe(&p, &g, delta).map_err(runtime_err("eval traj"))?;
            report.rpe_t = Some(t);
            report.rpe_r = Some(r);
            (per_frame_csv("position_error", &errors), "traj")
        }
        EvalCommand::Light { pred, gt, scale } => {
            let (p, g) = (load_frames(&pred)?, load_frames(&gt)?);
            let mode = match scale {
                ScaleArg::PerFrame => ScaleMode::PerFrame,
                ScaleArg::PerSequence => ScaleMode::PerSequence,
            };
            let per = si_mse_sequence(&p, &g, mode).map_err(runtime_err("eval light"))?;
            if per.is_empty() {
                return Err(parse_err("eval light")("no frame_* maps found"));
            }
            report.lighting_error = Some(per.iter().sum::<f64>() / per.len() as f64);
            report.lighting_instability = lighting_instability(&per).ok();
            (per_frame_csv("si_mse", &per), "light")
        }
        EvalCommand::Layout { pred, gt } => {
            let p = load_mask_dir(&pred).map_err(parse_err("eval layout"))?;
            let g = load_mask_dir(&gt).map_err(parse_err("eval layout"))?;
            report.miou = Some(compute_miou(&p, &g).map_err(runtime_err("eval layout"))?);
            let ious = per_object_iou(&p, &g).map_err(runtime_err("eval layout"))?;
            let per: Vec<f64> = (0..g.frames.len())
                .map(|k| {
                    let v: Vec<f64> = ious.iter().filter(|(f, ..)| *f == k).map(|x| x.2).collect();
                    if v.is_empty() {
                        1.0
                    } else {
                        v.iter().sum::<f64>() / v.len() as f64
                    }
                })
                .collect();
            (per_frame_csv("miou", &per), "layout")
        }
    };
    println!("{}", serde_json::to_string(&report).unwrap_or_default());
    with_output(out, &format!("eval {name}"), |o, _| {
        o.write("report.json", &json(&report)?)?;
        o.write("per_frame.csv", csv.as_bytes())?;
        Ok(())
    })
}

/// Parse `args`, run, print errors; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_resolution() {
        assert_eq!(resolve_threads(Some(3), None).unwrap(), 3);
        assert_eq!(resolve_threads(Some(3), Some("5")).unwrap(), 5);
        assert!(resolve_threads(Some(3), Some("x")).is_err());
        assert!(resolve_threads(Some(0), None).is_err());
        assert!(resolve_threads(None, None).unwrap() >= 1);
    }

    #[test]
    fn params_parse() {
        assert_eq!(parse_param("span=30").unwrap(), ("span".to_string(), 30.0));
        assert!(parse_param("span").is_err());
        assert!(parse_param("span=x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["lumaproxy", "no-such-command"]), EXIT_USAGE);
        assert_eq!(main_with_args(["lumaproxy", "run", "--seed", "x"]), EXIT_USAGE);
        assert_eq!(main_with_args(["lumaproxy", "--help"]), EXIT_OK);
    }
}

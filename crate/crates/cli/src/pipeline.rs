//! End-to-end prompt → scene → trajectory → proxy runs, and the synthetic
//! dataset writer. Both lay samples out as
//! `{scene.json, traj.txt, env.lenv, rotation.json, proxy/frame_%05d.lpxy,
//! preview/, caption.txt}`.

use std::path::{Path, PathBuf};

use lumaproxy_core::camera::{plan_camera, CameraTrajectory, Intrinsics};
use lumaproxy_core::dsl::{parse_prompt, CameraClause, MoveKind, PromptAst};
use lumaproxy_core::envlight::{
    load_env_index, load_envmap, procedural_sky, rotation_schedule, select_envmap, write_lenv, EnvIndexEntry, EnvMap,
    EnvSelection,
};
use lumaproxy_core::render::sampling::hash_key;
use lumaproxy_core::render::{render_proxy, save_preview_pngs, write_lpxy, ProxyStack};
use lumaproxy_core::scene::{build_scene_graph, builtin_library, solve_layout, AssetLibrary, SceneAssembly};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::output::{sha256_hex, OutputDir, ProxySummary, RunManifest};
use crate::syn::{builtin_sky, sample_synthetic_scene, SynShape, BUILTIN_SKIES};
use crate::{parse_err, runtime_err, CliError, Result};

pub fn load_library(config: &PipelineConfig) -> Result<AssetLibrary> {
    match &config.library {
        Some(dir) => AssetLibrary::load_dir(dir).map_err(parse_err("library")),
        None => Ok(builtin_library()),
    }
}

/// Environment maps addressable by id: an on-disk index or the preset skies.
#[derive(Debug, Clone)]
pub enum EnvCatalog {
    Index(Vec<EnvIndexEntry>),
    Builtin { height: usize },
}

impl EnvCatalog {
    pub fn from_config(config: &PipelineConfig) -> Result<Self> {
        match &config.env_index {
            Some(p) => Ok(EnvCatalog::Index(load_env_index(p).map_err(parse_err("env index"))?)),
            None => Ok(EnvCatalog::Builtin {
                height: config.env_height,
            }),
        }
    }

    pub fn entries(&self) -> Vec<EnvIndexEntry> {
        match self {
            EnvCatalog::Index(e) => e.clone(),
            EnvCatalog::Builtin { .. } => BUILTIN_SKIES
                .iter()
                .map(|(id, ..)| EnvIndexEntry {
                    env_id: id.to_string(),
                    file: PathBuf::new(),
                    tags: Vec::new(),
                })
                .collect(),
        }
    }

    /// The map and the hash of its source file, if any.
    pub fn load(&self, env_id: &str) -> Result<(EnvMap, Option<String>)> {
        match self {
            EnvCatalog::Index(entries) => {
                let e = entries
                    .iter()
                    .find(|e| e.env_id == env_id)
                    .ok_or_else(|| parse_err("env index")(format!("no entry '{env_id}'")))?;
                let bytes = std::fs::read(&e.file).map_err(parse_err("load_envmap"))?;
                let map = load_envmap(&e.file).map_err(parse_err("load_envmap"))?;
                Ok((map, Some(sha256_hex(&bytes))))
            }
            EnvCatalog::Builtin { height } => builtin_sky(env_id, *height)
                .map(|m| (m, None))
                .ok_or_else(|| parse_err("env")(format!("unknown built-in sky '{env_id}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationRecord {
    pub total_deg: f64,
    pub yaws_deg: Vec<f64>,
}

/// Everything that goes into one sample directory.
pub struct SampleArtifacts<'a> {
    pub assembly: &'a SceneAssembly,
    pub trajectory: &'a CameraTrajectory,
    pub env: &'a EnvMap,
    pub rotation: RotationRecord,
    pub stack: &'a ProxyStack,
    pub caption: String,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}/{name}")
    }
}

pub fn write_sample(out: &mut OutputDir, prefix: &str, a: &SampleArtifacts, previews: bool) -> Result<ProxySummary> {
    let scene = serde_json::to_string_pretty(&a.assembly.to_file()).map_err(runtime_err("write"))?;
    out.write(&join(prefix, "scene.json"), scene.as_bytes())?;
    out.write(&join(prefix, "traj.txt"), a.trajectory.to_text().as_bytes())?;
    out.write(&join(prefix, "env.lenv"), &write_lenv(a.env))?;
    let rotation = serde_json::to_string_pretty(&a.rotation).map_err(runtime_err("write"))?;
    out.write(&join(prefix, "rotation.json"), rotation.as_bytes())?;
    let [frames, channels, height, width] = a.stack.shape();
    let mut files = Vec::with_capacity(frames);
    for k in 0..frames {
        let rel = join(prefix, &format!("proxy/frame_{k:05}.lpxy"));
        out.write(&rel, &write_lpxy(k as u32, height, width, a.stack.frame(k)))?;
        files.push(rel);
    }
    if previews {
        let preview = join(prefix, "preview");
        let dir = out.ensure_dir(&preview)?;
        for k in 0..frames {
            for name in save_preview_pngs(a.stack, k, &dir).map_err(runtime_err("preview"))? {
                out.register(&join(&preview, &name))?;
            }
        }
    }
    out.write(&join(prefix, "caption.txt"), format!("{}\n", a.caption).as_bytes())?;
    Ok(ProxySummary {
        frames,
        channels,
        height,
        width,
        files,
    })
}

/// Environment for a prompt: the best-matching catalog map, or the
/// procedural sky when forced, when no catalog is configured or when no
/// tag matches.
pub fn resolve_env(ast: &PromptAst, config: &PipelineConfig) -> Result<(EnvMap, String, Option<String>)> {
    let sky = || {
        procedural_sky(
            config.sky_azimuth,
            config.sky_elevation,
            config.sky_warmth,
            config.env_height,
        )
        .map_err(parse_err("procedural_sky"))
        .map(|m| (m, "procedural".to_string(), None))
    };
    if config.procedural_env || config.env_index.is_none() {
        return sky();
    }
    let catalog = EnvCatalog::from_config(config)?;
    let EnvCatalog::Index(entries) = &catalog else {
        return sky();
    };
    match select_envmap(&ast.lighting_tags, entries) {
        EnvSelection::Env(id) => {
            let (map, hash) = catalog.load(&id)?;
            Ok((map, id, hash))
        }
        EnvSelection::ProceduralFallback => sky(),
    }
}

fn settings_json(config: &PipelineConfig) -> serde_json::Value {
    serde_json::to_value(config).unwrap_or(serde_json::Value::Null)
}

/// Parse, lay out, light, plan and render one prompt into `out_root`.
/// On failure everything written is removed again.
pub fn run_pipeline(
    prompt: &str,
    config: &PipelineConfig,
    out_root: &Path,
    seed: u64,
    threads: usize,
) -> Result<RunManifest> {
    // Parse before touching the output directory.
    let ast = parse_prompt(prompt).map_err(parse_err("parse_prompt"))?;
    let library = load_library(config)?;
    let mut out = OutputDir::create(out_root)?;
    match run_inner(&ast, prompt, config, &library, &mut out, seed, threads) {
        Ok(manifest) => out.finish(manifest),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

fn run_inner(
    ast: &PromptAst,
    prompt: &str,
    config: &PipelineConfig,
    library: &AssetLibrary,
    out: &mut OutputDir,
    seed: u64,
    threads: usize,
) -> Result<RunManifest> {
    let built = build_scene_graph(ast, library).map_err(runtime_err("retrieve_asset"))?;
    let assembly = solve_layout(&built.graph, &built.meshes, seed);
    let (env, env_id, env_hash) = resolve_env(ast, config)?;
    let clause = ast.camera.clone().unwrap_or_else(|| CameraClause::new(MoveKind::Orbit));
    let trajectory = plan_camera(
        &clause,
        &assembly,
        config.frames,
        Intrinsics::default_for(config.width, config.height),
    )
    .map_err(runtime_err("plan_camera"))?;
    let yaws = rotation_schedule(config.rotation_deg, config.frames);
    let stack = render_proxy(
        &assembly,
        &env,
        &trajectory,
        &yaws,
        &config.render_settings(seed),
        threads,
    )
    .map_err(runtime_err("render_proxy"))?;
    let artifacts = SampleArtifacts {
        assembly: &assembly,
        trajectory: &trajectory,
        env: &env,
        rotation: RotationRecord {
            total_deg: config.rotation_deg,
            yaws_deg: yaws,
        },
        stack: &stack,
        caption: prompt.trim().to_string(),
    };
    let summary = write_sample(out, "", &artifacts, config.previews)?;

    let mut manifest = RunManifest::new("run");
    manifest.inputs.insert("prompt".into(), sha256_hex(prompt.as_bytes()));
    manifest.inputs.insert(
        format!("env:{env_id}"),
        env_hash.unwrap_or_else(|| sha256_hex(&write_lenv(&env))),
    );
    for m in &built.matches {
        manifest
            .inputs
            .entry(format!("asset:{}", m.asset_id))
            .or_insert_with(|| {
                let mesh = library.get(&m.asset_id).expect("matched asset exists");
                sha256_hex(lumaproxy_core::scene::write_obj(mesh).as_bytes())
            });
    }
    manifest.seeds.insert("layout".into(), seed);
    manifest.seeds.insert("render".into(), seed);
    manifest.settings = settings_json(config);
    manifest.proxy.push(summary);
    Ok(manifest)
}

/// Seed of sample `i` in a dataset drawn from `seed`.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    hash_key(&[seed, i as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub samples: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sample_id: String,
    pub spec: crate::syn::SynSampleSpec,
    pub residual_energy: f64,
}

/// Sample and render `count` synthetic clips into `<out_root>/syn_%05d/`.
pub fn make_syn(
    count: usize,
    config: &PipelineConfig,
    out_root: &Path,
    seed: u64,
    threads: usize,
) -> Result<RunManifest> {
    let library = load_library(config)?;
    let catalog = EnvCatalog::from_config(config)?;
    let entries = catalog.entries();
    let mut out = OutputDir::create(out_root)?;
    let result = (|| {
        let mut index = DatasetIndex { samples: Vec::new() };
        let mut manifest = RunManifest::new("make-syn");
        let shape = SynShape {
            frames: config.frames,
            height: config.height,
            width: config.width,
        };
        for i in 0..count {
            let s = sample_seed(seed, i);
            let (spec, assembly) =
                sample_synthetic_scene(&library, &entries, s, shape).map_err(runtime_err("sample_synthetic_scene"))?;
            let (env, env_hash) = catalog.load(&spec.env_id)?;
            if let Some(h) = env_hash {
                manifest.inputs.insert(format!("env:{}", spec.env_id), h);
            }
            let trajectory = plan_camera(
                &spec.camera_clause(),
                &assembly,
                spec.frames,
                Intrinsics::default_for(spec.width, spec.height),
            )
            .map_err(runtime_err("plan_camera"))?;
            let yaws = rotation_schedule(spec.rotation_total_deg, spec.frames);
            let stack = render_proxy(&assembly, &env, &trajectory, &yaws, &config.render_settings(s), threads)
                .map_err(runtime_err("render_proxy"))?;
            let sample_id = format!("syn_{i:05}");
            let artifacts = SampleArtifacts {
                assembly: &assembly,
                trajectory: &trajectory,
                env: &env,
                rotation: RotationRecord {
                    total_deg: spec.rotation_total_deg,
                    yaws_deg: yaws,
                },
                stack: &stack,
                caption: spec.caption(&library),
            };
            manifest
                .proxy
                .push(write_sample(&mut out, &sample_id, &artifacts, config.previews)?);
            manifest.seeds.insert(sample_id.clone(), s);
            index.samples.push(DatasetEntry {
                sample_id,
                spec,
                residual_energy: assembly.residual_energy,
            });
        }
        let text = serde_json::to_string_pretty(&index).map_err(runtime_err("write"))?;
        out.write("index.json", text.as_bytes())?;
        manifest.seeds.insert("dataset".into(), seed);
        manifest.settings = settings_json(config);
        Ok::<_, CliError>(manifest)
    })();
    match result {
        Ok(m) => out.finish(m),
        Err(e) => {
            out.rollback();
            Err(e)
        }
    }
}

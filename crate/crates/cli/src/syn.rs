//! Procedural synthetic scenes: random objects from the catalog, a random
//! environment map and a random total environment rotation in [180, 240]
//! degrees applied linearly over the clip.

use lumaproxy_core::dsl::{CameraClause, MoveKind, RelationKind};
use lumaproxy_core::envlight::{procedural_sky, EnvIndexEntry, EnvMap};
use lumaproxy_core::geom::Pose;
use lumaproxy_core::scene::{normalized_scale, solve_layout, AssetLibrary, Edge, SceneAssembly, SceneGraph, SceneNode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ROTATION_RANGE_DEG: (f64, f64) = (180.0, 240.0);
pub const OBJECT_COUNT_RANGE: (usize, usize) = (2, 6);

/// Relations used to tie each sampled object to an earlier one. Stacking is
/// left out so every object stands on the ground.
const SYN_RELATIONS: [RelationKind; 5] = [
    RelationKind::LeftOf,
    RelationKind::RightOf,
    RelationKind::InFrontOf,
    RelationKind::Behind,
    RelationKind::NextTo,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynError {
    #[error("asset library needs at least 2 assets, has {0}")]
    EmptyLibrary(usize),
    #[error("environment index is empty")]
    EmptyEnvIndex,
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynSampleSpec {
    pub seed: u64,
    pub object_count: usize,
    pub asset_ids: Vec<String>,
    pub relations: Vec<Edge>,
    pub env_id: String,
    pub rotation_total_deg: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Orbit parameters: `span`, `start`, `elevation` in degrees.
    pub camera: Vec<(String, f64)>,
}

impl SynSampleSpec {
    pub fn camera_clause(&self) -> CameraClause {
        CameraClause {
            move_kind: MoveKind::Orbit,
            params: self.camera.clone(),
        }
    }

    /// Template caption: the sampled contents in words.
    pub fn caption(&self, library: &AssetLibrary) -> String {
        let names: Vec<String> = self
            .asset_ids
            .iter()
            .map(|id| format!("a {}", category(library, id)))
            .collect();
        format!(
            "{} under {} lighting, rotating {:.1} degrees",
            names.join(", "),
            self.env_id,
            self.rotation_total_deg
        )
    }
}

fn category(library: &AssetLibrary, asset_id: &str) -> String {
    library
        .get(asset_id)
        .and_then(|m| m.tags.first().cloned())
        .unwrap_or_else(|| asset_id.to_string())
}

/// Draw every random choice of a sample. Fully determined by `seed`.
pub fn sample_spec(
    library: &AssetLibrary,
    env_index: &[EnvIndexEntry],
    seed: u64,
    shape: SynShape,
) -> Result<SynSampleSpec, SynError> {
    if library.len() < 2 {
        return Err(SynError::EmptyLibrary(library.len()));
    }
    if env_index.is_empty() {
        return Err(SynError::EmptyEnvIndex);
    }
    if shape.frames < 2 {
        return Err(SynError::TooFewFrames(shape.frames));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let object_count = rng.random_range(OBJECT_COUNT_RANGE.0..=OBJECT_COUNT_RANGE.1);

    // Without replacement while the catalog lasts, then reshuffled rounds.
    let ids = library.ids();
    let mut asset_ids = Vec::with_capacity(object_count);
    while asset_ids.len() < object_count {
        let mut round = ids.clone();
        round.shuffle(&mut rng);
        let need = object_count - asset_ids.len();
        asset_ids.extend(round.into_iter().take(need));
    }

    let relations = (1..object_count)
        .map(|from| Edge {
            from,
            to: rng.random_range(0..from),
            relation: SYN_RELATIONS[rng.random_range(0..SYN_RELATIONS.len())],
        })
        .collect();

    let mut env_ids: Vec<&str> = env_index.iter().map(|e| e.env_id.as_str()).collect();
    env_ids.sort_unstable();
    let env_id = env_ids[rng.random_range(0..env_ids.len())].to_string();
    let rotation_total_deg = rng.random_range(ROTATION_RANGE_DEG.0..=ROTATION_RANGE_DEG.1);

    let camera = vec![
        ("span".to_string(), rng.random_range(30.0..=90.0)),
        ("start".to_string(), rng.random_range(0.0..360.0)),
        ("elevation".to_string(), rng.random_range(5.0..=30.0)),
    ];
    Ok(SynSampleSpec {
        seed,
        object_count,
        asset_ids,
        relations,
        env_id,
        rotation_total_deg,
        frames: shape.frames,
        height: shape.height,
        width: shape.width,
        camera,
    })
}

/// Place the sampled objects with the layout solver.
pub fn assemble(spec: &SynSampleSpec, library: &AssetLibrary) -> SceneAssembly {
    let mut nodes = Vec::with_capacity(spec.object_count);
    let mut meshes = Vec::with_capacity(spec.object_count);
    for (i, id) in spec.asset_ids.iter().enumerate() {
        let mesh = library.get(id).expect("sampled id comes from the library").clone();
        let cat = category(library, id);
        nodes.push(SceneNode {
            id: format!("n{i}_{cat}"),
            category: cat,
            tags: mesh.tags.clone(),
            asset_id: id.clone(),
            pose: Pose::default(),
            scale: normalized_scale(&mesh, &mesh.tags),
        });
        meshes.push(mesh);
    }
    let graph = SceneGraph {
        nodes,
        edges: spec.relations.clone(),
    };
    solve_layout(&graph, &meshes, spec.seed)
}

pub fn sample_synthetic_scene(
    library: &AssetLibrary,
    env_index: &[EnvIndexEntry],
    seed: u64,
    shape: SynShape,
) -> Result<(SynSampleSpec, SceneAssembly), SynError> {
    let spec = sample_spec(library, env_index, seed, shape)?;
    let assembly = assemble(&spec, library);
    Ok((spec, assembly))
}

/// Preset skies used when no environment catalog is supplied:
/// `(env_id, sun azimuth, sun elevation, warmth)`.
pub const BUILTIN_SKIES: [(&str, f64, f64, f64); 4] = [
    ("sky_dawn", 80.0, 8.0, 0.9),
    ("sky_noon", 20.0, 70.0, 0.1),
    ("sky_overcast", 200.0, 45.0, 0.4),
    ("sky_sunset", 260.0, 12.0, 1.0),
];

pub fn builtin_sky(env_id: &str, height: usize) -> Option<EnvMap> {
    BUILTIN_SKIES
        .iter()
        .find(|s| s.0 == env_id)
        .and_then(|&(_, az, el, warm)| procedural_sky(az, el, warm, height).ok())
}

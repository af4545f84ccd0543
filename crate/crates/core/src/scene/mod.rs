//! Scene graph, mesh assets and layout.

mod catalog;
mod layout;
mod obj;

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{PromptAst, RelationKind};
use crate::geom::{quat_from_wxyz, Aabb, Pose};

pub use catalog::{builtin_library, retrieve_asset, AssetLibrary, AssetMatch};
pub use layout::{
    layout_energy, overlap_penalty, relation_penalty, solve_layout, solve_layout_traced, LayoutTrace, LAYOUT_RESTARTS,
    LAYOUT_TOLERANCE,
};
pub use obj::{parse_obj, write_obj};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("asset library is empty")]
    EmptyLibrary,
    #[error("asset '{0}' not found in library")]
    UnknownAsset(String),
    #[error("invalid mesh '{asset}': {reason}")]
    InvalidMesh { asset: String, reason: String },
    #[error("invalid scene graph: {0}")]
    InvalidGraph(String),
    #[error("obj parse error at line {line}: {reason}")]
    Obj { line: usize, reason: String },
    #[error("catalog index: {0}")]
    Index(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SceneError>;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshAsset {
    pub asset_id: String,
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub tags: Vec<String>,
}

impl MeshAsset {
    pub fn new(
        asset_id: impl Into<String>,
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        tags: Vec<String>,
    ) -> Result<Self> {
        let asset_id = asset_id.into();
        let invalid = |reason: &str| SceneError::InvalidMesh {
            asset: asset_id.clone(),
            reason: reason.to_string(),
        };
        if triangles.is_empty() {
            return Err(invalid("no triangles"));
        }
        let n = vertices.len() as u32;
        if triangles.iter().flatten().any(|&i| i >= n) {
            return Err(invalid("triangle index out of range"));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) || !Aabb::from_points(&vertices).is_valid() {
            return Err(invalid("non-finite bounding box"));
        }
        Ok(Self {
            asset_id,
            vertices,
            triangles,
            tags,
        })
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub id: String,
    pub category: String,
    pub tags: Vec<String>,
    pub asset_id: String,
    pub pose: Pose,
    pub scale: f64,
}

impl SceneNode {
    /// World-space bounding box of `mesh` placed with this node's pose.
    pub fn world_aabb(&self, mesh: &MeshAsset) -> Aabb {
        self.local_aabb(mesh).translated(&self.pose.translation)
    }

    /// Bounding box after rotation and scale, before translation.
    pub fn local_aabb(&self, mesh: &MeshAsset) -> Aabb {
        let mut b = Aabb::empty();
        for v in &mesh.vertices {
            b.grow(&(self.pose.rotation * (v * self.scale)));
        }
        b
    }

    pub fn world_vertex(&self, v: &Point3<f64>) -> Point3<f64> {
        self.pose.rotation * (v * self.scale) + self.pose.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub relation: RelationKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneGraph {
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<Edge>,
}

impl SceneGraph {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(SceneError::InvalidGraph(format!("duplicate node id '{}'", n.id)));
            }
            if !(n.scale > 0.0 && n.scale.is_finite()) {
                return Err(SceneError::InvalidGraph(format!(
                    "node '{}' has non-positive scale",
                    n.id
                )));
            }
            if (n.pose.rotation.into_inner().norm() - 1.0).abs() > 1e-9 {
                return Err(SceneError::InvalidGraph(format!(
                    "node '{}' rotation is not unit",
                    n.id
                )));
            }
        }
        for e in &self.edges {
            if e.from >= self.nodes.len() || e.to >= self.nodes.len() || e.from == e.to {
                return Err(SceneError::InvalidGraph(format!("bad edge {} -> {}", e.from, e.to)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneAssembly {
    pub graph: SceneGraph,
    pub meshes: Vec<MeshAsset>,
    pub residual_energy: f64,
}

impl SceneAssembly {
    pub fn world_aabbs(&self) -> Vec<Aabb> {
        self.graph
            .nodes
            .iter()
            .zip(&self.meshes)
            .map(|(n, m)| n.world_aabb(m))
            .collect()
    }

    pub fn bounds(&self) -> Aabb {
        self.world_aabbs().iter().fold(Aabb::empty(), |acc, b| acc.union(b))
    }

    /// All triangles in world space, as vertex triples.
    pub fn world_triangles(&self) -> Vec<[Point3<f64>; 3]> {
        let mut out = Vec::new();
        for (node, mesh) in self.graph.nodes.iter().zip(&self.meshes) {
            let verts: Vec<_> = mesh.vertices.iter().map(|v| node.world_vertex(v)).collect();
            out.extend(
                mesh.triangles
                    .iter()
                    .map(|t| [verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]]),
            );
        }
        out
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            nodes: self
                .graph
                .nodes
                .iter()
                .map(|n| {
                    let q = n.pose.rotation.into_inner();
                    NodeRecord {
                        id: n.id.clone(),
                        category: n.category.clone(),
                        tags: n.tags.clone(),
                        asset_id: n.asset_id.clone(),
                        quaternion: [q.w, q.i, q.j, q.k],
                        translation: n.pose.translation.into(),
                        scale: n.scale,
                    }
                })
                .collect(),
            edges: self.graph.edges.clone(),
            residual_energy: self.residual_energy,
        }
    }

    /// Rebuild an assembly from its file form, resolving meshes in `library`.
    pub fn from_file(file: &SceneFile, library: &AssetLibrary) -> Result<Self> {
        let mut nodes = Vec::with_capacity(file.nodes.len());
        let mut meshes = Vec::with_capacity(file.nodes.len());
        for r in &file.nodes {
            let [w, x, y, z] = r.quaternion;
            let rotation = quat_from_wxyz(w, x, y, z)
                .ok_or_else(|| SceneError::InvalidGraph(format!("node '{}' has a degenerate quaternion", r.id)))?;
            meshes.push(
                library
                    .get(&r.asset_id)
                    .cloned()
                    .ok_or_else(|| SceneError::UnknownAsset(r.asset_id.clone()))?,
            );
            nodes.push(SceneNode {
                id: r.id.clone(),
                category: r.category.clone(),
                tags: r.tags.clone(),
                asset_id: r.asset_id.clone(),
                pose: Pose {
                    rotation,
                    translation: Vector3::from(r.translation),
                },
                scale: r.scale,
            });
        }
        let graph = SceneGraph {
            nodes,
            edges: file.edges.clone(),
        };
        graph.validate()?;
        Ok(Self {
            graph,
            meshes,
            residual_energy: file.residual_energy,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path, library: &AssetLibrary) -> Result<Self> {
        let file: SceneFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&file, library)
    }
}

/// On-disk form of a [`SceneAssembly`] (`scene.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<Edge>,
    pub residual_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub category: String,
    #[serde(default)]
    pub tags: Vec<String>,
    pub asset_id: String,
    /// w, x, y, z
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub scale: f64,
}

const SIZE_TAGS: [(&str, f64); 4] = [("tiny", 0.25), ("small", 0.5), ("large", 2.0), ("huge", 4.0)];

/// Uniform scale that brings the mesh's largest extent to 1 m, adjusted by
/// size tags such as `small` or `large`.
pub fn normalized_scale(mesh: &MeshAsset, tags: &[String]) -> f64 {
    let target = SIZE_TAGS
        .iter()
        .filter(|(t, _)| tags.iter().any(|x| x == t))
        .map(|(_, s)| *s)
        .next()
        .unwrap_or(1.0);
    let e = mesh.aabb().extent();
    let largest = e.x.max(e.y).max(e.z);
    if largest > 0.0 {
        target / largest
    } else {
        1.0
    }
}

/// Result of turning a parsed prompt into a scene graph with meshes.
#[derive(Debug, Clone)]
pub struct BuiltGraph {
    pub graph: SceneGraph,
    pub meshes: Vec<MeshAsset>,
    pub matches: Vec<AssetMatch>,
}

/// Instantiate one node per object clause, retrieve meshes and normalize
/// their scale. Poses are left at the origin for [`solve_layout`].
pub fn build_scene_graph(ast: &PromptAst, library: &AssetLibrary) -> Result<BuiltGraph> {
    let mut nodes = Vec::new();
    let mut meshes = Vec::new();
    let mut matches = Vec::new();
    for (i, obj) in ast.objects.iter().enumerate() {
        let tags = obj.tags();
        let m = retrieve_asset(&tags, library)?;
        let mesh = library
            .get(&m.asset_id)
            .cloned()
            .ok_or_else(|| SceneError::UnknownAsset(m.asset_id.clone()))?;
        nodes.push(SceneNode {
            id: format!("n{i}_{}", obj.category),
            category: obj.category.clone(),
            scale: normalized_scale(&mesh, &tags),
            tags,
            asset_id: m.asset_id.clone(),
            pose: Pose::default(),
        });
        meshes.push(mesh);
        matches.push(m);
    }
    let edges = ast
        .relations
        .iter()
        .map(|r| Edge {
            from: r.subject,
            to: r.object,
            relation: r.relation,
        })
        .collect();
    let graph = SceneGraph { nodes, edges };
    graph.validate()?;
    Ok(BuiltGraph { graph, meshes, matches })
}

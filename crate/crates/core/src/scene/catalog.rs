//! Asset library: a directory of OBJ meshes plus `index.json`, and tag-based
//! retrieval.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::obj::{parse_obj, write_obj};
use super::{MeshAsset, Result, SceneError};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    file: String,
    tags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssetLibrary {
    meshes: BTreeMap<String, MeshAsset>,
}

impl AssetLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mesh: MeshAsset) {
        self.meshes.insert(mesh.asset_id.clone(), mesh);
    }

    pub fn get(&self, asset_id: &str) -> Option<&MeshAsset> {
        self.meshes.get(asset_id)
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    /// Assets in ascending `asset_id` order.
    pub fn iter(&self) -> impl Iterator<Item = &MeshAsset> {
        self.meshes.values()
    }

    pub fn ids(&self) -> Vec<String> {
        self.meshes.keys().cloned().collect()
    }

    /// Load `index.json` from `dir` and every OBJ it references.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let index_text = std::fs::read_to_string(dir.join("index.json"))?;
        let index: BTreeMap<String, IndexEntry> = serde_json::from_str(&index_text)?;
        let mut lib = Self::new();
        for (id, entry) in index {
            let text = std::fs::read_to_string(dir.join(&entry.file))
                .map_err(|e| SceneError::Index(format!("{}: {e}", entry.file)))?;
            lib.insert(parse_obj(&id, &text, entry.tags)?);
        }
        Ok(lib)
    }

    /// Write every asset as `<asset_id>.obj` plus `index.json`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index = BTreeMap::new();
        for mesh in self.iter() {
            let file = format!("{}.obj", mesh.asset_id);
            std::fs::write(dir.join(&file), write_obj(mesh))?;
            index.insert(
                mesh.asset_id.clone(),
                IndexEntry {
                    file,
                    tags: mesh.tags.clone(),
                },
            );
        }
        std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetMatch {
    pub asset_id: String,
    pub score: usize,
    /// No tag overlapped; the asset was chosen by the id tie-break alone.
    pub zero_score: bool,
}

/// Pick the asset with the largest tag overlap, ties going to the smallest
/// `asset_id`.
pub fn retrieve_asset(node_tags: &[String], library: &AssetLibrary) -> Result<AssetMatch> {
    let wanted: BTreeSet<&str> = node_tags.iter().map(String::as_str).collect();
    let mut best: Option<(usize, &str)> = None;
    for mesh in library.iter() {
        let have: BTreeSet<&str> = mesh.tags.iter().map(String::as_str).collect();
        let score = have.intersection(&wanted).count();
        let better = match best {
            None => true,
            Some((s, id)) => score > s || (score == s && mesh.asset_id.as_str() < id),
        };
        if better {
            best = Some((score, mesh.asset_id.as_str()));
        }
    }
    let (score, id) = best.ok_or(SceneError::EmptyLibrary)?;
    Ok(AssetMatch {
        asset_id: id.to_string(),
        score,
        zero_score: score == 0,
    })
}

fn tags(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Surface of revolution about +y from a (radius, height) profile, capped at
/// both ends when the profile radius there is non-zero.
fn lathe(id: &str, profile: &[(f64, f64)], segments: usize, tag_list: &[&str]) -> MeshAsset {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for &(r, y) in profile {
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(Point3::new(r * a.cos(), y, r * a.sin()));
        }
    }
    let ring = |i: usize, s: usize| (i * segments + s % segments) as u32;
    for i in 0..profile.len() - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(i, s), ring(i, s + 1), ring(i + 1, s + 1), ring(i + 1, s));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for (i, (r, y)) in [(0, profile[0]), (profile.len() - 1, profile[profile.len() - 1])] {
        if r > 0.0 {
            let center = vertices.len() as u32;
            vertices.push(Point3::new(0.0, y, 0.0));
            for s in 0..segments {
                triangles.push([center, ring(i, s), ring(i, s + 1)]);
            }
        }
    }
    MeshAsset::new(id, vertices, triangles, tags(tag_list)).expect("valid lathe mesh")
}

fn boxes(id: &str, parts: &[([f64; 3], [f64; 3])], tag_list: &[&str]) -> MeshAsset {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lo, hi) in parts {
        let base = vertices.len() as u32;
        for k in 0..8 {
            vertices.push(Point3::new(
                if k & 1 == 0 { lo[0] } else { hi[0] },
                if k & 2 == 0 { lo[1] } else { hi[1] },
                if k & 4 == 0 { lo[2] } else { hi[2] },
            ));
        }
        let faces = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        for f in faces {
            triangles.push([base + f[0], base + f[1], base + f[2]]);
            triangles.push([base + f[0], base + f[2], base + f[3]]);
        }
    }
    MeshAsset::new(id, vertices, triangles, tags(tag_list)).expect("valid box mesh")
}

/// A small built-in library of primitive meshes, usable when no external
/// catalog is supplied.
pub fn builtin_library() -> AssetLibrary {
    let mut lib = AssetLibrary::new();
    lib.insert(boxes(
        "box_01",
        &[([-0.5, 0.0, -0.5], [0.5, 1.0, 0.5])],
        &["box", "cube", "crate", "block"],
    ));
    let sphere: Vec<(f64, f64)> = (0..=12)
        .map(|i| {
            let th = PI * i as f64 / 12.0;
            (0.5 * th.sin(), 0.5 - 0.5 * th.cos())
        })
        .collect();
    lib.insert(lathe("sphere_01", &sphere, 24, &["sphere", "ball", "orb", "globe"]));
    lib.insert(lathe(
        "cylinder_01",
        &[(0.35, 0.0), (0.35, 0.9)],
        24,
        &["cylinder", "cup", "can", "mug", "pillar"],
    ));
    lib.insert(lathe(
        "vase_01",
        &[(0.2, 0.0), (0.35, 0.25), (0.3, 0.55), (0.15, 0.8), (0.2, 1.0)],
        24,
        &["vase", "pot", "bottle", "ceramic"],
    ));
    lib.insert(lathe(
        "cone_01",
        &[(0.45, 0.0), (0.0, 1.0)],
        24,
        &["cone", "tree", "lamp"],
    ));
    lib.insert(boxes(
        "table_01",
        &[
            ([-0.8, 0.7, -0.5], [0.8, 0.78, 0.5]),
            ([-0.75, 0.0, -0.45], [-0.67, 0.7, -0.37]),
            ([0.67, 0.0, -0.45], [0.75, 0.7, -0.37]),
            ([-0.75, 0.0, 0.37], [-0.67, 0.7, 0.45]),
            ([0.67, 0.0, 0.37], [0.75, 0.7, 0.45]),
        ],
        &["table", "desk", "wooden"],
    ));
    lib.insert(boxes(
        "chair_01",
        &[
            ([-0.25, 0.42, -0.25], [0.25, 0.47, 0.25]),
            ([-0.25, 0.47, -0.25], [0.25, 1.0, -0.2]),
            ([-0.25, 0.0, -0.25], [-0.2, 0.42, -0.2]),
            ([0.2, 0.0, -0.25], [0.25, 0.42, -0.2]),
            ([-0.25, 0.0, 0.2], [-0.2, 0.42, 0.25]),
            ([0.2, 0.0, 0.2], [0.25, 0.42, 0.25]),
        ],
        &["chair", "seat", "stool"],
    ));
    lib
}

//! Minimal Wavefront OBJ reader/writer: `v` and `f` records only.

use std::fmt::Write as _;

use nalgebra::Point3;

use super::{MeshAsset, Result, SceneError};

/// Parse vertex positions and faces. Faces with more than three corners are
/// fan-triangulated; `v/vt/vn` corner syntax and negative indices are
/// accepted. All other record types are ignored.
pub fn parse_obj(asset_id: &str, text: &str, tags: Vec<String>) -> Result<MeshAsset> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut fields = raw.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| SceneError::Obj {
                        line,
                        reason: e.to_string(),
                    })?;
                if coords.len() != 3 {
                    return Err(SceneError::Obj {
                        line,
                        reason: "vertex needs three coordinates".into(),
                    });
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut corners = Vec::new();
                for f in fields {
                    let idx = f.split('/').next().unwrap_or("");
                    let i: i64 = idx.parse().map_err(|_| SceneError::Obj {
                        line,
                        reason: format!("bad face index '{f}'"),
                    })?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(SceneError::Obj {
                            line,
                            reason: format!("face index {i} out of range"),
                        });
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(SceneError::Obj {
                        line,
                        reason: "face needs at least three corners".into(),
                    });
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    MeshAsset::new(asset_id, vertices, triangles, tags)
}

pub fn write_obj(mesh: &MeshAsset) -> String {
    let mut out = format!("# {}\n", mesh.asset_id);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

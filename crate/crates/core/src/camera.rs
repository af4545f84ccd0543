//! Camera trajectories: analytic moves, keyframe splines and the text
//! trajectory format.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::dsl::{CameraClause, MoveKind};
use crate::geom::{look_at_rotation, quat_from_wxyz};
use crate::scene::SceneAssembly;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("bad camera parameter '{name}': {reason}")]
    BadParameter { name: String, reason: String },
    #[error("unknown camera move '{0}'")]
    UnknownMove(String),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("need at least 2 keyframes, got {0}")]
    TooFewKeys(usize),
    #[error("keyframe times must increase strictly from 0 to 1")]
    NonMonotoneTimes,
    #[error("trajectory line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CameraError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// `fx = fy = 0.9 W`, principal point at the image center.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = 0.9 * width as f64;
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    fn lerp(&self, other: &Self, u: f64) -> Self {
        let l = |a: f64, b: f64| a + (b - a) * u;
        Self {
            fx: l(self.fx, other.fx),
            fy: l(self.fy, other.fy),
            cx: l(self.cx, other.cx),
            cy: l(self.cy, other.cy),
        }
    }
}

/// Camera-to-world pose. The camera looks down its local -z axis with +y up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, intrinsics: Intrinsics) -> Self {
        Self {
            rotation: look_at_rotation(&eye, &target),
            translation: eye.coords,
            intrinsics,
        }
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    pub fn is_finite(&self) -> bool {
        let q = self.rotation.as_ref().coords;
        let k = &self.intrinsics;
        q.iter().chain(self.translation.iter()).all(|v| v.is_finite())
            && [k.fx, k.fy, k.cx, k.cy].iter().all(|v| v.is_finite())
    }

    /// World-space unit direction of the ray through continuous pixel
    /// coordinates `(px, py)`; pixel centers sit at half-integers.
    pub fn ray_direction(&self, px: f64, py: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let d = Vector3::new((px - k.cx) / k.fx, -(py - k.cy) / k.fy, -1.0);
        (self.rotation * d).normalize()
    }

    /// Pixel coordinates of a world point, or `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        let c = self.rotation.inverse() * (p.coords - self.translation);
        if c.z >= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.cx + k.fx * c.x / -c.z, k.cy - k.fy * c.y / -c.z))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrajectory {
    pub poses: Vec<CameraPose>,
}

impl CameraTrajectory {
    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    pub fn reversed(&self) -> Self {
        Self {
            poses: self.poses.iter().rev().copied().collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# k tx ty tz qw qx qy qz fx fy cx cy\n");
        for (k, p) in self.poses.iter().enumerate() {
            let q = p.rotation.as_ref();
            let t = &p.translation;
            let i = &p.intrinsics;
            writeln!(
                out,
                "{k} {} {} {} {} {} {} {} {} {} {} {}",
                t.x, t.y, t.z, q.w, q.i, q.j, q.k, i.fx, i.fy, i.cx, i.cy
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut poses = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| CameraError::Parse { line: n + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 12 {
                return Err(err(format!("expected 12 fields, found {}", fields.len())));
            }
            let k: usize = fields[0]
                .parse()
                .map_err(|_| err(format!("bad frame index '{}'", fields[0])))?;
            if k != poses.len() {
                return Err(err(format!("frame index {k} out of sequence")));
            }
            let mut v = [0.0f64; 11];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|_| err(format!("bad number '{f}'")))?;
                if !slot.is_finite() {
                    return Err(err(format!("non-finite value '{f}'")));
                }
            }
            let rotation = quat_from_wxyz(v[3], v[4], v[5], v[6]).ok_or_else(|| err("degenerate quaternion".into()))?;
            if v[7] <= 0.0 || v[8] <= 0.0 {
                return Err(err("focal lengths must be positive".into()));
            }
            poses.push(CameraPose {
                rotation,
                translation: Vector3::new(v[0], v[1], v[2]),
                intrinsics: Intrinsics {
                    fx: v[7],
                    fy: v[8],
                    cx: v[9],
                    cy: v[10],
                },
            });
        }
        Ok(Self { poses })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn bad(name: &str, reason: &str) -> CameraError {
    CameraError::BadParameter {
        name: name.to_string(),
        reason: reason.to_string(),
    }
}

const ALLOWED: &[(MoveKind, &[&str])] = &[
    (MoveKind::Static, &["distance", "height", "azimuth"]),
    (MoveKind::Orbit, &["radius", "span", "start", "elevation"]),
    (MoveKind::Dolly, &["from_x", "from_y", "from_z", "to_x", "to_y", "to_z"]),
    (MoveKind::Crane, &["distance", "height", "rise", "push"]),
    (MoveKind::DollyZoom, &["start", "end", "height"]),
];

/// Plan an `frames`-long trajectory around the scene's bounding box.
///
/// Distances default to 2.5 times the radius of the sphere enclosing the
/// scene box; angles are in degrees.
pub fn plan_camera(
    clause: &CameraClause,
    scene: &SceneAssembly,
    frames: usize,
    intrinsics: Intrinsics,
) -> Result<CameraTrajectory> {
    if frames < 2 {
        return Err(CameraError::TooFewFrames(frames));
    }
    let allowed = ALLOWED
        .iter()
        .find(|(m, _)| *m == clause.move_kind)
        .map(|(_, a)| *a)
        .unwrap_or(&[]);
    for (name, value) in &clause.params {
        if !allowed.contains(&name.as_str()) {
            return Err(bad(name, &format!("not accepted by {}", clause.move_kind)));
        }
        if !value.is_finite() {
            return Err(bad(name, "not finite"));
        }
    }
    let bounds = scene.bounds();
    let (center, extent) = if bounds.is_valid() {
        (bounds.center(), bounds.half_extents().norm())
    } else {
        (Point3::origin(), 1.0)
    };
    let default_distance = (2.5 * extent).max(1.0);
    let get = |name: &str, default: f64| clause.param(name).unwrap_or(default);
    let positive = |name: &str, default: f64| {
        let v = get(name, default);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(bad(name, "must be positive"))
        }
    };
    let s = |k: usize| k as f64 / (frames - 1) as f64;

    let poses = match clause.move_kind {
        MoveKind::Static => {
            let d = positive("distance", default_distance)?;
            let h = get("height", 0.0);
            let az = get("azimuth", 0.0).to_radians();
            let eye = center + Vector3::new(d * az.sin(), h, d * az.cos());
            vec![CameraPose::look_at(eye, center, intrinsics); frames]
        }
        MoveKind::Orbit => {
            let r = positive("radius", default_distance)?;
            let span = get("span", 360.0);
            let start = get("start", 0.0);
            let el = get("elevation", 0.0);
            if el.abs() >= 90.0 {
                return Err(bad("elevation", "must lie strictly between -90 and 90"));
            }
            let el = el.to_radians();
            (0..frames)
                .map(|k| {
                    let az = (start + span * s(k)).to_radians();
                    let eye = center + r * Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
                    CameraPose::look_at(eye, center, intrinsics)
                })
                .collect()
        }
        MoveKind::Dolly => {
            let from = Vector3::new(
                get("from_x", center.x),
                get("from_y", center.y),
                get("from_z", center.z + default_distance),
            );
            let to = Vector3::new(
                get("to_x", center.x),
                get("to_y", center.y),
                get("to_z", center.z + 0.5 * default_distance),
            );
            let rotation = if (to - from).norm() > 1e-12 {
                look_at_rotation(&Point3::from(from), &Point3::from(to))
            } else {
                look_at_rotation(&Point3::from(from), &center)
            };
            (0..frames)
                .map(|k| CameraPose {
                    rotation,
                    translation: from + (to - from) * s(k),
                    intrinsics,
                })
                .collect()
        }
        MoveKind::Crane => {
            let d = positive("distance", default_distance)?;
            let h = get("height", 0.0);
            let rise = get("rise", extent.max(0.5));
            let push = get("push", 0.0);
            if push >= d {
                return Err(bad("push", "must be smaller than distance"));
            }
            (0..frames)
                .map(|k| {
                    let eye = center + Vector3::new(0.0, h + rise * s(k), d - push * s(k));
                    CameraPose::look_at(eye, center, intrinsics)
                })
                .collect()
        }
        MoveKind::DollyZoom => {
            let d0 = positive("start", 1.5 * default_distance)?;
            let d1 = positive("end", 0.75 * default_distance)?;
            let h = get("height", 0.0);
            let mid = 0.5 * (d0 + d1);
            let dist = |u: f64| d0 + (d1 - d0) * u;
            (0..frames)
                .map(|k| {
                    let d = dist(s(k));
                    let eye = center + Vector3::new(0.0, h, d);
                    let mut pose = CameraPose::look_at(eye, center, intrinsics);
                    let ratio = (eye - center).norm() / (Vector3::new(0.0, h, mid)).norm();
                    pose.intrinsics.fx *= ratio;
                    pose.intrinsics.fy *= ratio;
                    pose
                })
                .collect()
        }
    };
    Ok(CameraTrajectory { poses })
}

/// Plan from a move name, for callers holding a raw token.
pub fn plan_camera_named(
    move_name: &str,
    params: Vec<(String, f64)>,
    scene: &SceneAssembly,
    frames: usize,
    intrinsics: Intrinsics,
) -> Result<CameraTrajectory> {
    let move_kind = MoveKind::from_token(&move_name.to_ascii_lowercase())
        .ok_or_else(|| CameraError::UnknownMove(move_name.to_string()))?;
    plan_camera(&CameraClause { move_kind, params }, scene, frames, intrinsics)
}

/// Knot increment floor, keeps coincident keys from producing 0/0.
const KNOT_EPS: f64 = 1e-9;

fn knot_step(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (b - a).norm().sqrt().max(KNOT_EPS)
}

/// Centripetal Catmull-Rom on the segment p1..p2, via the Barry-Goldman
/// pyramid, at local parameter `u` in [0, 1].
fn catmull_rom(p: [&Vector3<f64>; 4], u: f64) -> Vector3<f64> {
    let t0 = 0.0;
    let t1 = t0 + knot_step(p[0], p[1]);
    let t2 = t1 + knot_step(p[1], p[2]);
    let t3 = t2 + knot_step(p[2], p[3]);
    let t = t1 + (t2 - t1) * u;
    let mix =
        |a: &Vector3<f64>, b: &Vector3<f64>, ta: f64, tb: f64| a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta));
    let a1 = mix(p[0], p[1], t0, t1);
    let a2 = mix(p[1], p[2], t1, t2);
    let a3 = mix(p[2], p[3], t2, t3);
    let b1 = mix(&a1, &a2, t0, t2);
    let b2 = mix(&a2, &a3, t1, t3);
    mix(&b1, &b2, t1, t2)
}

/// Shortest-arc spherical interpolation.
fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, u: f64) -> UnitQuaternion<f64> {
    let qa = a.as_ref().coords;
    let mut qb = b.as_ref().coords;
    let mut dot = qa.dot(&qb);
    if dot < 0.0 {
        qb = -qb;
        dot = -dot;
    }
    let v = if dot > 0.9995 {
        qa + (qb - qa) * u
    } else {
        let theta = dot.min(1.0).acos();
        let s = theta.sin();
        qa * (((1.0 - u) * theta).sin() / s) + qb * ((u * theta).sin() / s)
    };
    UnitQuaternion::new_normalize(Quaternion::from(v))
}

/// Sample `frames` poses at evenly spaced times in [0, 1] from keyframes.
///
/// Positions use centripetal Catmull-Rom with reflected phantom endpoints;
/// orientations use per-segment shortest-arc slerp, sign-aligned so that
/// consecutive quaternions share a hemisphere.
pub fn interpolate_keyframes(keys: &[(f64, CameraPose)], frames: usize) -> Result<CameraTrajectory> {
    if keys.len() < 2 {
        return Err(CameraError::TooFewKeys(keys.len()));
    }
    if frames < 2 {
        return Err(CameraError::TooFewFrames(frames));
    }
    let times: Vec<f64> = keys.iter().map(|k| k.0).collect();
    if times[0] != 0.0 || *times.last().unwrap() != 1.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CameraError::NonMonotoneTimes);
    }
    let n = keys.len();
    let pos: Vec<Vector3<f64>> = keys.iter().map(|k| k.1.translation).collect();
    let before = 2.0 * pos[0] - pos[1];
    let after = 2.0 * pos[n - 1] - pos[n - 2];
    let point = |i: isize| -> &Vector3<f64> {
        if i < 0 {
            &before
        } else if i as usize >= n {
            &after
        } else {
            &pos[i as usize]
        }
    };

    let mut poses: Vec<CameraPose> = Vec::with_capacity(frames);
    for k in 0..frames {
        let t = k as f64 / (frames - 1) as f64;
        let mut pose = match times.iter().position(|&kt| kt == t) {
            Some(i) => keys[i].1,
            None => {
                let seg = times.partition_point(|&kt| kt <= t) - 1;
                let u = (t - times[seg]) / (times[seg + 1] - times[seg]);
                let i = seg as isize;
                let (a, b) = (&keys[seg].1, &keys[seg + 1].1);
                CameraPose {
                    rotation: slerp(&a.rotation, &b.rotation, u),
                    translation: catmull_rom([point(i - 1), point(i), point(i + 1), point(i + 2)], u),
                    intrinsics: a.intrinsics.lerp(&b.intrinsics, u),
                }
            }
        };
        if let Some(prev) = poses.last() {
            if prev.rotation.as_ref().coords.dot(&pose.rotation.as_ref().coords) < 0.0 {
                pose.rotation = UnitQuaternion::new_unchecked(-pose.rotation.into_inner());
            }
        }
        poses.push(pose);
    }
    Ok(CameraTrajectory { poses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Pose;
    use crate::scene::{builtin_library, SceneGraph, SceneNode};
    use proptest::prelude::*;

    fn unit_scene() -> SceneAssembly {
        let lib = builtin_library();
        let mesh = lib.get("box_01").unwrap().clone();
        SceneAssembly {
            graph: SceneGraph {
                nodes: vec![SceneNode {
                    id: "n0_box".into(),
                    category: "box".into(),
                    tags: vec![],
                    asset_id: "box_01".into(),
                    pose: Pose::default(),
                    scale: 1.0,
                }],
                edges: vec![],
            },
            meshes: vec![mesh],
            residual_energy: 0.0,
        }
    }

    fn clause(m: MoveKind, params: &[(&str, f64)]) -> CameraClause {
        CameraClause {
            move_kind: m,
            params: params.iter().map(|(n, v)| (n.to_string(), *v)).collect(),
        }
    }

    fn intr() -> Intrinsics {
        Intrinsics::default_for(64, 48)
    }

    #[test]
    fn default_intrinsics() {
        let k = Intrinsics::default_for(128, 64);
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (115.2, 115.2, 64.0, 32.0));
    }

    #[test]
    fn orbit_radius_and_azimuth() {
        let scene = unit_scene();
        let c = scene.bounds().center();
        let tr = plan_camera(
            &clause(MoveKind::Orbit, &[("span", 360.0), ("radius", 2.0)]),
            &scene,
            81,
            intr(),
        )
        .unwrap();
        assert_eq!(tr.frame_count(), 81);
        for p in &tr.poses {
            assert!(((p.center() - c).norm() - 2.0).abs() < 1e-9);
        }
        let az = |p: &CameraPose| {
            let d = p.center() - c;
            d.x.atan2(d.z).to_degrees()
        };
        let rel = (az(&tr.poses[40]) - az(&tr.poses[0])).rem_euclid(360.0);
        assert!((rel - 180.0).abs() < 1e-6, "{rel}");
        // looks at the center
        for p in &tr.poses {
            let fwd = p.rotation * -Vector3::z();
            assert!((fwd - (c - p.center()).normalize()).norm() < 1e-9);
        }
    }

    #[test]
    fn static_is_constant() {
        let tr = plan_camera(&clause(MoveKind::Static, &[]), &unit_scene(), 5, intr()).unwrap();
        assert_eq!(tr.poses.len(), 5);
        assert!(tr.poses.iter().all(|p| *p == tr.poses[0]));
    }

    #[test]
    fn dolly_midpoint() {
        let tr = plan_camera(
            &clause(
                MoveKind::Dolly,
                &[
                    ("from_x", 0.0),
                    ("from_y", 1.0),
                    ("from_z", 5.0),
                    ("to_x", 0.0),
                    ("to_y", 1.0),
                    ("to_z", 1.0),
                ],
            ),
            &unit_scene(),
            5,
            intr(),
        )
        .unwrap();
        assert_eq!(tr.poses[2].translation, Vector3::new(0.0, 1.0, 3.0));
        assert!(tr.poses.iter().all(|p| p.rotation == tr.poses[0].rotation));
        let fwd = tr.poses[0].rotation * -Vector3::z();
        assert!((fwd - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn crane_rises_and_looks_at_center() {
        let scene = unit_scene();
        let c = scene.bounds().center();
        let tr = plan_camera(
            &clause(MoveKind::Crane, &[("distance", 4.0), ("rise", 2.0), ("push", 1.0)]),
            &scene,
            3,
            intr(),
        )
        .unwrap();
        let ys: Vec<f64> = tr.poses.iter().map(|p| p.translation.y - c.y).collect();
        assert!((ys[0] - 0.0).abs() < 1e-12 && (ys[1] - 1.0).abs() < 1e-12 && (ys[2] - 2.0).abs() < 1e-12);
        assert!((tr.poses[2].translation.z - c.z - 3.0).abs() < 1e-12);
        for p in &tr.poses {
            let fwd = p.rotation * -Vector3::z();
            assert!((fwd - (c - p.center()).normalize()).norm() < 1e-9);
        }
    }

    #[test]
    fn dolly_zoom_keeps_projected_height() {
        let scene = unit_scene();
        let b = scene.bounds();
        let c = b.center();
        let tr = plan_camera(
            &clause(MoveKind::DollyZoom, &[("start", 6.0), ("end", 3.0)]),
            &scene,
            9,
            intr(),
        )
        .unwrap();
        let top = Point3::new(c.x, b.max.y, c.z);
        let bottom = Point3::new(c.x, b.min.y, c.z);
        let h = |p: &CameraPose| p.project(&bottom).unwrap().1 - p.project(&top).unwrap().1;
        let mid = h(&tr.poses[4]);
        assert!((tr.poses[4].intrinsics.fx - intr().fx).abs() < 1e-12);
        for p in &tr.poses {
            assert!((h(p) - mid).abs() < 1e-9 * mid, "{} vs {mid}", h(p));
        }
    }

    #[test]
    fn parameter_errors() {
        let scene = unit_scene();
        let e = plan_camera(&clause(MoveKind::Orbit, &[("radius", 0.0)]), &scene, 4, intr());
        assert!(matches!(e, Err(CameraError::BadParameter { .. })));
        let e = plan_camera(&clause(MoveKind::Orbit, &[("speed", 1.0)]), &scene, 4, intr());
        assert!(matches!(e, Err(CameraError::BadParameter { .. })));
        let e = plan_camera(&clause(MoveKind::Static, &[]), &scene, 1, intr());
        assert!(matches!(e, Err(CameraError::TooFewFrames(1))));
        let e = plan_camera_named("whip_pan", vec![], &scene, 4, intr());
        assert!(matches!(e, Err(CameraError::UnknownMove(_))));
    }

    fn key(t: f64, pos: [f64; 3], yaw: f64) -> (f64, CameraPose) {
        (
            t,
            CameraPose {
                rotation: UnitQuaternion::from_euler_angles(0.0, yaw, 0.0),
                translation: Vector3::from(pos),
                intrinsics: intr(),
            },
        )
    }

    #[test]
    fn identical_keys_give_constant_trajectory() {
        let k = key(0.0, [1.0, 2.0, 3.0], 0.3);
        let keys = vec![k, (1.0, k.1)];
        let tr = interpolate_keyframes(&keys, 7).unwrap();
        for p in &tr.poses {
            assert!((p.translation - k.1.translation).norm() < 1e-12);
            assert!(p.rotation.angle_to(&k.1.rotation) < 1e-9);
        }
    }

    #[test]
    fn keys_reproduced_at_key_times() {
        let keys = vec![
            key(0.0, [0.0, 0.0, 0.0], 0.0),
            key(0.25, [1.0, 0.5, 0.0], 0.4),
            key(0.5, [2.0, -1.0, 1.0], 1.2),
            key(1.0, [4.0, 0.0, 3.0], 2.5),
        ];
        let tr = interpolate_keyframes(&keys, 5).unwrap();
        for (frame, key_idx) in [(0, 0), (1, 1), (2, 2), (4, 3)] {
            let (p, k) = (&tr.poses[frame], &keys[key_idx].1);
            assert!((p.translation - k.translation).norm() < 1e-12);
            let d = p.rotation.as_ref().coords.dot(&k.rotation.as_ref().coords).abs();
            assert!((d - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_keys_stay_on_line() {
        let dir = Vector3::new(1.0, 2.0, -0.5);
        let origin = Vector3::new(0.3, -1.0, 2.0);
        let keys: Vec<_> = (0..3)
            .map(|i| {
                let p = origin + dir * i as f64;
                key(i as f64 / 2.0, [p.x, p.y, p.z], 0.0)
            })
            .collect();
        let tr = interpolate_keyframes(&keys, 5).unwrap();
        // Dense linear oracle: the nearest point of a finely sampled segment.
        for p in &tr.poses {
            let best = (0..=20000)
                .map(|j| (origin + dir * (2.0 * j as f64 / 20000.0) - p.translation).norm())
                .fold(f64::INFINITY, f64::min);
            let along = (p.translation - origin).dot(&dir) / dir.norm_squared();
            let perp = (origin + dir * along - p.translation).norm();
            assert!(perp < 1e-9, "{perp}");
            assert!(best < 2.0 * dir.norm() / 20000.0);
        }
    }

    #[test]
    fn keyframe_errors() {
        let a = key(0.0, [0.0; 3], 0.0);
        assert!(matches!(
            interpolate_keyframes(&[a], 4),
            Err(CameraError::TooFewKeys(1))
        ));
        let b = key(0.5, [1.0, 0.0, 0.0], 0.0);
        assert!(matches!(
            interpolate_keyframes(&[a, b], 4),
            Err(CameraError::NonMonotoneTimes)
        ));
        let c = key(1.0, [1.0, 0.0, 0.0], 0.0);
        assert!(matches!(
            interpolate_keyframes(&[a, c, c], 4),
            Err(CameraError::NonMonotoneTimes)
        ));
    }

    #[test]
    fn text_round_trip() {
        let scene = unit_scene();
        let tr = plan_camera(&clause(MoveKind::Orbit, &[("span", 90.0)]), &scene, 6, intr()).unwrap();
        let back = CameraTrajectory::from_text(&tr.to_text()).unwrap();
        assert_eq!(back.poses.len(), 6);
        for (a, b) in tr.poses.iter().zip(&back.poses) {
            assert!((a.translation - b.translation).norm() < 1e-9);
            assert!((a.rotation.as_ref().coords - b.rotation.as_ref().coords).norm() < 1e-9);
            assert_eq!(a.intrinsics, b.intrinsics);
        }
    }

    #[test]
    fn text_errors() {
        assert!(matches!(
            CameraTrajectory::from_text("0 1 2 3\n"),
            Err(CameraError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            CameraTrajectory::from_text("# c\n1 0 0 0 1 0 0 0 1 1 0 0\n"),
            Err(CameraError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            CameraTrajectory::from_text("0 0 0 0 0 0 0 0 1 1 0 0\n"),
            Err(CameraError::Parse { line: 1, .. })
        ));
    }

    fn arb_keys() -> impl Strategy<Value = Vec<(f64, CameraPose)>> {
        (2usize..6).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.05f64..1.0, n - 1),
                proptest::collection::vec(
                    (
                        proptest::array::uniform3(-5.0f64..5.0),
                        proptest::array::uniform4(-1.0f64..1.0),
                    ),
                    n,
                ),
            )
                .prop_filter_map("degenerate quaternion", |(gaps, raw)| {
                    let total: f64 = gaps.iter().sum();
                    let mut t = 0.0;
                    let mut times = vec![0.0];
                    for g in &gaps[..gaps.len() - 1] {
                        t += g / total;
                        times.push(t);
                    }
                    times.push(1.0);
                    if times.windows(2).any(|w| !(w[1] > w[0])) {
                        return None;
                    }
                    let mut keys = Vec::new();
                    for (time, (p, q)) in times.into_iter().zip(raw) {
                        let rot = quat_from_wxyz(q[0], q[1], q[2], q[3])?;
                        if Quaternion::new(q[0], q[1], q[2], q[3]).norm() < 0.1 {
                            return None;
                        }
                        keys.push((
                            time,
                            CameraPose {
                                rotation: rot,
                                translation: Vector3::from(p),
                                intrinsics: intr(),
                            },
                        ));
                    }
                    Some(keys)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spline_quaternions_unit_and_hemisphere_consistent(keys in arb_keys(), frames in 2usize..40) {
            let tr = interpolate_keyframes(&keys, frames).unwrap();
            prop_assert_eq!(tr.poses.len(), frames);
            for p in &tr.poses {
                prop_assert!((p.rotation.as_ref().norm() - 1.0).abs() < 1e-9);
                prop_assert!(p.is_finite());
            }
            for w in tr.poses.windows(2) {
                prop_assert!(w[0].rotation.as_ref().coords.dot(&w[1].rotation.as_ref().coords) >= 0.0);
            }
        }

        #[test]
        fn time_reversal_reverses_frames(keys in arb_keys(), frames in 2usize..40) {
            let rev: Vec<_> = keys.iter().rev().map(|(t, p)| (1.0 - t, *p)).collect();
            let a = interpolate_keyframes(&keys, frames).unwrap();
            let b = interpolate_keyframes(&rev, frames).unwrap();
            for (p, q) in a.poses.iter().zip(b.poses.iter().rev()) {
                prop_assert!((p.translation - q.translation).norm() < 1e-12 * (1.0 + p.translation.norm()) * 10.0);
                let d = p.rotation.as_ref().coords.dot(&q.rotation.as_ref().coords).abs();
                prop_assert!((d - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn orbit_constant_distance_and_elevation(
            r in 0.1f64..20.0, span in -720.0f64..720.0, start in -180.0f64..180.0,
            el in -80.0f64..80.0, frames in 2usize..50,
        ) {
            let scene = unit_scene();
            let c = scene.bounds().center();
            let tr = plan_camera(
                &clause(MoveKind::Orbit, &[("radius", r), ("span", span), ("start", start), ("elevation", el)]),
                &scene, frames, intr(),
            ).unwrap();
            let y0 = tr.poses[0].translation.y;
            for p in &tr.poses {
                prop_assert!(((p.center() - c).norm() - r).abs() < 1e-9 * r.max(1.0));
                prop_assert!((p.translation.y - y0).abs() < 1e-9 * r.max(1.0));
                prop_assert!((p.rotation.as_ref().norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}

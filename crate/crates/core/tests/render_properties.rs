use lumaproxy_core::camera::{CameraPose, CameraTrajectory, Intrinsics};
use lumaproxy_core::envlight::{procedural_sky, rotate_envmap, rotation_schedule, yaw_rotation, EnvMap};
use lumaproxy_core::geom::Pose;
use lumaproxy_core::render::bvh::{Bvh, Ray};
use lumaproxy_core::render::{render_pass, render_proxy, PassKind, RenderSettings};
use lumaproxy_core::scene::{builtin_library, SceneAssembly, SceneGraph, SceneNode};
use nalgebra::{Point3, UnitQuaternion, Vector3};

fn node(id: &str, asset: &str, at: [f64; 3]) -> SceneNode {
    SceneNode {
        id: id.into(),
        category: asset.into(),
        tags: vec![],
        asset_id: asset.into(),
        pose: Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::from(at),
        },
        scale: 1.0,
    }
}

fn assembly(nodes: Vec<SceneNode>) -> SceneAssembly {
    let lib = builtin_library();
    let meshes = nodes.iter().map(|n| lib.get(&n.asset_id).unwrap().clone()).collect();
    SceneAssembly {
        graph: SceneGraph { nodes, edges: vec![] },
        meshes,
        residual_energy: 0.0,
    }
}

fn two_objects() -> SceneAssembly {
    assembly(vec![
        node("ball", "sphere_01", [0.0, 0.0, 0.0]),
        node("crate", "box_01", [1.1, 0.0, -0.3]),
    ])
}

fn settings(size: usize, spp: u32) -> RenderSettings {
    RenderSettings {
        width: size,
        height: size,
        spp_diffuse: spp,
        spp_glossy: spp,
        seed: 11,
        ..Default::default()
    }
}

fn orbit_pose(azimuth_deg: f64, size: usize) -> CameraPose {
    let a = azimuth_deg.to_radians();
    let eye = Point3::new(3.0 * a.sin(), 1.4, 3.0 * a.cos());
    CameraPose::look_at(eye, Point3::new(0.0, 0.5, 0.0), Intrinsics::default_for(size, size))
}

fn sky() -> EnvMap {
    procedural_sky(30.0, 35.0, 0.3, 32).unwrap()
}

fn trajectory(size: usize, frames: usize) -> CameraTrajectory {
    CameraTrajectory {
        poses: (0..frames).map(|k| orbit_pose(20.0 * k as f64, size)).collect(),
    }
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn smoke_stack_shape() {
    let stack = render_proxy(
        &two_objects(),
        &sky(),
        &trajectory(16, 2),
        &[0.0, 90.0],
        &settings(16, 8),
        2,
    )
    .unwrap();
    assert_eq!(stack.shape(), [2, 9, 16, 16]);
    assert!(stack.is_finite_non_negative());
}

#[test]
fn thread_count_and_rerun_do_not_change_output() {
    let scene = two_objects();
    let traj = trajectory(24, 3);
    let yaws = rotation_schedule(200.0, 3);
    let s = settings(24, 8);
    let a = render_proxy(&scene, &sky(), &traj, &yaws, &s, 1).unwrap();
    let b = render_proxy(&scene, &sky(), &traj, &yaws, &s, 8).unwrap();
    let c = render_proxy(&scene, &sky(), &traj, &yaws, &s, 8).unwrap();
    assert_eq!(bits(&a.data), bits(&b.data));
    assert_eq!(bits(&b.data), bits(&c.data));
}

#[test]
fn reversed_inputs_reverse_frames() {
    let scene = two_objects();
    let traj = trajectory(16, 3);
    let yaws = rotation_schedule(240.0, 3);
    let s = settings(16, 8);
    let fwd = render_proxy(&scene, &sky(), &traj, &yaws, &s, 4).unwrap();
    let rev_yaws: Vec<f64> = yaws.iter().rev().copied().collect();
    let rev = render_proxy(&scene, &sky(), &traj.reversed(), &rev_yaws, &s, 4).unwrap();
    assert_eq!(bits(&rev.data), bits(&fwd.reversed().data));
}

#[test]
fn length_mismatch_rejected() {
    assert!(render_proxy(&two_objects(), &sky(), &trajectory(8, 2), &[0.0], &settings(8, 4), 1).is_err());
}

fn hit_mask(scene: &SceneAssembly, pose: &CameraPose, s: &RenderSettings) -> Vec<bool> {
    let (w, h) = (s.width, s.height);
    let bvh = Bvh::build(scene.world_triangles()).unwrap();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let ray = Ray {
                origin: pose.center(),
                dir: pose.ray_direction(x, y),
            };
            bvh.intersect(&ray, 0.0, f64::INFINITY).is_some()
        })
        .collect()
}

#[test]
fn radiance_scales_linearly_with_env() {
    let scene = two_objects();
    let pose = orbit_pose(35.0, 24);
    let s = settings(24, 16);
    let env = sky();
    let hits = hit_mask(&scene, &pose, &s);
    assert!(hits.iter().filter(|&&h| h).count() > 50);
    for kind in PassKind::ALL {
        let base = render_pass(&scene, &env, &pose, kind, &s).unwrap();
        // Power-of-two scaling is exact in floating point end to end.
        let quad = render_pass(&scene, &env.scaled(4.0).unwrap(), &pose, kind, &s).unwrap();
        let odd = render_pass(&scene, &env.scaled(3.0).unwrap(), &pose, kind, &s).unwrap();
        for (i, &hit) in hits.iter().enumerate() {
            if !hit {
                continue;
            }
            for c in 0..3 {
                let (b, q, o) = (base[3 * i + c], quad[3 * i + c], odd[3 * i + c]);
                assert_eq!(q, 4.0 * b, "{kind:?} pixel {i}");
                assert!(
                    (o - 3.0 * b).abs() <= 1e-5 * (3.0 * b).max(1e-30),
                    "{kind:?} pixel {i}: {o} vs {}",
                    3.0 * b
                );
            }
        }
    }
}

#[test]
fn diffuse_pass_ignores_roughness() {
    let scene = two_objects();
    let pose = orbit_pose(0.0, 20);
    let a = settings(20, 8);
    let b = RenderSettings {
        roughness_rough: 0.9,
        roughness_glossy: 0.2,
        ..a.clone()
    };
    let x = render_pass(&scene, &sky(), &pose, PassKind::Diffuse, &a).unwrap();
    let y = render_pass(&scene, &sky(), &pose, PassKind::Diffuse, &b).unwrap();
    assert_eq!(bits(&x), bits(&y));
    let g1 = render_pass(&scene, &sky(), &pose, PassKind::Ggx1, &a).unwrap();
    let g2 = render_pass(&scene, &sky(), &pose, PassKind::Ggx1, &b).unwrap();
    assert_ne!(bits(&g1), bits(&g2));
}

#[test]
fn yaw_equivariance_on_rotationally_symmetric_scene() {
    // The sphere is a 24-segment lathe about the vertical axis, so a 45
    // degree turn maps it onto itself; a 64-wide map turns by 8 whole texels.
    let scene = assembly(vec![node("ball", "sphere_01", [0.0, 0.0, 0.0])]);
    let env = procedural_sky(30.0, 35.0, 0.3, 32).unwrap();
    assert_eq!(env.width(), 64);
    let size = 48;
    let delta = 45.0;
    let pose = orbit_pose(10.0, size);
    let r = UnitQuaternion::from_rotation_matrix(&yaw_rotation(delta));
    let turned = CameraPose {
        rotation: r * pose.rotation,
        translation: r * pose.translation,
        intrinsics: pose.intrinsics,
    };
    let env_turned = rotate_envmap(&env, delta);
    let hits = hit_mask(&scene, &pose, &settings(size, 1));
    let hits_turned = hit_mask(&scene, &turned, &settings(size, 1));

    for kind in PassKind::ALL {
        let s0 = settings(size, 64);
        let s1 = RenderSettings { seed: 12, ..s0.clone() };
        let a = render_pass(&scene, &env, &pose, kind, &s0).unwrap();
        let noise = render_pass(&scene, &env, &pose, kind, &s1).unwrap();
        let b = render_pass(&scene, &env_turned, &turned, kind, &s0).unwrap();
        let (mut d_rot, mut d_seed, mut n) = (0.0f64, 0.0f64, 0usize);
        for i in 0..size * size {
            if !(hits[i] && hits_turned[i]) {
                continue;
            }
            for c in 0..3 {
                d_rot += (a[3 * i + c] as f64 - b[3 * i + c] as f64).powi(2);
                d_seed += (a[3 * i + c] as f64 - noise[3 * i + c] as f64).powi(2);
                n += 1;
            }
        }
        assert!(n > 300);
        let (rms_rot, rms_seed) = ((d_rot / n as f64).sqrt(), (d_seed / n as f64).sqrt());
        // Seed-to-seed differences estimate the Monte Carlo spread; the
        // rotated render must agree with the original to within it.
        assert!(
            rms_rot <= 3.0 * rms_seed.max(1e-6),
            "{kind:?}: rotated {rms_rot} vs seed spread {rms_seed}"
        );
    }
}

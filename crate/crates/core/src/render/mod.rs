//! Direct-lighting renderer for the three proxy passes: diffuse, rough GGX
//! and glossy GGX, all with a white base color under an environment map.

pub mod brdf;
pub mod bvh;
mod proxy;
pub mod sampling;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{CameraPose, CameraTrajectory};
use crate::envlight::{rotate_envmap, EnvMap};
use crate::scene::SceneAssembly;

pub use brdf::ggx_brdf;
pub use bvh::{Bvh, Hit, Ray};
pub use proxy::{preview_rgb8, read_lpxy, save_preview_pngs, write_lpxy, LpxyFrame, ProxyStack, PROXY_CHANNELS};
use sampling::{hash_key, EnvSampler, PixelSampler};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("scene has no triangles")]
    EmptyScene,
    #[error("camera pose for frame {0} is not finite")]
    DegenerateCamera(usize),
    #[error("trajectory has {poses} frames but the rotation schedule has {yaws}")]
    LengthMismatch { poses: usize, yaws: usize },
    #[error("invalid render settings: {0}")]
    BadSettings(String),
    #[error("bad magic: not an LPXY file")]
    BadMagic,
    #[error("LPXY file truncated")]
    TruncatedFile,
    #[error("unsupported LPXY version {0}")]
    UnsupportedVersion(u32),
    #[error("LPXY file has {0} channels, expected 9")]
    ChannelCount(u32),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RenderError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassKind {
    Diffuse,
    Ggx1,
    Ggx2,
}

impl PassKind {
    pub const ALL: [PassKind; 3] = [PassKind::Diffuse, PassKind::Ggx1, PassKind::Ggx2];

    pub fn as_str(self) -> &'static str {
        match self {
            PassKind::Diffuse => "diff",
            PassKind::Ggx1 => "ggx1",
            PassKind::Ggx2 => "ggx2",
        }
    }

    fn index(self) -> u64 {
        match self {
            PassKind::Diffuse => 0,
            PassKind::Ggx1 => 1,
            PassKind::Ggx2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub spp_diffuse: u32,
    pub spp_glossy: u32,
    pub roughness_rough: f64,
    pub roughness_glossy: f64,
    pub seed: u64,
    pub max_shadow_distance: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            spp_diffuse: 64,
            spp_glossy: 128,
            roughness_rough: 0.34,
            roughness_glossy: 0.05,
            seed: 0,
            max_shadow_distance: f64::INFINITY,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RenderError::BadSettings(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive");
        }
        if self.spp_diffuse == 0 || self.spp_glossy == 0 {
            return bad("sample counts must be positive");
        }
        let r = |a: f64| a > 0.0 && a <= 1.0;
        if !r(self.roughness_rough) || !r(self.roughness_glossy) {
            return bad("roughness must lie in (0, 1]");
        }
        if self.roughness_glossy >= self.roughness_rough {
            return bad("glossy roughness must be below rough roughness");
        }
        if !(self.max_shadow_distance > 0.0) {
            return bad("max_shadow_distance must be positive");
        }
        Ok(())
    }

    fn spp(&self, kind: PassKind) -> u32 {
        match kind {
            PassKind::Diffuse => self.spp_diffuse,
            _ => self.spp_glossy,
        }
    }
}

/// Geometry prepared for rendering: world-space triangles in a BVH.
#[derive(Debug, Clone)]
pub struct RenderScene {
    bvh: Option<Bvh>,
    scale: f64,
}

impl RenderScene {
    pub fn new(assembly: &SceneAssembly) -> Self {
        Self::from_triangles(assembly.world_triangles())
    }

    pub fn from_triangles(triangles: Vec<[Point3<f64>; 3]>) -> Self {
        let scale = triangles.iter().flatten().fold(1.0f64, |m, p| m.max(p.coords.amax()));
        Self {
            bvh: Bvh::build(triangles),
            scale,
        }
    }

    pub fn bvh(&self) -> Option<&Bvh> {
        self.bvh.as_ref()
    }
}

/// An environment map together with its importance-sampling tables.
#[derive(Debug, Clone)]
pub struct Lighting {
    pub env: EnvMap,
    sampler: EnvSampler,
}

impl Lighting {
    pub fn new(env: EnvMap) -> Self {
        let sampler = EnvSampler::new(&env);
        Self { env, sampler }
    }

    fn radiance(&self, d: &Vector3<f64>) -> [f64; 3] {
        self.env.lookup(d).map(|c| c as f64)
    }
}

#[derive(Clone, Copy)]
enum Material {
    Lambert,
    Ggx(f64),
}

impl Material {
    fn eval(&self, n: &Vector3<f64>, v: &Vector3<f64>, l: &Vector3<f64>) -> f64 {
        match *self {
            Material::Lambert => {
                if n.dot(l) > 0.0 {
                    std::f64::consts::FRAC_1_PI
                } else {
                    0.0
                }
            }
            Material::Ggx(alpha) => ggx_brdf(n, v, l, alpha, 1.0),
        }
    }

    fn sample(&self, n: &Vector3<f64>, v: &Vector3<f64>, u: (f64, f64)) -> Vector3<f64> {
        match *self {
            Material::Lambert => brdf::sample_cosine(n, u.0, u.1),
            Material::Ggx(alpha) => brdf::reflect(v, &brdf::sample_ggx_half(n, alpha, u.0, u.1)),
        }
    }

    fn pdf(&self, n: &Vector3<f64>, v: &Vector3<f64>, l: &Vector3<f64>) -> f64 {
        match *self {
            Material::Lambert => brdf::cosine_pdf(n, l),
            Material::Ggx(alpha) => brdf::ggx_pdf(n, v, l, alpha),
        }
    }
}

struct Shader<'a> {
    scene: &'a RenderScene,
    light: &'a Lighting,
    material: Material,
    spp: u32,
    shadow_distance: f64,
}

impl Shader<'_> {
    fn visible(&self, p: &Point3<f64>, l: &Vector3<f64>) -> bool {
        match &self.scene.bvh {
            None => true,
            Some(bvh) => !bvh.occluded(&Ray { origin: *p, dir: *l }, 0.0, self.shadow_distance),
        }
    }

    /// Direct lighting at `p` with normal `n` seen from `v`: one environment
    /// sample and one reflectance sample per iteration, combined with the
    /// balance heuristic.
    fn shade(
        &self,
        p: &Point3<f64>,
        n: &Vector3<f64>,
        v: &Vector3<f64>,
        env_s: &PixelSampler,
        brdf_s: &PixelSampler,
    ) -> [f64; 3] {
        let mut sum = [0.0; 3];
        let sampler = &self.light.sampler;
        if !sampler.is_active() {
            return sum;
        }
        let mut add = |l: Vector3<f64>, p_env: f64, p_brdf: f64| {
            let cos = n.dot(&l);
            if cos <= 0.0 {
                return;
            }
            let f = self.material.eval(n, v, &l);
            let denom = p_env + p_brdf;
            if f <= 0.0 || denom <= 0.0 || !self.visible(p, &l) {
                return;
            }
            let w = f * cos / denom;
            let le = self.light.radiance(&l);
            for c in 0..3 {
                sum[c] += w * le[c];
            }
        };
        for i in 0..self.spp as u64 {
            let (x, y) = env_s.point(i);
            let (le, p_env) = sampler.sample(x, y);
            add(le, p_env, self.material.pdf(n, v, &le));
            let lb = self.material.sample(n, v, brdf_s.point(i));
            let p_brdf = self.material.pdf(n, v, &lb);
            if p_brdf > 0.0 {
                add(lb, sampler.pdf(&lb), p_brdf);
            }
        }
        sum.map(|s| s / self.spp as f64)
    }
}

fn material(kind: PassKind, settings: &RenderSettings) -> Material {
    match kind {
        PassKind::Diffuse => Material::Lambert,
        PassKind::Ggx1 => Material::Ggx(settings.roughness_rough),
        PassKind::Ggx2 => Material::Ggx(settings.roughness_glossy),
    }
}

/// Key for a frame's sample streams, derived from its pose and yaw so that a
/// frame renders identically wherever it sits in a sequence.
pub fn frame_key(pose: &CameraPose, yaw_degrees: f64) -> u64 {
    let q = pose.rotation.as_ref();
    let t = &pose.translation;
    let k = &pose.intrinsics;
    let words: Vec<u64> = [q.w, q.i, q.j, q.k, t.x, t.y, t.z, k.fx, k.fy, k.cx, k.cy, yaw_degrees]
        .iter()
        .map(|v| v.to_bits())
        .collect();
    hash_key(&words)
}

fn pose_is_usable(pose: &CameraPose) -> bool {
    pose.is_finite() && pose.intrinsics.fx > 0.0 && pose.intrinsics.fy > 0.0
}

/// Render one pass into an `H x W x 3` image. `frame_key` selects the
/// per-pixel sample streams (see [`frame_key`]).
pub fn render_pass_prepared(
    scene: &RenderScene,
    light: &Lighting,
    pose: &CameraPose,
    kind: PassKind,
    settings: &RenderSettings,
    frame_key: u64,
) -> Result<Vec<f32>> {
    settings.validate()?;
    if !pose_is_usable(pose) {
        return Err(RenderError::DegenerateCamera(0));
    }
    let (w, h) = (settings.width, settings.height);
    let shader = Shader {
        scene,
        light,
        material: material(kind, settings),
        spp: settings.spp(kind),
        shadow_distance: settings.max_shadow_distance,
    };
    let eps = 1e-7 * scene.scale.max(1.0);
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(3 * w);
            for x in 0..w {
                let dir = pose.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
                let ray = Ray {
                    origin: pose.center(),
                    dir,
                };
                let hit = scene.bvh.as_ref().and_then(|b| b.intersect(&ray, 0.0, f64::INFINITY));
                let rgb = match hit {
                    None => light.env.lookup(&dir),
                    Some(hit) => {
                        let tri = &scene.bvh.as_ref().unwrap().triangles()[hit.triangle];
                        let p = Point3::from(
                            tri[0].coords * hit.bary[0] + tri[1].coords * hit.bary[1] + tri[2].coords * hit.bary[2],
                        );
                        let mut n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
                        let v = -dir;
                        if n.dot(&v) < 0.0 {
                            n = -n;
                        }
                        let key = |stream: u64| {
                            PixelSampler::new(
                                &[settings.seed, frame_key, x as u64, y as u64, kind.index(), stream],
                                shader.spp as u64,
                            )
                        };
                        let origin = p + n * eps;
                        shader.shade(&origin, &n, &v, &key(0), &key(1)).map(|c| c as f32)
                    }
                };
                row.extend_from_slice(&rgb);
            }
            row
        })
        .collect();
    Ok(rows.concat())
}

/// Render one pass from scratch (builds the BVH and sampling tables).
pub fn render_pass(
    assembly: &SceneAssembly,
    env: &EnvMap,
    pose: &CameraPose,
    kind: PassKind,
    settings: &RenderSettings,
) -> Result<Vec<f32>> {
    render_pass_prepared(
        &RenderScene::new(assembly),
        &Lighting::new(env.clone()),
        pose,
        kind,
        settings,
        frame_key(pose, 0.0),
    )
}

/// Render all frames and passes. Frame `k` uses pose `k` and the map
/// rotated by `yaws[k]`. Output is independent of `threads` and each frame
/// depends only on its own pose and yaw.
pub fn render_proxy(
    assembly: &SceneAssembly,
    env: &EnvMap,
    trajectory: &CameraTrajectory,
    yaws: &[f64],
    settings: &RenderSettings,
    threads: usize,
) -> Result<ProxyStack> {
    render_proxy_scene(&RenderScene::new(assembly), env, trajectory, yaws, settings, threads)
}

pub fn render_proxy_scene(
    scene: &RenderScene,
    env: &EnvMap,
    trajectory: &CameraTrajectory,
    yaws: &[f64],
    settings: &RenderSettings,
    threads: usize,
) -> Result<ProxyStack> {
    settings.validate()?;
    if trajectory.poses.len() != yaws.len() {
        return Err(RenderError::LengthMismatch {
            poses: trajectory.poses.len(),
            yaws: yaws.len(),
        });
    }
    if let Some(k) = trajectory.poses.iter().position(|p| !pose_is_usable(p)) {
        return Err(RenderError::DegenerateCamera(k));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| RenderError::ThreadPool(e.to_string()))?;
    let (w, h) = (settings.width, settings.height);
    let frames: Vec<Result<Vec<f32>>> = pool.install(|| {
        trajectory
            .poses
            .par_iter()
            .zip(yaws.par_iter())
            .map(|(pose, &yaw)| {
                let light = Lighting::new(rotate_envmap(env, yaw));
                let key = frame_key(pose, yaw);
                let mut planes = vec![0.0f32; PROXY_CHANNELS * h * w];
                for (p, kind) in PassKind::ALL.into_iter().enumerate() {
                    let img = render_pass_prepared(scene, &light, pose, kind, settings, key)?;
                    for i in 0..h * w {
                        for c in 0..3 {
                            planes[(3 * p + c) * h * w + i] = img[3 * i + c];
                        }
                    }
                }
                Ok(planes)
            })
            .collect()
    });
    let mut data = Vec::with_capacity(frames.len() * PROXY_CHANNELS * h * w);
    for f in frames {
        data.extend(f?);
    }
    Ok(ProxyStack::new(trajectory.poses.len(), h, w, data))
}

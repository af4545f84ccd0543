//! Control-fidelity metrics: Sim(3)-aligned trajectory errors, scale-invariant
//! lighting error and its temporal instability, and layout mIoU.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraPose, CameraTrajectory};
use crate::envlight::EnvMap;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("point set has zero variance")]
    DegenerateConfiguration,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("mask: {0}")]
    Mask(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3 {
    pub scale: f64,
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3 {
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn inverse(&self) -> Sim3 {
        let rinv = self.rotation.inverse();
        Sim3 {
            scale: 1.0 / self.scale,
            rotation: rinv,
            translation: -(rinv * self.translation) / self.scale,
        }
    }

    /// Apply to a camera pose: the center maps as a point, the orientation is
    /// rotated, intrinsics are kept.
    pub fn apply_pose(&self, pose: &CameraPose) -> CameraPose {
        CameraPose {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.center()).coords,
            intrinsics: pose.intrinsics,
        }
    }
}

/// Closed-form least-squares similarity mapping `pred` onto `gt`.
pub fn umeyama_sim3(pred: &[Point3<f64>], gt: &[Point3<f64>]) -> Result<Sim3> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch(pred.len(), gt.len()));
    }
    let n = pred.len();
    if n < 3 {
        return Err(EvalError::TooFewPoints { needed: 3, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let mu_p = pred.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;
    let mu_g = gt.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv_n;
    let mut var_p = 0.0;
    let mut cov = Matrix3::zeros();
    for (p, g) in pred.iter().zip(gt) {
        let dp = p.coords - mu_p;
        let dg = g.coords - mu_g;
        var_p += dp.norm_squared();
        cov += dg * dp.transpose();
    }
    var_p *= inv_n;
    cov *= inv_n;
    let extent = pred.iter().fold(0.0f64, |m, p| m.max(p.coords.amax()));
    if !(var_p > 1e-24 * (1.0 + extent * extent)) {
        return Err(EvalError::DegenerateConfiguration);
    }
    let svd = cov.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut s = Matrix3::identity();
    if u.determinant() * vt.determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    let d = svd.singular_values;
    let scale = (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_p;
    if !(scale > 0.0) {
        return Err(EvalError::DegenerateConfiguration);
    }
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let translation = mu_g - scale * (rotation * mu_p);
    Ok(Sim3 {
        scale,
        rotation,
        translation,
    })
}

fn centers(t: &CameraTrajectory) -> Vec<Point3<f64>> {
    t.poses.iter().map(|p| p.center()).collect()
}

/// Sum of squared residuals of `sim` applied to `pred` against `gt`.
pub fn alignment_residual(sim: &Sim3, pred: &[Point3<f64>], gt: &[Point3<f64>]) -> f64 {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| (sim.apply(p) - g).norm_squared())
        .sum()
}

/// 100 x RMSE of camera centers after Sim(3) alignment.
pub fn compute_ate(pred: &CameraTrajectory, gt: &CameraTrajectory) -> Result<f64> {
    if pred.poses.len() != gt.poses.len() {
        return Err(EvalError::LengthMismatch(pred.poses.len(), gt.poses.len()));
    }
    let (p, g) = (centers(pred), centers(gt));
    let sim = umeyama_sim3(&p, &g)?;
    Ok(100.0 * (alignment_residual(&sim, &p, &g) / p.len() as f64).sqrt())
}

fn isometry(pose: &CameraPose, scale: f64) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::from(pose.translation * scale), pose.rotation)
}

/// Rotation angle of a unit quaternion in degrees, in `[0, 180]`.
fn angle_deg(q: &UnitQuaternion<f64>) -> f64 {
    let c = q.as_ref();
    let v = Vector3::new(c.i, c.j, c.k).norm();
    (2.0 * v.atan2(c.w.abs())).to_degrees()
}

/// Mean relative-pose errors over pairs `(i, i + delta)`: translation (x100)
/// and rotation (degrees). Pred translations are first multiplied by the
/// Sim(3) alignment scale; when alignment is impossible the scale is 1.
pub fn compute_rpe(pred: &CameraTrajectory, gt: &CameraTrajectory, delta: usize) -> Result<(f64, f64)> {
    let n = pred.poses.len();
    if n != gt.poses.len() {
        return Err(EvalError::LengthMismatch(n, gt.poses.len()));
    }
    if delta == 0 || n < delta + 1 {
        return Err(EvalError::TooFewPoints {
            needed: delta.max(1) + 1,
            got: n,
        });
    }
    let scale = umeyama_sim3(&centers(pred), &centers(gt))
        .map(|s| s.scale)
        .unwrap_or(1.0);
    let mut sum_t = 0.0;
    let mut sum_r = 0.0;
    let pairs = n - delta;
    for i in 0..pairs {
        let g_rel = isometry(&gt.poses[i], 1.0).inverse() * isometry(&gt.poses[i + delta], 1.0);
        let p_rel = isometry(&pred.poses[i], scale).inverse() * isometry(&pred.poses[i + delta], scale);
        let e = g_rel.inverse() * p_rel;
        sum_t += e.translation.vector.norm();
        sum_r += angle_deg(&e.rotation);
    }
    Ok((100.0 * sum_t / pairs as f64, sum_r / pairs as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMetrics {
    pub ate: f64,
    pub rpe_t: f64,
    pub rpe_r: f64,
}

pub fn trajectory_metrics(pred: &CameraTrajectory, gt: &CameraTrajectory) -> Result<TrajectoryMetrics> {
    let ate = compute_ate(pred, gt)?;
    let (rpe_t, rpe_r) = compute_rpe(pred, gt, 1)?;
    Ok(TrajectoryMetrics { ate, rpe_t, rpe_r })
}

// ---------------------------------------------------------------------------
// Lighting

/// Per-row solid-angle weights `sin(theta)` at row centers.
pub fn row_weights(height: usize) -> Vec<f64> {
    (0..height)
        .map(|v| (std::f64::consts::PI * (v as f64 + 0.5) / height as f64).sin())
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    pg: f64,
    pp: f64,
    weight: f64,
}

/// Borrowed `H x W x 3` radiance grid in either precision.
#[derive(Clone, Copy)]
struct Grid<'a, T> {
    height: usize,
    width: usize,
    data: &'a [T],
}

impl<'a> Grid<'a, f32> {
    fn of(map: &'a EnvMap) -> Self {
        Grid {
            height: map.height(),
            width: map.width(),
            data: map.pixels(),
        }
    }
}

fn check_dims<T>(pred: Grid<'_, T>, gt: Grid<'_, T>) -> Result<()> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(EvalError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    Ok(())
}

fn moments<T: Copy + Into<f64>>(pred: Grid<'_, T>, gt: Grid<'_, T>) -> Moments {
    let w = pred.width;
    let mut m = Moments::default();
    for (v, rw) in row_weights(pred.height).into_iter().enumerate() {
        for i in 3 * v * w..3 * (v + 1) * w {
            let (pi, gi): (f64, f64) = (pred.data[i].into(), gt.data[i].into());
            m.pg += rw * pi * gi;
            m.pp += rw * pi * pi;
            m.weight += rw;
        }
    }
    m
}

fn optimal_scale(pg: f64, pp: f64) -> f64 {
    if pp > 0.0 {
        (pg / pp).max(0.0)
    } else {
        0.0
    }
}

/// Weighted squared error of `s * pred` against `gt`, un-normalized.
fn weighted_sq_error<T: Copy + Into<f64>>(pred: Grid<'_, T>, gt: Grid<'_, T>, s: f64) -> f64 {
    let w = pred.width;
    let mut e = 0.0;
    for (v, rw) in row_weights(pred.height).into_iter().enumerate() {
        for i in 3 * v * w..3 * (v + 1) * w {
            let d = s * pred.data[i].into() - gt.data[i].into();
            e += rw * d * d;
        }
    }
    e
}

fn si_mse_grid<T: Copy + Into<f64>>(pred: Grid<'_, T>, gt: Grid<'_, T>) -> Result<f64> {
    check_dims(pred, gt)?;
    let m = moments(pred, gt);
    let s = optimal_scale(m.pg, m.pp);
    Ok(weighted_sq_error(pred, gt, s) / m.weight)
}

/// `min_{s >= 0}` of the solid-angle-weighted mean of `(s p - g)^2` over all
/// texels and channels.
pub fn si_mse(pred: &EnvMap, gt: &EnvMap) -> Result<f64> {
    si_mse_grid(Grid::of(pred), Grid::of(gt))
}

/// [`si_mse`] on raw double-precision `H x W x 3` grids.
pub fn si_mse_f64(pred: &[f64], gt: &[f64], height: usize, width: usize) -> Result<f64> {
    for d in [pred, gt] {
        if height == 0 || width == 0 || d.len() != 3 * height * width {
            return Err(EvalError::DimensionMismatch(format!(
                "{} values for {width}x{height}",
                d.len()
            )));
        }
    }
    let grid = |data| Grid { height, width, data };
    si_mse_grid(grid(pred), grid(gt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScaleMode {
    /// Each frame gets its own optimal scale.
    #[default]
    PerFrame,
    /// One scale shared by the whole sequence.
    PerSequence,
}

/// Per-frame SI-MSE values of a sequence.
pub fn si_mse_sequence(pred: &[EnvMap], gt: &[EnvMap], mode: ScaleMode) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch(pred.len(), gt.len()));
    }
    for (p, g) in pred.iter().zip(gt) {
        check_dims(Grid::of(p), Grid::of(g))?;
    }
    match mode {
        ScaleMode::PerFrame => pred.iter().zip(gt).map(|(p, g)| si_mse(p, g)).collect(),
        ScaleMode::PerSequence => {
            let ms: Vec<Moments> = pred
                .iter()
                .zip(gt)
                .map(|(p, g)| moments(Grid::of(p), Grid::of(g)))
                .collect();
            let s = optimal_scale(ms.iter().map(|m| m.pg).sum(), ms.iter().map(|m| m.pp).sum());
            Ok(pred
                .iter()
                .zip(gt)
                .zip(&ms)
                .map(|((p, g), m)| weighted_sq_error(Grid::of(p), Grid::of(g), s) / m.weight)
                .collect())
        }
    }
}

/// Population standard deviation of per-frame SI-MSE values.
pub fn lighting_instability(per_frame: &[f64]) -> Result<f64> {
    if per_frame.len() < 2 {
        return Err(EvalError::TooFewFrames(per_frame.len()));
    }
    let n = per_frame.len() as f64;
    let mean = per_frame.iter().sum::<f64>() / n;
    Ok((per_frame.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt())
}

// ---------------------------------------------------------------------------
// Layout

/// Per-frame object-ID grids; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Vec<u16>>,
}

impl MaskSequence {
    pub fn new(height: usize, width: usize, frames: Vec<Vec<u16>>) -> Result<Self> {
        if frames.iter().any(|f| f.len() != height * width) {
            return Err(EvalError::DimensionMismatch("mask frame size".into()));
        }
        Ok(Self { height, width, frames })
    }

    /// Apply an ID relabeling to every non-background pixel.
    pub fn relabeled(&self, map: impl Fn(u16) -> u16) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|f| f.iter().map(|&id| if id == 0 { 0 } else { map(id) }).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// IoU of every object present in either mask of each frame, as
/// `(frame, id, iou)` triples.
pub fn per_object_iou(pred: &MaskSequence, gt: &MaskSequence) -> Result<Vec<(usize, u16, f64)>> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(EvalError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    if pred.frames.len() != gt.frames.len() {
        return Err(EvalError::LengthMismatch(pred.frames.len(), gt.frames.len()));
    }
    let mut out = Vec::new();
    for (k, (p, g)) in pred.frames.iter().zip(&gt.frames).enumerate() {
        let ids: BTreeSet<u16> = p.iter().chain(g).copied().filter(|&i| i != 0).collect();
        for id in ids {
            let (mut inter, mut union) = (0usize, 0usize);
            for (&a, &b) in p.iter().zip(g) {
                let (ia, ib) = (a == id, b == id);
                inter += (ia && ib) as usize;
                union += (ia || ib) as usize;
            }
            out.push((k, id, inter as f64 / union as f64));
        }
    }
    Ok(out)
}

/// Mean IoU over all (frame, object) pairs. Two masks with no objects at all
/// agree perfectly and score 1.
pub fn compute_miou(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64> {
    let ious = per_object_iou(pred, gt)?;
    if ious.is_empty() {
        return Ok(1.0);
    }
    Ok(ious.iter().map(|t| t.2).sum::<f64>() / ious.len() as f64)
}

/// Read a 16-bit (or 8-bit) grayscale PNG as object IDs.
pub fn load_mask_png(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        image::DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        other => {
            return Err(EvalError::Mask(format!(
                "{}: expected grayscale, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok((h, w, data))
}

pub fn save_mask_png(path: &Path, height: usize, width: usize, ids: &[u16]) -> Result<()> {
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(width as u32, height as u32, ids.to_vec())
        .ok_or_else(|| EvalError::Mask("buffer size does not match dimensions".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Load `frame_00000.png`, `frame_00001.png`, ... from `dir` until a
/// number is missing.
pub fn load_mask_dir(dir: &Path) -> Result<MaskSequence> {
    let mut frames = Vec::new();
    let mut dims = None;
    loop {
        let path = dir.join(format!("frame_{:05}.png", frames.len()));
        if !path.exists() {
            break;
        }
        let (h, w, data) = load_mask_png(&path)?;
        if *dims.get_or_insert((h, w)) != (h, w) {
            return Err(EvalError::DimensionMismatch(format!("{} changes size", path.display())));
        }
        frames.push(data);
    }
    let (h, w) = dims.ok_or_else(|| EvalError::Mask(format!("no frame_00000.png in {}", dir.display())))?;
    MaskSequence::new(h, w, frames)
}

/// Summary written by `eval`; metrics that were not requested are `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ate: Option<f64>,
    pub rpe_t: Option<f64>,
    pub rpe_r: Option<f64>,
    pub lighting_error: Option<f64>,
    pub lighting_instability: Option<f64>,
    pub miou: Option<f64>,
}

/// `frame,<column>` CSV of per-frame values.
pub fn per_frame_csv(column: &str, values: &[f64]) -> String {
    let mut out = format!("frame,{column}\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

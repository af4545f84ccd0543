//! Flow-matching pairs, the velocity loss and an Euler sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::ToyModel;
use crate::tensor::{ConditionFeatures, Fmap, LatentTensor};
use crate::{LatentError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub z: LatentTensor,
    pub eps: LatentTensor,
    pub t: f64,
    pub z_t: LatentTensor,
    pub v_t: LatentTensor,
}

/// Standard-normal tensor shaped like `like`.
pub fn gaussian_like(like: &LatentTensor, rng: &mut ChaCha8Rng) -> LatentTensor {
    LatentTensor {
        frames: like
            .frames
            .iter()
            .map(|f| Fmap {
                data: (0..f.data.len()).map(|_| StandardNormal.sample(rng)).collect(),
                ..*f
            })
            .collect(),
    }
}

/// Build the pair `z_t = t z + (1 - t) eps`, `v_t = z - eps` from a given
/// noise draw.
pub fn flow_pair(z: &LatentTensor, eps: &LatentTensor, t: f64) -> Result<FlowSample> {
    if !(0.0..=1.0).contains(&t) {
        return Err(LatentError::BadT(t));
    }
    Ok(FlowSample {
        z_t: z.zip_map(eps, |a, b| t * a + (1.0 - t) * b)?,
        v_t: z.zip_map(eps, |a, b| a - b)?,
        z: z.clone(),
        eps: eps.clone(),
        t,
    })
}

pub fn sample_flow(z: &LatentTensor, seed: u64, t: f64) -> Result<FlowSample> {
    if !(0.0..=1.0).contains(&t) {
        return Err(LatentError::BadT(t));
    }
    let eps = gaussian_like(z, &mut ChaCha8Rng::seed_from_u64(seed));
    flow_pair(z, &eps, t)
}

/// Mean squared error over all elements.
pub fn flow_loss(prediction: &LatentTensor, v_t: &LatentTensor) -> Result<f64> {
    if prediction.shape() != v_t.shape() {
        return Err(LatentError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            prediction.shape(),
            v_t.shape()
        )));
    }
    let n = prediction.len();
    if n == 0 {
        return Err(LatentError::ShapeMismatch("empty tensors".into()));
    }
    let sum: f64 = prediction
        .values()
        .zip(v_t.values())
        .map(|(p, v)| (p - v) * (p - v))
        .sum();
    Ok(sum / n as f64)
}

/// Integrate `dz/dt = velocity(z, t)` from `grid[0]` to the last grid point
/// with forward Euler, starting at `start`.
pub fn euler_sample(
    start: &LatentTensor,
    grid: &[f64],
    mut velocity: impl FnMut(&LatentTensor, f64) -> Result<LatentTensor>,
) -> Result<LatentTensor> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LatentError::BadGrid);
    }
    let mut z = start.clone();
    for w in grid.windows(2) {
        let v = velocity(&z, w[0])?;
        let dt = w[1] - w[0];
        z = z.zip_map(&v, |a, b| a + dt * b)?;
    }
    Ok(z)
}

/// `n + 1` equally spaced times over `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}

/// Generate a latent video from noise with the model as velocity field.
pub fn generate(
    model: &ToyModel,
    eps: &LatentTensor,
    steps: usize,
    z_y: Option<&ConditionFeatures>,
) -> Result<LatentTensor> {
    euler_sample(eps, &uniform_grid(steps.max(1)), |z, t| {
        model.forward_denoise(z, t, z_y)
    })
}

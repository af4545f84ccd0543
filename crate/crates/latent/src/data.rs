//! Procedural toy data: a shaded sphere under a directional light, with
//! its 9-channel proxy (diffuse, rough and glossy reflection) and the
//! "video" frame whose latent the model learns to generate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::encode_latent;
use crate::model::PROXY_CHANNELS;
use crate::tensor::Fmap;
use crate::Result;

/// Multiplier applied to codec outputs. Raw codes of a 32x32 frame reach
/// about 20; scaled down they sit near the unit-variance noise.
pub const LATENT_SCALE: f64 = 0.25;

/// Which procedural distribution a sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToySource {
    /// Stands in for rendered synthetic data.
    Synthetic,
    /// A second distribution with different lights and materials, standing
    /// in for captured footage.
    Real,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub proxy: Fmap,
    /// `H x W x 3` image.
    pub frame: Vec<f64>,
    /// Scaled codec latent of `frame`.
    pub latent: Fmap,
}

struct Look {
    elevation: (f64, f64),
    radius: (f64, f64),
    albedo: [f64; 3],
    specular: f64,
}

fn look(source: ToySource) -> Look {
    match source {
        ToySource::Synthetic => Look {
            elevation: (10.0, 70.0),
            radius: (0.2, 0.35),
            albedo: [0.8, 0.6, 0.4],
            specular: 0.3,
        },
        ToySource::Real => Look {
            elevation: (30.0, 85.0),
            radius: (0.25, 0.4),
            albedo: [0.5, 0.7, 0.8],
            specular: 0.5,
        },
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

/// One sample of `size x size` pixels.
pub fn toy_sample(source: ToySource, size: usize, rng: &mut ChaCha8Rng) -> Result<ToySample> {
    let lk = look(source);
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el = rng.random_range(lk.elevation.0..lk.elevation.1).to_radians();
    let light = [el.cos() * az.cos(), el.sin(), el.cos() * az.sin()];
    let color = lerp3([0.6, 0.7, 1.0], [1.0, 0.7, 0.4], rng.random::<f64>());
    let s = size as f64;
    let radius = rng.random_range(lk.radius.0..lk.radius.1) * s;
    let cx = rng.random_range(0.3..0.7) * s;
    let cy = rng.random_range(0.3..0.7) * s;
    let half = {
        let h = [light[0], light[1], light[2] + 1.0];
        let n = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        h.map(|c| c / n)
    };

    let plane = size * size;
    let mut proxy = Fmap::zeros(PROXY_CHANNELS, size, size);
    let mut frame = vec![0.0; plane * 3];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let dx = (x as f64 + 0.5 - cx) / radius;
            let dy = -(y as f64 + 0.5 - cy) / radius;
            let r2 = dx * dx + dy * dy;
            let (diff, rough, gloss) = if r2 < 1.0 {
                let n = [dx, dy, (1.0 - r2).sqrt()];
                let nl = (n[0] * light[0] + n[1] * light[1] + n[2] * light[2]).max(0.0);
                let nh = (n[0] * half[0] + n[1] * half[1] + n[2] * half[2]).max(0.0);
                let lit = if nl > 0.0 { 1.0 } else { 0.0 };
                (nl + 0.15, lit * 2.0 * nh.powi(8), lit * 4.0 * nh.powi(100))
            } else {
                // Background shows the sky in every pass.
                let sky = 0.1 + 0.3 * (1.0 - y as f64 / s);
                (sky, sky, sky)
            };
            for c in 0..3 {
                proxy.data[c * plane + i] = color[c] * diff;
                proxy.data[(3 + c) * plane + i] = color[c] * rough;
                proxy.data[(6 + c) * plane + i] = color[c] * gloss;
                frame[3 * i + c] = if r2 < 1.0 {
                    lk.albedo[c] * color[c] * diff + lk.specular * color[c] * rough
                } else {
                    color[c] * diff
                };
            }
        }
    }
    let mut latent = encode_latent(&frame, size, size)?;
    latent.data.iter_mut().for_each(|v| *v *= LATENT_SCALE);
    Ok(ToySample { proxy, frame, latent })
}

/// `count` samples from one source, reproducible from `seed`.
pub fn toy_dataset(source: ToySource, count: usize, size: usize, seed: u64) -> Result<Vec<ToySample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (source as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..count).map(|_| toy_sample(source, size, &mut rng)).collect()
}

//! Sample generation: a counter-based hash, randomly shifted rank-1
//! lattices, and importance sampling of environment maps.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::envlight::{direction_to_texel, spherical_direction, EnvMap};

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a tuple of counters; order-sensitive.
pub fn hash_key(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Top 53 bits of `h` as a float in `[0, 1)`.
pub fn unit_float(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fractional part of the golden ratio.
const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_8;

/// Point `i` of the `n`-point Fibonacci-style lattice
/// `((i + 0.5) / n, i / phi)`, rotated toroidally by `shift`.
pub fn lattice_point(i: u64, n: u64, shift: (f64, f64)) -> (f64, f64) {
    let x = ((i as f64 + 0.5) / n as f64 + shift.0).fract();
    let y = (i as f64 * GOLDEN_FRAC + shift.1).fract();
    (x, y)
}

/// A per-pixel set of `n` 2D sample points. The random shift is keyed by
/// counters so results never depend on evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct PixelSampler {
    shift: (f64, f64),
    n: u64,
}

impl PixelSampler {
    pub fn new(key: &[u64], n: u64) -> Self {
        let h = hash_key(key);
        Self {
            shift: (unit_float(h), unit_float(splitmix64(h))),
            n: n.max(1),
        }
    }

    pub fn point(&self, i: u64) -> (f64, f64) {
        lattice_point(i, self.n, self.shift)
    }
}

/// Luminance weights used to build the sampling distribution.
pub fn luminance(rgb: [f32; 3]) -> f64 {
    0.2126 * rgb[0] as f64 + 0.7152 * rgb[1] as f64 + 0.0722 * rgb[2] as f64
}

/// Piecewise-constant distribution over texels with probability
/// proportional to luminance times texel solid angle. Within a texel,
/// directions are uniform in longitude and in `cos(theta)`, so the
/// solid-angle density is constant per texel.
#[derive(Debug, Clone)]
pub struct EnvSampler {
    width: usize,
    height: usize,
    /// Marginal CDF over rows, length `H + 1`.
    row_cdf: Vec<f64>,
    /// Conditional CDFs per row, `H * (W + 1)`.
    col_cdf: Vec<f64>,
    /// Solid-angle density for each texel.
    density: Vec<f64>,
    total: f64,
}

fn row_cos_bounds(v: usize, height: usize) -> (f64, f64) {
    let t0 = PI * v as f64 / height as f64;
    let t1 = PI * (v + 1) as f64 / height as f64;
    (t0.cos(), t1.cos())
}

impl EnvSampler {
    pub fn new(env: &EnvMap) -> Self {
        let (w, h) = (env.width(), env.height());
        let dphi = 2.0 * PI / w as f64;
        let mut col_cdf = vec![0.0; h * (w + 1)];
        let mut row_sum = vec![0.0; h];
        let mut weights = vec![0.0; w * h];
        for v in 0..h {
            let (c0, c1) = row_cos_bounds(v, h);
            let omega = dphi * (c0 - c1);
            let base = v * (w + 1);
            for u in 0..w {
                let wt = luminance(env.texel(u, v)) * omega;
                weights[v * w + u] = wt;
                col_cdf[base + u + 1] = col_cdf[base + u] + wt;
            }
            row_sum[v] = col_cdf[base + w];
            if row_sum[v] > 0.0 {
                for c in &mut col_cdf[base + 1..=base + w] {
                    *c /= row_sum[v];
                }
            }
        }
        let mut row_cdf = vec![0.0; h + 1];
        for v in 0..h {
            row_cdf[v + 1] = row_cdf[v] + row_sum[v];
        }
        let total = row_cdf[h];
        let mut density = vec![0.0; w * h];
        if total > 0.0 {
            for c in &mut row_cdf[1..] {
                *c /= total;
            }
            for v in 0..h {
                let (c0, c1) = row_cos_bounds(v, h);
                let omega = dphi * (c0 - c1);
                for u in 0..w {
                    density[v * w + u] = weights[v * w + u] / total / omega;
                }
            }
        }
        Self {
            width: w,
            height: h,
            row_cdf,
            col_cdf,
            density,
            total,
        }
    }

    /// Whether the map carries any energy to sample.
    pub fn is_active(&self) -> bool {
        self.total > 0.0
    }

    fn search(cdf: &[f64], x: f64) -> usize {
        // Last index i with cdf[i] <= x, skipping zero-probability bins.
        let n = cdf.len() - 1;
        let i = cdf.partition_point(|&c| c <= x);
        i.clamp(1, n) - 1
    }

    /// Direction and solid-angle density for a point of the unit square.
    pub fn sample(&self, u1: f64, u2: f64) -> (Vector3<f64>, f64) {
        let (w, h) = (self.width, self.height);
        let v = Self::search(&self.row_cdf, u1);
        let (r0, r1) = (self.row_cdf[v], self.row_cdf[v + 1]);
        let fv = if r1 > r0 {
            ((u1 - r0) / (r1 - r0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let row = &self.col_cdf[v * (w + 1)..(v + 1) * (w + 1)];
        let u = Self::search(row, u2);
        let (c0, c1) = (row[u], row[u + 1]);
        let fu = if c1 > c0 {
            ((u2 - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let (cos0, cos1) = row_cos_bounds(v, h);
        let cos_t = cos0 + (cos1 - cos0) * fv;
        let theta = cos_t.clamp(-1.0, 1.0).acos();
        let phi = 2.0 * PI * (u as f64 + fu) / w as f64 - PI;
        (spherical_direction(theta, phi), self.density[v * w + u])
    }

    /// Solid-angle density of direction `d`.
    pub fn pdf(&self, d: &Vector3<f64>) -> f64 {
        let (u, v) = direction_to_texel(d, self.width, self.height);
        self.density[v * self.width + u]
    }
}

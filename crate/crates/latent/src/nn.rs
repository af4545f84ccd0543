//! Layer primitives with hand-written reverse mode: 2D convolution, group
//! normalization, SiLU and the Fourier time embedding.

use std::f64::consts::PI;

use crate::tensor::Fmap;

/// Shape of a square-kernel convolution with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub const fn new(cin: usize, cout: usize, k: usize, stride: usize) -> Self {
        Self {
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.fan_in()
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    /// Input pixel feeding output `(oy, ox)` at kernel tap `(ky, kx)`.
    #[inline]
    fn src(&self, o: usize, k: usize, size: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < size).then_some(i as usize)
    }

    /// Weight layout is `[cout][cin][ky][kx]`.
    pub fn forward(&self, weight: &[f64], bias: &[f64], x: &Fmap) -> Fmap {
        debug_assert_eq!(x.c, self.cin);
        let (ho, wo) = self.out_size(x.h, x.w);
        let mut y = Fmap::zeros(self.cout, ho, wo);
        for co in 0..self.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias[co];
                    for ci in 0..self.cin {
                        for ky in 0..self.k {
                            let Some(iy) = self.src(oy, ky, x.h) else { continue };
                            for kx in 0..self.k {
                                let Some(ix) = self.src(ox, kx, x.w) else { continue };
                                acc += weight[((co * self.cin + ci) * self.k + ky) * self.k + kx]
                                    * x.data[(ci * x.h + iy) * x.w + ix];
                            }
                        }
                    }
                    y.data[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        y
    }

    /// Returns `(dx, dweight, dbias)`.
    pub fn backward(&self, weight: &[f64], x: &Fmap, dy: &Fmap) -> (Fmap, Vec<f64>, Vec<f64>) {
        let (ho, wo) = (dy.h, dy.w);
        let mut dx = Fmap::zeros(x.c, x.h, x.w);
        let mut dw = vec![0.0; self.weight_len()];
        let mut db = vec![0.0; self.cout];
        for co in 0..self.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let g = dy.data[(co * ho + oy) * wo + ox];
                    db[co] += g;
                    for ci in 0..self.cin {
                        for ky in 0..self.k {
                            let Some(iy) = self.src(oy, ky, x.h) else { continue };
                            for kx in 0..self.k {
                                let Some(ix) = self.src(ox, kx, x.w) else { continue };
                                let wi = ((co * self.cin + ci) * self.k + ky) * self.k + kx;
                                let xi = (ci * x.h + iy) * x.w + ix;
                                dw[wi] += g * x.data[xi];
                                dx.data[xi] += g * weight[wi];
                            }
                        }
                    }
                }
            }
        }
        (dx, dw, db)
    }
}

pub const GN_EPS: f64 = 1e-5;

/// Saved statistics for the group-norm backward pass.
#[derive(Debug, Clone)]
pub struct GroupNormCache {
    pub xhat: Fmap,
    pub inv_std: Vec<f64>,
}

pub fn group_norm(x: &Fmap, groups: usize, gamma: &[f64], beta: &[f64]) -> (Fmap, GroupNormCache) {
    assert_eq!(x.c % groups, 0);
    let per = x.c / groups * x.h * x.w;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(groups);
    for g in 0..groups {
        let chunk = &mut xhat.data[g * per..(g + 1) * per];
        let mean = chunk.iter().sum::<f64>() / per as f64;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per as f64;
        let is = 1.0 / (var + GN_EPS).sqrt();
        for v in chunk.iter_mut() {
            *v = (*v - mean) * is;
        }
        inv_std.push(is);
    }
    let plane = x.h * x.w;
    let mut y = xhat.clone();
    for (i, v) in y.data.iter_mut().enumerate() {
        let c = i / plane;
        *v = *v * gamma[c] + beta[c];
    }
    (y, GroupNormCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn group_norm_backward(cache: &GroupNormCache, gamma: &[f64], dy: &Fmap) -> (Fmap, Vec<f64>, Vec<f64>) {
    let xhat = &cache.xhat;
    let groups = cache.inv_std.len();
    let plane = xhat.h * xhat.w;
    let per = xhat.c / groups * plane;
    let mut dgamma = vec![0.0; xhat.c];
    let mut dbeta = vec![0.0; xhat.c];
    let mut dxhat = vec![0.0; xhat.data.len()];
    for i in 0..xhat.data.len() {
        let c = i / plane;
        dgamma[c] += dy.data[i] * xhat.data[i];
        dbeta[c] += dy.data[i];
        dxhat[i] = dy.data[i] * gamma[c];
    }
    let mut dx = Fmap::zeros(xhat.c, xhat.h, xhat.w);
    let n = per as f64;
    for g in 0..groups {
        let r = g * per..(g + 1) * per;
        let sum: f64 = dxhat[r.clone()].iter().sum();
        let dot: f64 = dxhat[r.clone()]
            .iter()
            .zip(&xhat.data[r.clone()])
            .map(|(a, b)| a * b)
            .sum();
        let is = cache.inv_std[g];
        for i in r {
            dx.data[i] = is / n * (n * dxhat[i] - sum - xhat.data[i] * dot);
        }
    }
    (dx, dgamma, dbeta)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: &Fmap) -> Fmap {
    Fmap {
        data: x.data.iter().map(|&v| v * sigmoid(v)).collect(),
        ..*x
    }
}

/// Gradient through SiLU given its input `x`.
pub fn silu_backward(x: &Fmap, dy: &Fmap) -> Fmap {
    Fmap {
        data: x
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&v, &g)| {
                let s = sigmoid(v);
                g * s * (1.0 + v * (1.0 - s))
            })
            .collect(),
        ..*x
    }
}

pub const TIME_CHANNELS: usize = 8;

/// `[sin(pi 2^k t), cos(pi 2^k t)]` for `k = 0..4`.
pub fn fourier_features(t: f64) -> [f64; TIME_CHANNELS] {
    let mut out = [0.0; TIME_CHANNELS];
    for k in 0..TIME_CHANNELS / 2 {
        let a = PI * (1u32 << k) as f64 * t;
        out[2 * k] = a.sin();
        out[2 * k + 1] = a.cos();
    }
    out
}

/// Derivative of each feature with respect to `t`.
pub fn fourier_features_dt(t: f64) -> [f64; TIME_CHANNELS] {
    let mut out = [0.0; TIME_CHANNELS];
    for k in 0..TIME_CHANNELS / 2 {
        let f = PI * (1u32 << k) as f64;
        out[2 * k] = f * (f * t).cos();
        out[2 * k + 1] = -f * (f * t).sin();
    }
    out
}

/// Broadcast the time features over an `h x w` grid.
pub fn time_planes(t: f64, h: usize, w: usize) -> Fmap {
    let f = fourier_features(t);
    let mut out = Fmap::zeros(TIME_CHANNELS, h, w);
    for (c, v) in f.iter().enumerate() {
        out.data[c * h * w..(c + 1) * h * w].fill(*v);
    }
    out
}

//! Fixed linear patch codec: each 16x16x3 patch maps to four orthonormal
//! coefficients (luminance DC, horizontal and vertical first cosine modes of
//! luminance, R-B chroma DC).

use std::f64::consts::PI;

use crate::tensor::Fmap;
use crate::{LatentError, Result};

pub const PATCH: usize = 16;
pub const LATENT_CHANNELS: usize = 4;
const PATCH_LEN: usize = PATCH * PATCH * 3;

/// Basis row `k` evaluated at patch pixel `(y, x)` and color channel `c`.
pub fn basis(k: usize, y: usize, x: usize, c: usize) -> f64 {
    let mode = |i: usize| (PI * (i as f64 + 0.5) / PATCH as f64).cos();
    match k {
        0 => 1.0 / (PATCH_LEN as f64).sqrt(),
        // sum of cos^2 over one axis is PATCH / 2
        1 => mode(x) / ((PATCH_LEN / 2) as f64).sqrt(),
        2 => mode(y) / ((PATCH_LEN / 2) as f64).sqrt(),
        3 => {
            let s = match c {
                0 => 1.0,
                2 => -1.0,
                _ => 0.0,
            };
            s / ((2 * PATCH * PATCH) as f64).sqrt()
        }
        _ => panic!("basis row {k} out of range"),
    }
}

fn check_dims(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || h % PATCH != 0 || w % PATCH != 0 {
        return Err(LatentError::Dimension(format!(
            "{h}x{w} is not a positive multiple of {PATCH}"
        )));
    }
    Ok(())
}

/// Encode an `H x W x 3` image into a `4 x H/16 x W/16` latent.
pub fn encode_latent(frame: &[f64], h: usize, w: usize) -> Result<Fmap> {
    check_dims(h, w)?;
    if frame.len() != h * w * 3 {
        return Err(LatentError::Dimension(format!("{} values for {h}x{w}x3", frame.len())));
    }
    let (hp, wp) = (h / PATCH, w / PATCH);
    let mut out = Fmap::zeros(LATENT_CHANNELS, hp, wp);
    for py in 0..hp {
        for px in 0..wp {
            for k in 0..LATENT_CHANNELS {
                let mut acc = 0.0;
                for y in 0..PATCH {
                    for x in 0..PATCH {
                        let base = ((py * PATCH + y) * w + px * PATCH + x) * 3;
                        for c in 0..3 {
                            acc += basis(k, y, x, c) * frame[base + c];
                        }
                    }
                }
                out.data[(k * hp + py) * wp + px] = acc;
            }
        }
    }
    Ok(out)
}

/// Transpose map: reconstruct the component of an image in the code space.
pub fn decode_latent(latent: &Fmap) -> Result<Vec<f64>> {
    if latent.c != LATENT_CHANNELS {
        return Err(LatentError::Dimension(format!("{} latent channels", latent.c)));
    }
    let (hp, wp) = (latent.h, latent.w);
    let w = wp * PATCH;
    let mut out = vec![0.0; hp * PATCH * w * 3];
    for py in 0..hp {
        for px in 0..wp {
            for y in 0..PATCH {
                for x in 0..PATCH {
                    let base = ((py * PATCH + y) * w + px * PATCH + x) * 3;
                    for c in 0..3 {
                        out[base + c] = (0..LATENT_CHANNELS)
                            .map(|k| basis(k, y, x, c) * latent.data[(k * hp + py) * wp + px])
                            .sum();
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_is_orthonormal() {
        for a in 0..4 {
            for b in 0..4 {
                let mut dot = 0.0;
                for y in 0..PATCH {
                    for x in 0..PATCH {
                        for c in 0..3 {
                            dot += basis(a, y, x, c) * basis(b, y, x, c);
                        }
                    }
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "{a},{b}: {dot}");
            }
        }
    }

    #[test]
    fn constant_gray_gives_dc_only() {
        let c = 0.37;
        let z = encode_latent(&vec![c; 32 * 48 * 3], 32, 48).unwrap();
        assert_eq!((z.c, z.h, z.w), (4, 2, 3));
        for i in 0..6 {
            assert!((z.plane(0)[i] - c * 768f64.sqrt()).abs() < 1e-9);
            for k in 1..4 {
                assert!(z.plane(k)[i].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn decode_then_encode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = Fmap::from_vec(4, 2, 2, (0..16).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let back = encode_latent(&decode_latent(&q).unwrap(), 32, 32).unwrap();
            for (a, b) in q.data.iter().zip(&back.data) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bad_dimensions() {
        assert!(matches!(
            encode_latent(&[0.0; 20 * 16 * 3], 20, 16),
            Err(LatentError::Dimension(_))
        ));
        assert!(encode_latent(&[0.0; 10], 16, 16).is_err());
    }

    proptest! {
        #[test]
        fn encode_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 16 * 32 * 3;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (ex, ey) = (encode_latent(&x, 16, 32).unwrap(), encode_latent(&y, 16, 32).unwrap());
            let em = encode_latent(&mix, 16, 32).unwrap();
            for i in 0..em.data.len() {
                prop_assert!((em.data[i] - (a * ex.data[i] + b * ey.data[i])).abs() < 1e-6);
            }
        }
    }
}

//! Lambertian and GGX microfacet reflectance, with their sampling routines.

use std::f64::consts::PI;

use nalgebra::Vector3;

/// GGX normal distribution at `cos_h = n . h`.
pub fn ggx_d(cos_h: f64, alpha: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let k = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * k * k)
}

/// Smith Lambda for GGX at a direction with `cos_t = n . w`.
fn smith_lambda(cos_t: f64, alpha: f64) -> f64 {
    let c2 = cos_t * cos_t;
    let tan2 = (1.0 - c2).max(0.0) / c2;
    0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
}

/// Height-correlated Smith masking-shadowing.
pub fn smith_g(cos_v: f64, cos_l: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + (smith_lambda(cos_v, alpha) + smith_lambda(cos_l, alpha)))
}

pub fn schlick(f0: f64, cos_d: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - cos_d).max(0.0).powi(5)
}

/// Cook-Torrance GGX reflectance `D F G / (4 (n.v) (n.l))`; zero when
/// either direction is below the surface or the half vector is undefined.
pub fn ggx_brdf(n: &Vector3<f64>, v: &Vector3<f64>, l: &Vector3<f64>, alpha: f64, f0: f64) -> f64 {
    let nv = n.dot(v);
    let nl = n.dot(l);
    if nv <= 0.0 || nl <= 0.0 {
        return 0.0;
    }
    let h = v + l;
    let len = h.norm();
    if len < 1e-12 {
        return 0.0;
    }
    let h = h / len;
    // v.h and l.h agree analytically; averaging keeps the result exactly
    // symmetric in v and l.
    let dh = 0.5 * (v.dot(&h) + l.dot(&h));
    ggx_d(n.dot(&h), alpha) * schlick(f0, dh) * smith_g(nv, nl, alpha) / (4.0 * (nv * nl))
}

/// Orthonormal tangent frame around unit `n` (Duff et al. construction).
pub fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let sign = 1f64.copysign(n.z);
    let a = -1.0 / (sign + n.z);
    let b = n.x * n.y * a;
    (
        Vector3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x),
        Vector3::new(b, sign + n.y * n.y * a, -n.y),
    )
}

fn to_world(n: &Vector3<f64>, local: Vector3<f64>) -> Vector3<f64> {
    let (t, b) = tangent_frame(n);
    t * local.x + b * local.y + n * local.z
}

/// Cosine-weighted hemisphere sample; density `(n.l) / pi`.
pub fn sample_cosine(n: &Vector3<f64>, u1: f64, u2: f64) -> Vector3<f64> {
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let z = (1.0 - u1).max(0.0).sqrt();
    to_world(n, Vector3::new(r * phi.cos(), r * phi.sin(), z))
}

pub fn cosine_pdf(n: &Vector3<f64>, l: &Vector3<f64>) -> f64 {
    n.dot(l).max(0.0) / PI
}

/// Half vector drawn with density `D(h) (n.h)`.
pub fn sample_ggx_half(n: &Vector3<f64>, alpha: f64, u1: f64, u2: f64) -> Vector3<f64> {
    let tan2 = alpha * alpha * u1 / (1.0 - u1);
    let cos_t = 1.0 / (1.0 + tan2).sqrt();
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = 2.0 * PI * u2;
    to_world(n, Vector3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t))
}

/// Reflect `v` about `h`.
pub fn reflect(v: &Vector3<f64>, h: &Vector3<f64>) -> Vector3<f64> {
    2.0 * v.dot(h) * h - v
}

/// Solid-angle density of `l` under GGX half-vector sampling from `v`.
pub fn ggx_pdf(n: &Vector3<f64>, v: &Vector3<f64>, l: &Vector3<f64>, alpha: f64) -> f64 {
    let h = v + l;
    let len = h.norm();
    if len < 1e-12 {
        return 0.0;
    }
    let h = h / len;
    let vh = v.dot(&h);
    if vh <= 0.0 {
        return 0.0;
    }
    let nh = n.dot(&h);
    ggx_d(nh, alpha) * nh / (4.0 * vh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn d_at_normal_incidence() {
        assert!((ggx_d(1.0, 1.0) - 1.0 / PI).abs() < 1e-15);
        let n = Vector3::z();
        // alpha = 1: D = 1/pi everywhere; f = D F G / 4 with G = 1 at normal incidence.
        assert!((ggx_brdf(&n, &n, &n, 1.0, 1.0) - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn below_horizon_is_zero() {
        let n = Vector3::z();
        let v = Vector3::new(0.3, 0.0, 0.9).normalize();
        let l = Vector3::new(0.3, 0.0, -0.1).normalize();
        assert_eq!(ggx_brdf(&n, &v, &l, 0.3, 1.0), 0.0);
        assert_eq!(ggx_brdf(&n, &l, &v, 0.3, 1.0), 0.0);
    }

    /// Mixture of a uniform hemisphere and a cos^k lobe around the normal;
    /// unrelated to GGX half-vector sampling.
    fn ndf_integral(alpha: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2.0 / (alpha * alpha);
        let mut sum = 0.0;
        for _ in 0..samples {
            let cos_t = if rng.random::<bool>() {
                rng.random::<f64>()
            } else {
                rng.random::<f64>().powf(1.0 / (k + 1.0))
            };
            let pdf = 0.5 / (2.0 * PI) + 0.5 * (k + 1.0) / (2.0 * PI) * cos_t.powf(k);
            sum += ggx_d(cos_t, alpha) * cos_t / pdf;
        }
        sum / samples as f64
    }

    #[test]
    fn ndf_normalization_monte_carlo() {
        for alpha in [0.05, 0.34] {
            let est = ndf_integral(alpha, 100_000, 7);
            assert!((est - 1.0).abs() < 0.02, "alpha {alpha}: {est}");
        }
    }

    #[test]
    fn half_vector_sampling_matches_density() {
        // Empirical CDF of cos(theta_h) against quadrature of D cos.
        let alpha = 0.34;
        let n = Vector3::z();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = 200_000;
        let edges = [0.5, 0.7, 0.8, 0.9, 0.95, 0.99];
        let mut counts = [0usize; 6];
        for _ in 0..samples {
            let h = sample_ggx_half(&n, alpha, rng.random(), rng.random());
            assert!((h.norm() - 1.0).abs() < 1e-12);
            for (i, e) in edges.iter().enumerate() {
                if h.z <= *e {
                    counts[i] += 1;
                }
            }
        }
        for (i, &e) in edges.iter().enumerate() {
            let m = 20_000;
            let mut cdf = 0.0;
            for j in 0..m {
                let c = e * (j as f64 + 0.5) / m as f64;
                cdf += 2.0 * PI * ggx_d(c, alpha) * c * e / m as f64;
            }
            let got = counts[i] as f64 / samples as f64;
            assert!((got - cdf).abs() < 0.005, "edge {e}: {got} vs {cdf}");
        }
    }

    #[test]
    fn cosine_sampling_in_hemisphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Vector3::new(0.3, -0.5, 0.2).normalize();
        let mut mean_cos = 0.0;
        for _ in 0..50_000 {
            let l = sample_cosine(&n, rng.random(), rng.random());
            assert!((l.norm() - 1.0).abs() < 1e-12);
            assert!(n.dot(&l) >= 0.0);
            mean_cos += n.dot(&l);
        }
        // E[cos] under cos/pi density = 2/3
        assert!((mean_cos / 50_000.0 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn tangent_frame_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let (t, b) = tangent_frame(&n);
            assert!((t.norm() - 1.0).abs() < 1e-12 && (b.norm() - 1.0).abs() < 1e-12);
            assert!(t.dot(&b).abs() < 1e-12 && t.dot(&n).abs() < 1e-12 && b.dot(&n).abs() < 1e-12);
        }
    }

    fn unit() -> impl Strategy<Value = Vector3<f64>> {
        proptest::array::uniform3(-1.0f64..1.0)
            .prop_filter("nonzero", |a| Vector3::from(*a).norm() > 0.1)
            .prop_map(|a| Vector3::from(a).normalize())
    }

    proptest! {
        #[test]
        fn reciprocity(n in unit(), v in unit(), l in unit(), alpha in 0.01f64..1.0, f0 in 0.0f64..1.0) {
            prop_assert_eq!(ggx_brdf(&n, &v, &l, alpha, f0), ggx_brdf(&n, &l, &v, alpha, f0));
            prop_assert!(ggx_brdf(&n, &v, &l, alpha, f0) >= 0.0);
        }
    }
}

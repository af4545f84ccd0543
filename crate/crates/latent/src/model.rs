//! Proxy encoder, toy denoiser with low-rank adapters, and their joint
//! forward/backward pass. All parameters live in one name-keyed map.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::codec::{LATENT_CHANNELS, PATCH};
use crate::nn::{
    fourier_features_dt, group_norm, group_norm_backward, silu, silu_backward, time_planes, ConvShape, GroupNormCache,
    TIME_CHANNELS,
};
use crate::tensor::{ConditionFeatures, Fmap, LatentTensor};
use crate::{LatentError, Result};

pub type ParamMap = BTreeMap<String, Vec<f64>>;

pub const PROXY_CHANNELS: usize = 9;
pub const ENCODER_WIDTHS: [usize; 5] = [9, 16, 32, 32, 16];
pub const NORM_GROUPS: usize = 4;
pub const HIDDEN: usize = 32;
pub const LORA_RANK: usize = 2;
pub const ALPHA: &str = "adapter.alpha";

pub fn encoder_shapes() -> [ConvShape; 4] {
    let w = ENCODER_WIDTHS;
    [0, 1, 2, 3].map(|i| ConvShape::new(w[i], w[i + 1], 3, 2))
}

pub fn head_shape() -> ConvShape {
    ConvShape::new(ENCODER_WIDTHS[4], LATENT_CHANNELS, 1, 1)
}

pub fn denoiser_shapes() -> [ConvShape; 3] {
    [
        ConvShape::new(LATENT_CHANNELS + TIME_CHANNELS, HIDDEN, 3, 1),
        ConvShape::new(HIDDEN, HIDDEN, 3, 1),
        ConvShape::new(HIDDEN, LATENT_CHANNELS, 3, 1),
    ]
}

/// Which family a parameter belongs to, from its name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Alpha,
    Lora,
    Base,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name == ALPHA {
        ParamGroup::Alpha
    } else if name.starts_with("encoder.") {
        ParamGroup::Encoder
    } else if name.starts_with("lora.") {
        ParamGroup::Lora
    } else {
        ParamGroup::Base
    }
}

/// Set of parameter groups that receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Trainable {
    pub encoder: bool,
    pub alpha: bool,
    pub lora: bool,
    pub base: bool,
}

impl Trainable {
    pub fn contains(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Encoder => self.encoder,
            ParamGroup::Alpha => self.alpha,
            ParamGroup::Lora => self.lora,
            ParamGroup::Base => self.base,
        }
    }

    pub fn all() -> Self {
        Self {
            encoder: true,
            alpha: true,
            lora: true,
            base: true,
        }
    }
}

/// Nonlinearity of the denoiser; `Identity` gives a linear probe model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, x: &Fmap) -> Fmap {
        match self {
            Activation::Silu => silu(x),
            Activation::Identity => x.clone(),
        }
    }

    fn backward(self, x: &Fmap, dy: &Fmap) -> Fmap {
        match self {
            Activation::Silu => silu_backward(x, dy),
            Activation::Identity => dy.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub params: ParamMap,
    pub activation: Activation,
}

struct EncoderCache {
    inputs: Vec<Fmap>,
    norm: Vec<GroupNormCache>,
    normed: Vec<Fmap>,
    head_in: Fmap,
}

struct DenoiseCache {
    /// Input to each layer.
    inputs: Vec<Fmap>,
    /// Pre-activation output of each layer.
    pre: Vec<Fmap>,
    weights: Vec<Vec<f64>>,
}

/// One frame of a training batch.
#[derive(Debug, Clone)]
pub struct TrainItem<'a> {
    pub proxy: Option<&'a Fmap>,
    pub z_t: Fmap,
    pub t: f64,
    pub target: Fmap,
}

/// Gradients of a batch loss. `params` only holds trainable entries.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub params: ParamMap,
    /// Loss gradient with respect to each item's injected latent `z'`.
    pub d_injected: Vec<Fmap>,
    /// Loss gradient with respect to each item's `t`.
    pub d_t: Vec<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn add_into(map: &mut ParamMap, name: String, g: Vec<f64>) {
    match map.get_mut(&name) {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        None => {
            map.insert(name, g);
        }
    }
}

impl ToyModel {
    /// Freshly initialized model: alpha = 0 and every LoRA `B` = 0.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamMap::new();
        for (i, s) in encoder_shapes().iter().enumerate() {
            p.insert(
                format!("encoder.{i}.weight"),
                normal_vec(&mut rng, s.weight_len(), (2.0 / s.fan_in() as f64).sqrt()),
            );
            p.insert(format!("encoder.{i}.bias"), vec![0.0; s.cout]);
            p.insert(format!("encoder.{i}.gamma"), vec![1.0; s.cout]);
            p.insert(format!("encoder.{i}.beta"), vec![0.0; s.cout]);
        }
        let h = head_shape();
        p.insert(
            "encoder.head.weight".into(),
            normal_vec(&mut rng, h.weight_len(), (1.0 / h.fan_in() as f64).sqrt()),
        );
        p.insert("encoder.head.bias".into(), vec![0.0; h.cout]);
        p.insert(ALPHA.into(), vec![0.0]);
        for (l, s) in denoiser_shapes().iter().enumerate() {
            let gain = if l == 2 { 1.0 } else { 2.0 };
            p.insert(
                format!("base.{l}.weight"),
                normal_vec(&mut rng, s.weight_len(), (gain / s.fan_in() as f64).sqrt()),
            );
            p.insert(format!("base.{l}.bias"), vec![0.0; s.cout]);
            p.insert(
                format!("lora.{l}.a"),
                normal_vec(&mut rng, LORA_RANK * s.fan_in(), (1.0 / s.fan_in() as f64).sqrt()),
            );
            p.insert(format!("lora.{l}.b"), vec![0.0; s.cout * LORA_RANK]);
        }
        Self {
            params: p,
            activation: Activation::Silu,
        }
    }

    pub fn param(&self, name: &str) -> &[f64] {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn alpha(&self) -> f64 {
        self.param(ALPHA)[0]
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.params.insert(ALPHA.into(), vec![alpha]);
    }

    /// SHA-256 over the frozen backbone weights.
    pub fn backbone_hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, v) in self.params.iter().filter(|(n, _)| param_group(n) == ParamGroup::Base) {
            h.update(name.as_bytes());
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn encode_frame_cached(&self, proxy: &Fmap) -> (Fmap, EncoderCache) {
        let mut x = proxy.clone();
        let mut cache = EncoderCache {
            inputs: Vec::new(),
            norm: Vec::new(),
            normed: Vec::new(),
            head_in: Fmap::zeros(0, 0, 0),
        };
        for (i, s) in encoder_shapes().iter().enumerate() {
            let c = s.forward(
                self.param(&format!("encoder.{i}.weight")),
                self.param(&format!("encoder.{i}.bias")),
                &x,
            );
            let (g, gc) = group_norm(
                &c,
                NORM_GROUPS,
                self.param(&format!("encoder.{i}.gamma")),
                self.param(&format!("encoder.{i}.beta")),
            );
            cache.inputs.push(std::mem::replace(&mut x, silu(&g)));
            cache.norm.push(gc);
            cache.normed.push(g);
        }
        let out = head_shape().forward(self.param("encoder.head.weight"), self.param("encoder.head.bias"), &x);
        cache.head_in = x;
        (out, cache)
    }

    fn encoder_backward(&self, cache: &EncoderCache, dz: &Fmap, grads: &mut ParamMap) {
        let (mut dx, dw, db) = head_shape().backward(self.param("encoder.head.weight"), &cache.head_in, dz);
        add_into(grads, "encoder.head.weight".into(), dw);
        add_into(grads, "encoder.head.bias".into(), db);
        for (i, s) in encoder_shapes().iter().enumerate().rev() {
            let dg = silu_backward(&cache.normed[i], &dx);
            let (dc, dgamma, dbeta) =
                group_norm_backward(&cache.norm[i], self.param(&format!("encoder.{i}.gamma")), &dg);
            let (dprev, dw, db) = s.backward(self.param(&format!("encoder.{i}.weight")), &cache.inputs[i], &dc);
            add_into(grads, format!("encoder.{i}.weight"), dw);
            add_into(grads, format!("encoder.{i}.bias"), db);
            add_into(grads, format!("encoder.{i}.gamma"), dgamma);
            add_into(grads, format!("encoder.{i}.beta"), dbeta);
            dx = dprev;
        }
    }

    /// Encode one `9 x H x W` proxy frame to `4 x H/16 x W/16`.
    pub fn encode_frame(&self, proxy: &Fmap) -> Result<Fmap> {
        Self::check_proxy(proxy)?;
        Ok(self.encode_frame_cached(proxy).0)
    }

    fn check_proxy(proxy: &Fmap) -> Result<()> {
        if proxy.c != PROXY_CHANNELS || proxy.h == 0 || proxy.w == 0 || proxy.h % PATCH != 0 || proxy.w % PATCH != 0 {
            return Err(LatentError::Dimension(format!(
                "proxy frame {}x{}x{} must have 9 channels and sides divisible by {PATCH}",
                proxy.c, proxy.h, proxy.w
            )));
        }
        Ok(())
    }

    /// Apply the proxy encoder to every frame.
    pub fn encode_proxy(&self, frames: &[Fmap]) -> Result<ConditionFeatures> {
        LatentTensor::new(frames.iter().map(|f| self.encode_frame(f)).collect::<Result<_>>()?)
    }

    /// Backbone weight with its low-rank delta `W + B A`.
    fn effective_weight(&self, l: usize, s: &ConvShape) -> Vec<f64> {
        let (w, a, b) = (
            self.param(&format!("base.{l}.weight")),
            self.param(&format!("lora.{l}.a")),
            self.param(&format!("lora.{l}.b")),
        );
        let fan = s.fan_in();
        let mut out = w.to_vec();
        for co in 0..s.cout {
            for r in 0..LORA_RANK {
                let bv = b[co * LORA_RANK + r];
                if bv == 0.0 {
                    continue;
                }
                for j in 0..fan {
                    out[co * fan + j] += bv * a[r * fan + j];
                }
            }
        }
        out
    }

    fn denoise_cached(&self, injected: &Fmap, t: f64) -> (Fmap, DenoiseCache) {
        let mut x = injected.concat(&time_planes(t, injected.h, injected.w));
        let mut cache = DenoiseCache {
            inputs: Vec::new(),
            pre: Vec::new(),
            weights: Vec::new(),
        };
        let shapes = denoiser_shapes();
        for (l, s) in shapes.iter().enumerate() {
            let w = self.effective_weight(l, s);
            let y = s.forward(&w, self.param(&format!("base.{l}.bias")), &x);
            let next = if l + 1 < shapes.len() {
                self.activation.apply(&y)
            } else {
                y.clone()
            };
            cache.inputs.push(std::mem::replace(&mut x, next));
            cache.pre.push(y);
            cache.weights.push(w);
        }
        (x, cache)
    }

    /// Returns the gradient with respect to the injected latent and `t`.
    fn denoise_backward(
        &self,
        cache: &DenoiseCache,
        t: f64,
        dout: &Fmap,
        trainable: &Trainable,
        grads: &mut ParamMap,
    ) -> (Fmap, f64) {
        let shapes = denoiser_shapes();
        let mut dy = dout.clone();
        let mut dx = Fmap::zeros(0, 0, 0);
        for l in (0..shapes.len()).rev() {
            let s = &shapes[l];
            let (d_in, dw, db) = s.backward(&cache.weights[l], &cache.inputs[l], &dy);
            if trainable.base {
                add_into(grads, format!("base.{l}.weight"), dw.clone());
                add_into(grads, format!("base.{l}.bias"), db);
            }
            if trainable.lora {
                let fan = s.fan_in();
                let (a, b) = (self.param(&format!("lora.{l}.a")), self.param(&format!("lora.{l}.b")));
                let mut da = vec![0.0; LORA_RANK * fan];
                let mut dbm = vec![0.0; s.cout * LORA_RANK];
                for co in 0..s.cout {
                    for r in 0..LORA_RANK {
                        let bv = b[co * LORA_RANK + r];
                        let mut acc = 0.0;
                        for j in 0..fan {
                            let g = dw[co * fan + j];
                            da[r * fan + j] += bv * g;
                            acc += g * a[r * fan + j];
                        }
                        dbm[co * LORA_RANK + r] = acc;
                    }
                }
                add_into(grads, format!("lora.{l}.a"), da);
                add_into(grads, format!("lora.{l}.b"), dbm);
            }
            if l > 0 {
                dy = self.activation.backward(&cache.pre[l - 1], &d_in);
            } else {
                dx = d_in;
            }
        }
        let plane = dx.h * dx.w;
        let ft = fourier_features_dt(t);
        let d_t = (0..TIME_CHANNELS)
            .map(|c| ft[c] * dx.plane(LATENT_CHANNELS + c).iter().sum::<f64>())
            .sum();
        let d_inj = Fmap {
            c: LATENT_CHANNELS,
            h: dx.h,
            w: dx.w,
            data: dx.data[..LATENT_CHANNELS * plane].to_vec(),
        };
        (d_inj, d_t)
    }

    fn check_latent(z: &Fmap) -> Result<()> {
        if z.c != LATENT_CHANNELS || z.h == 0 || z.w == 0 {
            return Err(LatentError::ShapeMismatch(format!(
                "latent frame {}x{}x{}",
                z.c, z.h, z.w
            )));
        }
        Ok(())
    }

    /// Velocity prediction for one frame. With `cond`, the input is first
    /// replaced by `z_t + alpha * cond`.
    pub fn denoise_frame(&self, z_t: &Fmap, t: f64, cond: Option<&Fmap>) -> Result<Fmap> {
        Self::check_latent(z_t)?;
        let injected = match cond {
            Some(c) => inject_frame(z_t, c, self.alpha())?,
            None => z_t.clone(),
        };
        Ok(self.denoise_cached(&injected, t).0)
    }

    /// Velocity prediction for a latent video, optionally conditioned.
    pub fn forward_denoise(&self, z_t: &LatentTensor, t: f64, z_y: Option<&ConditionFeatures>) -> Result<LatentTensor> {
        if let Some(c) = z_y {
            if c.shape() != z_t.shape() {
                return Err(LatentError::ShapeMismatch(format!(
                    "{:?} vs {:?}",
                    c.shape(),
                    z_t.shape()
                )));
            }
        }
        let frames = z_t
            .frames
            .iter()
            .enumerate()
            .map(|(k, f)| self.denoise_frame(f, t, z_y.map(|c| &c.frames[k])))
            .collect::<Result<_>>()?;
        LatentTensor::new(frames)
    }

    /// Mean squared velocity error over all items and its gradients for the
    /// trainable set. Items are accumulated in order.
    pub fn loss_and_grads(&self, items: &[TrainItem], trainable: &Trainable) -> Result<(f64, Gradients)> {
        let total: usize = items.iter().map(|it| it.target.data.len()).sum();
        if total == 0 {
            return Err(LatentError::EmptyDataset);
        }
        let alpha = self.alpha();
        let mut grads = Gradients::default();
        let mut loss = 0.0;
        for it in items {
            Self::check_latent(&it.z_t)?;
            if it.target.data.len() != it.z_t.data.len() {
                return Err(LatentError::ShapeMismatch("target vs z_t".into()));
            }
            let enc = match it.proxy {
                Some(p) => {
                    Self::check_proxy(p)?;
                    Some(self.encode_frame_cached(p))
                }
                None => None,
            };
            let injected = match &enc {
                Some((zy, _)) => inject_frame(&it.z_t, zy, alpha)?,
                None => it.z_t.clone(),
            };
            let (out, cache) = self.denoise_cached(&injected, it.t);
            let mut dout = out.clone();
            for (d, (o, v)) in dout.data.iter_mut().zip(out.data.iter().zip(&it.target.data)) {
                let r = o - v;
                loss += r * r;
                *d = 2.0 * r / total as f64;
            }
            let (d_inj, d_t) = self.denoise_backward(&cache, it.t, &dout, trainable, &mut grads.params);
            if let Some((zy, ecache)) = &enc {
                if trainable.alpha {
                    let g: f64 = d_inj.data.iter().zip(&zy.data).map(|(a, b)| a * b).sum();
                    add_into(&mut grads.params, ALPHA.into(), vec![g]);
                }
                if trainable.encoder {
                    let dzy = Fmap {
                        data: d_inj.data.iter().map(|g| alpha * g).collect(),
                        ..d_inj
                    };
                    self.encoder_backward(ecache, &dzy, &mut grads.params);
                }
            }
            grads.d_injected.push(d_inj);
            grads.d_t.push(d_t);
        }
        // Frozen groups never appear, even if a code path above touched them.
        grads.params.retain(|name, _| trainable.contains(param_group(name)));
        Ok((loss / total as f64, grads))
    }

    /// Loss only, without gradients.
    pub fn loss(&self, items: &[TrainItem]) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for it in items {
            let cond = it.proxy.map(|p| self.encode_frame(p)).transpose()?;
            let out = self.denoise_frame(&it.z_t, it.t, cond.as_ref())?;
            for (o, v) in out.data.iter().zip(&it.target.data) {
                sum += (o - v) * (o - v);
            }
            n += out.data.len();
        }
        if n == 0 {
            return Err(LatentError::EmptyDataset);
        }
        Ok(sum / n as f64)
    }
}

/// `z + alpha * z_y` for one frame.
pub fn inject_frame(z: &Fmap, z_y: &Fmap, alpha: f64) -> Result<Fmap> {
    if (z.c, z.h, z.w) != (z_y.c, z_y.h, z_y.w) {
        return Err(LatentError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            z.c, z.h, z.w, z_y.c, z_y.h, z_y.w
        )));
    }
    Ok(Fmap {
        data: z.data.iter().zip(&z_y.data).map(|(a, b)| a + alpha * b).collect(),
        ..*z
    })
}

/// Residual injection `z' = z + alpha * z_y` over a latent video.
pub fn inject_residual(z: &LatentTensor, z_y: &ConditionFeatures, alpha: f64) -> Result<LatentTensor> {
    z.zip_map(z_y, |a, b| a + alpha * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_fmap(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Fmap {
        Fmap::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn bits(f: &Fmap) -> Vec<u64> {
        f.data.iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn encoder_output_shapes() {
        let m = ToyModel::new(0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames: Vec<Fmap> = (0..2).map(|_| rand_fmap(9, 32, 32, &mut rng)).collect();
        assert_eq!(m.encode_proxy(&frames).unwrap().shape(), [2, 4, 2, 2]);
        let big = rand_fmap(9, 64, 64, &mut rng);
        let z = m.encode_frame(&big).unwrap();
        assert_eq!((z.c, z.h, z.w), (4, 4, 4));
        assert!(m.encode_frame(&rand_fmap(9, 24, 32, &mut rng)).is_err());
        assert!(m.encode_frame(&rand_fmap(8, 32, 32, &mut rng)).is_err());
    }

    #[test]
    fn zero_proxy_encodes_to_zero() {
        let m = ToyModel::new(3);
        let z = m.encode_frame(&Fmap::zeros(9, 32, 32)).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn initial_adapters_are_inert() {
        let m = ToyModel::new(5);
        assert_eq!(m.alpha(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = rand_fmap(4, 2, 2, &mut rng);
        let zy = rand_fmap(4, 2, 2, &mut rng)
            .data
            .iter()
            .map(|v| v * 1e3)
            .collect::<Vec<_>>();
        let zy = Fmap::from_vec(4, 2, 2, zy).unwrap();
        let plain = m.denoise_frame(&z, 0.3, None).unwrap();
        let cond = m.denoise_frame(&z, 0.3, Some(&zy)).unwrap();
        assert_eq!(bits(&plain), bits(&cond));
        // A with B = 0 contributes nothing.
        let mut m2 = m.clone();
        m2.params.get_mut("lora.1.a").unwrap()[7] += 3.0;
        assert_eq!(bits(&m2.denoise_frame(&z, 0.3, None).unwrap()), bits(&plain));
        assert_eq!((plain.c, plain.h, plain.w), (4, 2, 2));
    }

    #[test]
    fn injection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = LatentTensor::new(vec![rand_fmap(4, 2, 2, &mut rng), rand_fmap(4, 2, 2, &mut rng)]).unwrap();
        let zy = LatentTensor::new(vec![rand_fmap(4, 2, 2, &mut rng), rand_fmap(4, 2, 2, &mut rng)]).unwrap();
        assert_eq!(inject_residual(&z, &zy, 0.0).unwrap(), z);
        assert_eq!(inject_residual(&z, &zy.map(|_| 0.0), 3.7).unwrap(), z);
        let half = inject_residual(&z, &zy, 0.5).unwrap();
        for ((h, a), b) in half.values().zip(z.values()).zip(zy.values()) {
            assert_eq!(h, a + 0.5 * b);
        }
        let short = LatentTensor::new(vec![rand_fmap(4, 2, 2, &mut rng)]).unwrap();
        assert!(matches!(
            inject_residual(&z, &short, 1.0),
            Err(LatentError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn linear_probe_is_affine_in_alpha() {
        let mut m = ToyModel::new(7);
        m.activation = Activation::Identity;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = rand_fmap(4, 2, 2, &mut rng);
        let zy = rand_fmap(4, 2, 2, &mut rng);
        let at = |a: f64| {
            let mut m = m.clone();
            m.set_alpha(a);
            m.denoise_frame(&z, 0.4, Some(&zy)).unwrap()
        };
        let (f0, f1, f3) = (at(0.0), at(1.0), at(3.0));
        for i in 0..f0.data.len() {
            let slope = f1.data[i] - f0.data[i];
            assert!((f3.data[i] - (f0.data[i] + 3.0 * slope)).abs() < 1e-10);
        }
    }

    #[test]
    fn frozen_groups_have_no_gradients() {
        let m = ToyModel::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let proxy = rand_fmap(9, 32, 32, &mut rng);
        let item = TrainItem {
            proxy: Some(&proxy),
            z_t: rand_fmap(4, 2, 2, &mut rng),
            t: 0.5,
            target: rand_fmap(4, 2, 2, &mut rng),
        };
        let tr = Trainable {
            encoder: true,
            alpha: true,
            ..Default::default()
        };
        let (_, g) = m.loss_and_grads(&[item], &tr).unwrap();
        assert!(g
            .params
            .keys()
            .all(|n| matches!(param_group(n), ParamGroup::Encoder | ParamGroup::Alpha)));
        assert!(g.params.contains_key(ALPHA));
        assert!(g.params.contains_key("encoder.0.weight"));
    }
}

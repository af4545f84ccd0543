use crate::{LatentError, Result};

/// A `C x H x W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Fmap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Fmap {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(LatentError::ShapeMismatch(format!(
                "{} values for {c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    /// Stack `self` on top of `other` along channels.
    pub fn concat(&self, other: &Fmap) -> Fmap {
        assert_eq!((self.h, self.w), (other.h, other.w));
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Fmap {
            c: self.c + other.c,
            h: self.h,
            w: self.w,
            data,
        }
    }
}

/// `F x C x H' x W'` latent video; also used for condition features.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    pub frames: Vec<Fmap>,
}

/// Proxy-encoder output; same layout as the latent it conditions.
pub type ConditionFeatures = LatentTensor;

impl LatentTensor {
    pub fn new(frames: Vec<Fmap>) -> Result<Self> {
        if let Some(f) = frames.first() {
            if frames.iter().any(|g| (g.c, g.h, g.w) != (f.c, f.h, f.w)) {
                return Err(LatentError::ShapeMismatch("frames differ in shape".into()));
            }
        }
        Ok(Self { frames })
    }

    pub fn shape(&self) -> [usize; 4] {
        match self.frames.first() {
            Some(f) => [self.frames.len(), f.c, f.h, f.w],
            None => [0, 0, 0, 0],
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().flat_map(|f| f.data.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(|f| f.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(LatentError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            frames: self
                .frames
                .iter()
                .zip(&other.frames)
                .map(|(a, b)| Fmap {
                    data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
                    ..*a
                })
                .collect(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|a| Fmap {
                    data: a.data.iter().map(|x| f(*x)).collect(),
                    ..*a
                })
                .collect(),
        }
    }
}

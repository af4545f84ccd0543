//! The per-frame 9-channel proxy stack, its LPXY frame files and PNG
//! previews.

use std::path::Path;

use super::{PassKind, RenderError, Result};

pub const PROXY_CHANNELS: usize = 9;

/// `F x 9 x H x W` radiance, channels ordered DIFF.rgb, GGX1.rgb, GGX2.rgb.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyStack {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ProxyStack {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), frames * PROXY_CHANNELS * height * width);
        Self {
            frames,
            height,
            width,
            data,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, PROXY_CHANNELS, self.height, self.width]
    }

    fn frame_len(&self) -> usize {
        PROXY_CHANNELS * self.height * self.width
    }

    /// The `9 x H x W` planes of frame `k`.
    pub fn frame(&self, k: usize) -> &[f32] {
        &self.data[k * self.frame_len()..(k + 1) * self.frame_len()]
    }

    /// One `H x W` plane of frame `k`.
    pub fn plane(&self, k: usize, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.frame(k)[channel * n..(channel + 1) * n]
    }

    pub fn is_finite_non_negative(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    /// Frames in reverse order.
    pub fn reversed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for k in (0..self.frames).rev() {
            data.extend_from_slice(self.frame(k));
        }
        Self { data, ..*self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpxyFrame {
    pub index: u32,
    pub height: usize,
    pub width: usize,
    pub planes: Vec<f32>,
}

pub fn write_lpxy(index: u32, height: usize, width: usize, planes: &[f32]) -> Vec<u8> {
    assert_eq!(planes.len(), PROXY_CHANNELS * height * width);
    let mut out = Vec::with_capacity(24 + 4 * planes.len());
    out.extend_from_slice(b"LPXY");
    for v in [1, index, height as u32, width as u32, PROXY_CHANNELS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in planes {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn read_lpxy(bytes: &[u8]) -> Result<LpxyFrame> {
    if !bytes.starts_with(b"LPXY") {
        return Err(RenderError::BadMagic);
    }
    let word = |i: usize| -> Result<u32> {
        let b = bytes.get(4 + 4 * i..8 + 4 * i).ok_or(RenderError::TruncatedFile)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    };
    let version = word(0)?;
    if version != 1 {
        return Err(RenderError::UnsupportedVersion(version));
    }
    let index = word(1)?;
    let (h, w, c) = (word(2)? as usize, word(3)? as usize, word(4)?);
    if c as usize != PROXY_CHANNELS {
        return Err(RenderError::ChannelCount(c));
    }
    let n = PROXY_CHANNELS * h * w;
    let body = &bytes[24..];
    if body.len() < 4 * n {
        return Err(RenderError::TruncatedFile);
    }
    let planes = body[..4 * n]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(LpxyFrame {
        index,
        height: h,
        width: w,
        planes,
    })
}

fn srgb_encode(x: f64) -> f64 {
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

/// 8-bit RGB preview of one pass: Reinhard `x / (1 + x)` then sRGB.
pub fn preview_rgb8(stack: &ProxyStack, frame: usize, pass: PassKind) -> Vec<u8> {
    let p = PassKind::ALL.iter().position(|&k| k == pass).unwrap();
    let n = stack.height * stack.width;
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            let x = stack.plane(frame, 3 * p + c)[i] as f64;
            let t = x / (1.0 + x);
            out.push((srgb_encode(t) * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Write `frame_%05d_<pass>.png` for every pass of `frame`; returns the
/// file names written.
pub fn save_preview_pngs(stack: &ProxyStack, frame: usize, dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for pass in PassKind::ALL {
        let name = format!("frame_{frame:05}_{}.png", pass.as_str());
        let img = image::RgbImage::from_raw(
            stack.width as u32,
            stack.height as u32,
            preview_rgb8(stack, frame, pass),
        )
        .expect("buffer size matches dimensions");
        img.save_with_format(dir.join(&name), image::ImageFormat::Png)?;
        names.push(name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack() -> ProxyStack {
        let (f, h, w) = (2, 3, 4);
        let data = (0..f * 9 * h * w)
            .map(|i| (i as f32 * 0.37).sin().abs() * 3.0)
            .collect();
        ProxyStack::new(f, h, w, data)
    }

    #[test]
    fn lpxy_round_trip_bit_exact() {
        let s = stack();
        let bytes = write_lpxy(1, 3, 4, s.frame(1));
        let back = read_lpxy(&bytes).unwrap();
        assert_eq!(back.index, 1);
        assert_eq!((back.height, back.width), (3, 4));
        let a: Vec<u32> = back.planes.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = s.frame(1).iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn lpxy_header_layout() {
        let s = stack();
        let bytes = write_lpxy(7, 3, 4, s.frame(0));
        assert_eq!(&bytes[..4], b"LPXY");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 9);
        assert_eq!(bytes.len(), 24 + 4 * 9 * 12);
    }

    #[test]
    fn lpxy_errors() {
        let s = stack();
        let good = write_lpxy(0, 3, 4, s.frame(0));
        assert!(matches!(read_lpxy(b"LPXZ"), Err(RenderError::BadMagic)));
        assert!(matches!(
            read_lpxy(&good[..good.len() - 2]),
            Err(RenderError::TruncatedFile)
        ));
        let mut bad = good.clone();
        bad[20] = 3;
        assert!(matches!(read_lpxy(&bad), Err(RenderError::ChannelCount(3))));
        let mut bad = good;
        bad[4] = 9;
        assert!(matches!(read_lpxy(&bad), Err(RenderError::UnsupportedVersion(9))));
    }

    #[test]
    fn preview_tonemap() {
        let mut s = ProxyStack::new(1, 1, 1, vec![0.0; 9]);
        s.data[0] = 1.0; // DIFF.r -> 0.5 after Reinhard
        let px = preview_rgb8(&s, 0, PassKind::Diffuse);
        assert_eq!(px[0], (srgb_encode(0.5) * 255.0).round() as u8);
        assert_eq!(px[1], 0);
    }

    #[test]
    fn previews_written() {
        let dir = tempfile::tempdir().unwrap();
        let names = save_preview_pngs(&stack(), 1, dir.path()).unwrap();
        assert_eq!(
            names,
            vec!["frame_00001_diff.png", "frame_00001_ggx1.png", "frame_00001_ggx2.png"]
        );
        let img = image::open(dir.path().join(&names[2])).unwrap();
        assert_eq!((img.width(), img.height()), (4, 3));
    }

    #[test]
    fn reverse_frames() {
        let s = stack();
        let r = s.reversed();
        assert_eq!(r.frame(0), s.frame(1));
        assert_eq!(r.reversed(), s);
    }
}

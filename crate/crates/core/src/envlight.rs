//! Equirectangular HDR environment maps: direction mapping, yaw rotation,
//! Radiance RGBE and raw LENV files, tag-based selection and a procedural
//! sky.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("bad magic: not an RGBE or LENV file")]
    BadMagic,
    #[error("file truncated")]
    TruncatedFile,
    #[error("dimension mismatch: width {width} must be twice height {height}")]
    DimensionMismatch { width: usize, height: usize },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("radiance must be finite and non-negative")]
    InvalidRadiance,
    #[error("bad parameter '{name}': {reason}")]
    BadParameter { name: &'static str, reason: String },
    #[error("env index: {0}")]
    Index(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Linear RGB radiance on a `2H x H` longitude/colatitude grid, rows from the
/// top (+y), channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvMap {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl EnvMap {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width != 2 * height {
            return Err(EnvError::DimensionMismatch { width, height });
        }
        if pixels.len() != width * height * 3 {
            return Err(EnvError::TruncatedFile);
        }
        if pixels.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(EnvError::InvalidRadiance);
        }
        Ok(Self { width, height, pixels })
    }

    pub fn constant(height: usize, rgb: [f32; 3]) -> Result<Self> {
        let width = 2 * height;
        Self::new(
            width,
            height,
            rgb.iter().copied().cycle().take(width * height * 3).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn texel(&self, u: usize, v: usize) -> [f32; 3] {
        let i = 3 * (v * self.width + u);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Radiance of the texel containing direction `d`.
    pub fn lookup(&self, d: &Vector3<f64>) -> [f32; 3] {
        let (u, v) = direction_to_texel(d, self.width, self.height);
        self.texel(u, v)
    }

    /// Every channel multiplied by `s >= 0`.
    pub fn scaled(&self, s: f32) -> Result<Self> {
        Self::new(self.width, self.height, self.pixels.iter().map(|p| p * s).collect())
    }

    /// Sum of all channel values, accumulated in f64.
    pub fn total_energy(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum()
    }
}

/// Unit direction through the center of texel `(u, v)`.
pub fn envmap_direction(u: usize, v: usize, width: usize, height: usize) -> Vector3<f64> {
    let phi = 2.0 * PI * (u as f64 + 0.5) / width as f64 - PI;
    let theta = PI * (v as f64 + 0.5) / height as f64;
    spherical_direction(theta, phi)
}

/// Direction for colatitude `theta` (from +y) and longitude `phi`.
pub fn spherical_direction(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.sin(), theta.cos(), -theta.sin() * phi.cos())
}

/// Continuous texel coordinates of a unit direction: `u` in `[0, W)`,
/// `v` in `[0, H]`.
pub fn direction_to_uv(d: &Vector3<f64>, width: usize, height: usize) -> (f64, f64) {
    let theta = d.y.clamp(-1.0, 1.0).acos();
    let phi = d.x.atan2(-d.z);
    let u = (phi + PI) / (2.0 * PI) * width as f64;
    let v = theta / PI * height as f64;
    (u.rem_euclid(width as f64), v)
}

/// The texel containing direction `d`.
pub fn direction_to_texel(d: &Vector3<f64>, width: usize, height: usize) -> (usize, usize) {
    let (u, v) = direction_to_uv(d, width, height);
    ((u as usize).min(width - 1), (v as usize).min(height - 1))
}

/// Rotation of world space equivalent to `rotate_envmap(_, yaw_degrees)`:
/// the rotated map seen along `d` shows the original map along `R^T d`.
pub fn yaw_rotation(yaw_degrees: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), -yaw_degrees.to_radians())
}

/// Shift the map horizontally by `yaw * W / 360` texels toward increasing
/// longitude. Shifts within 1e-9 of a whole texel are exact permutations;
/// others resample linearly.
pub fn rotate_envmap(map: &EnvMap, yaw_degrees: f64) -> EnvMap {
    let w = map.width;
    let shift = (yaw_degrees * w as f64 / 360.0).rem_euclid(w as f64);
    let nearest = shift.round();
    let mut out = vec![0.0f32; map.pixels.len()];
    if (shift - nearest).abs() <= 1e-9 {
        let s = nearest as usize % w;
        for v in 0..map.height {
            for u in 0..w {
                let src = 3 * (v * w + u);
                let dst = 3 * (v * w + (u + s) % w);
                out[dst..dst + 3].copy_from_slice(&map.pixels[src..src + 3]);
            }
        }
    } else {
        let base = shift.floor();
        let frac = shift - base;
        let base = base as usize;
        // out[u] = (1 - f) in[u - base] + f in[u - base - 1]
        for v in 0..map.height {
            for u in 0..w {
                let a = 3 * (v * w + (u + w - base) % w);
                let b = 3 * (v * w + (u + 2 * w - base - 1) % w);
                for c in 0..3 {
                    let val = (1.0 - frac) * map.pixels[a + c] as f64 + frac * map.pixels[b + c] as f64;
                    out[3 * (v * w + u) + c] = val as f32;
                }
            }
        }
    }
    EnvMap {
        width: w,
        height: map.height,
        pixels: out,
    }
}

/// Per-frame yaw: `total * k / (F - 1)`, or `[0]` for a single frame.
pub fn rotation_schedule(total_degrees: f64, frames: usize) -> Vec<f64> {
    if frames <= 1 {
        return vec![0.0; frames];
    }
    (0..frames)
        .map(|k| total_degrees * k as f64 / (frames - 1) as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// RGBE

/// Decode one RGBE quadruple.
pub fn rgbe_to_rgb(q: [u8; 4]) -> [f32; 3] {
    if q[3] == 0 {
        return [0.0; 3];
    }
    let scale = 2f64.powi(q[3] as i32 - 128) / 256.0;
    [
        (q[0] as f64 * scale) as f32,
        (q[1] as f64 * scale) as f32,
        (q[2] as f64 * scale) as f32,
    ]
}

/// `(mantissa, exponent)` with `x = mantissa * 2^exponent`, mantissa in
/// `[0.5, 1)`, for finite positive `x`.
fn frexp(x: f64) -> (f64, i32) {
    let mut e = x.log2().floor() as i32 + 1;
    let mut m = x / 2f64.powi(e);
    // log2 can land one off near powers of two.
    if m >= 1.0 {
        m /= 2.0;
        e += 1;
    } else if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    (m, e)
}

/// Encode one pixel with a shared exponent and round-to-nearest mantissas.
pub fn rgb_to_rgbe(rgb: [f32; 3]) -> [u8; 4] {
    let m = rgb.iter().fold(0.0f64, |a, &c| a.max(c as f64));
    if m < 1e-38 {
        return [0; 4];
    }
    let (_, mut e) = frexp(m);
    loop {
        if e + 128 > 255 {
            return [255, 255, 255, 255];
        }
        if e + 128 < 1 {
            return [0; 4];
        }
        let scale = 256.0 / 2f64.powi(e);
        let q = rgb.map(|c| (c as f64 * scale).round());
        if q.iter().all(|&x| x <= 255.0) {
            return [q[0] as u8, q[1] as u8, q[2] as u8, (e + 128) as u8];
        }
        e += 1;
    }
}

fn parse_rgbe_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    if !(bytes.starts_with(b"#?RADIANCE") || bytes.starts_with(b"#?RGBE")) {
        return Err(EnvError::BadMagic);
    }
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<String> {
        let rest = &bytes[*pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or(EnvError::TruncatedFile)?;
        *pos += end + 1;
        Ok(String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string())
    };
    loop {
        let line = next_line(&mut pos)?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(EnvError::Header(format!("unsupported format {fmt}")));
            }
        }
    }
    let res = next_line(&mut pos)?;
    let parts: Vec<&str> = res.split_whitespace().collect();
    match parts.as_slice() {
        ["-Y", h, "+X", w] => {
            let h = h.parse().map_err(|_| EnvError::Header(res.clone()))?;
            let w = w.parse().map_err(|_| EnvError::Header(res.clone()))?;
            Ok((w, h, pos))
        }
        _ => Err(EnvError::Header(format!("unsupported resolution line '{res}'"))),
    }
}

/// Decode a Radiance RGBE file (flat or run-length encoded scanlines).
pub fn read_rgbe(bytes: &[u8]) -> Result<EnvMap> {
    let (w, h, mut pos) = parse_rgbe_header(bytes)?;
    if h == 0 || w != 2 * h {
        return Err(EnvError::DimensionMismatch { width: w, height: h });
    }
    let mut pixels = Vec::with_capacity(w * h * 3);
    let mut scan = vec![[0u8; 4]; w];
    for _ in 0..h {
        let head = bytes.get(pos..pos + 4).ok_or(EnvError::TruncatedFile)?;
        let rle = (8..=0x7fff).contains(&w)
            && head[0] == 2
            && head[1] == 2
            && head[2] & 0x80 == 0
            && ((head[2] as usize) << 8 | head[3] as usize) == w;
        if rle {
            pos += 4;
            for c in 0..4 {
                let mut u = 0;
                while u < w {
                    let count = *bytes.get(pos).ok_or(EnvError::TruncatedFile)? as usize;
                    pos += 1;
                    if count > 128 {
                        let n = count - 128;
                        let val = *bytes.get(pos).ok_or(EnvError::TruncatedFile)?;
                        pos += 1;
                        if n > w - u {
                            return Err(EnvError::Header("run overflows scanline".into()));
                        }
                        for px in &mut scan[u..u + n] {
                            px[c] = val;
                        }
                        u += n;
                    } else {
                        if count == 0 || count > w - u {
                            return Err(EnvError::Header("bad literal run".into()));
                        }
                        let run = bytes.get(pos..pos + count).ok_or(EnvError::TruncatedFile)?;
                        for (px, &val) in scan[u..u + count].iter_mut().zip(run) {
                            px[c] = val;
                        }
                        pos += count;
                        u += count;
                    }
                }
            }
        } else {
            let flat = bytes.get(pos..pos + 4 * w).ok_or(EnvError::TruncatedFile)?;
            for (px, q) in scan.iter_mut().zip(flat.chunks_exact(4)) {
                px.copy_from_slice(q);
            }
            pos += 4 * w;
        }
        for q in &scan {
            pixels.extend_from_slice(&rgbe_to_rgb(*q));
        }
    }
    EnvMap::new(w, h, pixels)
}

fn rle_channel(values: &[u8], out: &mut Vec<u8>) {
    let n = values.len();
    let mut i = 0;
    while i < n {
        // Find the next run of at least 4 equal bytes.
        let mut run_start = i;
        let mut run_len = 0;
        while run_start < n {
            run_len = 1;
            while run_start + run_len < n && run_len < 127 && values[run_start + run_len] == values[run_start] {
                run_len += 1;
            }
            if run_len >= 4 {
                break;
            }
            run_start += run_len;
        }
        if run_start >= n {
            run_len = 0;
        }
        while i < run_start.min(n) {
            let k = (run_start.min(n) - i).min(128);
            out.push(k as u8);
            out.extend_from_slice(&values[i..i + k]);
            i += k;
        }
        if run_len >= 4 {
            out.push(128 + run_len as u8);
            out.push(values[run_start]);
            i = run_start + run_len;
        }
    }
}

/// Encode as a Radiance RGBE file. Scanlines are run-length encoded when
/// the width permits it, flat otherwise.
pub fn write_rgbe(map: &EnvMap) -> Vec<u8> {
    let (w, h) = (map.width, map.height);
    let mut out = format!("#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {h} +X {w}\n").into_bytes();
    let rle = (8..=0x7fff).contains(&w);
    let mut chans = vec![Vec::with_capacity(w); 4];
    for v in 0..h {
        let quads: Vec<[u8; 4]> = (0..w).map(|u| rgb_to_rgbe(map.texel(u, v))).collect();
        if rle {
            out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
            for (c, chan) in chans.iter_mut().enumerate() {
                chan.clear();
                chan.extend(quads.iter().map(|q| q[c]));
                rle_channel(chan, &mut out);
            }
        } else {
            for q in &quads {
                out.extend_from_slice(q);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// LENV

pub fn write_lenv(map: &EnvMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * map.pixels.len());
    out.extend_from_slice(b"LENV");
    for v in [1u32, map.width as u32, map.height as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &map.pixels {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn read_lenv(bytes: &[u8]) -> Result<EnvMap> {
    if !bytes.starts_with(b"LENV") {
        return Err(EnvError::BadMagic);
    }
    let word = |i: usize| -> Result<u32> {
        let b = bytes.get(4 + 4 * i..8 + 4 * i).ok_or(EnvError::TruncatedFile)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    };
    let version = word(0)?;
    if version != 1 {
        return Err(EnvError::UnsupportedVersion {
            format: "LENV",
            version,
        });
    }
    let (w, h) = (word(1)? as usize, word(2)? as usize);
    if h == 0 || w != 2 * h {
        return Err(EnvError::DimensionMismatch { width: w, height: h });
    }
    let body = &bytes[16..];
    let n = w * h * 3;
    if body.len() < 4 * n {
        return Err(EnvError::TruncatedFile);
    }
    let pixels = body[..4 * n]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    EnvMap::new(w, h, pixels)
}

/// Load either container, detected from the file's magic bytes.
pub fn load_envmap(path: &Path) -> Result<EnvMap> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"LENV") {
        read_lenv(&bytes)
    } else {
        read_rgbe(&bytes)
    }
}

/// Save as LENV when the extension is `.lenv`, RGBE otherwise.
pub fn save_envmap(map: &EnvMap, path: &Path) -> Result<()> {
    let lenv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("lenv"));
    let bytes = if lenv { write_lenv(map) } else { write_rgbe(map) };
    std::fs::write(path, bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Catalog and selection

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvIndexEntry {
    pub env_id: String,
    pub file: PathBuf,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexRecord {
    file: PathBuf,
    tags: Vec<String>,
}

/// Read `env_index.json` (`env_id -> {file, tags}`); file paths are resolved
/// relative to the index's directory.
pub fn load_env_index(path: &Path) -> Result<Vec<EnvIndexEntry>> {
    let text = std::fs::read_to_string(path)?;
    let records: BTreeMap<String, IndexRecord> = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(records
        .into_iter()
        .map(|(env_id, r)| EnvIndexEntry {
            env_id,
            file: base.join(r.file),
            tags: r.tags,
        })
        .collect())
}

pub fn save_env_index(entries: &[EnvIndexEntry], path: &Path) -> Result<()> {
    let mut records = BTreeMap::new();
    for e in entries {
        let prev = records.insert(
            e.env_id.clone(),
            IndexRecord {
                file: e.file.clone(),
                tags: e.tags.clone(),
            },
        );
        if prev.is_some() {
            return Err(EnvError::Index(format!("duplicate env_id '{}'", e.env_id)));
        }
    }
    std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvSelection {
    Env(String),
    ProceduralFallback,
}

/// Largest tag overlap wins, ties to the smallest `env_id`; no overlap at
/// all selects the procedural fallback.
pub fn select_envmap(lighting_tags: &[String], index: &[EnvIndexEntry]) -> EnvSelection {
    let wanted: BTreeSet<&str> = lighting_tags.iter().map(String::as_str).collect();
    let mut best: Option<(usize, &str)> = None;
    for e in index {
        let have: BTreeSet<&str> = e.tags.iter().map(String::as_str).collect();
        let score = have.intersection(&wanted).count();
        if score == 0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((s, id)) => score > s || (score == s && e.env_id.as_str() < id),
        };
        if better {
            best = Some((score, &e.env_id));
        }
    }
    match best {
        Some((_, id)) => EnvSelection::Env(id.to_string()),
        None => EnvSelection::ProceduralFallback,
    }
}

// ---------------------------------------------------------------------------
// Procedural sky

pub const SUN_SIGMA_DEG: f64 = 2.0;
pub const SUN_PEAK_RATIO: f64 = 500.0;
const COOL: [f64; 3] = [0.6, 0.7, 1.0];
const WARM: [f64; 3] = [1.0, 0.7, 0.4];

/// Unit direction toward a sun at `azimuth` (degrees from -z toward +x) and
/// `elevation` above the horizon.
pub fn sun_direction(azimuth_deg: f64, elevation_deg: f64) -> Vector3<f64> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    Vector3::new(el.cos() * az.sin(), el.sin(), -el.cos() * az.cos())
}

fn sky_gradient(y: f64) -> f64 {
    if y >= 0.0 {
        // brightest at the horizon, half as bright at the zenith
        1.0 - 0.5 * y
    } else {
        0.1 + 0.1 * (1.0 + y)
    }
}

/// Analytic sky: a vertical gradient tinted between a cool and a warm
/// chromaticity, plus a Gaussian sun whose peak is 500 times the
/// solid-angle-weighted mean sky radiance.
pub fn procedural_sky(sun_azimuth_deg: f64, sun_elevation_deg: f64, warmth: f64, height: usize) -> Result<EnvMap> {
    let bad = |name: &'static str, reason: &str| EnvError::BadParameter {
        name,
        reason: reason.to_string(),
    };
    if !sun_azimuth_deg.is_finite() {
        return Err(bad("sun_azimuth", "must be finite"));
    }
    if !(0.0..=90.0).contains(&sun_elevation_deg) {
        return Err(bad("sun_elevation", "must lie in [0, 90]"));
    }
    if !(0.0..=1.0).contains(&warmth) {
        return Err(bad("warmth", "must lie in [0, 1]"));
    }
    if height < 8 {
        return Err(bad("resolution", "height must be at least 8"));
    }
    let width = 2 * height;
    let tint: [f64; 3] = std::array::from_fn(|c| COOL[c] + (WARM[c] - COOL[c]) * warmth);
    let sun = sun_direction(sun_azimuth_deg, sun_elevation_deg);
    let sigma = SUN_SIGMA_DEG.to_radians();

    let mut weighted = 0.0;
    let mut weights = 0.0;
    for v in 0..height {
        let theta = PI * (v as f64 + 0.5) / height as f64;
        let g = sky_gradient(theta.cos());
        let mean_tint = tint.iter().sum::<f64>() / 3.0;
        weighted += theta.sin() * g * mean_tint * width as f64;
        weights += theta.sin() * width as f64;
    }
    let peak = SUN_PEAK_RATIO * weighted / weights;

    let mut pixels = Vec::with_capacity(width * height * 3);
    for v in 0..height {
        for u in 0..width {
            let d = envmap_direction(u, v, width, height);
            let g = sky_gradient(d.y);
            let gamma = d.dot(&sun).clamp(-1.0, 1.0).acos();
            let s = peak * (-gamma * gamma / (2.0 * sigma * sigma)).exp();
            for t in tint {
                pixels.push((g * t + s) as f32);
            }
        }
    }
    EnvMap::new(width, height, pixels)
}

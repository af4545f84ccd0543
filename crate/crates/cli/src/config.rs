//! Pipeline settings, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use lumaproxy_core::render::RenderSettings;
use serde::{Deserialize, Serialize};

use crate::{parse_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub spp_diffuse: u32,
    pub spp_glossy: u32,
    pub roughness_rough: f64,
    pub roughness_glossy: f64,
    /// Height of generated environment maps (width is twice this).
    pub env_height: usize,
    /// Total environment yaw over the clip, degrees.
    pub rotation_deg: f64,
    pub sky_azimuth: f64,
    pub sky_elevation: f64,
    pub sky_warmth: f64,
    /// Always use the procedural sky, even when an index is available.
    pub procedural_env: bool,
    pub previews: bool,
    /// Asset catalog directory; the built-in primitives when absent.
    pub library: Option<PathBuf>,
    pub env_index: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let r = RenderSettings::default();
        Self {
            width: 128,
            height: 128,
            frames: 17,
            spp_diffuse: r.spp_diffuse,
            spp_glossy: r.spp_glossy,
            roughness_rough: r.roughness_rough,
            roughness_glossy: r.roughness_glossy,
            env_height: 256,
            rotation_deg: 0.0,
            sky_azimuth: 45.0,
            sky_elevation: 30.0,
            sky_warmth: 0.5,
            procedural_env: false,
            previews: true,
            library: None,
            env_index: None,
        }
    }
}

impl PipelineConfig {
    /// `.toml` files are read as TOML, everything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(parse_err("config"))?;
        Self::from_text(&text, path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")))
    }

    pub fn from_text(text: &str, toml: bool) -> Result<Self> {
        if toml {
            toml::from_str(text).map_err(parse_err("config"))
        } else {
            serde_json::from_str(text).map_err(parse_err("config"))
        }
    }

    pub fn render_settings(&self, seed: u64) -> RenderSettings {
        RenderSettings {
            width: self.width,
            height: self.height,
            spp_diffuse: self.spp_diffuse,
            spp_glossy: self.spp_glossy,
            roughness_rough: self.roughness_rough,
            roughness_glossy: self.roughness_glossy,
            seed,
            ..RenderSettings::default()
        }
    }
}

//! Text prompt to lighting proxy: parsing, scene layout, camera planning,
//! HDR environment lighting, proxy rendering and control-fidelity metrics.

pub mod camera;
pub mod dsl;
pub mod dsl_corpus;
pub mod envlight;
pub mod eval;
pub mod geom;
pub mod render;
pub mod scene;

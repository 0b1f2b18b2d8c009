//! File formats shared by the command-line tools: OBJ meshes (with chart
//! UVs), splat text checkpoints, cameras/transform/chart JSON, PNG and PFM
//! images, and the `key = value` run configuration.

mod config;
mod images;
mod json;
mod obj;
mod splat_text;

pub use config::{MeshSource, RunConfig, TextureKind, KEYS};
pub use images::{read_pfm, read_png, write_pfm, write_png};
pub use json::{read_cameras, read_charts, read_transform, write_cameras, write_charts, write_transform, ChartTable};
pub use obj::{chart_uvs, read_obj, write_obj};
pub use splat_text::{read_splats, write_splats};

use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::Scene;

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}:{line}: {msg}", path.display()))
}

/// Checkpoint layout: `mesh.obj` (template space), `transform.json`,
/// `splats.txt`.
pub fn save_scene(dir: &Path, scene: &Scene) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_obj(&dir.join("mesh.obj"), &scene.mesh, &scene.mesh.vertices, None)?;
    write_transform(&dir.join("transform.json"), &scene.transform)?;
    write_splats(&dir.join("splats.txt"), &scene.splats)
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let mesh = read_obj(&dir.join("mesh.obj"))?;
    let transform = read_transform(&dir.join("transform.json"))?;
    let splats = read_splats(&dir.join("splats.txt"), mesh.num_faces())?;
    Ok(Scene {
        mesh,
        transform,
        splats,
    })
}

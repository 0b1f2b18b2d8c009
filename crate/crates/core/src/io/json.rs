use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bake::Chart;
use crate::error::{Error, Result};
use crate::geometry::{Camera, GlobalTransform};

#[derive(Serialize, Deserialize)]
struct CameraFile {
    cameras: Vec<Camera>,
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let file = CameraFile {
        cameras: cameras.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let file: CameraFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for c in &file.cameras {
        c.validate()?;
    }
    Ok(file.cameras)
}

pub fn write_transform(path: &Path, t: &GlobalTransform) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(t)?)?;
    Ok(())
}

pub fn read_transform(path: &Path) -> Result<GlobalTransform> {
    let t: GlobalTransform = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    t.validate()?;
    Ok(t)
}

/// Chart table of an atlas. Texel `(i, j)` of a chart lies at atlas pixel
/// `(x + i, y + j)` and samples the face at `β = (1 − u − v, u, v)` with
/// `u = (i + ½)/res`, `v = (j + ½)/res`, projected onto the triangle when
/// `u + v > 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartTable {
    pub width: usize,
    pub height: usize,
    pub charts: Vec<Chart>,
}

pub fn write_charts(path: &Path, table: &ChartTable) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(table)?)?;
    Ok(())
}

pub fn read_charts(path: &Path) -> Result<ChartTable> {
    let t: ChartTable = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for (k, c) in t.charts.iter().enumerate() {
        if c.face != k || c.res == 0 || c.x + c.res > t.width || c.y + c.res > t.height {
            return Err(Error::Parse(format!("{}: chart {k} is invalid", path.display())));
        }
    }
    Ok(t)
}

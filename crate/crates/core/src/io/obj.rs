use std::fmt::Write as _;
use std::path::Path;

use super::parse_err;
use crate::bake::AttributeAtlas;
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::math::Vec3;

/// Reads `v` and `f` records; polygons are fan-triangulated and `vt`/`vn`
/// indices ignored.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| parse_err(path, ln, e)))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(parse_err(path, ln, "vertex needs three coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|tok| {
                        let v = tok.split('/').next().unwrap_or("");
                        let i: i64 = v.parse().map_err(|e| parse_err(path, ln, e))?;
                        let n = vertices.len() as i64;
                        let i = if i < 0 { n + i } else { i - 1 };
                        if i < 0 || i >= n {
                            return Err(parse_err(path, ln, format!("vertex index {v} out of range")));
                        }
                        Ok(i as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(path, ln, "face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

/// Atlas UVs of each face corner, OBJ convention (`v` up).
pub fn chart_uvs(atlas: &AttributeAtlas) -> Vec<[[f64; 2]; 3]> {
    let (w, h) = (atlas.width() as f64, atlas.height() as f64);
    atlas
        .charts
        .iter()
        .map(|c| {
            let (x, y, r) = (c.x as f64, c.y as f64, c.res as f64);
            [[x, y], [x + r, y], [x, y + r]].map(|[px, py]| [px / w, 1.0 - py / h])
        })
        .collect()
}

/// Writes `positions` with the mesh's faces, plus per-face `vt` records when
/// an atlas is given.
pub fn write_obj(path: &Path, mesh: &Mesh, positions: &[Vec3], atlas: Option<&AttributeAtlas>) -> Result<()> {
    if positions.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "{} positions for {} vertices",
            positions.len(),
            mesh.num_vertices()
        )));
    }
    let mut s = String::new();
    for p in positions {
        writeln!(s, "v {} {} {}", p.x, p.y, p.z).unwrap();
    }
    match atlas {
        Some(atlas) => {
            if atlas.charts.len() != mesh.num_faces() {
                return Err(Error::DimensionMismatch("atlas charts do not match mesh faces".into()));
            }
            for uv in chart_uvs(atlas) {
                for [u, v] in uv {
                    writeln!(s, "vt {u} {v}").unwrap();
                }
            }
            for (k, f) in mesh.faces().iter().enumerate() {
                let t = 3 * k + 1;
                writeln!(s, "f {}/{} {}/{} {}/{}", f[0] + 1, t, f[1] + 1, t + 1, f[2] + 1, t + 2).unwrap();
            }
        }
        None => {
            for f in mesh.faces() {
                writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

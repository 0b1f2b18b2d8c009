use std::fmt::Write as _;
use std::path::Path;

use super::parse_err;
use crate::error::Result;
use crate::math::{Quat, Vec3};
use crate::splats::{AnchoredSplat, SplatMode, SplatSet};

const HEADER: &str = "# face b0 b1 b2 displacement qw qx qy qz log_s0 log_s1 log_s2 opacity_logit r g b";

/// One splat per line in raw parameter form; values use shortest
/// round-trip formatting so a reload is bit-exact.
pub fn write_splats(path: &Path, set: &SplatSet) -> Result<()> {
    let mut s = format!("mode {}\n{HEADER}\n", set.mode.as_str());
    for p in &set.splats {
        let q = p.local_rotation;
        writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            p.face,
            p.beta[0],
            p.beta[1],
            p.beta[2],
            p.displacement,
            q.w,
            q.x,
            q.y,
            q.z,
            p.log_scale[0],
            p.log_scale[1],
            p.log_scale[2],
            p.opacity_logit,
            p.color[0],
            p.color[1],
            p.color[2]
        )
        .unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads a splat file written by [`write_splats`]. Faces are checked
/// against `num_faces`.
pub fn read_splats(path: &Path, num_faces: usize) -> Result<SplatSet> {
    let text = std::fs::read_to_string(path)?;
    let mut mode = None;
    let mut splats = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(m) = line.strip_prefix("mode ") {
            mode = Some(SplatMode::parse(m.trim()).ok_or_else(|| parse_err(path, ln, format!("unknown mode {m}")))?);
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 16 {
            return Err(parse_err(path, ln, format!("expected 16 fields, found {}", tok.len())));
        }
        let face: usize = tok[0].parse().map_err(|e| parse_err(path, ln, e))?;
        if face >= num_faces {
            return Err(parse_err(path, ln, format!("face {face} out of range for {num_faces} faces")));
        }
        let v: Vec<f64> = tok[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(path, ln, e)))
            .collect::<Result<_>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(path, ln, "non-finite value"));
        }
        let splat = AnchoredSplat {
            face,
            beta: Vec3::new(v[0], v[1], v[2]),
            displacement: v[3],
            local_rotation: Quat::new(v[4], v[5], v[6], v[7]),
            log_scale: Vec3::new(v[8], v[9], v[10]),
            opacity_logit: v[11],
            color: Vec3::new(v[12], v[13], v[14]),
        };
        if !splat.beta_is_valid(1e-9) {
            return Err(parse_err(path, ln, "barycentric coordinates are not a valid convex combination"));
        }
        splats.push(splat);
    }
    let mode = mode.ok_or_else(|| parse_err(path, 1, "missing mode line"))?;
    Ok(SplatSet::new(splats, mode, num_faces))
}

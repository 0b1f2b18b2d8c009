use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::image::Image;
use crate::math::{Vec2, Vec3};
use crate::optim::Scene;
use crate::par;

use super::atlas::{texel_barycentric, AttributeAtlas};

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Visibility threshold on `|D* − D(x*)|`.
    pub depth_threshold: f64,
    pub parallel: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            learning_rate: 0.25,
            depth_threshold: 0.01,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

/// One calibrated view: target colors and the depth map rendered from the
/// fitted splats.
#[derive(Clone, Copy, Debug)]
pub struct RefineView<'a> {
    pub camera: &'a Camera,
    pub image: &'a Image,
    pub depth: &'a Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineReport {
    /// Mean per-texel error over visible texels, before the first step and
    /// after each step.
    pub errors: Vec<f64>,
    pub visible_texels: usize,
    /// Covered texels seen by no view, as `(face, i, j)`; left unchanged.
    pub unseen: Vec<(usize, usize, usize)>,
}

fn bilinear(img: &Image, p: Vec2) -> Option<Vec3> {
    let x = p.x - 0.5;
    let y = p.y - 0.5;
    if x < 0.0 || y < 0.0 || x > (img.width - 1) as f64 || y > (img.height - 1) as f64 {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let g = |i: usize, j: usize| Vec3::new(img.get(i, j, 0), img.get(i, j, 1), img.get(i, j, 2));
    Some((g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx) * (1.0 - fy) + (g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx) * fy)
}

fn nearest_depth(depth: &Image, p: Vec2) -> Option<f64> {
    if p.x < 0.0 || p.y < 0.0 {
        return None;
    }
    let (i, j) = (p.x as usize, p.y as usize);
    (i < depth.width && j < depth.height).then(|| depth.get(i, j, 0))
}

/// Per-texel refinement of the diffuse atlas against the target views.
///
/// Each texel position is pushed out by its baked displacement, projected
/// into every view and kept where it agrees with that view's depth map.
/// The texel color then takes projected gradient steps on
/// `mean_v ‖α c − s_v‖²`, with `α` the baked coverage, clamped to `[0, 1]`.
pub fn refine_texture(
    atlas: &AttributeAtlas,
    scene: &Scene,
    views: &[RefineView<'_>],
    config: &RefineConfig,
) -> Result<(AttributeAtlas, RefineReport)> {
    if !(config.learning_rate > 0.0) || !(config.depth_threshold > 0.0) {
        return Err(Error::Config("refinement learning rate and depth threshold must be positive".into()));
    }
    if atlas.charts.len() != scene.mesh.num_faces() {
        return Err(Error::DimensionMismatch(format!(
            "atlas has {} charts, mesh has {} faces",
            atlas.charts.len(),
            scene.mesh.num_faces()
        )));
    }
    for v in views {
        v.camera.validate()?;
        if v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels < 3 {
            return Err(Error::DimensionMismatch("refinement image does not match its camera".into()));
        }
        if !v.depth.same_shape(&Image::new(v.camera.width, v.camera.height, 1)) {
            return Err(Error::DimensionMismatch("depth map does not match its camera".into()));
        }
    }
    let geom = scene.geometry()?;
    let iters = config.iterations;
    struct FaceResult {
        colors: Vec<(usize, usize, Vec3)>,
        errors: Vec<f64>,
        visible: usize,
        unseen: Vec<(usize, usize, usize)>,
    }
    let results = par::map_indexed(scene.mesh.num_faces(), config.parallel, |f| {
        let chart = atlas.charts[f];
        let n = geom.face_normals[f];
        let mut out = FaceResult {
            colors: Vec::new(),
            errors: vec![0.0; iters + 1],
            visible: 0,
            unseen: Vec::new(),
        };
        for j in 0..chart.res {
            for i in 0..chart.res {
                let (x, y) = (chart.x + i, chart.y + j);
                let alpha = atlas.diffuse.get(x, y, 3);
                if alpha <= 0.0 {
                    continue;
                }
                let beta = texel_barycentric(i, j, chart.res);
                let p = geom.surface_point(&scene.mesh, f, &beta) + n * atlas.displacement.get(x, y, 0);
                let samples: Vec<Vec3> = views
                    .iter()
                    .filter_map(|v| {
                        let (px, d) = v.camera.project(p, crate::raster::Z_NEAR)?;
                        let dm = nearest_depth(v.depth, px)?;
                        if (d - dm).abs() >= config.depth_threshold {
                            return None;
                        }
                        bilinear(v.image, px)
                    })
                    .collect();
                if samples.is_empty() {
                    out.unseen.push((f, i, j));
                    continue;
                }
                out.visible += 1;
                let m = samples.len() as f64;
                let mean = samples.iter().sum::<Vec3>() / m;
                let err = |c: &Vec3| samples.iter().map(|s| (c * alpha - s).norm_squared()).sum::<f64>() / m;
                let mut c = Vec3::new(atlas.diffuse.get(x, y, 0), atlas.diffuse.get(x, y, 1), atlas.diffuse.get(x, y, 2));
                out.errors[0] += err(&c);
                for t in 1..=iters {
                    let grad = (c * alpha - mean) * (2.0 * alpha);
                    c = (c - grad * config.learning_rate).map(|v| v.clamp(0.0, 1.0));
                    out.errors[t] += err(&c);
                }
                out.colors.push((x, y, c));
            }
        }
        out
    });
    let mut refined = atlas.clone();
    let mut report = RefineReport {
        errors: vec![0.0; iters + 1],
        visible_texels: 0,
        unseen: Vec::new(),
    };
    for r in results {
        for (x, y, c) in r.colors {
            for k in 0..3 {
                refined.diffuse.set(x, y, k, c[k]);
            }
        }
        for (t, e) in r.errors.iter().enumerate() {
            report.errors[t] += e;
        }
        report.visible_texels += r.visible;
        report.unseen.extend(r.unseen);
    }
    let denom = report.visible_texels.max(1) as f64;
    for e in &mut report.errors {
        *e /= denom;
    }
    Ok((refined, report))
}

//! Per-face extraction of diffuse, normal and displacement atlases from the
//! fitted splats, multi-view texture refinement and a baked-mesh preview
//! renderer.
//!
//! Every texel is treated as a tiny orthographic camera looking along the
//! face normal: each nearby splat is intersected with the texel's normal
//! line and the hits are alpha-composited in depth order.

mod atlas;
mod refine;
mod tessellate;

pub use atlas::{pack_charts, texel_barycentric, AttributeAtlas, Chart, GUTTER};
pub use refine::{refine_texture, RefineConfig, RefineReport, RefineView};
pub use tessellate::{render_baked, tessellate_baked, BakedMesh};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GlobalTransform, Mesh};
use crate::math::{Vec2, Vec3};
use crate::optim::Scene;
use crate::par;
use crate::splats::{SceneGeometry, WorldSplat};

pub const EPS_PARALLEL: f64 = 1e-6;
/// Splat support in `½|x̂|²`, the same 3σ cut the rasterizer uses.
pub const ENERGY_CUTOFF: f64 = crate::raster::ENERGY_CUTOFF;
/// Contributions with alpha at or below this are ignored.
pub const ALPHA_SKIP: f64 = 1e-6;

/// Compositing order along the face normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BakeSort {
    /// Outermost splat first.
    Outward,
    Inward,
}

impl BakeSort {
    pub fn as_str(self) -> &'static str {
        match self {
            BakeSort::Outward => "outward",
            BakeSort::Inward => "inward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "outward" => Some(BakeSort::Outward),
            "inward" => Some(BakeSort::Inward),
            _ => None,
        }
    }
}

/// Depth used to order hits: where the texel line meets the splat, or the
/// splat center's height above the texel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortKey {
    Hit,
    Center,
}

impl std::str::FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hit" => Ok(SortKey::Hit),
            "center" => Ok(SortKey::Center),
            _ => Err(format!("unknown sort key {s}")),
        }
    }
}

impl std::fmt::Display for SortKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SortKey::Hit => "hit",
            SortKey::Center => "center",
        })
    }
}

impl std::str::FromStr for BakeSort {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::parse(s).ok_or_else(|| format!("unknown sort order {s}"))
    }
}

impl std::fmt::Display for BakeSort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BakeConfig {
    /// World-space texel edge used to size charts.
    pub texel_size: f64,
    pub min_resolution: usize,
    pub max_resolution: usize,
    /// Fixed chart resolution for every face, overriding `texel_size`.
    pub resolution: Option<usize>,
    /// Face hops searched for contributing splats.
    pub hops: usize,
    /// Hits farther than this many mean edge lengths from the texel are
    /// ignored, so splats on the far side of thin parts do not bleed in.
    pub max_depth_edges: f64,
    pub sort: BakeSort,
    pub sort_key: SortKey,
    pub eps_parallel: f64,
    pub t_min: f64,
    /// Store world-space normals instead of face-frame normals.
    pub world_normals: bool,
    pub parallel: bool,
}

impl Default for BakeConfig {
    fn default() -> Self {
        Self {
            texel_size: 0.01,
            min_resolution: 4,
            max_resolution: 64,
            resolution: None,
            hops: 3,
            max_depth_edges: 2.0,
            sort: BakeSort::Outward,
            sort_key: SortKey::Hit,
            eps_parallel: EPS_PARALLEL,
            t_min: crate::raster::T_MIN,
            world_normals: false,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

impl BakeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.texel_size > 0.0) {
            return bad("texel_size must be positive");
        }
        if self.min_resolution == 0 || self.min_resolution > self.max_resolution {
            return bad("bake resolutions must satisfy 0 < min <= max");
        }
        if self.resolution == Some(0) {
            return bad("bake resolution must be positive");
        }
        if !(self.max_depth_edges > 0.0) {
            return bad("max_depth_edges must be positive");
        }
        if !(self.eps_parallel >= 0.0) || !(self.t_min >= 0.0 && self.t_min < 1.0) {
            return bad("eps_parallel and t_min must be in range");
        }
        Ok(())
    }

    /// `clamp(⌈√area / texel_size⌉, min, max)`.
    pub fn resolution_for_area(&self, area: f64) -> usize {
        if let Some(r) = self.resolution {
            return r;
        }
        let r = (area.max(0.0).sqrt() / self.texel_size).ceil();
        (r.min(self.max_resolution as f64) as usize).clamp(self.min_resolution, self.max_resolution)
    }
}

/// `p̂ = Σ β̂_m v'_m`.
pub fn texel_world_position(face: usize, beta: &Vec3, mesh: &Mesh, transform: &GlobalTransform) -> Vec3 {
    let f = mesh.faces()[face];
    (0..3).map(|m| transform.apply_point(mesh.vertices[f[m]]) * beta[m]).sum()
}

/// Intersection of a texel's normal line with one splat.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatHit {
    pub splat: usize,
    /// Signed distance along the face normal.
    pub delta: f64,
    /// Hit in the splat's scale-normalized tangent basis.
    pub local: Vec2,
    pub alpha: f64,
    /// `(p_k − p̂)·n_j`, height of the splat center above the texel.
    pub height: f64,
}

/// `(δ, x̂, α)` for the line `p̂ + δ n_j`, or `None` when it runs parallel
/// to the splat plane. Alpha is zero outside the splat's 3σ support.
pub fn splat_texel_contribution(splat: &WorldSplat, p: Vec3, n: Vec3, eps_parallel: f64) -> Option<(f64, Vec2, f64)> {
    let nk = splat.normal();
    let denom = n.dot(&nk);
    if denom.abs() < eps_parallel {
        return None;
    }
    let delta = (splat.position - p).dot(&nk) / denom;
    let r = (p + n * delta) - splat.position;
    let r1 = splat.rotation_matrix.column(0);
    let r2 = splat.rotation_matrix.column(1);
    let local = Vec2::new(r.dot(&r1) / splat.scale[0], r.dot(&r2) / splat.scale[1]);
    let energy = 0.5 * local.norm_squared();
    let alpha = if energy > ENERGY_CUTOFF { 0.0 } else { (-energy).exp() * splat.opacity };
    Some((delta, local, alpha))
}

/// One texel with its depth-sorted splat hits.
#[derive(Clone, Debug, PartialEq)]
pub struct TexelSample {
    pub face: usize,
    pub beta: Vec3,
    pub position: Vec3,
    pub hits: Vec<SplatHit>,
}

/// Composited texel values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TexelValue {
    /// Coverage-normalized color.
    pub color: Vec3,
    pub coverage: f64,
    pub displacement: f64,
    /// Unit normal (face frame or world), `+z`/face normal when empty.
    pub normal: Vec3,
}

/// Read-only world-space view of a scene for baking.
pub struct BakeContext<'a> {
    pub mesh: &'a Mesh,
    pub geom: SceneGeometry,
    pub splats: Vec<WorldSplat>,
    pub face_splats: Vec<Vec<usize>>,
    pub max_depth: f64,
    pub config: BakeConfig,
}

impl<'a> BakeContext<'a> {
    pub fn new(scene: &'a Scene, config: &BakeConfig) -> Result<Self> {
        config.validate()?;
        let geom = scene.geometry()?;
        let splats = scene.splats.world_splats(&scene.mesh, &geom);
        let face_splats = (0..scene.mesh.num_faces()).map(|f| scene.splats.splats_on_face(f).to_vec()).collect();
        let max_depth = config.max_depth_edges * geom.mean_edge_length(&scene.mesh);
        Ok(Self {
            mesh: &scene.mesh,
            geom,
            splats,
            face_splats,
            max_depth,
            config: config.clone(),
        })
    }

    /// Splats anchored to faces within the configured hop count.
    pub fn neighborhood_splats(&self, face: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .mesh
            .face_neighborhood(face, self.config.hops)
            .into_iter()
            .flat_map(|g| self.face_splats[g].iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn chart_resolutions(&self) -> Vec<usize> {
        (0..self.mesh.num_faces())
            .map(|f| {
                let [a, b, c] = self.geom.face_world_positions(self.mesh, f);
                self.config.resolution_for_area(0.5 * (b - a).cross(&(c - a)).norm())
            })
            .collect()
    }

    /// Hits of `candidates` for one texel in compositing order (by the
    /// configured key and direction), ties broken by splat index.
    pub fn texel_sample(&self, face: usize, beta: Vec3, candidates: &[usize]) -> TexelSample {
        let position = self.geom.surface_point(self.mesh, face, &beta);
        let n = self.geom.face_normals[face];
        let mut hits: Vec<SplatHit> = candidates
            .iter()
            .filter_map(|&k| {
                let s = &self.splats[k];
                let (delta, local, alpha) = splat_texel_contribution(s, position, n, self.config.eps_parallel)?;
                if delta.abs() > self.max_depth || alpha <= ALPHA_SKIP {
                    return None;
                }
                let height = (s.position - position).dot(&n);
                Some(SplatHit {
                    splat: k,
                    delta,
                    local,
                    alpha,
                    height,
                })
            })
            .collect();
        let (sort, key) = (self.config.sort, self.config.sort_key);
        hits.sort_by(|a, b| {
            let (ka, kb) = match key {
                SortKey::Hit => (a.delta, b.delta),
                SortKey::Center => (a.height, b.height),
            };
            let o = match sort {
                BakeSort::Outward => kb.total_cmp(&ka),
                BakeSort::Inward => ka.total_cmp(&kb),
            };
            o.then(a.splat.cmp(&b.splat))
        });
        TexelSample {
            face,
            beta,
            position,
            hits,
        }
    }

    /// Front-to-back compositing of a sample's hits.
    pub fn composite(&self, sample: &TexelSample) -> TexelValue {
        let face = sample.face;
        let n = self.geom.face_normals[face];
        let (mut color, mut normal) = (Vec3::zeros(), Vec3::zeros());
        let (mut coverage, mut disp, mut t) = (0.0, 0.0, 1.0);
        for h in &sample.hits {
            if t < self.config.t_min {
                break;
            }
            let w = t * h.alpha;
            let s = &self.splats[h.splat];
            let mut nk = s.normal();
            if nk.dot(&n) < 0.0 {
                nk = -nk;
            }
            color += s.color * w;
            normal += nk * w;
            disp += h.delta * w;
            coverage += w;
            t *= 1.0 - h.alpha;
        }
        let frame = self.geom.face_frames[face].to_matrix();
        let normal = if coverage > 0.0 && normal.norm() > 0.0 {
            normal.normalize()
        } else {
            n
        };
        let normal = if self.config.world_normals { normal } else { frame.transpose() * normal };
        if coverage > 0.0 {
            color /= coverage;
            disp /= coverage;
        }
        TexelValue {
            color,
            coverage,
            displacement: disp,
            normal,
        }
    }

    /// Texels of one `res × res` chart in row-major `(j, i)` order.
    pub fn bake_face(&self, face: usize, res: usize, candidates: &[usize]) -> Vec<TexelValue> {
        let mut out = Vec::with_capacity(res * res);
        for j in 0..res {
            for i in 0..res {
                let sample = self.texel_sample(face, texel_barycentric(i, j, res), candidates);
                out.push(self.composite(&sample));
            }
        }
        out
    }

    /// Atlas layout for this scene.
    pub fn layout(&self) -> AttributeAtlas {
        let (charts, w, h) = pack_charts(&self.chart_resolutions());
        AttributeAtlas::empty(charts, w, h)
    }

    fn bake_with<F>(&self, order: &[usize], candidates: F) -> AttributeAtlas
    where
        F: Fn(usize) -> Vec<usize> + Sync + Send,
    {
        let mut atlas = self.layout();
        let charts = atlas.charts.clone();
        let baked = par::map_indexed(order.len(), self.config.parallel, |k| {
            let f = order[k];
            self.bake_face(f, charts[f].res, &candidates(f))
        });
        for (k, texels) in baked.into_iter().enumerate() {
            write_chart(&mut atlas, &charts[order[k]], &texels);
        }
        atlas
    }

    /// Bakes every face from its hop-limited neighborhood.
    pub fn bake_all(&self) -> AttributeAtlas {
        let order: Vec<usize> = (0..self.mesh.num_faces()).collect();
        self.bake_in_order(&order)
    }

    /// `bake_all` processing faces in the given order.
    pub fn bake_in_order(&self, order: &[usize]) -> AttributeAtlas {
        self.bake_with(order, |f| self.neighborhood_splats(f))
    }

    /// Reference bake: every splat is a candidate for every texel.
    pub fn brute_force_bake(&self) -> AttributeAtlas {
        let all: Vec<usize> = (0..self.splats.len()).collect();
        let order: Vec<usize> = (0..self.mesh.num_faces()).collect();
        self.bake_with(&order, |_| all.clone())
    }

    /// Texels where splats outside the neighborhood would contribute a total
    /// alpha above `ALPHA_SKIP`, as `(face, i, j)`.
    pub fn hop_limit_violations(&self) -> Vec<(usize, usize, usize)> {
        let res = self.chart_resolutions();
        let per_face = par::map_indexed(self.mesh.num_faces(), self.config.parallel, |f| {
            let inside = self.neighborhood_splats(f);
            let outside: Vec<usize> = (0..self.splats.len()).filter(|k| inside.binary_search(k).is_err()).collect();
            let mut bad = Vec::new();
            for j in 0..res[f] {
                for i in 0..res[f] {
                    let beta = texel_barycentric(i, j, res[f]);
                    let position = self.geom.surface_point(self.mesh, f, &beta);
                    let n = self.geom.face_normals[f];
                    let total: f64 = outside
                        .iter()
                        .filter_map(|&k| splat_texel_contribution(&self.splats[k], position, n, self.config.eps_parallel))
                        .filter(|(d, _, _)| d.abs() <= self.max_depth)
                        .map(|(_, _, a)| a)
                        .sum();
                    if total > ALPHA_SKIP {
                        bad.push((f, i, j));
                    }
                }
            }
            bad
        });
        per_face.into_iter().flatten().collect()
    }
}

fn write_chart(atlas: &mut AttributeAtlas, chart: &Chart, texels: &[TexelValue]) {
    let res = chart.res;
    for j in 0..res {
        for i in 0..res {
            let v = &texels[j * res + i];
            let (x, y) = (chart.x + i, chart.y + j);
            for c in 0..3 {
                atlas.diffuse.set(x, y, c, v.color[c]);
                atlas.normal.set(x, y, c, 0.5 * (v.normal[c] + 1.0));
            }
            atlas.diffuse.set(x, y, 3, v.coverage);
            atlas.displacement.set(x, y, 0, v.displacement);
        }
    }
}

/// Bakes `scene` with hop-limited neighborhoods.
pub fn bake_all(scene: &Scene, config: &BakeConfig) -> Result<AttributeAtlas> {
    Ok(BakeContext::new(scene, config)?.bake_all())
}

/// Bakes `scene` letting every splat reach every texel.
pub fn brute_force_bake(scene: &Scene, config: &BakeConfig) -> Result<AttributeAtlas> {
    Ok(BakeContext::new(scene, config)?.brute_force_bake())
}

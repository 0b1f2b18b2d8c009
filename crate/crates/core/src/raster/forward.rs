use super::project::{project_splat, PixelBox, ProjectedSplat};
use super::{RenderSettings, ENERGY_CUTOFF, EPS_PARALLEL, TILE_SIZE};
use crate::error::Result;
use crate::geometry::{Camera, GlobalTransform, Mesh};
use crate::image::Image;
use crate::math::{Mat3, Vec2, Vec3};
use crate::par::map_indexed;
use crate::splats::{SceneGeometry, SplatMode, SplatSet, WorldSplat};

/// One splat's contribution to one pixel, in compositing order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contributor {
    pub splat: u32,
    /// `min(o·G, alpha_max)`.
    pub alpha: f64,
    /// Gaussian falloff `exp(−E)`.
    pub gauss: f64,
    /// Camera depth: mean depth (3D) or ray-plane intersection depth (2D).
    pub depth: f64,
    /// Transmittance in front of this contributor.
    pub transmittance: f64,
}

impl Contributor {
    /// Compositing weight `α·T`.
    pub fn weight(&self) -> f64 {
        self.alpha * self.transmittance
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    /// Premultiplied color over black.
    pub color: Image,
    /// Weight-averaged camera depth.
    pub depth: Image,
    /// Unnormalized weighted splat normal (camera space); 2D mode only.
    pub normal: Image,
    pub alpha: Image,
}

/// A flat splat in camera space.
#[derive(Clone, Copy, Debug)]
pub struct SplatPlane {
    pub center: Vec3,
    /// Columns: tangent axes and normal.
    pub rotation: Mat3,
    pub scale: Vec2,
    pub bbox: PixelBox,
}

/// Ray-plane hit of a camera ray `ray` (with `ray.z = 1`).
#[derive(Clone, Copy, Debug)]
pub(crate) struct PlaneHit {
    pub t: f64,
    /// Hit point minus splat center.
    pub offset: Vec3,
    pub local: Vec2,
    pub ray_dot_n: f64,
}

impl SplatPlane {
    pub fn normal(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub(crate) fn intersect(&self, ray: &Vec3, z_near: f64) -> Option<PlaneHit> {
        let n = self.normal();
        let rn = ray.dot(&n);
        if rn.abs() < EPS_PARALLEL * ray.norm() {
            return None;
        }
        let t = self.center.dot(&n) / rn;
        if !(t * ray.z > z_near) {
            return None;
        }
        let offset = ray * t - self.center;
        let local = Vec2::new(
            offset.dot(&self.rotation.column(0)) / self.scale.x,
            offset.dot(&self.rotation.column(1)) / self.scale.y,
        );
        Some(PlaneHit {
            t,
            offset,
            local,
            ray_dot_n: rn,
        })
    }
}

/// Forward state retained for the backward pass.
#[derive(Clone, Debug)]
pub struct RenderTape {
    pub mode: SplatMode,
    pub camera: Camera,
    pub settings: RenderSettings,
    pub world: Vec<WorldSplat>,
    /// 3D path: projected Gaussians (`None` when culled).
    pub projected: Vec<Option<ProjectedSplat>>,
    /// 3D path fed with flat splats: the substituted third scale.
    pub thickness: Vec<Option<f64>>,
    /// 2D path: camera-space planes.
    pub planes: Vec<Option<SplatPlane>>,
    /// Per pixel `(start, len)` into `contributors`.
    pub ranges: Vec<(usize, usize)>,
    pub contributors: Vec<Contributor>,
}

impl RenderTape {
    pub fn pixel_contributors(&self, pixel: usize) -> &[Contributor] {
        let (s, l) = self.ranges[pixel];
        &self.contributors[s..s + l]
    }

    pub fn ray(&self, pixel: usize) -> Vec3 {
        let x = self.camera.pixel_to_normalized(pixel % self.camera.width, pixel / self.camera.width);
        Vec3::new(x.x, x.y, 1.0)
    }
}

/// Renders with projected 3D Gaussians. Flat splat sets get a small
/// substitute thickness.
pub fn render_3d(set: &SplatSet, mesh: &Mesh, transform: &GlobalTransform, camera: &Camera) -> Result<RenderOutput> {
    let geom = SceneGeometry::new(mesh, transform)?;
    Ok(render(set, mesh, &geom, camera, SplatMode::ThreeD, &RenderSettings::default())?.0)
}

/// Renders with exact ray-splat intersections.
pub fn render_2d(set: &SplatSet, mesh: &Mesh, transform: &GlobalTransform, camera: &Camera) -> Result<RenderOutput> {
    let geom = SceneGeometry::new(mesh, transform)?;
    Ok(render(set, mesh, &geom, camera, SplatMode::TwoD, &RenderSettings::default())?.0)
}

struct TileResult {
    pixels: Vec<(usize, usize, usize)>,
    contributors: Vec<Contributor>,
}

/// Renders `set` with the renderer selected by `mode` and returns the images
/// together with the tape.
pub fn render(
    set: &SplatSet,
    mesh: &Mesh,
    geom: &SceneGeometry,
    camera: &Camera,
    mode: SplatMode,
    settings: &RenderSettings,
) -> Result<(RenderOutput, RenderTape)> {
    camera.validate()?;
    let world = set.world_splats(mesh, geom);
    let mut tape = RenderTape {
        mode,
        camera: camera.clone(),
        settings: *settings,
        world,
        projected: Vec::new(),
        thickness: Vec::new(),
        planes: Vec::new(),
        ranges: vec![(0, 0); camera.num_pixels()],
        contributors: Vec::new(),
    };
    let boxes: Vec<PixelBox> = match mode {
        SplatMode::ThreeD => {
            let flat = set.mode == SplatMode::TwoD;
            tape.thickness = tape
                .world
                .iter()
                .map(|w| flat.then(|| settings.flat_thickness * 0.5 * (w.scale.x + w.scale.y)))
                .collect();
            tape.projected = tape
                .world
                .iter()
                .zip(&tape.thickness)
                .map(|(w, t)| project_splat(w.position, &w.covariance(*t), camera, settings.blur_px2, settings.z_near))
                .collect();
            tape.projected.iter().map(|p| p.map(|p| p.bbox).unwrap_or_default()).collect()
        }
        SplatMode::TwoD => {
            tape.planes = tape.world.iter().map(|w| splat_plane(w, camera, settings.z_near)).collect();
            tape.planes.iter().map(|p| p.map(|p| p.bbox).unwrap_or_default()).collect()
        }
    };

    let tiles_x = camera.width.div_ceil(TILE_SIZE);
    let tiles_y = camera.height.div_ceil(TILE_SIZE);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (k, b) in boxes.iter().enumerate() {
        if b.is_empty() {
            continue;
        }
        for ty in b.y0 / TILE_SIZE..=(b.y1 - 1) / TILE_SIZE {
            for tx in b.x0 / TILE_SIZE..=(b.x1 - 1) / TILE_SIZE {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    if mode == SplatMode::ThreeD {
        for bin in &mut bins {
            bin.sort_by(|a, b| {
                let da = tape.projected[*a as usize].unwrap().depth;
                let db = tape.projected[*b as usize].unwrap().depth;
                da.total_cmp(&db).then(a.cmp(b))
            });
        }
    }

    let tape_ref = &tape;
    let results = map_indexed(bins.len(), settings.parallel, |t| {
        let tile = PixelBox {
            x0: (t % tiles_x) * TILE_SIZE,
            y0: (t / tiles_x) * TILE_SIZE,
            x1: ((t % tiles_x + 1) * TILE_SIZE).min(camera.width),
            y1: ((t / tiles_x + 1) * TILE_SIZE).min(camera.height),
        };
        render_tile(tape_ref, &tile, &bins[t], &boxes)
    });

    let mut contributors = Vec::with_capacity(results.iter().map(|r| r.contributors.len()).sum());
    let mut ranges = vec![(0, 0); camera.num_pixels()];
    for r in results {
        let base = contributors.len();
        for (p, s, l) in r.pixels {
            ranges[p] = (base + s, l);
        }
        contributors.extend(r.contributors);
    }
    tape.ranges = ranges;
    tape.contributors = contributors;
    let output = composite_images(&tape);
    Ok((output, tape))
}

fn splat_plane(w: &WorldSplat, camera: &Camera, z_near: f64) -> Option<SplatPlane> {
    let rot_cam = camera.rotation_matrix() * w.rotation_matrix;
    let center = camera.world_to_camera(w.position);
    let scale = Vec2::new(w.scale.x, w.scale.y);
    let a = rot_cam.column(0) * (3.0 * scale.x);
    let b = rot_cam.column(1) * (3.0 * scale.y);
    let mut lo = Vec2::repeat(f64::INFINITY);
    let mut hi = Vec2::repeat(f64::NEG_INFINITY);
    let mut behind = 0;
    for (sa, sb) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let c = center + a * sa + b * sb;
        if c.z <= z_near {
            behind += 1;
            continue;
        }
        let px = camera.normalized_to_pixel(Vec2::new(c.x / c.z, c.y / c.z));
        lo = lo.inf(&px);
        hi = hi.sup(&px);
    }
    let bbox = match behind {
        0 => PixelBox::from_extent(camera, lo, hi),
        4 => return None,
        _ => PixelBox::full(camera),
    };
    Some(SplatPlane {
        center,
        rotation: rot_cam,
        scale,
        bbox,
    })
}

fn inside(b: &PixelBox, x: usize, y: usize) -> bool {
    x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1
}

fn render_tile(tape: &RenderTape, tile: &PixelBox, bin: &[u32], boxes: &[PixelBox]) -> TileResult {
    let camera = &tape.camera;
    let s = &tape.settings;
    let mut out = TileResult {
        pixels: Vec::with_capacity(TILE_SIZE * TILE_SIZE),
        contributors: Vec::new(),
    };
    let mut hits: Vec<(f64, u32, f64)> = Vec::new();
    for y in tile.y0..tile.y1 {
        for x in tile.x0..tile.x1 {
            let pixel = y * camera.width + x;
            let start = out.contributors.len();
            let xn = camera.pixel_to_normalized(x, y);
            hits.clear();
            match tape.mode {
                SplatMode::ThreeD => {
                    for &k in bin {
                        if !inside(&boxes[k as usize], x, y) {
                            continue;
                        }
                        let p = tape.projected[k as usize].as_ref().unwrap();
                        let e = super::project::gaussian_energy(p, xn);
                        if e <= ENERGY_CUTOFF {
                            hits.push((p.depth, k, (-e).exp()));
                        }
                    }
                }
                SplatMode::TwoD => {
                    let ray = Vec3::new(xn.x, xn.y, 1.0);
                    for &k in bin {
                        if !inside(&boxes[k as usize], x, y) {
                            continue;
                        }
                        let plane = tape.planes[k as usize].as_ref().unwrap();
                        if let Some(hit) = plane.intersect(&ray, s.z_near) {
                            let e = 0.5 * hit.local.norm_squared();
                            if e <= ENERGY_CUTOFF {
                                hits.push((hit.t, k, (-e).exp()));
                            }
                        }
                    }
                    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                }
            }
            let mut t = 1.0;
            for &(depth, k, gauss) in &hits {
                if t < s.t_min {
                    break;
                }
                let alpha = (tape.world[k as usize].opacity * gauss).min(s.alpha_max);
                out.contributors.push(Contributor {
                    splat: k,
                    alpha,
                    gauss,
                    depth,
                    transmittance: t,
                });
                t *= 1.0 - alpha;
            }
            out.pixels.push((pixel, start, out.contributors.len() - start));
        }
    }
    out
}

/// Per-pixel sums over the tape: color, weighted depth, weighted normal and
/// total weight.
pub(crate) struct PixelSums {
    pub color: Vec3,
    pub depth_sum: f64,
    pub normal: Vec3,
    pub weight: f64,
}

pub(crate) const EPS_ALPHA: f64 = 1e-8;

pub(crate) fn pixel_sums(tape: &RenderTape, pixel: usize) -> PixelSums {
    let mut sums = PixelSums {
        color: Vec3::zeros(),
        depth_sum: 0.0,
        normal: Vec3::zeros(),
        weight: 0.0,
    };
    for c in tape.pixel_contributors(pixel) {
        let w = c.weight();
        let k = c.splat as usize;
        sums.color += tape.world[k].color * w;
        sums.depth_sum += c.depth * w;
        if tape.mode == SplatMode::TwoD {
            sums.normal += tape.planes[k].as_ref().unwrap().normal() * w;
        }
        sums.weight += w;
    }
    sums
}

fn composite_images(tape: &RenderTape) -> RenderOutput {
    let (w, h) = (tape.camera.width, tape.camera.height);
    let mut out = RenderOutput {
        color: Image::new(w, h, 3),
        depth: Image::new(w, h, 1),
        normal: Image::new(w, h, 3),
        alpha: Image::new(w, h, 1),
    };
    for p in 0..w * h {
        let s = pixel_sums(tape, p);
        out.color.pixel_mut(p).copy_from_slice(s.color.as_slice());
        out.normal.pixel_mut(p).copy_from_slice(s.normal.as_slice());
        out.depth.data[p] = s.depth_sum / s.weight.max(EPS_ALPHA);
        out.alpha.data[p] = s.weight;
    }
    out
}

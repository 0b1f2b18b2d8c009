//! Exact ray casting of textured meshes and synthetic multi-view datasets.
//!
//! The ray caster is independent of the splat rasterizer so its images can
//! serve as ground truth.

use crate::error::{Error, Result};
use crate::geometry::{Camera, Mesh};
use crate::image::Image;
use crate::math::Vec3;
use crate::par;

/// Surface color of a target mesh.
#[derive(Clone, Debug, PartialEq)]
pub enum Texture {
    Uniform(Vec3),
    FaceColors(Vec<Vec3>),
    /// 3D checkerboard of cubes with side `cell`.
    Checker { cell: f64, a: Vec3, b: Vec3 },
}

impl Texture {
    pub fn color(&self, face: usize, point: Vec3) -> Vec3 {
        match self {
            Texture::Uniform(c) => *c,
            Texture::FaceColors(c) => c[face],
            Texture::Checker { cell, a, b } => {
                let parity = point.iter().map(|x| (x / cell).floor() as i64).sum::<i64>().rem_euclid(2);
                if parity == 0 {
                    *a
                } else {
                    *b
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub face: usize,
    /// Ray parameter; with a direction `(x, y, 1)` in camera space it is the
    /// camera depth.
    pub t: f64,
    pub beta: Vec3,
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: Vec3) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    /// Entry parameter of the ray, if it hits before `t_max`.
    fn hit(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            if inv_dir[a].is_infinite() {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let near = (self.min[a] - origin[a]) * inv_dir[a];
            let far = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if near <= far { (near, far) } else { (far, near) };
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: `count > 0`, faces `order[start..start + count]`.
    /// Interior: children at `start` and `start + 1`.
    start: usize,
    count: usize,
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over the faces of one vertex configuration.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
    tris: Vec<[Vec3; 3]>,
}

impl Bvh {
    pub fn new(mesh: &Mesh) -> Self {
        Self::with_positions(mesh, &mesh.vertices)
    }

    /// Builds over `positions` (same topology as `mesh`).
    pub fn with_positions(mesh: &Mesh, positions: &[Vec3]) -> Self {
        Self::from_triangles(mesh.faces().iter().map(|f| [positions[f[0]], positions[f[1]], positions[f[2]]]).collect())
    }

    /// Builds over a triangle soup; hit faces index into `tris`.
    pub fn from_triangles(tris: Vec<[Vec3; 3]>) -> Self {
        let centroids: Vec<Vec3> = tris.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
        let mut bvh = Self {
            nodes: Vec::new(),
            order: (0..tris.len()).collect(),
            tris,
        };
        if bvh.tris.is_empty() {
            return bvh;
        }
        bvh.nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: bvh.order.len(),
        });
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (start, count) = (bvh.nodes[ni].start, bvh.nodes[ni].count);
            let mut bounds = Aabb::empty();
            let mut cbounds = Aabb::empty();
            for &f in &bvh.order[start..start + count] {
                for p in &bvh.tris[f] {
                    bounds.grow(*p);
                }
                cbounds.grow(centroids[f]);
            }
            bvh.nodes[ni].bounds = bounds;
            if count <= LEAF_SIZE {
                continue;
            }
            let axis = (cbounds.max - cbounds.min).imax();
            let mid = count / 2;
            bvh.order[start..start + count].select_nth_unstable_by(mid, |a, b| {
                centroids[*a][axis].total_cmp(&centroids[*b][axis]).then(a.cmp(b))
            });
            let left = bvh.nodes.len();
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                start,
                count: mid,
            });
            bvh.nodes.push(Node {
                bounds: Aabb::empty(),
                start: start + mid,
                count: count - mid,
            });
            bvh.nodes[ni].start = left;
            bvh.nodes[ni].count = 0;
            stack.push(left);
            stack.push(left + 1);
        }
        bvh
    }

    /// Nearest hit with `t > t_min`, ties broken by the lower face index.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            match node.bounds.hit(&origin, &inv, t_max) {
                Some(_) => {}
                None => continue,
            }
            if node.count == 0 {
                stack.push(node.start);
                stack.push(node.start + 1);
                continue;
            }
            for &f in &self.order[node.start..node.start + node.count] {
                if let Some((t, beta)) = ray_triangle(origin, dir, &self.tris[f]) {
                    if t > t_min {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && f < b.face),
                        };
                        if better {
                            best = Some(Hit { face: f, t, beta });
                        }
                    }
                }
            }
        }
        best
    }
}

/// Möller-Trumbore intersection; returns `(t, β)`.
pub fn ray_triangle(origin: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> Option<(f64, Vec3)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    let beta = Vec3::new(1.0 - u - v, u, v).map(|b| b.max(0.0));
    Some((t, beta / beta.sum()))
}

/// Ray-cast images: color, camera depth, coverage mask and hit faces.
#[derive(Clone, Debug)]
pub struct RayImage {
    pub color: Image,
    pub depth: Image,
    pub mask: Image,
    pub faces: Vec<Option<usize>>,
}

/// Casts one ray per pixel center and shades hits with `shade(hit, point)`.
/// Misses are black with zero depth.
pub fn raycast<F>(bvh: &Bvh, camera: &Camera, parallel: bool, shade: F) -> Result<RayImage>
where
    F: Fn(&Hit, Vec3) -> Vec3 + Sync + Send,
{
    camera.validate()?;
    let origin = camera.center();
    let rt = camera.rotation_matrix().transpose();
    let rows = par::map_indexed(camera.height, parallel, |j| {
        (0..camera.width)
            .map(|i| {
                let n = camera.pixel_to_normalized(i, j);
                let dir = rt * Vec3::new(n.x, n.y, 1.0);
                bvh.intersect(origin, dir, 0.0).map(|h| (h, shade(&h, origin + dir * h.t)))
            })
            .collect::<Vec<_>>()
    });
    let mut out = RayImage {
        color: Image::new(camera.width, camera.height, 3),
        depth: Image::new(camera.width, camera.height, 1),
        mask: Image::new(camera.width, camera.height, 1),
        faces: vec![None; camera.num_pixels()],
    };
    for (j, row) in rows.into_iter().enumerate() {
        for (i, hit) in row.into_iter().enumerate() {
            let p = j * camera.width + i;
            if let Some((h, c)) = hit {
                out.color.pixel_mut(p).copy_from_slice(c.as_slice());
                out.depth.data[p] = h.t;
                out.mask.data[p] = 1.0;
                out.faces[p] = Some(h.face);
            }
        }
    }
    Ok(out)
}

/// Ray-cast rendering of a textured mesh.
pub fn render_textured(texture: &Texture, bvh: &Bvh, camera: &Camera, parallel: bool) -> Result<RayImage> {
    raycast(bvh, camera, parallel, |h, p| texture.color(h.face, p))
}

/// `count` directions on the unit sphere from the Fibonacci lattice.
pub fn fibonacci_directions(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Cameras on a sphere of `radius` around `target`, all looking at it.
pub fn fibonacci_cameras(count: usize, target: Vec3, radius: f64, fov_x: f64, width: usize, height: usize) -> Result<Vec<Camera>> {
    fibonacci_directions(count)
        .into_iter()
        .map(|d| {
            let up = if d.z.abs() > 0.99 { Vec3::x() } else { Vec3::z() };
            Camera::look_at(target + d * radius, target, up, fov_x, width, height)
        })
        .collect()
}

/// Rendered views of a target mesh.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Image>,
    pub depths: Vec<Image>,
    pub masks: Vec<Image>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Camera distance as a multiple of the mesh bounding radius.
    pub distance: f64,
    pub fov_x: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            views: 25,
            width: 128,
            height: 128,
            distance: 3.0,
            fov_x: 0.8,
        }
    }
}

/// Renders a closed textured mesh from Fibonacci-lattice cameras.
pub fn synthesize(mesh: &Mesh, texture: &Texture, config: &SynthConfig, parallel: bool) -> Result<Dataset> {
    if !mesh.is_closed() {
        return Err(Error::InvalidMesh("target mesh must be closed".into()));
    }
    if let Texture::FaceColors(c) = texture {
        if c.len() != mesh.num_faces() {
            return Err(Error::DimensionMismatch(format!("{} face colors for {} faces", c.len(), mesh.num_faces())));
        }
    }
    let centroid = mesh.vertices.iter().sum::<Vec3>() / mesh.num_vertices() as f64;
    let radius = mesh.vertices.iter().map(|v| (v - centroid).norm()).fold(0.0, f64::max);
    let cameras = fibonacci_cameras(config.views, centroid, config.distance * radius, config.fov_x, config.width, config.height)?;
    let bvh = Bvh::new(mesh);
    let mut data = Dataset {
        cameras: Vec::new(),
        images: Vec::new(),
        depths: Vec::new(),
        masks: Vec::new(),
    };
    for cam in cameras {
        let r = render_textured(texture, &bvh, &cam, parallel)?;
        data.cameras.push(cam);
        data.images.push(r.color);
        data.depths.push(r.depth);
        data.masks.push(r.mask);
    }
    Ok(data)
}

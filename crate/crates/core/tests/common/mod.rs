#![allow(dead_code)]

use meshsplat::geometry::{primitives, Camera, GlobalTransform, Mesh};
use meshsplat::math::{Quat, Vec3};
use meshsplat::splats::{AnchoredSplat, SplatMode, SplatSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn front_camera(size: usize) -> Camera {
    Camera::look_at(Vec3::new(0.3, -0.2, -3.0), Vec3::zeros(), Vec3::y(), 0.9, size, size).unwrap()
}

pub fn mild_transform() -> GlobalTransform {
    GlobalTransform::new(
        Vec3::new(1.05, 0.95, 1.1),
        Quat::new(1.0, 0.05, -0.08, 0.03).normalized(),
        Vec3::new(0.05, -0.02, 0.1),
    )
}

fn random_unit_quat(rng: &mut impl Rng, spread: f64) -> Quat {
    Quat::new(1.0, rng.random_range(-spread..spread), rng.random_range(-spread..spread), rng.random_range(-spread..spread)).normalized()
}

/// Three fairly large splats on camera-facing faces of an icosahedron.
pub fn three_splat_scene(mode: SplatMode, seed: u64) -> (Mesh, GlobalTransform, SplatSet, Camera) {
    let mesh = primitives::icosphere(0, 1.0);
    let camera = front_camera(24);
    let center = camera.center();
    let mut facing: Vec<(f64, usize)> = (0..mesh.num_faces())
        .map(|f| {
            let [a, b, c] = mesh.face_positions(f);
            let centroid = (a + b + c) / 3.0;
            (mesh.face_normal(f).unwrap().dot(&(center - centroid).normalize()), f)
        })
        .collect();
    facing.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut r = rng(seed);
    let splats = (0..3)
        .map(|i| {
            let face = facing[i].1;
            let b = Vec3::new(r.random_range(0.2..1.0), r.random_range(0.2..1.0), r.random_range(0.2..1.0));
            AnchoredSplat::new(
                face,
                b / b.sum(),
                r.random_range(-0.05..0.05),
                random_unit_quat(&mut r, 0.3),
                Vec3::new(r.random_range(0.2..0.35), r.random_range(0.2..0.35), r.random_range(0.1..0.3)),
                r.random_range(0.4..0.8),
                Vec3::new(r.random(), r.random(), r.random()),
            )
        })
        .collect();
    let set = SplatSet::new(splats, mode, mesh.num_faces());
    (mesh, mild_transform(), set, camera)
}

/// A random cloud of splats over an icosphere, for oracle comparisons.
pub fn random_scene(mode: SplatMode, count: usize, seed: u64) -> (Mesh, GlobalTransform, SplatSet, Camera) {
    let mesh = primitives::icosphere(1, 1.0);
    let mut r = rng(seed);
    let splats = (0..count)
        .map(|_| {
            let b = Vec3::new(r.random_range(0.05..1.0), r.random_range(0.05..1.0), r.random_range(0.05..1.0));
            AnchoredSplat::new(
                r.random_range(0..mesh.num_faces()),
                b / b.sum(),
                r.random_range(-0.1..0.1),
                random_unit_quat(&mut r, 1.0),
                Vec3::new(r.random_range(0.03..0.2), r.random_range(0.03..0.2), r.random_range(0.03..0.2)),
                r.random_range(0.1..0.95),
                Vec3::new(r.random(), r.random(), r.random()),
            )
        })
        .collect();
    let set = SplatSet::new(splats, mode, mesh.num_faces());
    (mesh, mild_transform(), set, front_camera(40))
}

pub fn checker() -> meshsplat::synth::Texture {
    meshsplat::synth::Texture::Checker {
        cell: 0.5,
        a: Vec3::new(0.9, 0.35, 0.2),
        b: Vec3::new(0.2, 0.55, 0.9),
    }
}

/// Coarse cube template with seeded splats and ray-cast views of a
/// checkered sphere.
pub fn small_fit(views: usize, size: usize) -> (meshsplat::optim::Scene, Vec<meshsplat::optim::TrainingView>) {
    use meshsplat::optim::{Scene, TrainingView};
    use meshsplat::splats::{seed_splats, SeedConfig};
    use meshsplat::synth::{synthesize, SynthConfig};
    let target = primitives::icosphere(2, 1.0);
    let config = SynthConfig {
        views,
        width: size,
        height: size,
        ..SynthConfig::default()
    };
    let data = synthesize(&target, &checker(), &config, false).unwrap();
    let mesh = primitives::cube_grid(3, 1.0);
    let splats = seed_splats(&mesh, 3, SplatMode::TwoD, &SeedConfig::default());
    let scene = Scene {
        mesh,
        transform: GlobalTransform::identity(),
        splats,
    };
    let views = data
        .cameras
        .into_iter()
        .zip(data.images)
        .map(|(camera, image)| TrainingView { camera, image })
        .collect();
    (scene, views)
}

/// Seeded splats on a level-2 icosphere with fit-like perturbations: small
/// tilts, varied scales and offsets.
pub fn perturbed_sphere(seed: u64) -> meshsplat::optim::Scene {
    use meshsplat::splats::{seed_splats, SeedConfig};
    let mesh = primitives::icosphere(2, 1.0);
    let edge = mesh.mean_edge_length();
    let mut set = seed_splats(&mesh, 3, SplatMode::TwoD, &SeedConfig::default());
    let mut r = rng(seed);
    for s in &mut set.splats {
        let axis = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), 0.0).normalize();
        s.local_rotation = Quat::from_axis_angle(axis, r.random_range(0.0..0.3));
        s.log_scale = Vec3::new(r.random_range(0.15..0.3) * edge, r.random_range(0.15..0.3) * edge, 1e-3).map(f64::ln);
        s.displacement = r.random_range(-0.02..0.02);
        s.set_opacity(r.random_range(0.3..0.95));
        s.color = Vec3::new(r.random(), r.random(), r.random());
    }
    meshsplat::optim::Scene {
        mesh,
        transform: mild_transform(),
        splats: set,
    }
}

/// Independent per-pixel renderer: projects every splat for every pixel,
/// sorts all hits and composites.
pub fn brute_force_render(set: &SplatSet, mesh: &Mesh, tr: &GlobalTransform, cam: &Camera, mode: SplatMode) -> (meshsplat::image::Image, meshsplat::image::Image, meshsplat::image::Image) {
    let s = meshsplat::raster::RenderSettings::default();
    let geom = meshsplat::splats::SceneGeometry::new(mesh, tr).unwrap();
    let w = cam.rotation_matrix();
    let t = cam.translation_vec();
    let mut color = meshsplat::image::Image::new(cam.width, cam.height, 3);
    let mut depth = meshsplat::image::Image::new(cam.width, cam.height, 1);
    let mut alpha = meshsplat::image::Image::new(cam.width, cam.height, 1);
    let splats: Vec<_> = set.splats.iter().map(|sp| sp.world(mesh, &geom)).collect();
    for py in 0..cam.height {
        for px in 0..cam.width {
            let xn = (px as f64 + 0.5 - cam.cx) / cam.fx;
            let yn = (py as f64 + 0.5 - cam.cy) / cam.fy;
            let mut hits: Vec<(f64, usize, f64)> = Vec::new();
            for (k, ws) in splats.iter().enumerate() {
                let pc = w * ws.position + t;
                let rc = w * ws.rotation_matrix;
                match mode {
                    SplatMode::ThreeD => {
                        if pc.z <= s.z_near {
                            continue;
                        }
                        let mut sc = ws.scale;
                        if set.mode == SplatMode::TwoD {
                            sc.z = s.flat_thickness * 0.5 * (sc.x + sc.y);
                        }
                        let cov = rc * meshsplat::math::Mat3::from_diagonal(&sc.component_mul(&sc)) * rc.transpose();
                        let (x, y, z) = (pc.x, pc.y, pc.z);
                        let j = [[1.0 / z, 0.0, -x / (z * z)], [0.0, 1.0 / z, -y / (z * z)]];
                        let mut lam = [[0.0; 2]; 2];
                        for a in 0..2 {
                            for b in 0..2 {
                                for i in 0..3 {
                                    for l in 0..3 {
                                        lam[a][b] += j[a][i] * cov[(i, l)] * j[b][l];
                                    }
                                }
                            }
                        }
                        lam[0][0] += s.blur_px2 / (cam.fx * cam.fx);
                        lam[1][1] += s.blur_px2 / (cam.fy * cam.fy);
                        let det = lam[0][0] * lam[1][1] - lam[0][1] * lam[1][0];
                        let (r0, r1) = (x / z - xn, y / z - yn);
                        let e = 0.5 * (lam[1][1] * r0 * r0 - (lam[0][1] + lam[1][0]) * r0 * r1 + lam[0][0] * r1 * r1) / det;
                        if e <= 4.5 {
                            hits.push((z, k, (-e).exp()));
                        }
                    }
                    SplatMode::TwoD => {
                        let n = rc.column(2);
                        let ray = Vec3::new(xn, yn, 1.0);
                        let rn = ray.dot(&n);
                        if rn.abs() < 1e-8 * ray.norm() {
                            continue;
                        }
                        let tt = pc.dot(&n) / rn;
                        if tt <= s.z_near {
                            continue;
                        }
                        let q = ray * tt - pc;
                        let u = q.dot(&rc.column(0)) / ws.scale.x;
                        let v = q.dot(&rc.column(1)) / ws.scale.y;
                        let e = 0.5 * (u * u + v * v);
                        if e <= 4.5 {
                            hits.push((tt, k, (-e).exp()));
                        }
                    }
                }
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut tr_, mut c, mut d, mut a) = (1.0, Vec3::zeros(), 0.0, 0.0);
            for (z, k, g) in hits {
                if tr_ < s.t_min {
                    break;
                }
                let al = (splats[k].opacity * g).min(s.alpha_max);
                c += splats[k].color * al * tr_;
                d += z * al * tr_;
                a += al * tr_;
                tr_ *= 1.0 - al;
            }
            for ch in 0..3 {
                color.set(px, py, ch, c[ch]);
            }
            depth.set(px, py, 0, d / a.max(1e-8));
            alpha.set(px, py, 0, a);
        }
    }
    (color, depth, alpha)
}

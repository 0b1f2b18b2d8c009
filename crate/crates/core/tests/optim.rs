mod common;

use common::*;
use meshsplat::geometry::{build_laplacian, primitives, GlobalTransform, Mesh};
use meshsplat::math::{Quat, Vec3};
use meshsplat::optim::{
    realign_vertices, realignment_targets, reproject_displacements, splat_grads_to_vertex_grads, DiffusionOperator, FitConfig,
    Schedule, Trainer, TrainingView,
};
use meshsplat::raster::{render, RenderSettings};
use meshsplat::splats::{AnchoredSplat, SceneGeometry, SplatMode, SplatSet};
use meshsplat::Error;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_field(n: usize, r: &mut impl Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

#[test]
fn diffusion_residual_and_mean() {
    let mesh = primitives::icosphere(3, 1.0);
    let lap = build_laplacian(&mesh).unwrap();
    let mut r = rng(1);
    for lambda in [0.5, 5.0, 20.0] {
        let op = DiffusionOperator::new(&lap, lambda).unwrap();
        for _ in 0..100 {
            let g = random_field(mesh.num_vertices(), &mut r);
            let x = op.apply(&g);
            assert!(op.relative_residual(&x, &g) <= 1e-8);
            let mg = g.iter().sum::<Vec3>() / g.len() as f64;
            let mx = x.iter().sum::<Vec3>() / x.len() as f64;
            assert!((mg - mx).norm() < 1e-10);
        }
    }
}

fn graph_distances(mesh: &Mesh, source: usize) -> Vec<usize> {
    let nb = mesh.vertex_neighbors();
    let mut dist = vec![usize::MAX; mesh.num_vertices()];
    dist[source] = 0;
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        for &w in &nb[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

#[test]
fn impulse_response_decays_with_distance() {
    let mesh = primitives::icosphere(3, 1.0);
    let op = DiffusionOperator::new(&build_laplacian(&mesh).unwrap(), 20.0).unwrap();
    for source in [0, 17, 300] {
        let mut g = vec![Vec3::zeros(); mesh.num_vertices()];
        g[source] = Vec3::x();
        let x = op.apply(&g);
        let dist = graph_distances(&mesh, source);
        let max_d = *dist.iter().max().unwrap();
        let mut shells = vec![(0.0, 0usize); max_d + 1];
        for (v, d) in dist.iter().enumerate() {
            shells[*d].0 += x[v].x.abs();
            shells[*d].1 += 1;
        }
        let means: Vec<f64> = shells.iter().map(|(s, n)| s / *n as f64).collect();
        for w in means.windows(2) {
            assert!(w[1] <= w[0], "shell means {means:?}");
        }
    }
}

#[test]
fn vertex_gradients_match_naive_loop() {
    let (mesh, tr, set, _) = random_scene(SplatMode::TwoD, 300, 2);
    let mut r = rng(3);
    let grads = random_field(set.len(), &mut r);
    let got = splat_grads_to_vertex_grads(&grads, &set, &mesh, &tr).unwrap();
    let m_inv = tr.inverse_matrix().unwrap();
    for v in 0..mesh.num_vertices() {
        let mut acc = Vec3::zeros();
        for f in 0..mesh.num_faces() {
            for (m, &fv) in mesh.faces()[f].iter().enumerate() {
                if fv != v {
                    continue;
                }
                for (k, s) in set.splats.iter().enumerate() {
                    if s.face == f {
                        acc += grads[k] * s.beta[m];
                    }
                }
            }
        }
        assert!((got[v] - m_inv * acc).norm() < 1e-12);
    }

    // Memory order of the splats does not matter.
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut r);
    let permuted = SplatSet::new(order.iter().map(|&k| set.splats[k].clone()).collect(), set.mode, mesh.num_faces());
    let pg: Vec<Vec3> = order.iter().map(|&k| grads[k]).collect();
    let again = splat_grads_to_vertex_grads(&pg, &permuted, &mesh, &tr).unwrap();
    for (a, b) in got.iter().zip(&again) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn realignment_targets_match_naive_loop() {
    let (mesh, tr, set, _) = random_scene(SplatMode::TwoD, 300, 4);
    let geom = SceneGeometry::new(&mesh, &tr).unwrap();
    let got = realignment_targets(&set, &mesh, &geom);
    for v in 0..mesh.num_vertices() {
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for s in &set.splats {
            if let Some(m) = mesh.local_index(s.face, v) {
                let p = meshsplat::splats::world_position(s, &mesh, &tr).unwrap();
                num += p * s.beta[m];
                den += s.beta[m];
            }
        }
        let expect = if den > 0.0 { num / den } else { geom.world_vertices[v] };
        assert!((got[v] - expect).norm() < 1e-12);
    }
}

#[test]
fn realignment_keeps_the_render() {
    // Corner-anchored splats all displaced by δ along the normal of a flat
    // patch: realignment lifts the patch by δ and the displacements drop to 0.
    let mesh0 = primitives::plane_grid(6, 0.25);
    let delta = 0.08;
    let mut r = rng(5);
    let mut splats = Vec::new();
    for f in 0..mesh0.num_faces() {
        for m in 0..3 {
            let mut beta = Vec3::zeros();
            beta[m] = 1.0;
            splats.push(AnchoredSplat::new(
                f,
                beta,
                delta,
                // Tilted so that no two splat planes coincide.
                Quat::from_axis_angle(Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), 0.0), r.random_range(0.1..0.4)),
                Vec3::new(0.08, 0.05, 0.05),
                0.6,
                Vec3::new(r.random(), r.random(), r.random()),
            ));
        }
    }
    let mut set = SplatSet::new(splats, SplatMode::TwoD, mesh0.num_faces());
    let tr = GlobalTransform::identity();
    let camera = meshsplat::geometry::Camera::look_at(Vec3::new(0.9, 0.6, 2.5), Vec3::new(0.75, 0.75, 0.0), Vec3::y(), 0.9, 48, 48).unwrap();
    let settings = RenderSettings::single_threaded();
    let before = SceneGeometry::new(&mesh0, &tr).unwrap();
    let (img0, _) = render(&set, &mesh0, &before, &camera, SplatMode::TwoD, &settings).unwrap();

    let op = DiffusionOperator::new(&build_laplacian(&mesh0).unwrap(), 20.0).unwrap();
    let targets = realignment_targets(&set, &mesh0, &before);
    let dv = realign_vertices(&targets, &before, &op, &tr).unwrap();
    let mut mesh1 = mesh0.clone();
    for (v, d) in mesh1.vertices.iter_mut().zip(&dv) {
        *v += d;
        assert!((d - Vec3::z() * delta).norm() < 1e-10);
    }
    let after = SceneGeometry::new(&mesh1, &tr).unwrap();
    reproject_displacements(&mut set, &mesh1, &before, &after);
    assert!(set.splats.iter().all(|s| s.displacement.abs() < 1e-10));
    let (img1, _) = render(&set, &mesh1, &after, &camera, SplatMode::TwoD, &settings).unwrap();
    let diff = img0.color.data.iter().zip(&img1.color.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-6, "max pixel change {diff}");
}

fn quick_config(stages: [usize; 3]) -> FitConfig {
    let mut c = FitConfig::default();
    c.schedule.stage_iterations = stages;
    c.schedule.densify_from = 10;
    c.schedule.densify_interval = 10;
    c.schedule.realign_interval = 5;
    c.render.parallel = false;
    c
}

#[test]
fn zero_loss_scene_does_not_move() {
    let (scene, views) = small_fit(2, 24);
    let geom = scene.geometry().unwrap();
    let settings = RenderSettings::single_threaded();
    let views: Vec<TrainingView> = views
        .into_iter()
        .map(|v| {
            let (out, _) = render(&scene.splats, &scene.mesh, &geom, &v.camera, SplatMode::TwoD, &settings).unwrap();
            TrainingView {
                camera: v.camera,
                image: out.color,
            }
        })
        .collect();
    let mut t = Trainer::new(scene.clone(), views, quick_config([3, 0, 0])).unwrap();
    for _ in 0..3 {
        let report = t.step().unwrap();
        assert_eq!(report.loss.total, 0.0);
    }
    assert_eq!(t.scene.mesh.vertices, scene.mesh.vertices);
    assert_eq!(t.scene.transform, scene.transform);
    for (a, b) in t.scene.splats.splats.iter().zip(&scene.splats.splats) {
        assert_eq!(a, b);
    }
}

#[test]
fn stages_switch_mode_and_terms_at_boundaries() {
    let (scene, views) = small_fit(3, 16);
    let mut t = Trainer::new(scene, views, quick_config([2, 2, 2])).unwrap();
    let mut stages = Vec::new();
    while !t.is_finished() {
        let r = t.step().unwrap();
        stages.push(r.stage);
        assert_eq!(t.scene.splats.mode, Schedule::mode(r.stage));
        if r.stage == 2 {
            assert!(r.loss.normal > 0.0 && r.loss.dist > 0.0);
        } else {
            assert_eq!((r.loss.normal, r.loss.dist), (0.0, 0.0));
        }
    }
    assert_eq!(stages, vec![0, 0, 1, 1, 2, 2]);
    assert!(t.step().is_err());
}

#[test]
fn one_step_decreases_the_loss() {
    let (scene, views) = small_fit(4, 32);
    let mut t = Trainer::new(scene, views, quick_config([5, 0, 0])).unwrap();
    let report = t.step().unwrap();
    let after = t.evaluate_view(report.camera, 0).unwrap();
    assert!(after.total < report.loss.total, "{} -> {}", report.loss.total, after.total);
}

#[test]
fn short_run_is_deterministic_and_valid() {
    let run = || {
        let (scene, views) = small_fit(4, 24);
        let mut t = Trainer::new(scene, views, quick_config([12, 8, 6])).unwrap();
        let mut log = Vec::new();
        t.run(|t, r| {
            assert!(t.scene.splats.splats.iter().all(|s| s.beta_is_valid(1e-9)));
            assert!(t.scene.splats.index_is_consistent());
            assert_eq!(t.state.splat_count(), t.scene.splats.len());
            assert!(r.min_face_area > meshsplat::geometry::EPS_AREA);
            log.push(r.csv_row());
            Ok(())
        })
        .unwrap();
        (log, t.scene.mesh.vertices.clone())
    };
    let (a, va) = run();
    let (b, vb) = run();
    assert_eq!(a.len(), 26);
    assert_eq!(a, b);
    assert_eq!(va, vb);
}

#[test]
fn non_finite_targets_abort() {
    let (scene, mut views) = small_fit(2, 16);
    for v in &mut views {
        v.image.data[5] = f64::NAN;
    }
    let mut t = Trainer::new(scene, views, quick_config([2, 0, 0])).unwrap();
    match t.step() {
        Err(Error::NonFinite { iteration, detail }) => {
            assert_eq!(iteration, 0);
            assert!(detail.contains("view"), "{detail}");
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn mismatched_views_are_rejected() {
    let (scene, mut views) = small_fit(2, 16);
    views[1].image = meshsplat::image::Image::new(8, 8, 3);
    assert!(matches!(Trainer::new(scene, views, quick_config([1, 0, 0])), Err(Error::DimensionMismatch(_))));
}

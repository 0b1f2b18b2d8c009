use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use meshsplat::bake::{refine_texture, render_baked, tessellate_baked, AttributeAtlas, BakeContext, RefineView};
use meshsplat::geometry::{Camera, GlobalTransform, Mesh};
use meshsplat::gradient_analysis::check_gradients as run_checks;
use meshsplat::image::Image;
use meshsplat::io::{
    load_scene, read_cameras, read_charts, read_pfm, read_png, save_scene, write_cameras, write_charts, write_obj, write_pfm,
    write_png, ChartTable, RunConfig, TextureKind,
};
use meshsplat::math::Vec3;
use meshsplat::optim::{Scene, StepReport, Trainer, TrainingView};
use meshsplat::raster::render;
use meshsplat::splats::{seed_splats, SplatMode};
use meshsplat::synth::{synthesize, Texture};
use meshsplat::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Failure, RenderKind};

/// Errors while reading user-supplied inputs are bad input regardless of kind.
fn input<T>(r: meshsplat::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::BadInput(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn texture(cfg: &RunConfig, mesh: &Mesh) -> Texture {
    match cfg.synth_texture {
        TextureKind::Checker => Texture::Checker {
            cell: cfg.synth_checker_cell,
            a: Vec3::new(0.9, 0.35, 0.2),
            b: Vec3::new(0.2, 0.55, 0.9),
        },
        TextureKind::Uniform => Texture::Uniform(Vec3::repeat(0.6)),
        TextureKind::Faces => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Texture::FaceColors(
                (0..mesh.num_faces())
                    .map(|_| Vec3::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)))
                    .collect(),
            )
        }
    }
}

fn image_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("{i:03}.png"))
}

fn write_views(dir: &Path, cameras: &[Camera], images: &[&Image], camera_file: &Path) -> Result<(), Failure> {
    create_dir(dir)?;
    for (i, img) in images.iter().enumerate() {
        write_png(&image_path(dir, i), img)?;
    }
    write_cameras(camera_file, cameras)?;
    Ok(())
}

/// Loads `cameras.json` and `images/NNN.png` from a dataset directory.
fn read_views(data: &Path) -> Result<Vec<TrainingView>, Failure> {
    let cameras = input(read_cameras(&data.join("cameras.json")))?;
    let mut views = Vec::with_capacity(cameras.len());
    for (i, camera) in cameras.into_iter().enumerate() {
        let image = input(read_png(&image_path(&data.join("images"), i)))?;
        if (image.width, image.height) != (camera.width, camera.height) || image.channels < 3 {
            return Err(Failure::BadInput(format!(
                "image {i} is {}x{}x{}, camera expects {}x{} RGB",
                image.width, image.height, image.channels, camera.width, camera.height
            )));
        }
        let image = if image.channels == 3 {
            image
        } else {
            let data = (0..image.num_pixels()).flat_map(|p| image.pixel(p)[..3].to_vec()).collect();
            Image::from_data(image.width, image.height, 3, data)?
        };
        views.push(TrainingView { camera, image });
    }
    if views.is_empty() {
        return Err(Failure::BadInput(format!("{}: no training views", data.display())));
    }
    Ok(views)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mesh = input(cfg.synth_target.load(Path::new(".")))?;
    if !mesh.is_closed() {
        return Err(Failure::BadInput("synthesis target must be a closed mesh".into()));
    }
    let tex = texture(cfg, &mesh);
    let data = synthesize(&mesh, &tex, &cfg.synth, cfg.fit.render.parallel)?;
    let held = |i: usize| cfg.synth_holdout_every > 0 && (i + 1) % cfg.synth_holdout_every == 0;
    let split = |keep: bool| -> (Vec<Camera>, Vec<&Image>) {
        data.cameras
            .iter()
            .zip(&data.images)
            .enumerate()
            .filter(|(i, _)| held(*i) != keep)
            .map(|(_, (c, img))| (c.clone(), img))
            .unzip()
    };
    create_dir(out)?;
    let (cams, imgs) = split(true);
    write_views(&out.join("images"), &cams, &imgs, &out.join("cameras.json"))?;
    let (cams, imgs) = split(false);
    write_views(&out.join("holdout"), &cams, &imgs, &out.join("holdout_cameras.json"))?;
    write_obj(&out.join("target.obj"), &mesh, &mesh.vertices, None)?;
    write_text(&out.join("config.txt"), &cfg.snapshot())?;
    info!("wrote {} training and {} held-out views to {}", data.cameras.len() - cams.len(), cams.len(), out.display());
    Ok(())
}

pub fn fit(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let views = read_views(data)?;
    let template = input(cfg.template.load(Path::new(".")))?;
    let mut fit_cfg = cfg.fit.clone();
    fit_cfg.seed = cfg.seed;
    let mode = meshsplat::optim::Schedule::mode(0);
    let splats = seed_splats(&template, cfg.seed_per_face, mode, &cfg.seed_splats);
    let scene = Scene {
        mesh: template,
        transform: GlobalTransform::identity(),
        splats,
    };
    let mut trainer = Trainer::new(scene, views, fit_cfg)?;
    create_dir(out)?;
    write_text(&out.join("config.txt"), &cfg.snapshot())?;
    let log_path = out.join("log.csv");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Failure::Runtime(format!("{}: {e}", log_path.display())))?);
    writeln!(log, "{}", StepReport::csv_header())?;
    let total = trainer.config.schedule.total();
    let interval = cfg.checkpoint_interval;
    trainer.run(|tr, r| {
        writeln!(log, "{}", r.csv_row())?;
        let done = r.iteration + 1;
        if interval > 0 && done % interval == 0 && done < total {
            save_scene(&out.join("checkpoints").join(format!("iter_{done}")), &tr.scene)?;
        }
        if done % 100 == 0 || done == total {
            info!("iteration {done}/{total} stage {} loss {:.5} splats {}", r.stage, r.loss.total, r.splats);
        }
        Ok(())
    })?;
    log.flush()?;
    save_scene(&out.join("final"), &trainer.scene)?;
    let geom = trainer.scene.geometry()?;
    write_obj(&out.join("mesh_world.obj"), &trainer.scene.mesh, &geom.world_vertices, None)?;
    info!("fit finished: {} splats, outputs in {}", trainer.scene.splats.len(), out.display());
    Ok(())
}

fn atlas_paths(dir: &Path) -> [PathBuf; 4] {
    ["diffuse.png", "normal.png", "displacement.pfm", "charts.json"].map(|f| dir.join(f))
}

pub fn bake(cfg: &RunConfig, scene_dir: &Path, out: &Path, data: Option<&Path>) -> Result<(), Failure> {
    let scene = input(load_scene(scene_dir))?;
    let ctx = BakeContext::new(&scene, &cfg.bake)?;
    let violations = ctx.hop_limit_violations().len();
    if violations > 0 {
        info!("{violations} texels see splats beyond the {}-hop neighborhood", cfg.bake.hops);
    }
    let mut atlas = ctx.bake_all();
    create_dir(out)?;
    if let Some(data) = data {
        let views = read_views(data)?;
        let geom = scene.geometry()?;
        let depths = views
            .iter()
            .map(|v| Ok(render(&scene.splats, &scene.mesh, &geom, &v.camera, SplatMode::TwoD, &cfg.fit.render)?.0.depth))
            .collect::<Result<Vec<_>, Error>>()?;
        let refine_views: Vec<RefineView> = views
            .iter()
            .zip(&depths)
            .map(|(v, d)| RefineView {
                camera: &v.camera,
                image: &v.image,
                depth: d,
            })
            .collect();
        let (refined, report) = refine_texture(&atlas, &scene, &refine_views, &cfg.refine)?;
        let mut csv = String::from("iteration,error\n");
        for (i, e) in report.errors.iter().enumerate() {
            csv.push_str(&format!("{i},{e:.9e}\n"));
        }
        write_text(&out.join("refine.csv"), &csv)?;
        info!(
            "refined {} texels ({} unseen), error {:.5} -> {:.5}",
            report.visible_texels,
            report.unseen.len(),
            report.errors.first().copied().unwrap_or(0.0),
            report.errors.last().copied().unwrap_or(0.0)
        );
        atlas = refined;
    }
    let [diffuse, normal, displacement, charts] = atlas_paths(out);
    write_png(&diffuse, &atlas.diffuse)?;
    write_png(&normal, &atlas.normal)?;
    write_pfm(&displacement, &atlas.displacement)?;
    write_charts(
        &charts,
        &ChartTable {
            width: atlas.width(),
            height: atlas.height(),
            charts: atlas.charts.clone(),
        },
    )?;
    let geom = scene.geometry()?;
    write_obj(&out.join("mesh.obj"), &scene.mesh, &geom.world_vertices, Some(&atlas))?;
    info!("atlas {}x{} written to {}", atlas.width(), atlas.height(), out.display());
    Ok(())
}

fn read_atlas(dir: &Path, num_faces: usize) -> Result<AttributeAtlas, Failure> {
    let [diffuse, normal, displacement, charts] = atlas_paths(dir);
    let table = input(read_charts(&charts))?;
    let atlas = AttributeAtlas {
        diffuse: input(read_png(&diffuse))?,
        normal: input(read_png(&normal))?,
        displacement: input(read_pfm(&displacement))?,
        charts: table.charts,
    };
    let dims_ok = [&atlas.diffuse, &atlas.normal, &atlas.displacement]
        .iter()
        .all(|img| (img.width, img.height) == (table.width, table.height));
    let channels_ok = (atlas.diffuse.channels, atlas.normal.channels, atlas.displacement.channels) == (4, 3, 1);
    if !dims_ok || !channels_ok {
        return Err(Failure::BadInput(format!("{}: atlas images disagree with charts.json", dir.display())));
    }
    if atlas.charts.len() != num_faces || atlas.charts.iter().enumerate().any(|(f, c)| c.face != f) {
        return Err(Failure::BadInput(format!(
            "{}: {} charts for a mesh with {num_faces} faces",
            dir.display(),
            atlas.charts.len()
        )));
    }
    Ok(atlas)
}

pub fn render_view(
    cfg: &RunConfig,
    scene_dir: &Path,
    cameras: &Path,
    index: usize,
    mode: RenderKind,
    atlas_dir: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let scene = input(load_scene(scene_dir))?;
    let cams = input(read_cameras(cameras))?;
    let camera = cams
        .get(index)
        .ok_or_else(|| Failure::BadInput(format!("camera {index} out of range ({} cameras)", cams.len())))?;
    let path = |suffix: &str| {
        let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(format!("_{suffix}"));
        out.with_file_name(name)
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    match mode {
        RenderKind::Baked => {
            let dir = atlas_dir.ok_or_else(|| Failure::BadInput("--mode baked needs --atlas".into()))?;
            let atlas = read_atlas(dir, scene.mesh.num_faces())?;
            let baked = tessellate_baked(&atlas, &scene, cfg.tessellation)?;
            let img = render_baked(&baked, &atlas, camera, cfg.fit.render.parallel)?;
            write_png(&path("color.png"), &img.color)?;
            write_png(&path("alpha.png"), &img.mask)?;
            write_pfm(&path("depth.pfm"), &img.depth)?;
        }
        RenderKind::Splat2d | RenderKind::Splat3d => {
            let splat_mode = if mode == RenderKind::Splat2d { SplatMode::TwoD } else { SplatMode::ThreeD };
            let geom = scene.geometry()?;
            let (img, _) = render(&scene.splats, &scene.mesh, &geom, camera, splat_mode, &cfg.fit.render)?;
            write_png(&path("color.png"), &img.color)?;
            write_png(&path("alpha.png"), &img.alpha)?;
            write_pfm(&path("depth.pfm"), &img.depth)?;
            if splat_mode == SplatMode::TwoD {
                let mut n = img.normal.clone();
                for p in 0..n.num_pixels() {
                    let px = n.pixel_mut(p);
                    let len = (px[0] * px[0] + px[1] * px[1] + px[2] * px[2]).sqrt();
                    for c in px.iter_mut() {
                        *c = if len > 0.0 { 0.5 * (*c / len + 1.0) } else { 0.0 };
                    }
                }
                write_png(&path("normal.png"), &n)?;
            }
        }
    }
    info!("rendered camera {index} to {}", path("color.png").display());
    Ok(())
}

pub fn check_gradients(trials: usize, seed: u64) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::BadInput("--trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let report = run_checks(trials, seed, &mut rng);
    println!("{report}");
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Runtime("gradient check failed".into()))
    }
}

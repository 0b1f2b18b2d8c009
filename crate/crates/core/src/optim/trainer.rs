use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{realign_vertices, realignment_targets, reproject_displacements, splat_grads_to_vertex_grads};
use super::{Adam, DiffusionOperator, FitConfig, Schedule};
use crate::error::{Error, Result};
use crate::geometry::{build_laplacian, Camera, GlobalTransform, LaplacianMatrix, Mesh};
use crate::image::Image;
use crate::losses::{evaluate, LossInputs, LossReport, LossWeights};
use crate::math::{Quat, Vec3};
use crate::raster::{backward, chain_to_params, render, ParamGrads};
use crate::splats::{
    densify_and_prune, reanchor_walk, reset_opacity, DensifyReport, GradientStats, SceneGeometry, SplatMode, SplatSet,
    EPS_SCALE,
};

/// Template mesh, global transform and anchored splats.
#[derive(Clone, Debug)]
pub struct Scene {
    pub mesh: Mesh,
    pub transform: GlobalTransform,
    pub splats: SplatSet,
}

impl Scene {
    pub fn geometry(&self) -> Result<SceneGeometry> {
        SceneGeometry::new(&self.mesh, &self.transform)
    }
}

#[derive(Clone, Debug)]
pub struct TrainingView {
    pub camera: Camera,
    pub image: Image,
}

/// Optimizer moments, vertex momentum and progress counters.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub beta: Adam,
    pub displacement: Adam,
    pub rotation: Adam,
    pub log_scale: Adam,
    pub opacity: Adam,
    pub color: Adam,
    pub transform: Adam,
    pub transform_steps: usize,
    pub vertex_momentum: Vec<Vec3>,
    pub vertex_second_moment: f64,
    pub iteration: usize,
    pub stage: Option<usize>,
}

impl OptimState {
    pub fn new(num_splats: usize, num_vertices: usize) -> Self {
        Self {
            beta: Adam::new(3 * num_splats),
            displacement: Adam::new(num_splats),
            rotation: Adam::new(4 * num_splats),
            log_scale: Adam::new(3 * num_splats),
            opacity: Adam::new(num_splats),
            color: Adam::new(3 * num_splats),
            transform: Adam::new(10),
            transform_steps: 0,
            vertex_momentum: vec![Vec3::zeros(); num_vertices],
            vertex_second_moment: 0.0,
            iteration: 0,
            stage: None,
        }
    }

    fn remap(&mut self, origin: &[Option<usize>]) {
        self.beta.remap(origin, 3);
        self.displacement.remap(origin, 1);
        self.rotation.remap(origin, 4);
        self.log_scale.remap(origin, 3);
        self.opacity.remap(origin, 1);
        self.color.remap(origin, 3);
    }

    pub fn splat_count(&self) -> usize {
        self.opacity.len()
    }
}

/// Summary of one iteration.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub iteration: usize,
    pub stage: usize,
    pub camera: usize,
    pub splats: usize,
    pub loss: LossReport,
    pub max_walk_steps: usize,
    pub flagged_walks: usize,
    pub min_face_area: f64,
    pub densify: Option<DensifyReport>,
    pub realigned: bool,
}

impl StepReport {
    pub fn csv_header() -> String {
        format!("{},stage,camera,splats,min_face_area", LossReport::csv_header())
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.9e}",
            self.loss.csv_row(self.iteration),
            self.stage,
            self.camera,
            self.splats,
            self.min_face_area
        )
    }
}

pub struct Trainer {
    pub config: FitConfig,
    pub scene: Scene,
    pub views: Vec<TrainingView>,
    pub state: OptimState,
    laplacian: LaplacianMatrix,
    diffusion: DiffusionOperator,
    stats: GradientStats,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    diameter: f64,
    mean_edge: f64,
}

impl Trainer {
    pub fn new(scene: Scene, views: Vec<TrainingView>, config: FitConfig) -> Result<Self> {
        config.validate()?;
        if views.is_empty() {
            return Err(Error::InvalidArgument("training needs at least one view".into()));
        }
        for (i, v) in views.iter().enumerate() {
            v.camera.validate()?;
            if v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels != 3 {
                return Err(Error::DimensionMismatch(format!(
                    "view {i}: image {}x{}x{} does not match camera {}x{}",
                    v.image.width, v.image.height, v.image.channels, v.camera.width, v.camera.height
                )));
            }
        }
        if scene.splats.splats.iter().any(|s| s.face >= scene.mesh.num_faces()) {
            return Err(Error::InvalidArgument("splat anchored to a missing face".into()));
        }
        let geom = scene.geometry()?;
        let world = Mesh::new(geom.world_vertices.clone(), scene.mesh.faces().to_vec())?;
        let diameter = world.diameter();
        let mean_edge = world.mean_edge_length();
        let laplacian = build_laplacian(&scene.mesh)?;
        let diffusion = DiffusionOperator::new(&laplacian, config.lambda * mean_edge)?;
        let state = OptimState::new(scene.splats.len(), scene.mesh.num_vertices());
        let stats = GradientStats::new(scene.splats.len());
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            scene,
            views,
            state,
            laplacian,
            diffusion,
            stats,
            rng,
            order: Vec::new(),
            diameter,
            mean_edge,
        })
    }

    pub fn laplacian(&self) -> &LaplacianMatrix {
        &self.laplacian
    }

    pub fn diffusion(&self) -> &DiffusionOperator {
        &self.diffusion
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn is_finished(&self) -> bool {
        self.config.schedule.stage_at(self.state.iteration).is_none()
    }

    /// Loss weights in effect, with the distortion weight divided by the
    /// scene diameter.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            dist: self.config.weights.dist / self.diameter,
            ..self.config.weights
        }
    }

    /// Loss of the current scene on one view, with the terms of `stage`.
    pub fn evaluate_view(&self, view: usize, stage: usize) -> Result<LossReport> {
        let geom = self.scene.geometry()?;
        let v = self
            .views
            .get(view)
            .ok_or_else(|| Error::InvalidArgument(format!("view {view} out of range")))?;
        let (output, tape) =
            render(&self.scene.splats, &self.scene.mesh, &geom, &v.camera, Schedule::mode(stage), &self.config.render)?;
        evaluate(
            &LossInputs {
                output: &output,
                tape: &tape,
                target: &v.image,
                normal_reference: None,
                vertices: &self.scene.mesh.vertices,
                laplacian: Some(&self.laplacian),
            },
            &self.effective_weights(),
            Schedule::active_terms(stage),
        )
    }

    /// Runs the remaining schedule, calling `on_step` after every iteration.
    pub fn run<F: FnMut(&Trainer, &StepReport) -> Result<()>>(&mut self, mut on_step: F) -> Result<()> {
        while !self.is_finished() {
            let report = self.step()?;
            on_step(self, &report)?;
        }
        Ok(())
    }

    fn enter_stage(&mut self, stage: usize) {
        let mode = Schedule::mode(stage);
        let set = &mut self.scene.splats;
        if mode == SplatMode::ThreeD && set.mode == SplatMode::TwoD {
            // Start the third axis at the thickness the 3D renderer already
            // substitutes for flat splats, so the switch is seamless.
            let ft = self.config.render.flat_thickness;
            for s in &mut set.splats {
                let sc = s.scale();
                s.log_scale.z = (ft * 0.5 * (sc.x + sc.y)).max(EPS_SCALE).ln();
            }
        }
        set.mode = mode;
        self.state.stage = Some(stage);
    }

    fn next_view(&mut self) -> usize {
        if self.order.is_empty() {
            self.order = (0..self.views.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.order.reverse();
        }
        self.order.pop().expect("order refilled")
    }

    /// One optimization iteration.
    pub fn step(&mut self) -> Result<StepReport> {
        let iteration = self.state.iteration;
        let stage = self
            .config
            .schedule
            .stage_at(iteration)
            .ok_or_else(|| Error::InvalidArgument(format!("schedule ended before iteration {iteration}")))?;
        if self.state.stage != Some(stage) {
            self.enter_stage(stage);
        }
        let mode = Schedule::mode(stage);
        let view_index = self.next_view();
        let weights = self.effective_weights();

        let geom = self.scene.geometry()?;
        let view = &self.views[view_index];
        let (output, tape) = render(&self.scene.splats, &self.scene.mesh, &geom, &view.camera, mode, &self.config.render)?;
        let loss = evaluate(
            &LossInputs {
                output: &output,
                tape: &tape,
                target: &view.image,
                normal_reference: None,
                vertices: &self.scene.mesh.vertices,
                laplacian: Some(&self.laplacian),
            },
            &weights,
            Schedule::active_terms(stage),
        )?;
        if !loss.total.is_finite() {
            return Err(self.non_finite(view_index, stage, &loss, "loss"));
        }
        let splat_grads = backward(&tape, &loss.image_grads())?;
        for (k, g) in splat_grads.screen.iter().enumerate() {
            if *g > 0.0 {
                self.stats.add(k, *g);
            }
        }
        let grads = chain_to_params(&self.scene.splats, &self.scene.mesh, &self.scene.transform, &geom, &splat_grads);
        if let Some(what) = first_non_finite(&grads, &loss) {
            return Err(self.non_finite(view_index, stage, &loss, &what));
        }

        let vertex_grad =
            splat_grads_to_vertex_grads(&grads.position, &self.scene.splats, &self.scene.mesh, &self.scene.transform)?;
        let vertex_grad: Vec<Vec3> = vertex_grad.iter().zip(&loss.vertex_grad).map(|(a, b)| a + b).collect();
        self.update_splats(&grads, mode);
        if !(self.config.freeze_transform && stage > 0) {
            self.update_transform(&grads);
        }
        self.update_vertices(&vertex_grad);
        let (max_walk_steps, flagged_walks) = self.reanchor_all()?;

        let completed = iteration + 1;
        let schedule = self.config.schedule.clone();
        let mut realigned = false;
        if schedule.realign_due(completed) {
            self.realign()?;
            realigned = true;
        }
        let mut densify = None;
        if schedule.densify_due(completed) {
            let geom = self.scene.geometry()?;
            let report = densify_and_prune(
                &mut self.scene.splats,
                &self.scene.mesh,
                &geom,
                &self.stats,
                &self.config.densify,
                &mut self.rng,
            );
            self.state.remap(&report.origin);
            self.stats.reset(self.scene.splats.len());
            densify = Some(report);
        }
        if schedule.opacity_reset_due(completed) {
            reset_opacity(&mut self.scene.splats, self.config.densify.reset_opacity);
            self.state.opacity = Adam::new(self.scene.splats.len());
        }

        let min_face_area = self.scene.mesh.min_face_area_of(&self.scene.geometry()?.world_vertices);
        self.state.iteration = completed;
        Ok(StepReport {
            iteration,
            stage,
            camera: view_index,
            splats: self.scene.splats.len(),
            loss,
            max_walk_steps,
            flagged_walks,
            min_face_area,
            densify,
            realigned,
        })
    }

    fn update_splats(&mut self, grads: &ParamGrads, mode: SplatMode) {
        let t = self.state.iteration + 1;
        let rates = self.config.rates.clone();
        let splats = &mut self.scene.splats.splats;
        let n = splats.len();

        let mut beta: Vec<f64> = splats.iter().flat_map(|s| s.beta.iter().copied().collect::<Vec<_>>()).collect();
        // Only the in-plane part of the barycentric gradient is meaningful.
        let g: Vec<f64> = grads.beta.iter().flat_map(|g| (g - Vec3::repeat(g.mean())).iter().copied().collect::<Vec<_>>()).collect();
        self.state.beta.step(&mut beta, &g, rates.position * self.diameter / self.mean_edge, t);

        let mut disp: Vec<f64> = splats.iter().map(|s| s.displacement).collect();
        self.state.displacement.step(&mut disp, &grads.displacement, rates.position * self.diameter, t);

        let mut rot: Vec<f64> = splats.iter().flat_map(|s| s.local_rotation.to_array()).collect();
        let g: Vec<f64> = grads.local_rotation.iter().flat_map(|q| q.to_array()).collect();
        self.state.rotation.step(&mut rot, &g, rates.rotation, t);

        let mut scale: Vec<f64> = splats.iter().flat_map(|s| s.log_scale.iter().copied().collect::<Vec<_>>()).collect();
        let mut g: Vec<f64> = grads.log_scale.iter().flat_map(|g| g.iter().copied().collect::<Vec<_>>()).collect();
        if mode == SplatMode::TwoD {
            g.iter_mut().skip(2).step_by(3).for_each(|v| *v = 0.0);
        }
        self.state.log_scale.step(&mut scale, &g, rates.scale, t);

        let mut opacity: Vec<f64> = splats.iter().map(|s| s.opacity_logit).collect();
        self.state.opacity.step(&mut opacity, &grads.opacity_logit, rates.opacity, t);

        let mut color: Vec<f64> = splats.iter().flat_map(|s| s.color.iter().copied().collect::<Vec<_>>()).collect();
        let g: Vec<f64> = grads.color.iter().flat_map(|g| g.iter().copied().collect::<Vec<_>>()).collect();
        self.state.color.step(&mut color, &g, rates.color, t);

        for (k, s) in splats.iter_mut().enumerate().take(n) {
            s.beta = Vec3::new(beta[3 * k], beta[3 * k + 1], beta[3 * k + 2]);
            s.displacement = disp[k];
            let q = Quat::new(rot[4 * k], rot[4 * k + 1], rot[4 * k + 2], rot[4 * k + 3]);
            if q.norm() > 0.0 {
                s.local_rotation = q.normalized();
            }
            s.log_scale = Vec3::new(scale[3 * k], scale[3 * k + 1], scale[3 * k + 2]).map(|l| l.max(EPS_SCALE.ln()));
            s.opacity_logit = opacity[k];
            s.color = Vec3::new(color[3 * k], color[3 * k + 1], color[3 * k + 2]);
        }
    }

    fn update_transform(&mut self, grads: &ParamGrads) {
        self.state.transform_steps += 1;
        let tr = &mut self.scene.transform;
        let mut p: Vec<f64> = tr.scale.iter().chain(&tr.rotation).chain(&tr.translation).copied().collect();
        let g = &grads.transform;
        let gv: Vec<f64> = g.scale.iter().copied().chain(g.rotation.to_array()).chain(g.translation.iter().copied()).collect();
        self.state.transform.step(&mut p, &gv, self.config.rates.transform, self.state.transform_steps);
        let q = Quat::new(p[3], p[4], p[5], p[6]);
        if q.norm() > 0.0 {
            tr.rotation = q.normalized().to_array();
        }
        for i in 0..3 {
            tr.scale[i] = p[i].max(1e-6);
            tr.translation[i] = p[7 + i];
        }
    }

    fn update_vertices(&mut self, grad: &[Vec3]) {
        let mu = self.config.momentum;
        let diffused = self.diffusion.apply(grad);
        let carried = if self.config.diffuse_momentum {
            self.diffusion.apply(&self.state.vertex_momentum)
        } else {
            self.state.vertex_momentum.clone()
        };
        self.state.vertex_momentum = carried.iter().zip(&diffused).map(|(m, g)| m * mu + g).collect();

        let n = grad.len().max(1) as f64;
        let power = diffused.iter().map(|g| g.norm_squared()).sum::<f64>() / n;
        let b2 = self.config.vertex_beta2;
        self.state.vertex_second_moment = b2 * self.state.vertex_second_moment + (1.0 - b2) * power;
        let corrected = self.state.vertex_second_moment / (1.0 - b2.powi(self.state.iteration as i32 + 1));
        if !(corrected > 0.0) {
            return;
        }
        let step = self.config.rates.vertex * self.diameter * (1.0 - mu) / corrected.sqrt();
        for (v, m) in self.scene.mesh.vertices.iter_mut().zip(&self.state.vertex_momentum) {
            *v -= m * step;
        }
    }

    /// Walks every splat back onto the simplex, keeping its world rotation
    /// when it changes face.
    fn reanchor_all(&mut self) -> Result<(usize, usize)> {
        let geom = self.scene.geometry()?;
        let mut max_steps = 0;
        let mut flagged = 0;
        let mut moved = false;
        for s in &mut self.scene.splats.splats {
            let (mut out, outcome) = reanchor_walk(s, &self.scene.mesh);
            max_steps = max_steps.max(outcome.steps);
            flagged += outcome.flagged as usize;
            if out.face != s.face {
                moved = true;
                let world = s.local_rotation.mul(geom.face_frames[s.face]);
                out.local_rotation = world.mul(geom.face_frames[out.face].conj()).normalized();
            }
            *s = out;
        }
        if moved {
            self.scene.splats.rebuild_index(self.scene.mesh.num_faces());
        }
        Ok((max_steps, flagged))
    }

    /// Pulls vertices toward the splat centers and removes the absorbed
    /// offset from the displacements.
    pub fn realign(&mut self) -> Result<()> {
        let before = self.scene.geometry()?;
        let targets = realignment_targets(&self.scene.splats, &self.scene.mesh, &before);
        let dv = realign_vertices(&targets, &before, &self.diffusion, &self.scene.transform)?;
        for (v, d) in self.scene.mesh.vertices.iter_mut().zip(&dv) {
            *v += d;
        }
        let after = self.scene.geometry()?;
        reproject_displacements(&mut self.scene.splats, &self.scene.mesh, &before, &after);
        Ok(())
    }

    fn non_finite(&self, view: usize, stage: usize, loss: &LossReport, what: &str) -> Error {
        Error::NonFinite {
            iteration: self.state.iteration,
            detail: format!(
                "{what} (stage {stage}, view {view}, splats {}, photo {:e}, ssim {:e}, normal {:e}, dist {:e}, transform {:?})",
                self.scene.splats.len(),
                loss.photo,
                loss.ssim,
                loss.normal,
                loss.dist,
                self.scene.transform
            ),
        }
    }
}

fn first_non_finite(g: &ParamGrads, loss: &LossReport) -> Option<String> {
    let v3 = |name: &str, v: &[Vec3]| v.iter().position(|x| !x.iter().all(|c| c.is_finite())).map(|i| format!("{name} gradient of item {i}"));
    let s = |name: &str, v: &[f64]| v.iter().position(|x| !x.is_finite()).map(|i| format!("{name} gradient of item {i}"));
    v3("barycentric", &g.beta)
        .or_else(|| s("displacement", &g.displacement))
        .or_else(|| g.local_rotation.iter().position(|q| !q.is_finite()).map(|i| format!("rotation gradient of item {i}")))
        .or_else(|| v3("log-scale", &g.log_scale))
        .or_else(|| s("opacity", &g.opacity_logit))
        .or_else(|| v3("color", &g.color))
        .or_else(|| v3("vertex", &g.template_vertices))
        .or_else(|| v3("regularizer", &loss.vertex_grad))
        .or_else(|| {
            let t = &g.transform;
            (!(t.scale.iter().chain(t.translation.iter()).all(|c| c.is_finite()) && t.rotation.is_finite()))
                .then(|| "transform gradient".to_string())
        })
}

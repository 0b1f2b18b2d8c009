use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{walk_barycentric, SceneGeometry, SplatSet};
use crate::geometry::Mesh;
use crate::math::Vec3;

#[derive(Clone, Debug)]
pub struct DensifyConfig {
    /// Mean screen-space positional gradient above which a splat is densified.
    pub grad_threshold: f64,
    /// Splats whose largest scale exceeds this fraction of the mean edge are
    /// split; smaller ones are cloned.
    pub split_scale_fraction: f64,
    pub prune_opacity: f64,
    pub reset_opacity: f64,
    /// Clone jitter, in barycentric units.
    pub clone_jitter: f64,
    pub max_splats: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            split_scale_fraction: 0.3,
            prune_opacity: 0.005,
            reset_opacity: 0.1,
            clone_jitter: 0.05,
            max_splats: 200_000,
        }
    }
}

/// Running mean of per-splat screen-space gradient norms between
/// densification passes.
#[derive(Clone, Debug, Default)]
pub struct GradientStats {
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl GradientStats {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn add(&mut self, splat: usize, norm: f64) {
        if norm.is_finite() {
            self.sum[splat] += norm;
            self.count[splat] += 1;
        }
    }

    pub fn mean(&self, splat: usize) -> f64 {
        match self.count[splat] {
            0 => 0.0,
            c => self.sum[splat] / c as f64,
        }
    }

    pub fn reset(&mut self, n: usize) {
        *self = Self::new(n);
    }
}

#[derive(Clone, Debug, Default)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    /// For each output splat, the input splat whose optimizer state it keeps
    /// (`None` for newly created children).
    pub origin: Vec<Option<usize>>,
}

/// Clones, splits and prunes splats in place.
pub fn densify_and_prune<R: Rng>(
    set: &mut SplatSet,
    mesh: &Mesh,
    geom: &SceneGeometry,
    stats: &GradientStats,
    config: &DensifyConfig,
    rng: &mut R,
) -> DensifyReport {
    let split_size = config.split_scale_fraction * geom.mean_edge_length(mesh);
    let mut report = DensifyReport::default();
    let mut kept = Vec::with_capacity(set.len());
    let mut children = Vec::new();
    let mut budget = config.max_splats.saturating_sub(set.len());

    for (k, splat) in set.splats.iter().enumerate() {
        if splat.opacity() < config.prune_opacity {
            report.pruned += 1;
            continue;
        }
        let hot = k < stats.len() && stats.mean(k) > config.grad_threshold;
        if !hot || budget == 0 {
            kept.push((splat.clone(), Some(k)));
            continue;
        }
        let scale = splat.scale();
        let in_plane = if set.mode == super::SplatMode::TwoD { scale.x.max(scale.y) } else { scale.max() };
        if in_plane <= split_size {
            let mut child = splat.clone();
            let jitter = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let jitter = (jitter - Vec3::repeat(jitter.mean())) * config.clone_jitter;
            let beta = (splat.beta + jitter).map(|b| b.max(0.0));
            child.beta = beta / beta.sum();
            kept.push((splat.clone(), Some(k)));
            children.push(child);
            report.cloned += 1;
            budget -= 1;
        } else {
            let world = splat.world(mesh, geom);
            let axis_index = if set.mode == super::SplatMode::TwoD {
                if scale.x >= scale.y { 0 } else { 1 }
            } else {
                scale.imax()
            };
            let axis = world.rotation_matrix.column(axis_index).into_owned();
            let [a, b, c] = geom.face_world_positions(mesh, splat.face);
            let z: f64 = StandardNormal.sample(rng);
            let offset = axis * (z.abs() * scale[axis_index]);
            let delta = barycentric_delta(a, b, c, offset);
            for sign in [1.0, -1.0] {
                let mut child = splat.clone();
                child.log_scale = splat.log_scale.map(|l| l - std::f64::consts::LN_2);
                let (face, beta, _) = walk_barycentric(mesh, splat.face, splat.beta + delta * sign);
                child.face = face;
                child.beta = beta;
                children.push(child);
            }
            report.split += 1;
            budget = budget.saturating_sub(1);
        }
    }

    report.origin = kept.iter().map(|(_, o)| *o).chain(children.iter().map(|_| None)).collect();
    set.splats = kept.into_iter().map(|(s, _)| s).chain(children).collect();
    set.rebuild_index(mesh.num_faces());
    report
}

/// In-plane barycentric change `δβ` (summing to zero) that best realizes a
/// world offset on triangle `abc`.
fn barycentric_delta(a: Vec3, b: Vec3, c: Vec3, offset: Vec3) -> Vec3 {
    let e1 = b - a;
    let e2 = c - a;
    let g = nalgebra::Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
    let rhs = nalgebra::Vector2::new(e1.dot(&offset), e2.dot(&offset));
    match g.try_inverse() {
        Some(inv) => {
            let xy = inv * rhs;
            Vec3::new(-xy.x - xy.y, xy.x, xy.y)
        }
        None => Vec3::zeros(),
    }
}

/// Caps every opacity at `o_reset`.
pub fn reset_opacity(set: &mut SplatSet, o_reset: f64) {
    for s in &mut set.splats {
        if s.opacity() > o_reset {
            s.set_opacity(o_reset);
        }
    }
}

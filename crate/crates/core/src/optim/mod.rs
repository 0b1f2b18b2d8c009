//! Joint optimization of mesh vertices, global transform and anchored splats.

mod adam;
mod diffusion;
mod trainer;
mod vertex;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use diffusion::DiffusionOperator;
pub use trainer::{OptimState, Scene, StepReport, Trainer, TrainingView};
pub use vertex::{realign_vertices, realignment_targets, reproject_displacements, splat_grads_to_vertex_grads};

use crate::error::{Error, Result};
use crate::losses::{ActiveTerms, LossWeights};
use crate::raster::RenderSettings;
use crate::splats::{DensifyConfig, SplatMode};

/// Stage lengths and the intervals of the periodic operations.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// Iterations of the 2D, 3D and final 2D stage.
    pub stage_iterations: [usize; 3],
    pub densify_interval: usize,
    pub densify_from: usize,
    pub densify_until: usize,
    pub realign_interval: usize,
    /// 0 disables opacity resets.
    pub opacity_reset_interval: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            stage_iterations: [2000, 2000, 1000],
            densify_interval: 100,
            densify_from: 500,
            densify_until: 3500,
            realign_interval: 50,
            opacity_reset_interval: 0,
        }
    }
}

impl Schedule {
    pub fn total(&self) -> usize {
        self.stage_iterations.iter().sum()
    }

    /// Stage index (0, 1, 2) of a 0-based iteration, `None` past the end.
    pub fn stage_at(&self, iteration: usize) -> Option<usize> {
        let mut end = 0;
        for (s, n) in self.stage_iterations.iter().enumerate() {
            end += n;
            if iteration < end {
                return Some(s);
            }
        }
        None
    }

    pub fn mode(stage: usize) -> SplatMode {
        if stage == 1 {
            SplatMode::ThreeD
        } else {
            SplatMode::TwoD
        }
    }

    pub fn active_terms(stage: usize) -> ActiveTerms {
        let last = stage == 2;
        ActiveTerms { normal: last, dist: last }
    }

    fn due(interval: usize, completed: usize) -> bool {
        interval > 0 && completed > 0 && completed % interval == 0
    }

    /// Whether densification runs after `completed` iterations.
    pub fn densify_due(&self, completed: usize) -> bool {
        completed >= self.densify_from && completed <= self.densify_until && Self::due(self.densify_interval, completed)
    }

    pub fn realign_due(&self, completed: usize) -> bool {
        Self::due(self.realign_interval, completed)
    }

    pub fn opacity_reset_due(&self, completed: usize) -> bool {
        completed < self.densify_until && Self::due(self.opacity_reset_interval, completed)
    }
}

/// Learning rates per parameter class.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningRates {
    /// Vertex step, in scene diameters.
    pub vertex: f64,
    /// Splat position step (barycentric and displacement), in scene diameters.
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
    pub transform: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            vertex: 1e-3,
            position: 1.6e-4,
            rotation: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            transform: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitConfig {
    pub schedule: Schedule,
    pub rates: LearningRates,
    pub weights: LossWeights,
    /// Diffusion strength per unit of mean edge length: the operator uses
    /// `λ = lambda · ē` with `ē` the initial mean world edge length.
    pub lambda: f64,
    pub momentum: f64,
    /// Diffuse the stored vertex momentum together with the new gradient.
    pub diffuse_momentum: bool,
    /// Decay of the scalar second moment that normalizes vertex steps.
    pub vertex_beta2: f64,
    /// Only stage 1 optimizes the global transform.
    pub freeze_transform: bool,
    pub densify: DensifyConfig,
    pub render: RenderSettings,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::default(),
            rates: LearningRates::default(),
            weights: LossWeights::default(),
            lambda: 20.0,
            momentum: 0.9,
            diffuse_momentum: true,
            vertex_beta2: 0.999,
            freeze_transform: true,
            densify: DensifyConfig::default(),
            render: RenderSettings::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.rates;
        let rates = [r.vertex, r.position, r.rotation, r.scale, r.opacity, r.color, r.transform];
        if rates.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("learning rates must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        if !(0.0..1.0).contains(&self.vertex_beta2) {
            return Err(Error::Config(format!("vertex_beta2 {} must lie in [0, 1)", self.vertex_beta2)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda {} must be non-negative", self.lambda)));
        }
        let w = &self.weights;
        if [w.photo, w.ssim, w.reg, w.normal, w.dist].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_boundaries() {
        let s = Schedule {
            stage_iterations: [3, 2, 1],
            ..Schedule::default()
        };
        let stages: Vec<_> = (0..7).map(|i| s.stage_at(i)).collect();
        assert_eq!(stages, vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(2), None]);
        assert_eq!(Schedule::mode(0), SplatMode::TwoD);
        assert_eq!(Schedule::mode(1), SplatMode::ThreeD);
        assert_eq!(Schedule::mode(2), SplatMode::TwoD);
        assert_eq!(Schedule::active_terms(1), ActiveTerms::default());
        assert_eq!(Schedule::active_terms(2), ActiveTerms { normal: true, dist: true });
    }

    #[test]
    fn empty_stages_are_skipped() {
        let s = Schedule {
            stage_iterations: [0, 0, 2],
            ..Schedule::default()
        };
        assert_eq!(s.stage_at(0), Some(2));
        assert_eq!(s.stage_at(2), None);
    }

    #[test]
    fn periodic_operations() {
        let s = Schedule::default();
        assert!(s.realign_due(50) && s.realign_due(100) && !s.realign_due(0) && !s.realign_due(75));
        assert!(!s.densify_due(400) && s.densify_due(500) && !s.densify_due(3600));
        assert!(!s.opacity_reset_due(1000));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(FitConfig::default().validate().is_ok());
        let mut c = FitConfig::default();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.rates.vertex = -1.0;
        assert!(c.validate().is_err());
    }
}

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bake::{BakeConfig, RefineConfig};
use crate::error::{Error, Result};
use crate::geometry::{primitives, Mesh};
use crate::optim::FitConfig;
use crate::splats::SeedConfig;
use crate::synth::SynthConfig;

/// A mesh given as a file path or a built-in primitive:
/// `icosphere:<level>:<radius>` or `cube:<subdivisions>:<half-size>`.
#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    Icosphere { level: usize, radius: f64 },
    Cube { n: usize, half: f64 },
    File(PathBuf),
}

impl MeshSource {
    /// Loads the mesh; relative file paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Mesh> {
        match self {
            MeshSource::Icosphere { level, radius } => Ok(primitives::icosphere(*level, *radius)),
            MeshSource::Cube { n, half } => Ok(primitives::cube_grid(*n, *half)),
            MeshSource::File(p) => super::read_obj(&base.join(p)),
        }
    }
}

impl FromStr for MeshSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).ok_or_else(|| format!("{s}: missing field {i}"));
        match parts[0] {
            "icosphere" if parts.len() == 3 => Ok(MeshSource::Icosphere {
                level: num(1)?.parse().map_err(|e| format!("{s}: {e}"))?,
                radius: num(2)?.parse().map_err(|e| format!("{s}: {e}"))?,
            }),
            "cube" if parts.len() == 3 => Ok(MeshSource::Cube {
                n: num(1)?.parse().map_err(|e| format!("{s}: {e}"))?,
                half: num(2)?.parse().map_err(|e| format!("{s}: {e}"))?,
            }),
            "icosphere" | "cube" => Err(format!("{s}: expected <kind>:<n>:<size>")),
            _ if s.is_empty() => Err("empty mesh source".into()),
            _ => Ok(MeshSource::File(PathBuf::from(s))),
        }
    }
}

impl fmt::Display for MeshSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSource::Icosphere { level, radius } => write!(f, "icosphere:{level}:{radius}"),
            MeshSource::Cube { n, half } => write!(f, "cube:{n}:{half}"),
            MeshSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// Procedural texture choice for synthetic targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    Checker,
    Faces,
    Uniform,
}

impl FromStr for TextureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "checker" => Ok(TextureKind::Checker),
            "faces" => Ok(TextureKind::Faces),
            "uniform" => Ok(TextureKind::Uniform),
            _ => Err(format!("unknown texture {s}")),
        }
    }
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextureKind::Checker => "checker",
            TextureKind::Faces => "faces",
            TextureKind::Uniform => "uniform",
        })
    }
}

/// Every knob of the command-line pipeline. Files use one `key = value`
/// per line with `#` comments; unknown keys are rejected.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub synth_target: MeshSource,
    pub synth_texture: TextureKind,
    pub synth_checker_cell: f64,
    /// Every `holdout_every`-th synthesized view is held out (0 keeps all).
    pub synth_holdout_every: usize,
    pub template: MeshSource,
    pub seed_per_face: usize,
    pub seed_splats: SeedConfig,
    pub fit: FitConfig,
    /// Iterations between checkpoints (0 writes only the final one).
    pub checkpoint_interval: usize,
    pub bake: BakeConfig,
    pub refine: RefineConfig,
    pub tessellation: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            synth_target: MeshSource::Icosphere { level: 4, radius: 1.0 },
            synth_texture: TextureKind::Checker,
            synth_checker_cell: 0.5,
            synth_holdout_every: 5,
            template: MeshSource::Cube { n: 11, half: 1.0 },
            seed_per_face: 3,
            seed_splats: SeedConfig::default(),
            fit: FitConfig::default(),
            checkpoint_interval: 1000,
            bake: BakeConfig::default(),
            refine: RefineConfig::default(),
            tessellation: 8,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
}

macro_rules! knobs {
    ($($key:literal => $($field:ident).+ : $doc:literal;)*) => {
        /// Every accepted key with a short description.
        pub const KEYS: &[(&str, &str)] = &[$(($key, $doc)),*];

        impl RunConfig {
            /// Sets one knob from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key {
                    $($key => self.$($field).+ = parse(key, value)?,)*
                    "fit.stage_iterations" => {
                        let v: Vec<usize> = value.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?;
                        self.fit.schedule.stage_iterations = v
                            .try_into()
                            .map_err(|_| Error::Config(format!("{key} needs three comma-separated counts")))?;
                    }
                    "bake.resolution" => {
                        let r: usize = parse(key, value)?;
                        self.bake.resolution = (r > 0).then_some(r);
                    }
                    _ => return Err(Error::Config(format!("unknown key {key}"))),
                }
                Ok(())
            }

            /// Current value of a knob as text.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.to_string()),)*
                    "fit.stage_iterations" => {
                        let s = self.fit.schedule.stage_iterations;
                        Some(format!("{},{},{}", s[0], s[1], s[2]))
                    }
                    "bake.resolution" => Some(self.bake.resolution.unwrap_or(0).to_string()),
                    _ => None,
                }
            }
        }
    };
}

knobs! {
    "seed" => seed: "seed for every stochastic choice";
    "synth.views" => synth.views: "synthesized views, including held-out ones";
    "synth.width" => synth.width: "image width in pixels";
    "synth.height" => synth.height: "image height in pixels";
    "synth.distance" => synth.distance: "camera distance in bounding radii";
    "synth.fov_x" => synth.fov_x: "horizontal field of view in radians";
    "synth.target" => synth_target: "target mesh: OBJ path, icosphere:<level>:<r> or cube:<n>:<half>";
    "synth.texture" => synth_texture: "target texture: checker, faces or uniform";
    "synth.checker_cell" => synth_checker_cell: "checker cell size in world units";
    "synth.holdout_every" => synth_holdout_every: "hold out every n-th view (0 = none)";
    "template" => template: "template mesh: OBJ path, icosphere:<level>:<r> or cube:<n>:<half>";
    "seed.per_face" => seed_per_face: "splats seeded per template face";
    "seed.scale_fraction" => seed_splats.scale_fraction: "initial splat scale in mean edge lengths";
    "seed.opacity" => seed_splats.opacity: "initial splat opacity";
    "fit.densify_interval" => fit.schedule.densify_interval: "iterations between densification passes";
    "fit.densify_from" => fit.schedule.densify_from: "first densification iteration";
    "fit.densify_until" => fit.schedule.densify_until: "last densification iteration";
    "fit.realign_interval" => fit.schedule.realign_interval: "iterations between vertex realignments (0 = off)";
    "fit.opacity_reset_interval" => fit.schedule.opacity_reset_interval: "iterations between opacity resets (0 = off)";
    "fit.lambda" => fit.lambda: "diffusion strength per mean edge length";
    "fit.momentum" => fit.momentum: "vertex momentum";
    "fit.diffuse_momentum" => fit.diffuse_momentum: "diffuse the vertex momentum with each new gradient";
    "fit.vertex_beta2" => fit.vertex_beta2: "decay of the vertex step normalizer";
    "fit.freeze_transform" => fit.freeze_transform: "optimize the global transform in the first stage only";
    "fit.checkpoint_interval" => checkpoint_interval: "iterations between checkpoints (0 = final only)";
    "lr.vertex" => fit.rates.vertex: "vertex step in scene diameters";
    "lr.position" => fit.rates.position: "splat position step in scene diameters";
    "lr.rotation" => fit.rates.rotation: "splat rotation learning rate";
    "lr.scale" => fit.rates.scale: "splat log-scale learning rate";
    "lr.opacity" => fit.rates.opacity: "splat opacity-logit learning rate";
    "lr.color" => fit.rates.color: "splat color learning rate";
    "lr.transform" => fit.rates.transform: "global transform learning rate";
    "loss.photo" => fit.weights.photo: "L1 photometric weight";
    "loss.ssim" => fit.weights.ssim: "D-SSIM weight";
    "loss.reg" => fit.weights.reg: "scale regularizer weight";
    "loss.normal" => fit.weights.normal: "normal consistency weight (last stage)";
    "loss.dist" => fit.weights.dist: "depth distortion weight per scene diameter (last stage)";
    "densify.grad_threshold" => fit.densify.grad_threshold: "mean screen gradient that triggers densification";
    "densify.split_scale_fraction" => fit.densify.split_scale_fraction: "split instead of clone above this scale (mean edges)";
    "densify.prune_opacity" => fit.densify.prune_opacity: "prune splats below this opacity";
    "densify.reset_opacity" => fit.densify.reset_opacity: "opacity cap applied by resets";
    "densify.clone_jitter" => fit.densify.clone_jitter: "barycentric jitter of clones";
    "densify.max_splats" => fit.densify.max_splats: "splat count limit";
    "render.flat_thickness" => fit.render.flat_thickness: "third scale of 2D splats in the 3D renderer (relative)";
    "bake.texel_size" => bake.texel_size: "world texel size used to size charts";
    "bake.min_resolution" => bake.min_resolution: "smallest chart resolution";
    "bake.max_resolution" => bake.max_resolution: "largest chart resolution";
    "bake.hops" => bake.hops: "face hops searched for contributing splats";
    "bake.max_depth_edges" => bake.max_depth_edges: "largest hit distance in mean edge lengths";
    "bake.sort" => bake.sort: "compositing order: outward or inward";
    "bake.sort_key" => bake.sort_key: "depth used for ordering: hit (texel line meets splat) or center";
    "bake.world_normals" => bake.world_normals: "store world-space instead of face-frame normals";
    "refine.iterations" => refine.iterations: "texture refinement steps";
    "refine.learning_rate" => refine.learning_rate: "texture refinement step size";
    "refine.depth_threshold" => refine.depth_threshold: "visibility depth tolerance";
    "render.tessellation" => tessellation: "baked mesh subdivision level";
}

/// Keys handled outside the macro.
const EXTRA_KEYS: &[(&str, &str)] = &[
    ("fit.stage_iterations", "iterations of the 2D, 3D and final stage, comma separated"),
    ("bake.resolution", "fixed chart resolution (0 = from texel size)"),
];

impl RunConfig {
    pub fn all_keys() -> impl Iterator<Item = (&'static str, &'static str)> {
        KEYS.iter().chain(EXTRA_KEYS).copied()
    }

    /// Applies `key = value` lines.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", ln + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        c.validate()?;
        Ok(c)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv} is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.bake.validate()?;
        if self.synth.views == 0 || self.synth.width == 0 || self.synth.height == 0 {
            return Err(Error::Config("synth views and image size must be positive".into()));
        }
        if self.seed_per_face == 0 || self.tessellation == 0 {
            return Err(Error::Config("seed.per_face and render.tessellation must be positive".into()));
        }
        if !(self.refine.learning_rate > 0.0) || !(self.refine.depth_threshold > 0.0) {
            return Err(Error::Config("refinement rate and depth threshold must be positive".into()));
        }
        Ok(())
    }

    /// Full snapshot in the file format, one documented key per line.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for (k, doc) in Self::all_keys() {
            s.push_str(&format!("# {doc}\n{k} = {}\n", self.get(k).unwrap_or_default()));
        }
        s
    }
}

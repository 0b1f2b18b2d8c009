//! `meshsplat` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad input.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshsplat::io::RunConfig;
use meshsplat::Error;

#[derive(Parser)]
#[command(name = "meshsplat", version, about = "Mesh-anchored splat fitting and atlas baking")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Worker threads; 1 runs everything single-threaded and deterministic.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ray-cast a textured target mesh into a training dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the template mesh and splats to a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bake diffuse, normal and displacement atlases from a fitted scene.
    Bake {
        /// Scene checkpoint directory (mesh.obj, transform.json, splats.txt).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset whose training views drive texture refinement.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Render a scene checkpoint or a baked mesh from one camera.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Cameras JSON file.
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long, default_value_t = 0)]
        camera: usize,
        #[arg(long, value_enum, default_value_t = RenderKind::Splat2d)]
        mode: RenderKind,
        /// Atlas directory written by `bake`, required for `--mode baked`.
        #[arg(long)]
        atlas: Option<PathBuf>,
        /// Output file prefix; writes `<prefix>_color.png` and friends.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the analytic projected-Gaussian derivatives.
    CheckGradients {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List every configuration key with its default.
    Keys,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RenderKind {
    #[value(name = "2d")]
    Splat2d,
    #[value(name = "3d")]
    Splat3d,
    Baked,
}

/// Error classes mapped to exit codes.
pub enum Failure {
    BadInput(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } | Error::Factorization(_) | Error::DegenerateFace { .. } | Error::Io(_) => {
                Failure::Runtime(e.to_string())
            }
            _ => Failure::BadInput(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    let parallel = common.threads != Some(1);
    cfg.fit.render.parallel = parallel;
    cfg.bake.parallel = parallel;
    cfg.refine.parallel = parallel;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::BadInput("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Synth { out } => commands::synth(&cfg, &out),
        Command::Fit { data, out } => commands::fit(&cfg, &data, &out),
        Command::Bake { scene, out, data } => commands::bake(&cfg, &scene, &out, data.as_deref()),
        Command::Render {
            scene,
            cameras,
            camera,
            mode,
            atlas,
            out,
        } => commands::render_view(&cfg, &scene, &cameras, camera, mode, atlas.as_deref(), &out),
        Command::CheckGradients { trials, seed } => commands::check_gradients(trials, seed),
        Command::Keys => {
            print!("{}", cfg.snapshot());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::BadInput(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

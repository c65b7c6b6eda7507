//! Command-line front end: scene generation, experiment runs, and
//! single-pose debug renders.
//!
//! Exit codes are a stable contract: 0 on success, 2 for configuration or
//! input errors, 3 for runtime failures (a stuck planner).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcexplore_core::harness::{
    self, ExperimentConfig, PowerModel, SceneSource, StartPose,
};
use mcexplore_core::geom::Vec3;
use mcexplore_core::scene::{drydock_classes, load_scene, make_drydock, save_scene};
use mcexplore_core::sensor::{camera_pose, depth_to_pgm, load_rig, render_depth, Pose, Rig};
use mcexplore_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "mcexplore",
    version,
    about = "Multi-camera UAV exploration simulator",
    propagate_version = true
)]
struct Cli {
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dry-dock scene and write it as JSON.
    GenScene(GenSceneArgs),
    /// Run the exploration experiment and write coverage CSVs plus a summary.
    Run(RunArgs),
    /// Render one 16-bit depth PGM per rig camera from a fixed pose.
    Render(RenderArgs),
}

#[derive(Args)]
struct GenSceneArgs {
    /// Interior dock length in meters.
    #[arg(long, default_value_t = 20.0)]
    length: f64,
    /// Interior dock width in meters.
    #[arg(long, default_value_t = 12.0)]
    width: f64,
    /// Wall height in meters.
    #[arg(long, default_value_t = 6.0)]
    depth: f64,
    /// Wall and floor slab thickness in meters.
    #[arg(long, default_value_t = 0.4)]
    wall_thickness: f64,
    /// Output scene JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; defaults apply for every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene JSON overriding the config's scene source.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Rig JSON replacing the camera-count presets.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated RNG seeds overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Iterations per episode overriding the config.
    #[arg(long)]
    iters: Option<usize>,
    /// Comma-separated camera counts (1-5) selecting rig presets.
    #[arg(long, value_delimiter = ',')]
    cameras: Option<Vec<usize>>,
    /// Pixel stride of the depth-to-cloud conversion.
    #[arg(long)]
    stride: Option<u32>,
    /// Start pose "x,y,z,yaw" overriding the config.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    start: Option<Vec<f64>>,
}

#[derive(Args)]
struct RenderArgs {
    /// Scene JSON to render.
    #[arg(long)]
    scene: PathBuf,
    /// Rig JSON; omit to use a camera-count preset.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Preset camera count used when no rig file is given.
    #[arg(long, default_value_t = 5)]
    cameras: usize,
    /// Body pose as "x,y,z,yaw".
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        default_values_t = [0.0, 0.0, 1.5, 0.0]
    )]
    pose: Vec<f64>,
    /// Output directory for the PGM files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn cmd_gen_scene(args: &GenSceneArgs, quiet: bool) -> Result<()> {
    let scene = make_drydock(
        args.length,
        args.width,
        args.depth,
        args.wall_thickness,
        drydock_classes(),
    )?;
    save_scene(&scene, &args.out)?;
    if !quiet {
        println!(
            "wrote {} with {} boxes",
            args.out.display(),
            scene.boxes().len()
        );
    }
    Ok(())
}

fn cmd_run(args: &RunArgs, quiet: bool) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => harness::load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.scene {
        config.scene = SceneSource::File { path: path.clone() };
    }
    if let Some(path) = &args.rig {
        config.rig_file = Some(path.clone());
    }
    if let Some(cameras) = &args.cameras {
        // An explicit preset list beats any rig file.
        config.rig_variants = cameras.clone();
        config.rig_file = None;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(iters) = args.iters {
        config.iterations = iters;
    }
    if let Some(stride) = args.stride {
        config.sense.stride = stride;
    }
    if let Some(start) = &args.start {
        if start.len() != 4 {
            return Err(Error::invalid("--start needs exactly x,y,z,yaw"));
        }
        config.start = Some(StartPose {
            position: [start[0], start[1], start[2]],
            yaw: start[3],
        });
    }
    config.validate()?;

    let scene = config.scene.load()?;
    let outcome = harness::run_experiment(&scene, &config)?;
    let selection = harness::select_design(
        &outcome.curves,
        &PowerModel::default(),
        config.sense_rate,
    )?;
    let summary = harness::build_summary(&outcome.curves, &selection, &config)?;
    harness::write_outputs(&args.out, &outcome, &summary)?;

    if !quiet {
        for v in &summary.variants {
            println!(
                "M={}: final occupied {:.1}, budget {} iterations, score {:.1}",
                v.m, v.final_mean_occupied, v.budget_iterations, v.score
            );
        }
        println!(
            "selected M={}; outputs in {}",
            summary.selected_m,
            args.out.display()
        );
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs, quiet: bool) -> Result<()> {
    if args.pose.len() != 4 {
        return Err(Error::invalid("--pose needs exactly x,y,z,yaw"));
    }
    let scene = load_scene(&args.scene)?;
    let rig = match &args.rig {
        Some(path) => load_rig(path)?,
        None => Rig::preset(args.cameras)?,
    };
    let pose = Pose::new(
        Vec3::new(args.pose[0], args.pose[1], args.pose[2]),
        args.pose[3],
    )?;
    if !scene.bounds().contains(&pose.position) {
        return Err(Error::invalid(format!(
            "pose ({}, {}, {}) lies outside the scene bounds",
            args.pose[0], args.pose[1], args.pose[2]
        )));
    }
    std::fs::create_dir_all(&args.out)?;
    for mount in rig.mounts() {
        let cam = camera_pose(&pose, mount);
        let depth = render_depth(&scene, &cam, &mount.intrinsics)?;
        let path = args.out.join(format!("depth_{}.pgm", mount.name));
        std::fs::write(&path, depth_to_pgm(&depth))?;
        if !quiet {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenScene(args) => cmd_gen_scene(args, cli.quiet),
        Command::Run(args) => cmd_run(args, cli.quiet),
        Command::Render(args) => cmd_render(args, cli.quiet),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::PlanningStuck(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

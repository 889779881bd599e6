//! vistac: visuo-tactile sparse-view reconstruction pipeline.
//!
//! Subcommands cover the full loop: synth -> carve -> train ->
//! select-touches -> touch-sim -> refine -> eval, plus export-ply and
//! run-all. Exit codes: 0 ok, 2 config error, 3 stage-input error,
//! 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vistac_core::oracle::{Material, Shape};
use vistac_core::pipeline::{self, read_stage_meta, OracleSpec, PipelineConfig, RankerMode};
use vistac_core::Error;

#[derive(Parser)]
#[command(name = "vistac", version, about = "Visuo-tactile sparse-view 3D reconstruction")]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Pipeline configuration JSON; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset when no config file is given.
    #[arg(long, global = true, value_parser = ["desk", "paper"], default_value = "desk")]
    profile: String,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Train on the first N frames and evaluate on the rest.
    #[arg(long, global = true)]
    train_views: Option<usize>,
    /// Evaluate on exactly the last N frames.
    #[arg(long, global = true)]
    eval_views: Option<usize>,
    /// Number of touches (0 disables the touch stages).
    #[arg(long, global = true)]
    touches: Option<usize>,
    /// Common-sense ranker backend.
    #[arg(long, global = true, value_parser = ["mock", "remote", "none"])]
    ranker: Option<String>,
    /// Total training iterations.
    #[arg(long, global = true)]
    iterations: Option<u64>,
    /// Iteration densification begins at.
    #[arg(long, global = true)]
    densify_start: Option<u64>,
    /// Iteration the anchor Gaussians are inserted at.
    #[arg(long, global = true)]
    anchor_iteration: Option<u64>,
    /// Hull voxel resolution, meters.
    #[arg(long, global = true)]
    hull_resolution: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from the oracle.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_shape)]
        shape: Option<Shape>,
        #[arg(long, value_parser = parse_material)]
        material: Option<Material>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
    },
    /// Carve the visual hull and generate seed points.
    Carve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the global scene up to the anchor-insert pause.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        carve: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank and order the touch points.
    SelectTouches {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        carve: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the planned touches with the gel model.
    TouchSim {
        #[arg(long)]
        touches: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_shape)]
        shape: Option<Shape>,
        #[arg(long, value_parser = parse_material)]
        material: Option<Material>,
    },
    /// Insert anchors and train to completion.
    Refine {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        carve: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// touch-sim artifact directory (omit for the no-touch baseline).
        #[arg(long)]
        touch_sim: Option<PathBuf>,
        /// Calibration file for manually captured tactile frames in the
        /// dataset manifest.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained scene and write the report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        carve: PathBuf,
        /// Scene artifact directory (train or refine).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-export a stage artifact as PLY.
    ExportPly {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// The whole loop under one output directory.
    RunAll {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_shape)]
        shape: Option<Shape>,
        #[arg(long, value_parser = parse_material)]
        material: Option<Material>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        /// Existing dataset manifest instead of the oracle.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    match s {
        "sphere" => Ok(Shape::Sphere),
        "box" => Ok(Shape::Box),
        "cylinder" => Ok(Shape::Cylinder),
        "bunny" => Ok(Shape::Bunny),
        other => Err(format!("unknown shape '{other}' (sphere|box|cylinder|bunny)")),
    }
}

fn parse_material(s: &str) -> Result<Material, String> {
    match s {
        "lambertian" => Ok(Material::Lambertian),
        "dark" => Ok(Material::Dark),
        "mirror-like" => Ok(Material::MirrorLike),
        "transparent-proxy" => Ok(Material::TransparentProxy),
        other => Err(format!(
            "unknown material '{other}' (lambertian|dark|mirror-like|transparent-proxy)"
        )),
    }
}

fn build_config(common: &CommonOpts) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => match common.profile.as_str() {
            "paper" => PipelineConfig::default(),
            _ => PipelineConfig::desk_scale(),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(v) = common.train_views {
        cfg.train_views = Some(v);
    }
    if let Some(v) = common.eval_views {
        cfg.eval_views = Some(v);
    }
    if let Some(t) = common.touches {
        cfg.touch.params.n_touches = t;
    }
    if let Some(r) = &common.ranker {
        cfg.touch.ranker = match r.as_str() {
            "remote" => RankerMode::Remote,
            "none" => RankerMode::None,
            _ => RankerMode::Mock,
        };
    }
    if let Some(iters) = common.iterations {
        cfg.train.total_iterations = iters;
    }
    if let Some(d) = common.densify_start {
        cfg.train.densify_start = d;
    }
    if let Some(a) = common.anchor_iteration {
        cfg.train.anchor_insert_iteration = a;
    }
    if let Some(res) = common.hull_resolution {
        cfg.hull.resolution = res;
    }
    Ok(cfg)
}

fn apply_oracle_overrides(
    cfg: &mut PipelineConfig,
    shape: Option<Shape>,
    material: Option<Material>,
    views: Option<usize>,
    image_size: Option<usize>,
) {
    let spec = cfg.oracle.get_or_insert_with(OracleSpec::default);
    if let Some(s) = shape {
        spec.shape = s;
    }
    if let Some(m) = material {
        spec.material = m;
    }
    if let Some(v) = views {
        spec.views = v;
    }
    if let Some(s) = image_size {
        spec.image_size = s;
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = build_config(&cli.common)?;
    match cli.command {
        Command::Synth { out, shape, material, views, image_size } => {
            apply_oracle_overrides(&mut cfg, shape, material, views, image_size);
            cfg.dataset = None;
            cfg.validate()?;
            let manifest = pipeline::stage_synth(&cfg, &out)?;
            println!("dataset manifest: {}", manifest.display());
        }
        Command::Carve { dataset, out } => {
            pipeline::stage_carve(&cfg, &dataset, &out)?;
            println!("carve artifacts: {}", out.display());
        }
        Command::Train { dataset, carve, out } => {
            pipeline::stage_train(&cfg, &dataset, &carve, &out)?;
            println!("global scene: {}", out.join("scene.ply").display());
        }
        Command::SelectTouches { dataset, carve, train, out } => {
            let sel = pipeline::stage_select_touches(&cfg, &dataset, &carve, &train, &out)?;
            println!(
                "{} touches over {} clusters ({} candidates){}",
                sel.touches.len(),
                sel.clusters,
                sel.candidates,
                if sel.shortfall { " [shortfall]" } else { "" }
            );
        }
        Command::TouchSim { touches, out, shape, material } => {
            apply_oracle_overrides(&mut cfg, shape, material, None, None);
            let n = pipeline::stage_touch_sim(&cfg, &touches, &out)?;
            println!("simulated {n} touches into {}", out.display());
        }
        Command::Refine { dataset, carve, train, touch_sim, calibration, out } => {
            pipeline::stage_refine(
                &cfg,
                &dataset,
                &carve,
                &train,
                touch_sim.as_deref(),
                calibration.as_deref(),
                &out,
            )?;
            println!("refined scene: {}", out.join("scene.ply").display());
        }
        Command::Eval { dataset, carve, scene, out } => {
            let report = pipeline::stage_eval(&cfg, &dataset, &carve, &scene, &out)?;
            println!("{}", report.to_json());
        }
        Command::ExportPly { artifact, out } => {
            export_ply(&artifact, &out)?;
            println!("wrote {}", out.display());
        }
        Command::RunAll { out, shape, material, views, image_size, dataset } => {
            if let Some(ds) = dataset {
                cfg.dataset = Some(ds);
                cfg.oracle = None;
            } else {
                apply_oracle_overrides(&mut cfg, shape, material, views, image_size);
            }
            cfg.validate()?;
            let summary = pipeline::run_all(&cfg, &out)?;
            println!("report: {}", summary.report_path.display());
            println!("{}", summary.report.to_json());
        }
    }
    Ok(())
}

/// Copies the canonical PLY view of an artifact directory.
fn export_ply(artifact: &std::path::Path, out: &std::path::Path) -> Result<(), Error> {
    for (stage, file) in [
        ("refine", "scene.ply"),
        ("train", "scene.ply"),
        ("carve", "hull_surface.ply"),
    ] {
        if read_stage_meta(artifact, stage).is_ok() {
            std::fs::copy(artifact.join(file), out)?;
            return Ok(());
        }
    }
    Err(Error::StageInput(format!(
        "{} is not an exportable artifact directory",
        artifact.display()
    )))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match &err {
                Error::Config(_) => 2,
                Error::StageInput(_)
                | Error::Dataset(_)
                | Error::PlyParse { .. }
                | Error::DimensionMismatch(_)
                | Error::Io(_)
                | Error::Image(_)
                | Error::Json(_) => 3,
                Error::DegenerateCarving { .. }
                | Error::Numerical(_)
                | Error::Calibration(_)
                | Error::Selection(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use gsedit_core::edit::{builtin_oracle, codec_by_name, edit};
use gsedit_core::mesh::{extract_textured_mesh, refine_texture, TexturedMesh};
use gsedit_core::metrics::{embedder_by_name, evaluate_edit, EditTexts, MetricReport};
use gsedit_core::optim::reconstruct;
use gsedit_core::render::render;
use gsedit_core::{build_camera_rig, Camera, CameraRig, ImageBuffer, Scene};

use crate::config::{ConfigError, PipelineConfig};
use crate::imageio::save_png;
use crate::mesh_io::{load_mesh_input, load_textured_obj, save_textured_obj, MeshIoError};
use crate::ply::{load_scene, save_scene, PlyError};

#[derive(Debug, Parser)]
#[command(name = "gsedit", version, about = "Reconstruct, edit and mesh Gaussian-splat scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
    /// TOML config file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved config as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Also store stage timings in report.json (makes it run-dependent).
    #[arg(long, global = true)]
    pub record_timings: bool,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

/// Flags that override config values.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Seed for every random draw; equal seeds give byte-identical outputs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Edit instruction.
    #[arg(long, global = true)]
    pub prompt: Option<String>,
    /// Texture refinement instruction.
    #[arg(long, global = true)]
    pub refine_prompt: Option<String>,
    /// Caption of the original object for the metrics.
    #[arg(long, global = true)]
    pub caption: Option<String>,
    /// Caption of the edited object for the metrics.
    #[arg(long, global = true)]
    pub edited_caption: Option<String>,
    /// Edit oracle: name[:params] or remote:URL.
    #[arg(long, global = true)]
    pub oracle: Option<String>,
    /// Embedding provider: toy or remote:URL.
    #[arg(long, global = true)]
    pub embedder: Option<String>,
    /// Step count of the command's optimisation stage (the edit for `pipeline`).
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Largest edit timestep, in (0, 1).
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    /// Smallest edit timestep, in (0, 1).
    #[arg(long, global = true)]
    pub tmin: Option<f64>,
    /// Text guidance scale.
    #[arg(long, global = true)]
    pub st: Option<f64>,
    /// Image guidance scale.
    #[arg(long, global = true)]
    pub si: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a splat scene to rig renders of an OBJ mesh; writes scene.ply.
    Reconstruct {
        /// OBJ mesh to render the training views from.
        #[arg(long)]
        input: PathBuf,
    },
    /// Edit a scene towards the prompt; writes edited.ply.
    Edit {
        /// Input scene (PLY).
        #[arg(long)]
        scene: PathBuf,
    },
    /// Extract a textured mesh; writes mesh.obj, mesh.mtl and mesh.png.
    ExtractMesh {
        /// Input scene (PLY).
        #[arg(long)]
        scene: PathBuf,
    },
    /// Refine the texture of a textured OBJ; writes refined.obj/.mtl/.png.
    RefineTexture {
        /// Textured OBJ with UVs and a map_Kd texture.
        #[arg(long)]
        input: PathBuf,
    },
    /// Render PNG frames along the rig path.
    Render {
        /// Input scene (PLY).
        #[arg(long)]
        scene: PathBuf,
        /// Number of frames, spread over the rig rings.
        #[arg(long, default_value_t = 20)]
        frames: usize,
    },
    /// Compare an original and an edited scene; writes report.json.
    Metrics {
        /// Input scene (PLY).
        #[arg(long)]
        scene: PathBuf,
        /// Edited scene (PLY).
        #[arg(long)]
        edited: PathBuf,
    },
    /// Run every stage: reconstruct (or load --scene), edit, extract, refine, evaluate.
    Pipeline {
        /// OBJ mesh to reconstruct from.
        #[arg(long, required_unless_present = "scene", conflicts_with = "scene")]
        input: Option<PathBuf>,
        /// Existing scene (PLY); skips reconstruction.
        #[arg(long)]
        scene: Option<PathBuf>,
    },
}

/// Resolves the config: defaults, then the file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.out = v.display().to_string();
    }
    if let Some(v) = &o.prompt {
        cfg.prompt = v.clone();
    }
    if let Some(v) = &o.refine_prompt {
        cfg.refine_prompt = Some(v.clone());
    }
    if let Some(v) = &o.caption {
        cfg.caption = v.clone();
    }
    if let Some(v) = &o.edited_caption {
        cfg.edited_caption = Some(v.clone());
    }
    if let Some(v) = &o.oracle {
        cfg.oracle = v.clone();
    }
    if let Some(v) = &o.embedder {
        cfg.embedder = v.clone();
    }
    if let Some(v) = o.tmax {
        cfg.edit.t_max = v;
    }
    if let Some(v) = o.tmin {
        cfg.edit.t_min = v;
    }
    if let Some(v) = o.st {
        cfg.edit.text_scale = v;
        cfg.refine.text_scale = v;
    }
    if let Some(v) = o.si {
        cfg.edit.image_scale = v;
        cfg.refine.image_scale = v;
    }
    if let Some(n) = o.steps {
        match cli.command {
            Command::Reconstruct { .. } => cfg.reconstruct.n_steps = n,
            Command::RefineTexture { .. } => cfg.refine.n_steps = n,
            _ => cfg.edit.n_edit_steps = n,
        }
    }
    Ok(cfg)
}

/// Exit status for a failed command: 1 for invalid input, 2 for runtime failures.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<PlyError>() {
            return if matches!(e, PlyError::Io(_)) { 2 } else { 1 };
        }
        if let Some(MeshIoError::Invalid(_)) = cause.downcast_ref::<MeshIoError>() {
            return 1;
        }
        if let Some(gsedit_core::Error::InvalidArgument(_) | gsedit_core::Error::ShapeMismatch(_)) =
            cause.downcast_ref::<gsedit_core::Error>()
        {
            return 1;
        }
    }
    2
}

/// Wall-clock seconds per stage, in the order the stages ran.
#[derive(Debug, Default)]
pub struct Timings(BTreeMap<String, f64>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        let secs = t0.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.2}s");
        self.0.insert(stage.to_owned(), secs);
        Ok(out)
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.0
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate()?;
    let out = PathBuf::from(&cfg.out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let rig = cfg.rig.build()?;
    let mut timings = Timings::default();
    match &cli.command {
        Command::Reconstruct { input } => {
            let scene = timings.time("reconstruct", || stage_reconstruct(input, &rig, &cfg))?;
            save(&scene, &out.join("scene.ply"))?;
        }
        Command::Edit { scene } => {
            let scene = load(scene)?;
            let edited = timings.time("edit", || stage_edit(&scene, &rig, &cfg))?;
            save(&edited, &out.join("edited.ply"))?;
        }
        Command::ExtractMesh { scene } => {
            let scene = load(scene)?;
            let tm = timings.time("extract_mesh", || stage_extract(&scene, &rig, &cfg))?;
            save_textured_obj(&tm, &out, "mesh")?;
        }
        Command::RefineTexture { input } => {
            let tm = load_textured_obj(input)?;
            let Some(prompt) = &cfg.refine_prompt else {
                bail!(ConfigError::Invalid("refine-texture needs --refine-prompt".into()));
            };
            let refined = timings.time("refine_texture", || stage_refine(&tm, prompt, &rig, &cfg))?;
            save_textured_obj(&refined, &out, "refined")?;
        }
        Command::Render { scene, frames } => {
            let scene = load(scene)?;
            let path = render_path(&cfg, *frames)?;
            timings.time("render", || render_frames(&scene, &path, &out))?;
        }
        Command::Metrics { scene, edited } => {
            let (a, b) = (load(scene)?, load(edited)?);
            let mut report = timings.time("metrics", || stage_metrics(&a, &b, &rig, &cfg))?;
            write_report(&mut report, timings, cli.record_timings, &out)?;
        }
        Command::Pipeline { input, scene } => {
            let original = match (input, scene) {
                (Some(input), _) => timings.time("reconstruct", || stage_reconstruct(input, &rig, &cfg))?,
                (None, Some(scene)) => load(scene)?,
                (None, None) => unreachable!("clap requires --input or --scene"),
            };
            save(&original, &out.join("scene.ply"))?;
            let edited = timings.time("edit", || stage_edit(&original, &rig, &cfg))?;
            save(&edited, &out.join("edited.ply"))?;
            let mut tm = timings.time("extract_mesh", || stage_extract(&edited, &rig, &cfg))?;
            if let Some(prompt) = &cfg.refine_prompt {
                tm = timings.time("refine_texture", || stage_refine(&tm, prompt, &rig, &cfg))?;
            }
            save_textured_obj(&tm, &out, "mesh")?;
            let mut report = timings.time("metrics", || stage_metrics(&original, &edited, &rig, &cfg))?;
            write_report(&mut report, timings, cli.record_timings, &out)?;
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<Scene> {
    load_scene(path).with_context(|| format!("loading {}", path.display()))
}

fn save(scene: &Scene, path: &Path) -> Result<()> {
    save_scene(scene, path).with_context(|| format!("writing {}", path.display()))
}

pub fn stage_reconstruct(input: &Path, rig: &CameraRig, cfg: &PipelineConfig) -> Result<Scene> {
    let views = load_mesh_input(input, rig)?;
    let out = reconstruct(&views, &cfg.reconstruct, cfg.seed)?;
    log::info!("reconstructed {} splats", out.scene.len());
    Ok(out.scene)
}

pub fn stage_edit(scene: &Scene, rig: &CameraRig, cfg: &PipelineConfig) -> Result<Scene> {
    let oracle = builtin_oracle(&cfg.oracle, cfg.timeout())?;
    let codec = codec_by_name(&cfg.codec)?;
    let out = edit(scene, rig, oracle.as_ref(), codec.as_ref(), &cfg.prompt, &cfg.edit, cfg.seed)?;
    log::info!(
        "edit ran {} steps ({} skipped), converged at {:?}",
        out.steps_run,
        out.skipped_steps,
        out.converged_at
    );
    Ok(out.scene)
}

pub fn stage_extract(scene: &Scene, rig: &CameraRig, cfg: &PipelineConfig) -> Result<TexturedMesh> {
    let (tm, warning) = extract_textured_mesh(scene, &rig.cameras, &cfg.mesh)?;
    if let Some(w) = warning {
        log::warn!("{w}");
    }
    log::info!(
        "mesh: {} vertices, {} triangles",
        tm.mesh.vertices.len(),
        tm.mesh.triangles.len()
    );
    Ok(tm)
}

pub fn stage_refine(tm: &TexturedMesh, prompt: &str, rig: &CameraRig, cfg: &PipelineConfig) -> Result<TexturedMesh> {
    let oracle = builtin_oracle(cfg.refine_oracle(), cfg.timeout())?;
    let out = refine_texture(tm, &rig.cameras, oracle.as_ref(), prompt, &cfg.refine, cfg.seed)?;
    Ok(out.mesh)
}

fn rgb_renders(scene: &Scene, rig: &CameraRig) -> Vec<ImageBuffer> {
    rig.iter().map(|c| render(scene, c).rgb()).collect()
}

pub fn stage_metrics(original: &Scene, edited: &Scene, rig: &CameraRig, cfg: &PipelineConfig) -> Result<MetricReport> {
    let provider = embedder_by_name(&cfg.embedder, cfg.timeout())?;
    let texts = EditTexts {
        caption: &cfg.caption,
        edited_caption: cfg.edited_caption(),
        generative_prompt: cfg.edited_caption(),
    };
    Ok(evaluate_edit(
        &rgb_renders(original, rig),
        &rgb_renders(edited, rig),
        &texts,
        provider.as_ref(),
    )?)
}

/// `frames` cameras spread evenly over the rig's rings, in rig order.
pub fn render_path(cfg: &PipelineConfig, frames: usize) -> Result<Vec<Camera>> {
    if frames == 0 {
        bail!(ConfigError::Invalid("--frames must be at least 1".into()));
    }
    let r = &cfg.rig;
    let per_ring = frames.div_ceil(r.elevations.len());
    let rig = build_camera_rig(per_ring, &r.elevations, r.radius, r.fov_y, (r.width, r.height))?;
    Ok(rig.cameras.into_iter().take(frames).collect())
}

pub fn render_frames(scene: &Scene, path: &[Camera], out: &Path) -> Result<()> {
    for (i, cam) in path.iter().enumerate() {
        let file = out.join(format!("frame_{i:03}.png"));
        save_png(&render(scene, cam).rgb(), &file).with_context(|| format!("writing {}", file.display()))?;
    }
    Ok(())
}

/// Writes report.json and timings.json. Timings enter report.json only when
/// asked for, so that the report is reproducible by default.
fn write_report(report: &mut MetricReport, timings: Timings, record: bool, out: &Path) -> Result<()> {
    let timings = timings.into_map();
    let timing_path = out.join("timings.json");
    fs::write(&timing_path, serde_json::to_string_pretty(&timings)? + "\n")
        .with_context(|| format!("writing {}", timing_path.display()))?;
    if record {
        report.timings_s = timings;
    }
    let path = out.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use meshprior_core::colmap::read_model_dir;
use meshprior_core::color_init::{ColorAssignment, KMeansConfig, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use meshprior_core::metrics::{psnr, ssim, BoundingBox, SsimMode};
use meshprior_core::splat::{init_gaussians, render_preview};
use meshprior_core::{parse_ply_points, write_ply_points, SimilarityTransform};

use crate::config::{
    load_transform, require_dir, require_file, validate_grades, GradeSpec, Outputs, PipelineConfig,
};
use crate::error::{open_image, read_file, write_file, AppError};
use crate::pipeline::{self, color_stage, finalize, sample_stage, Timings};
use crate::server;

#[derive(Debug, Parser)]
#[command(
    name = "meshprior",
    version,
    about = "Mesh-prior point-cloud initialization for Gaussian splatting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a point cloud from a triangle mesh.
    Sample(SampleArgs),
    /// Cluster image colors into a palette.
    Colors(ColorsArgs),
    /// Transform a sampled cloud and merge it with a COLMAP model.
    Merge(MergeArgs),
    /// Run the whole pipeline.
    Pipeline(PipelineArgs),
    /// Render a splat preview of a cloud from a COLMAP camera.
    Preview(PreviewArgs),
    /// PSNR and SSIM between image pairs, as CSV.
    Metrics(MetricsArgs),
    /// Prepare the pipeline and serve the alignment API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GradeArgs {
    /// Grade count N+1, or `auto`.
    #[arg(long, default_value = "auto")]
    pub grades: GradeSpec,
    /// Point budget for automatic grade selection.
    #[arg(long, default_value_t = meshprior_core::sampler::DEFAULT_POINT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[command(flatten)]
    pub grades: GradeArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KMeansArgs {
    #[arg(long, default_value_t = meshprior_core::color_init::DEFAULT_K)]
    pub k: usize,
    /// Seed for k-means++ initialization.
    #[arg(long, default_value_t = meshprior_core::color_init::DEFAULT_SEED)]
    pub seed: u64,
    /// Height images are downscaled to before clustering.
    #[arg(long, default_value_t = meshprior_core::color_init::DEFAULT_TARGET_HEIGHT)]
    pub height: u32,
}

#[derive(Debug, Args)]
pub struct ColorsArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// Write the palette JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Merged point cloud (binary PLY).
    #[arg(long)]
    pub out_ply: Option<PathBuf>,
    /// Merged COLMAP points3D (`.txt` for text, otherwise binary).
    #[arg(long)]
    pub out_points3d: Option<PathBuf>,
}

impl OutputArgs {
    fn outputs(&self) -> Outputs {
        Outputs {
            ply: self.out_ply.clone(),
            points3d: self.out_points3d.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Sampled cloud in mesh coordinates (PLY).
    #[arg(long)]
    pub sampled: PathBuf,
    #[arg(long)]
    pub colmap: PathBuf,
    /// Similarity transform, JSON or 4x4 matrix text; identity if omitted.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    #[command(flatten)]
    pub outputs: OutputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ColorModeArg {
    /// Each point draws its own palette color.
    PerPoint,
    /// One palette color for every point.
    Single,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// COLMAP model directory (cameras, images, points3D).
    #[arg(long)]
    pub colmap: PathBuf,
    /// Directory of dataset photos.
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub grades: GradeArgs,
    #[command(flatten)]
    pub kmeans: KMeansArgs,
    /// Seed for drawing point colors; defaults to --seed.
    #[arg(long)]
    pub assign_seed: Option<u64>,
    #[arg(long, value_enum, default_value = "per-point")]
    pub color_mode: ColorModeArg,
    #[arg(long)]
    pub transform: Option<PathBuf>,
    #[command(flatten)]
    pub outputs: OutputArgs,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(
            self.mesh.clone(),
            self.colmap.clone(),
            self.images.clone(),
            self.outputs.outputs(),
        );
        cfg.grades = self.grades.grades;
        cfg.budget = self.grades.budget;
        cfg.k = self.kmeans.k;
        cfg.seed = self.kmeans.seed;
        cfg.assign_seed = self.assign_seed;
        cfg.color_mode = match self.color_mode {
            ColorModeArg::PerPoint => ColorAssignment::PerPoint,
            ColorModeArg::Single => ColorAssignment::Single,
        };
        cfg.transform = self.transform.clone();
        cfg.target_height = self.kmeans.height;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub colmap: PathBuf,
    /// Point cloud to render (PLY, world coordinates).
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub image_id: u32,
    #[arg(long, default_value_t = server::PREVIEW_MAX_WIDTH)]
    pub width: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Reference image, or a directory of them.
    #[arg(long)]
    pub reference: PathBuf,
    /// Image to score, or a directory matched by file name.
    #[arg(long)]
    pub rendered: PathBuf,
    /// Restrict both metrics to `x,y,w,h`.
    #[arg(long)]
    pub bbox: Option<BoundingBox>,
    /// Average per-channel SSIM instead of SSIM on luma.
    #[arg(long)]
    pub per_channel: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Directory of static UI assets served at `/`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), AppError> {
    match cli.command {
        Command::Sample(a) => sample(a, out),
        Command::Colors(a) => colors(a, out),
        Command::Merge(a) => merge(a, out),
        Command::Pipeline(a) => {
            let summary = pipeline::run_pipeline(&a.config())?;
            for w in &summary.prepared.report.warnings {
                eprintln!("warning: {w}");
            }
            write!(out, "{summary}").map_err(stdout_err)
        }
        Command::Preview(a) => preview(a),
        Command::Metrics(a) => metrics(a, out),
        Command::Serve(a) => serve(a),
    }
}

fn stdout_err(e: std::io::Error) -> AppError {
    AppError::io(Path::new("<stdout>"), e)
}

fn sample(a: SampleArgs, out: &mut dyn Write) -> Result<(), AppError> {
    require_file(&a.mesh, "mesh")?;
    validate_grades(a.grades.grades, a.grades.budget)?;
    let mut timings = Timings::default();
    let (cloud, report) = sample_stage(&a.mesh, a.grades.grades, a.grades.budget, &mut timings)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&a.out, &write_ply_points(&cloud)?)?;
    write!(
        out,
        "{report}sampled points: {}\ntimings: {timings}\nwrote {}\n",
        cloud.len(),
        a.out.display()
    )
    .map_err(stdout_err)
}

fn colors(a: ColorsArgs, out: &mut dyn Write) -> Result<(), AppError> {
    require_dir(&a.images, "images directory")?;
    let cfg = KMeansConfig {
        k: a.kmeans.k,
        seed: a.kmeans.seed,
        max_iters: DEFAULT_MAX_ITERS,
        tol: DEFAULT_TOL,
    };
    let palette = color_stage(&a.images, a.kmeans.height, &cfg, &mut Timings::default())?;
    let json = serde_json::to_string_pretty(&palette).expect("palette serializes");
    match a.out {
        Some(p) => write_file(&p, json.as_bytes()),
        None => writeln!(out, "{json}").map_err(stdout_err),
    }
}

fn merge(a: MergeArgs, out: &mut dyn Write) -> Result<(), AppError> {
    require_file(&a.sampled, "sampled cloud")?;
    require_dir(&a.colmap, "COLMAP model directory")?;
    if let Some(t) = &a.transform {
        require_file(t, "transform file")?;
    }
    let outputs = a.outputs.outputs();
    if outputs.ply.is_none() && outputs.points3d.is_none() {
        return Err(AppError::Config(
            "no output requested (give --out-ply and/or --out-points3d)".into(),
        ));
    }
    let transform = load_transform(a.transform.as_deref())?;
    let sampled = parse_ply_points(&read_file(&a.sampled)?)?;
    let model = read_model_dir(&a.colmap)?;
    let art = finalize(&sampled, &model, &transform, &outputs)?;
    writeln!(
        out,
        "sfm points: {}\nsampled points: {}\nmerged points: {}",
        art.sfm_points, art.sampled_points, art.merged_points
    )
    .map_err(stdout_err)
}

fn preview(a: PreviewArgs) -> Result<(), AppError> {
    require_file(&a.cloud, "cloud")?;
    require_dir(&a.colmap, "COLMAP model directory")?;
    if a.width == 0 {
        return Err(AppError::Config("width must be positive".into()));
    }
    let model = read_model_dir(&a.colmap)?;
    let pose =
        model.images.get(&a.image_id).cloned().ok_or_else(|| {
            AppError::Config(format!("no image with id {} in the model", a.image_id))
        })?;
    let intr = *model
        .cameras
        .get(&pose.camera_id)
        .expect("model validated camera references");
    let camera = server::preview_camera(intr, pose, a.width);
    let cloud = parse_ply_points(&read_file(&a.cloud)?)?;
    let gaussians = init_gaussians(&cloud)?;
    let img = render_preview(
        &gaussians,
        &camera,
        camera.intrinsics.width as u32,
        camera.intrinsics.height as u32,
        [0, 0, 0],
    );
    img.save(&a.out).map_err(|e| AppError::Image {
        path: a.out.clone(),
        message: e.to_string(),
    })
}

fn image_pairs(
    reference: &Path,
    rendered: &Path,
) -> Result<Vec<(String, PathBuf, PathBuf)>, AppError> {
    if reference.is_dir() && rendered.is_dir() {
        let names = meshprior_core::color_init::list_images(reference)
            .map_err(|e| AppError::io(reference, e))?;
        let mut pairs = Vec::new();
        for r in names {
            let name = r
                .file_name()
                .expect("listed files have names")
                .to_string_lossy()
                .into_owned();
            let other = rendered.join(&name);
            if other.is_file() {
                pairs.push((name, r, other));
            } else {
                eprintln!(
                    "warning: {} has no counterpart in {}",
                    name,
                    rendered.display()
                );
            }
        }
        if pairs.is_empty() {
            return Err(AppError::Config("no image names in common".into()));
        }
        Ok(pairs)
    } else {
        require_file(reference, "reference image")?;
        require_file(rendered, "rendered image")?;
        let name = rendered
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(vec![(
            name,
            reference.to_path_buf(),
            rendered.to_path_buf(),
        )])
    }
}

/// `inf` for identical images, otherwise four decimals.
pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn metrics(a: MetricsArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let mode = if a.per_channel {
        SsimMode::ChannelMean
    } else {
        SsimMode::Luma
    };
    let pairs = image_pairs(&a.reference, &a.rendered)?;
    let mut csv = String::from("name,psnr_db,ssim\n");
    for (name, r, d) in pairs {
        let (ia, ib) = (open_image(&r)?, open_image(&d)?);
        let p = psnr(&ia, &ib, a.bbox)?;
        let s = ssim(&ia, &ib, a.bbox, mode)?;
        csv.push_str(&format!("{},{},{s:.6}\n", csv_field(&name), format_psnr(p)));
    }
    out.write_all(csv.as_bytes()).map_err(stdout_err)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn serve(a: ServeArgs) -> Result<(), AppError> {
    let cfg = a.pipeline.config();
    cfg.validate()?;
    if let Some(d) = &a.ui_dir {
        require_dir(d, "UI directory")?;
    }
    let addr = server::bind_address()?;
    let initial: SimilarityTransform = cfg.load_transform()?;
    let prepared = pipeline::prepare(&cfg)?;
    for w in &prepared.report.warnings {
        eprintln!("warning: {w}");
    }
    eprint!("{}", prepared.report);
    let state = Arc::new(server::AppState::new(
        prepared,
        cfg.outputs.clone(),
        initial,
    ));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::Config(format!("cannot start runtime: {e}")))?;
    rt.block_on(server::serve(state, a.ui_dir, addr))
}

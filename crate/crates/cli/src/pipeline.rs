//! The end-to-end pipeline, split so the alignment service can reuse the
//! expensive preparation and share the exact finalize step with the CLI.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use meshprior_core::colmap::{self, SparseModel, SparsePoint};
use meshprior_core::color_init::{self, ColorAssignment, ColorPalette, KMeansConfig};
use meshprior_core::mesh_io::DEGENERATE_AREA;
use meshprior_core::sampler::{self, AutoGrades};
use meshprior_core::{
    apply_similarity, merge_clouds, parse_ply_mesh, validate_mesh, write_ply_points, PointCloud,
    SimilarityTransform,
};

use crate::config::{GradeSpec, Outputs, PipelineConfig};
use crate::error::{read_file, write_file, AppError};

#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(&'static str, Duration)>);

impl Timings {
    pub fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((stage, start.elapsed()));
        out
    }
}

impl fmt::Display for Timings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(s, d)| format!("{s} {:.1} ms", d.as_secs_f64() * 1e3))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub triangle_count: usize,
    pub skipped_faces: usize,
    pub num_grades: usize,
    /// Set when the grade count was chosen automatically.
    pub auto: Option<AutoGrades>,
    pub budget: u64,
    /// Triangles per grade, index = grade.
    pub histogram: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Parses, validates, grades and samples a mesh. Colors are left black.
pub fn sample_stage(
    mesh_path: &Path,
    grades: GradeSpec,
    budget: u64,
    timings: &mut Timings,
) -> Result<(PointCloud, SampleReport), AppError> {
    let bytes = read_file(mesh_path)?;
    let mesh = timings.time("parse", || parse_ply_mesh(&bytes))?;
    let validation = validate_mesh(&mesh);
    let areas: Vec<f64> = mesh
        .face_areas()
        .into_iter()
        .filter(|&a| a >= DEGENERATE_AREA)
        .collect();
    let (num_grades, auto) = match grades {
        GradeSpec::Fixed(n) => (n, None),
        GradeSpec::Auto => {
            let a = sampler::choose_num_grades(&areas, budget)?;
            (a.num_grades, Some(a))
        }
    };
    let mut warnings = validation.warnings;
    if let Some(a) = &auto {
        if !a.within_budget {
            warnings.push(format!(
                "no grade count fits the budget of {budget}; using {} ({} points)",
                a.num_grades, a.total_points
            ));
        }
    }
    let table = sampler::barycentric_table(num_grades - 1)?;
    let sampled = timings.time("sample", || sampler::sample_mesh(&mesh, num_grades, &table))?;
    if matches!(grades, GradeSpec::Fixed(_)) && sampled.len() as u64 > budget {
        warnings.push(format!(
            "{} sampled points exceed the budget of {budget}",
            sampled.len()
        ));
    }
    let report = SampleReport {
        triangle_count: validation.triangle_count,
        skipped_faces: sampled.skipped_faces.len(),
        num_grades,
        auto,
        budget,
        histogram: sampled.grade_histogram(),
        warnings,
    };
    let n = sampled.len();
    Ok((sampled.into_point_cloud(vec![[0, 0, 0]; n]), report))
}

/// Loads every PNG/JPEG in `dir`, downsizes and clusters the pixels.
pub fn color_stage(
    dir: &Path,
    target_height: u32,
    config: &KMeansConfig,
    timings: &mut Timings,
) -> Result<ColorPalette, AppError> {
    let paths = color_init::list_images(dir).map_err(|e| AppError::io(dir, e))?;
    let pixels = timings.time("collect", || -> Result<_, AppError> {
        let images = color_init::load_images(&paths)?;
        Ok(color_init::collect_pixels(&images, target_height)?)
    })?;
    Ok(timings.time("cluster", || color_init::kmeans_colors(&pixels, config))?)
}

/// Everything computed before the registration transform is known.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub report: SampleReport,
    /// Mesh frame, palette colors assigned.
    pub sampled: PointCloud,
    pub model: SparseModel,
    pub palette: ColorPalette,
    pub color_mode: ColorAssignment,
    pub timings: Timings,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared, AppError> {
    let mut timings = Timings::default();
    let model = timings.time("colmap", || colmap::read_model_dir(&cfg.colmap))?;
    let (mut sampled, report) = sample_stage(&cfg.mesh, cfg.grades, cfg.budget, &mut timings)?;
    let kcfg = KMeansConfig {
        k: cfg.k,
        seed: cfg.seed,
        ..KMeansConfig::default()
    };
    let palette = color_stage(&cfg.images, cfg.target_height, &kcfg, &mut timings)?;
    sampled.colors = timings.time("assign", || {
        color_init::assign_initial_colors(
            sampled.len(),
            &palette,
            cfg.assign_seed(),
            cfg.color_mode,
        )
    })?;
    Ok(Prepared {
        report,
        sampled,
        model,
        palette,
        color_mode: cfg.color_mode,
        timings,
    })
}

/// SfM points first, then the transformed samples.
pub fn merged_cloud(
    sampled: &PointCloud,
    model: &SparseModel,
    t: &SimilarityTransform,
) -> PointCloud {
    merge_clouds(&apply_similarity(sampled, t), &model.point_cloud())
}

/// The SfM points followed by synthetic points numbered after the largest
/// SfM id, with zero error and no track.
pub fn merged_points3d(model: &SparseModel, transformed: &PointCloud) -> Vec<SparsePoint> {
    let mut points: Vec<SparsePoint> = model.points.values().cloned().collect();
    let first = model.max_point_id().map_or(1, |m| m + 1);
    points.extend(
        transformed
            .positions
            .iter()
            .zip(&transformed.colors)
            .enumerate()
            .map(|(i, (&position, &color))| SparsePoint {
                id: first + i as u64,
                position,
                color,
                error: 0.0,
                track: Vec::new(),
            }),
    );
    points
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub ply: Option<PathBuf>,
    pub points3d: Option<PathBuf>,
    pub sfm_points: usize,
    pub sampled_points: usize,
    pub merged_points: usize,
}

/// Applies the transform, merges and writes the requested outputs. The CLI
/// and the alignment service both end here.
pub fn finalize(
    sampled: &PointCloud,
    model: &SparseModel,
    t: &SimilarityTransform,
    outputs: &Outputs,
) -> Result<Artifacts, AppError> {
    let transformed = apply_similarity(sampled, t);
    let sfm = model.point_cloud();
    let merged = merge_clouds(&transformed, &sfm);
    let ply_bytes = outputs
        .ply
        .as_ref()
        .map(|_| write_ply_points(&merged))
        .transpose()?;
    let points_bytes = outputs
        .points3d
        .as_ref()
        .map(|_| {
            colmap::write_points3d(
                &merged_points3d(model, &transformed),
                outputs.points3d_format(),
            )
        })
        .transpose()?;
    // encode everything before touching the filesystem
    if let (Some(p), Some(b)) = (&outputs.ply, &ply_bytes) {
        write_file(p, b)?;
    }
    if let (Some(p), Some(b)) = (&outputs.points3d, &points_bytes) {
        write_file(p, b)?;
    }
    Ok(Artifacts {
        ply: outputs.ply.clone(),
        points3d: outputs.points3d.clone(),
        sfm_points: sfm.len(),
        sampled_points: transformed.len(),
        merged_points: merged.len(),
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub prepared: Prepared,
    pub transform: SimilarityTransform,
    pub artifacts: Artifacts,
    pub timings: Timings,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary, AppError> {
    cfg.validate()?;
    let transform = cfg.load_transform()?;
    let prepared = prepare(cfg)?;
    let mut timings = prepared.timings.clone();
    let artifacts = timings.time("merge+write", || {
        finalize(&prepared.sampled, &prepared.model, &transform, &cfg.outputs)
    })?;
    Ok(RunSummary {
        prepared,
        transform,
        artifacts,
        timings,
    })
}

impl fmt::Display for SampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "triangles: {} ({} degenerate skipped)",
            self.triangle_count, self.skipped_faces
        )?;
        match &self.auto {
            Some(a) => writeln!(
                f,
                "grades: N+1 = {} (auto, budget {}, {} points)",
                self.num_grades, self.budget, a.total_points
            )?,
            None => writeln!(f, "grades: N+1 = {}", self.num_grades)?,
        }
        writeln!(f, "grades histogram: {:?}", self.histogram)
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.prepared;
        write!(f, "{}", p.report)?;
        writeln!(f, "sampled points: {}", self.artifacts.sampled_points)?;
        writeln!(f, "sfm points: {}", self.artifacts.sfm_points)?;
        writeln!(f, "merged points: {}", self.artifacts.merged_points)?;
        let centers: Vec<String> = p
            .palette
            .centers_rgb8()
            .iter()
            .zip(&p.palette.sizes)
            .map(|(c, n)| format!("({}, {}, {}) x{n}", c[0], c[1], c[2]))
            .collect();
        writeln!(
            f,
            "cluster centers: {} [{} iterations]",
            centers.join(", "),
            p.palette.iterations
        )?;
        writeln!(f, "transform: {}", self.transform.to_json())?;
        writeln!(f, "timings: {}", self.timings)?;
        for path in self.artifacts.ply.iter().chain(&self.artifacts.points3d) {
            writeln!(f, "wrote {}", path.display())?;
        }
        Ok(())
    }
}

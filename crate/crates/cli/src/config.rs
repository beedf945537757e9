use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use meshprior_core::colmap::ModelFormat;
use meshprior_core::color_init::{ColorAssignment, DEFAULT_K, DEFAULT_SEED, DEFAULT_TARGET_HEIGHT};
use meshprior_core::sampler::{DEFAULT_POINT_BUDGET, MAX_GRADES};
use meshprior_core::SimilarityTransform;

use crate::error::{read_file, AppError};

/// Number of grades `N+1`, or automatic selection under a point budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradeSpec {
    Fixed(usize),
    Auto,
}

impl FromStr for GradeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(GradeSpec::Auto);
        }
        s.parse::<usize>()
            .map(GradeSpec::Fixed)
            .map_err(|_| format!("expected a grade count or `auto`, got `{s}`"))
    }
}

impl fmt::Display for GradeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradeSpec::Fixed(n) => write!(f, "{n}"),
            GradeSpec::Auto => f.write_str("auto"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub ply: Option<PathBuf>,
    /// `.txt` selects the text encoding; anything else is binary.
    pub points3d: Option<PathBuf>,
}

impl Outputs {
    pub fn points3d_format(&self) -> ModelFormat {
        match &self.points3d {
            Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt")) => {
                ModelFormat::Text
            }
            _ => ModelFormat::Binary,
        }
    }

    fn validate(&self) -> Result<(), AppError> {
        if self.ply.is_none() && self.points3d.is_none() {
            return Err(AppError::Config(
                "no output requested (give --out-ply and/or --out-points3d)".into(),
            ));
        }
        for p in self.ply.iter().chain(&self.points3d) {
            let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
            if let Some(d) = parent {
                if !d.is_dir() {
                    return Err(AppError::Config(format!(
                        "output directory {} does not exist",
                        d.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub colmap: PathBuf,
    pub images: PathBuf,
    pub grades: GradeSpec,
    pub budget: u64,
    pub k: usize,
    /// Seeds k-means++.
    pub seed: u64,
    /// Seeds the per-point color draw; defaults to `seed`.
    pub assign_seed: Option<u64>,
    pub color_mode: ColorAssignment,
    /// JSON or 4×4 matrix text; identity when absent.
    pub transform: Option<PathBuf>,
    pub outputs: Outputs,
    pub target_height: u32,
}

impl PipelineConfig {
    pub fn new(mesh: PathBuf, colmap: PathBuf, images: PathBuf, outputs: Outputs) -> Self {
        PipelineConfig {
            mesh,
            colmap,
            images,
            grades: GradeSpec::Auto,
            budget: DEFAULT_POINT_BUDGET,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            assign_seed: None,
            color_mode: ColorAssignment::PerPoint,
            transform: None,
            outputs,
            target_height: DEFAULT_TARGET_HEIGHT,
        }
    }

    pub fn assign_seed(&self) -> u64 {
        self.assign_seed.unwrap_or(self.seed)
    }

    /// Checks everything that can be checked without doing work.
    pub fn validate(&self) -> Result<(), AppError> {
        require_file(&self.mesh, "mesh")?;
        require_dir(&self.colmap, "COLMAP model directory")?;
        require_dir(&self.images, "images directory")?;
        if let Some(t) = &self.transform {
            require_file(t, "transform file")?;
        }
        validate_grades(self.grades, self.budget)?;
        if self.k == 0 {
            return Err(AppError::Config("k must be at least 1".into()));
        }
        if self.target_height == 0 {
            return Err(AppError::Config(
                "downscale height must be at least 1".into(),
            ));
        }
        self.outputs.validate()
    }

    pub fn load_transform(&self) -> Result<SimilarityTransform, AppError> {
        load_transform(self.transform.as_deref())
    }
}

pub fn validate_grades(grades: GradeSpec, budget: u64) -> Result<(), AppError> {
    if budget == 0 {
        return Err(AppError::Config("point budget must be positive".into()));
    }
    if let GradeSpec::Fixed(n) = grades {
        if !(1..=MAX_GRADES).contains(&n) {
            return Err(AppError::Config(format!(
                "grade count must be in 1..={MAX_GRADES}, got {n}"
            )));
        }
        let single = 4u64.pow(n as u32 - 1);
        if budget < single {
            return Err(AppError::Config(format!(
                "budget {budget} is below 4^{} = {single}, the size of one top-grade triangle",
                n - 1
            )));
        }
    }
    Ok(())
}

pub fn require_file(p: &Path, what: &str) -> Result<(), AppError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(AppError::Config(format!(
            "{what} {} not found",
            p.display()
        )))
    }
}

pub fn require_dir(p: &Path, what: &str) -> Result<(), AppError> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(AppError::Config(format!(
            "{what} {} not found",
            p.display()
        )))
    }
}

pub fn load_transform(path: Option<&Path>) -> Result<SimilarityTransform, AppError> {
    let Some(path) = path else {
        return Ok(SimilarityTransform::identity());
    };
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| AppError::Config(format!("{}: transform is not UTF-8", path.display())))?;
    Ok(text.parse()?)
}

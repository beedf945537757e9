//! Area-graded barycentric sampling of mesh surfaces.
//!
//! Every triangle gets a *grade* `g` from its area relative to the largest
//! triangle: ratios in `(1/4, 1]` get the top grade `N`, each further factor
//! of four in area drops one grade, and everything at or below `4^-N`
//! collapses into grade 0. A triangle of grade `g` receives `4^g` points,
//! located at the centroids of the `4^g` congruent sub-triangles produced by
//! `g` rounds of midpoint subdivision.
//!
//! Those centroids are computed once, in barycentric coordinates of an
//! abstract root triangle ([`BarycentricTable`]). Sampling triangle `m` at
//! grade `n` is then the matrix product `W_n · V_m`, where `W_n` is the
//! `4^n × 3` weight table and `V_m` stacks the triangle's three vertices.

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::mesh_io::{PointCloud, TriangleMesh, DEGENERATE_AREA};

/// Deepest subdivision a table may hold (`4^12` ≈ 16.7M rows).
pub const MAX_TABLE_DEPTH: usize = 12;
/// Largest accepted `N + 1`.
pub const MAX_GRADES: usize = MAX_TABLE_DEPTH + 1;
pub const DEFAULT_POINT_BUDGET: u64 = 1_000_000;
/// `N + 1` values tried, in order, by [`choose_num_grades`].
pub const AUTO_GRADE_CANDIDATES: [usize; 4] = [9, 8, 7, 6];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("subdivision depth {requested} exceeds the maximum of {MAX_TABLE_DEPTH}")]
    DepthTooLarge { requested: usize },
    #[error("number of grades must be in [1, {MAX_GRADES}], got {0}")]
    InvalidGradeCount(usize),
    #[error("area {value} of triangle {index} is not a finite non-negative number")]
    InvalidArea { index: usize, value: f64 },
    #[error("all triangles are degenerate")]
    AllDegenerate,
    #[error("table depth {available} is too shallow for grade {required}")]
    TableTooShallow { required: usize, available: usize },
}

/// Centroid weights of the sub-triangles at each subdivision depth.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricTable {
    levels: Vec<Vec<Vec3>>,
}

impl BarycentricTable {
    pub fn new(max_depth: usize) -> Result<Self, SamplerError> {
        if max_depth > MAX_TABLE_DEPTH {
            return Err(SamplerError::DepthTooLarge {
                requested: max_depth,
            });
        }
        let root = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let levels = (0..=max_depth)
            .map(|depth| {
                let mut rows = Vec::with_capacity(1 << (2 * depth));
                subdivide(root, depth, &mut rows);
                rows
            })
            .collect();
        Ok(BarycentricTable { levels })
    }

    pub fn max_depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// The `4^depth × 3` weight matrix `W_depth`, one row per sample.
    pub fn level(&self, depth: usize) -> &[Vec3] {
        &self.levels[depth]
    }
}

pub fn barycentric_table(max_depth: usize) -> Result<BarycentricTable, SamplerError> {
    BarycentricTable::new(max_depth)
}

#[inline]
fn midpoint(x: Vec3, y: Vec3) -> Vec3 {
    [
        (x[0] + y[0]) * 0.5,
        (x[1] + y[1]) * 0.5,
        (x[2] + y[2]) * 0.5,
    ]
}

/// Depth-first midpoint subdivision; pushes leaf centroids in child order
/// corner a, corner b, corner c, then the middle triangle.
fn subdivide([a, b, c]: [Vec3; 3], depth: usize, out: &mut Vec<Vec3>) {
    if depth == 0 {
        out.push([
            (a[0] + b[0] + c[0]) / 3.0,
            (a[1] + b[1] + c[1]) / 3.0,
            (a[2] + b[2] + c[2]) / 3.0,
        ]);
        return;
    }
    let ab = midpoint(a, b);
    let bc = midpoint(b, c);
    let ac = midpoint(a, c);
    subdivide([a, ab, ac], depth - 1, out);
    subdivide([ab, b, bc], depth - 1, out);
    subdivide([ac, bc, c], depth - 1, out);
    subdivide([ab, bc, ac], depth - 1, out);
}

/// Grade of every triangle, plus the grade count `N + 1` it was built for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradeAssignment {
    pub grades: Vec<u8>,
    pub num_grades: usize,
}

impl GradeAssignment {
    pub fn points_for(&self, triangle: usize) -> u64 {
        1u64 << (2 * self.grades[triangle] as u32)
    }

    pub fn total_points(&self) -> u64 {
        self.grades.iter().map(|&g| 1u64 << (2 * g as u32)).sum()
    }

    /// Triangle count per grade, index 0 = grade 0.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_grades];
        for &g in &self.grades {
            h[g as usize] += 1;
        }
        h
    }

    pub fn max_grade(&self) -> usize {
        self.grades.iter().copied().max().unwrap_or(0) as usize
    }
}

/// Grade of a single area against `max_area`, with `top = N`.
///
/// Compares `area > max_area · 4^-j` rather than dividing, so band edges at
/// exact powers of four are decided without rounding.
#[inline]
fn grade_of(area: f64, max_area: f64, top: usize) -> u8 {
    let mut threshold = max_area;
    for j in 1..=top {
        threshold *= 0.25;
        if area > threshold {
            return (top + 1 - j) as u8;
        }
    }
    0
}

pub fn grade_triangles(areas: &[f64], num_grades: usize) -> Result<GradeAssignment, SamplerError> {
    if !(1..=MAX_GRADES).contains(&num_grades) {
        return Err(SamplerError::InvalidGradeCount(num_grades));
    }
    if let Some((index, &value)) = areas
        .iter()
        .enumerate()
        .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
    {
        return Err(SamplerError::InvalidArea { index, value });
    }
    let max_area = areas.iter().copied().fold(0.0, f64::max);
    if max_area < DEGENERATE_AREA {
        return Err(SamplerError::AllDegenerate);
    }
    let top = num_grades - 1;
    Ok(GradeAssignment {
        grades: areas.iter().map(|&a| grade_of(a, max_area, top)).collect(),
        num_grades,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AutoGrades {
    pub num_grades: usize,
    pub total_points: u64,
    /// False when even the smallest candidate exceeds the budget.
    pub within_budget: bool,
}

/// Picks the first `N + 1` from [`AUTO_GRADE_CANDIDATES`] whose point total
/// fits in `budget`, falling back to the last candidate.
pub fn choose_num_grades(areas: &[f64], budget: u64) -> Result<AutoGrades, SamplerError> {
    let mut last = None;
    for &num_grades in &AUTO_GRADE_CANDIDATES {
        let total_points = grade_triangles(areas, num_grades)?.total_points();
        if total_points <= budget {
            return Ok(AutoGrades {
                num_grades,
                total_points,
                within_budget: true,
            });
        }
        last = Some(AutoGrades {
            num_grades,
            total_points,
            within_budget: false,
        });
    }
    Ok(last.expect("candidate list is non-empty"))
}

/// Points sampled on a mesh, in (face ascending, table row) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCloud {
    pub positions: Vec<Vec3>,
    pub source_face: Vec<u32>,
    pub normals: Vec<Vec3>,
    /// Grade per mesh face; `None` for skipped degenerate faces.
    pub face_grades: Vec<Option<u8>>,
    pub num_grades: usize,
    pub skipped_faces: Vec<usize>,
}

impl SampledCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Triangle count per grade over the sampled (non-degenerate) faces.
    pub fn grade_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_grades];
        for g in self.face_grades.iter().flatten() {
            h[*g as usize] += 1;
        }
        h
    }

    pub fn into_point_cloud(self, colors: Vec<[u8; 3]>) -> PointCloud {
        assert_eq!(colors.len(), self.positions.len(), "one color per point");
        PointCloud {
            positions: self.positions,
            colors,
            normals: self.normals,
        }
    }
}

/// Writes `W · V` for one triangle into `out`.
#[inline]
fn emit(weights: &[Vec3], [a, b, c]: [Vec3; 3], out: &mut [Vec3]) {
    for (w, p) in weights.iter().zip(out.iter_mut()) {
        for k in 0..3 {
            p[k] = w[0] * a[k] + w[1] * b[k] + w[2] * c[k];
        }
    }
}

pub fn sample_mesh(
    mesh: &TriangleMesh,
    num_grades: usize,
    table: &BarycentricTable,
) -> Result<SampledCloud, SamplerError> {
    let areas = mesh.face_areas();
    let valid: Vec<usize> = (0..areas.len())
        .filter(|&f| areas[f] >= DEGENERATE_AREA)
        .collect();
    let skipped_faces: Vec<usize> = (0..areas.len())
        .filter(|&f| !(areas[f] >= DEGENERATE_AREA))
        .collect();
    let valid_areas: Vec<f64> = valid.iter().map(|&f| areas[f]).collect();
    let grading = grade_triangles(&valid_areas, num_grades)?;

    if grading.max_grade() > table.max_depth() {
        return Err(SamplerError::TableTooShallow {
            required: grading.max_grade(),
            available: table.max_depth(),
        });
    }

    let total = grading.total_points() as usize;
    let mut positions = vec![[0.0; 3]; total];
    let mut normals = vec![[0.0; 3]; total];
    let mut source_face = vec![0u32; total];

    // Carve the outputs into disjoint per-triangle ranges so the result is
    // independent of how rayon schedules the work.
    let mut jobs = Vec::with_capacity(valid.len());
    {
        let (mut pos_rest, mut nrm_rest, mut src_rest) = (
            positions.as_mut_slice(),
            normals.as_mut_slice(),
            source_face.as_mut_slice(),
        );
        for (slot, &face) in valid.iter().enumerate() {
            let n = grading.points_for(slot) as usize;
            let (p, pr) = pos_rest.split_at_mut(n);
            let (nm, nr) = nrm_rest.split_at_mut(n);
            let (s, sr) = src_rest.split_at_mut(n);
            pos_rest = pr;
            nrm_rest = nr;
            src_rest = sr;
            jobs.push((face, grading.grades[slot] as usize, p, nm, s));
        }
    }

    jobs.into_par_iter()
        .for_each(|(face, grade, pos, nrm, src)| {
            let tri = mesh.triangle(face);
            emit(table.level(grade), tri, pos);
            nrm.fill(geom::face_normal(tri[0], tri[1], tri[2]));
            src.fill(face as u32);
        });

    let mut face_grades = vec![None; areas.len()];
    for (slot, &face) in valid.iter().enumerate() {
        face_grades[face] = Some(grading.grades[slot]);
    }

    Ok(SampledCloud {
        positions,
        source_face,
        normals,
        face_grades,
        num_grades,
        skipped_faces,
    })
}

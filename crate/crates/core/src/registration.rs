//! Coarse registration of the mesh-sampled cloud into the COLMAP world frame.
//!
//! The transform is a similarity `p ↦ s·R·p + t`. It is either supplied by
//! hand (JSON or a 4×4 matrix exported from a DCC tool) or fitted from point
//! correspondences with Umeyama's closed form. Merging is plain
//! concatenation: SfM points first, then the transformed samples.

use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::mesh_io::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("scale must be a positive finite number, got {0}")]
    InvalidScale(f64),
    #[error("rotation quaternion must have unit norm (got norm {0})")]
    NonUnitQuaternion(f64),
    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("source and target point counts differ ({0} vs {1})")]
    CountMismatch(usize, usize),
    #[error("source points are collinear or coincident")]
    DegenerateConfiguration,
    #[error("best fit is a reflection; mirrored registrations are rejected")]
    Reflection,
    #[error("matrix is not a similarity transform: {0}")]
    NotSimilarity(String),
    #[error("cannot parse transform: {0}")]
    Parse(String),
}

/// `p ↦ scale · R(rotation) · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformJson", into = "TransformJson")]
pub struct SimilarityTransform {
    scale: f64,
    /// `(w, x, y, z)`
    rotation: [f64; 4],
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformJson {
    scale: f64,
    rotation: [f64; 4],
    translation: Vec3,
}

impl TryFrom<TransformJson> for SimilarityTransform {
    type Error = RegistrationError;
    fn try_from(j: TransformJson) -> Result<Self, Self::Error> {
        SimilarityTransform::new(j.scale, j.rotation, j.translation)
    }
}

impl From<SimilarityTransform> for TransformJson {
    fn from(t: SimilarityTransform) -> Self {
        TransformJson {
            scale: t.scale,
            rotation: t.rotation,
            translation: t.translation,
        }
    }
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

const QUAT_TOL: f64 = 1e-9;

impl SimilarityTransform {
    pub fn new(
        scale: f64,
        rotation: [f64; 4],
        translation: Vec3,
    ) -> Result<Self, RegistrationError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(RegistrationError::InvalidScale(scale));
        }
        let norm = rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= QUAT_TOL) {
            return Err(RegistrationError::NonUnitQuaternion(norm));
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(RegistrationError::Parse("non-finite translation".into()));
        }
        Ok(SimilarityTransform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
        }
    }

    /// Builds from a rotation of any origin, renormalizing the quaternion and
    /// choosing the representative with `w >= 0`.
    pub fn from_parts(
        scale: f64,
        rotation: &UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, RegistrationError> {
        let mut q = *rotation;
        q.renormalize();
        let q = if q.w < 0.0 {
            -q.into_inner()
        } else {
            q.into_inner()
        };
        SimilarityTransform::new(scale, [q.w, q.i, q.j, q.k], translation.into())
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> [f64; 4] {
        self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.unit_quaternion().to_rotation_matrix().matrix()
    }

    fn is_identity_rotation(&self) -> bool {
        self.rotation == [1.0, 0.0, 0.0, 0.0]
    }

    /// Maps a single point.
    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.apply_with(&self.rotation_matrix(), p)
    }

    fn apply_with(&self, r: &Matrix3<f64>, p: Vec3) -> Vec3 {
        // Identity components are skipped so an identity transform is a
        // bit-exact no-op (including signed zeros).
        let mut v = Vector3::from(p);
        if !self.is_identity_rotation() {
            v = r * v;
        }
        if self.scale != 1.0 {
            v *= self.scale;
        }
        if self.translation != [0.0; 3] {
            v += Vector3::from(self.translation);
        }
        v.into()
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        let r2 = self.unit_quaternion();
        let rotation = r2 * first.unit_quaternion();
        let translation =
            self.scale * (r2 * Vector3::from(first.translation)) + Vector3::from(self.translation);
        SimilarityTransform::from_parts(self.scale * first.scale, &rotation, translation)
            .expect("composition of valid similarities is valid")
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let r_inv = self.unit_quaternion().inverse();
        let s_inv = 1.0 / self.scale;
        let translation = -(s_inv * (r_inv * Vector3::from(self.translation)));
        SimilarityTransform::from_parts(s_inv, &r_inv, translation)
            .expect("inverse of a valid similarity is valid")
    }

    /// Homogeneous 4×4 matrix.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation_matrix() * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&Vector3::from(self.translation));
        m
    }

    /// Decomposes a homogeneous similarity matrix. The upper 3×3 block must
    /// be `s·R` with `R` a proper rotation (to 1e-6).
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, RegistrationError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(RegistrationError::NotSimilarity(
                "bottom row must be 0 0 0 1".into(),
            ));
        }
        let a: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let det = a.determinant();
        if det < 0.0 {
            return Err(RegistrationError::Reflection);
        }
        if !(det > 0.0) {
            return Err(RegistrationError::NotSimilarity(
                "singular linear part".into(),
            ));
        }
        let scale = det.cbrt();
        let r = a / scale;
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-6 {
            return Err(RegistrationError::NotSimilarity(format!(
                "linear part is not a scaled rotation (orthogonality error {err:.3e})"
            )));
        }
        let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        let t = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        SimilarityTransform::from_parts(scale, &rotation, t)
    }

    /// Sixteen whitespace-separated numbers, row-major.
    pub fn to_matrix_text(&self) -> String {
        let m = self.to_matrix();
        (0..4)
            .map(|r| {
                (0..4)
                    .map(|c| format!("{:?}", m[(r, c)]))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    pub fn from_matrix_text(s: &str) -> Result<Self, RegistrationError> {
        let values: Vec<f64> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| RegistrationError::Parse(format!("invalid number `{t}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 16 {
            return Err(RegistrationError::Parse(format!(
                "expected 16 numbers, got {}",
                values.len()
            )));
        }
        SimilarityTransform::from_matrix(&Matrix4::from_row_slice(&values))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RegistrationError> {
        serde_json::from_str(s).map_err(|e| RegistrationError::Parse(e.to_string()))
    }
}

impl FromStr for SimilarityTransform {
    type Err = RegistrationError;

    /// Accepts either the JSON document or the 16-number matrix text.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim_start().starts_with('{') {
            SimilarityTransform::from_json(s)
        } else {
            SimilarityTransform::from_matrix_text(s)
        }
    }
}

pub fn apply_similarity(cloud: &PointCloud, t: &SimilarityTransform) -> PointCloud {
    let r = t.rotation_matrix();
    let rotate_normals = !t.is_identity_rotation();
    let positions = cloud
        .positions
        .par_iter()
        .map(|&p| t.apply_with(&r, p))
        .collect();
    let normals = if rotate_normals {
        cloud
            .normals
            .par_iter()
            .map(|&n| {
                if n == [0.0; 3] {
                    n
                } else {
                    let v = r * Vector3::from(n);
                    let len = v.norm();
                    if len > 0.0 {
                        (v / len).into()
                    } else {
                        [0.0; 3]
                    }
                }
            })
            .collect()
    } else {
        cloud.normals.clone()
    };
    PointCloud {
        positions,
        colors: cloud.colors.clone(),
        normals,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub transform: SimilarityTransform,
    pub residual_rms: f64,
}

/// Least-squares similarity mapping `source[i]` onto `target[i]`.
pub fn estimate_similarity(
    source: &[Vec3],
    target: &[Vec3],
) -> Result<Estimate, RegistrationError> {
    if source.len() != target.len() {
        return Err(RegistrationError::CountMismatch(source.len(), target.len()));
    }
    let n = source.len();
    if n < 3 {
        return Err(RegistrationError::TooFewCorrespondences(n));
    }
    let src: Vec<Vector3<f64>> = source.iter().map(|&p| p.into()).collect();
    let dst: Vec<Vector3<f64>> = target.iter().map(|&p| p.into()).collect();
    let inv_n = 1.0 / n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_t = dst.iter().sum::<Vector3<f64>>() * inv_n;

    let mut cov = Matrix3::zeros();
    let mut src_scatter = Matrix3::zeros();
    for (s, t) in src.iter().zip(&dst) {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose();
        src_scatter += ds * ds.transpose();
    }
    cov *= inv_n;
    src_scatter *= inv_n;
    let var_s = src_scatter.trace();

    // Collinear sources leave a rank <= 1 scatter matrix.
    let mut ev: Vec<f64> = src_scatter
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(RegistrationError::DegenerateConfiguration);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut d = svd.singular_values;
    // sort descending so the reflection fix touches the weakest axis
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let u = Matrix3::from_columns(&order.map(|i| u.column(i).into_owned()));
    let v_t = Matrix3::from_rows(&order.map(|i| v_t.row(i).into_owned()));
    d = Vector3::new(d[order[0]], d[order[1]], d[order[2]]);

    let mut sign = Matrix3::identity();
    if u.determinant() * v_t.determinant() < 0.0 {
        // A clearly non-planar configuration whose optimum is a mirror is a
        // reflection, not noise.
        if d[2] > 1e-9 * d[0] {
            return Err(RegistrationError::Reflection);
        }
        sign[(2, 2)] = -1.0;
    }
    let r = u * sign * v_t;
    let scale = (d[0] * sign[(0, 0)] + d[1] * sign[(1, 1)] + d[2] * sign[(2, 2)]) / var_s;
    if !(scale > 0.0) {
        return Err(RegistrationError::DegenerateConfiguration);
    }
    let translation = mu_t - scale * (r * mu_s);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let transform = SimilarityTransform::from_parts(scale, &rotation, translation)?;

    let rm = transform.rotation_matrix();
    let sq: f64 = src
        .iter()
        .zip(&dst)
        .map(|(s, t)| (transform.scale * (rm * s) + translation - t).norm_squared())
        .sum();
    Ok(Estimate {
        transform,
        residual_rms: (sq * inv_n).sqrt(),
    })
}

/// SfM points first, then the sampled points; payloads copied verbatim.
pub fn merge_clouds(sampled: &PointCloud, sfm: &PointCloud) -> PointCloud {
    let mut merged = PointCloud {
        positions: Vec::with_capacity(sampled.len() + sfm.len()),
        colors: Vec::with_capacity(sampled.len() + sfm.len()),
        normals: Vec::with_capacity(sampled.len() + sfm.len()),
    };
    merged.extend(sfm);
    merged.extend(sampled);
    merged
}

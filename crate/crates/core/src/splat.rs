//! Reference CPU splatting renderer for inspecting an initialization.
//!
//! Each Gaussian has covariance `Σ = R S Sᵀ Rᵀ`. It is projected with the
//! affine (first-order) perspective approximation `Σ' = J W Σ Wᵀ Jᵀ`, where
//! `W` is the rotation part of the world-to-camera transform and `J` the
//! Jacobian of the perspective divide at the Gaussian's mean. Pixels are then
//! composited front to back:
//!
//! ```text
//! C(p) = Σ_i c_i α_i G'_i(p) Π_{j<i} (1 − α_j G'_j(p))
//! ```
//!
//! Colors are DC-only (no view dependence). The renderer uses one global
//! depth sort and no tiling; it is meant for small previews, not throughput.

use std::cmp::Ordering;
use std::num::NonZero;

use image::RgbImage;
use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::colmap::{CameraIntrinsics, ImagePose};
use crate::geom::Vec3;
use crate::mesh_io::PointCloud;

/// Screen-space low-pass dilation added to every projected covariance (px²).
pub const COV2D_DILATION: f64 = 0.3;
/// Points closer than this to the camera plane are not rendered.
pub const Z_NEAR: f64 = 0.01;
pub const MAX_ALPHA: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// A pixel stops accumulating once its transmittance falls below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const INIT_OPACITY: f64 = 0.1;
pub const MIN_INIT_SCALE: f64 = 1e-7;
/// Neighbors averaged for the initial isotropic scale.
pub const INIT_NEIGHBORS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplatError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian3D {
    pub mean: Vec3,
    /// Standard deviations along the local axes (diagonal of `S`).
    pub scale: Vec3,
    /// `(w, x, y, z)`
    pub rotation: [f64; 4],
    pub opacity: f64,
    /// Linear RGB in `[0, 1]`.
    pub color: Vec3,
}

/// Intrinsics plus world-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviewCamera {
    pub intrinsics: CameraIntrinsics,
    pub pose: ImagePose,
}

impl PreviewCamera {
    fn rotation(&self) -> Matrix3<f64> {
        quat_matrix(self.pose.rotation)
    }
}

fn quat_matrix([w, x, y, z]: [f64; 4]) -> Matrix3<f64> {
    *UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
        .to_rotation_matrix()
        .matrix()
}

/// One Gaussian per point: isotropic scale from the mean distance to the
/// nearest neighbors, fixed low opacity, identity rotation.
pub fn init_gaussians(cloud: &PointCloud) -> Result<Vec<Gaussian3D>, SplatError> {
    if cloud.is_empty() {
        return Err(SplatError::EmptyCloud);
    }
    let tree: ImmutableKdTree<f64, 3> = ImmutableKdTree::new_from_slice(&cloud.positions);
    let want = NonZero::new((INIT_NEIGHBORS + 1).min(cloud.len())).expect("cloud non-empty");

    Ok(cloud
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let found = tree.nearest_n::<SquaredEuclidean>(p, want);
            // drop the query point itself; with duplicates it may not come first
            let mut dists: Vec<f64> = Vec::with_capacity(INIT_NEIGHBORS);
            let mut skipped_self = false;
            for nn in &found {
                if !skipped_self && nn.item == i as u64 {
                    skipped_self = true;
                    continue;
                }
                dists.push(nn.distance.sqrt());
            }
            dists.truncate(INIT_NEIGHBORS);
            let mean = if dists.is_empty() {
                0.0
            } else {
                dists.iter().sum::<f64>() / dists.len() as f64
            };
            let s = mean.max(MIN_INIT_SCALE);
            let c = cloud.colors[i];
            Gaussian3D {
                mean: *p,
                scale: [s; 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity: INIT_OPACITY,
                color: c.map(|v| v as f64 / 255.0),
            }
        })
        .collect())
}

/// `R · diag(scale)² · Rᵀ`.
pub fn covariance_3d(scale: Vec3, rotation: [f64; 4]) -> Matrix3<f64> {
    let r = quat_matrix(rotation);
    let s2 = Matrix3::from_diagonal(&Vector3::new(
        scale[0] * scale[0],
        scale[1] * scale[1],
        scale[2] * scale[2],
    ));
    let cov = r * s2 * r.transpose();
    // exact symmetry
    (cov + cov.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Pixel coordinates; pixel `(u, v)` covers `[u, u+1) × [v, v+1)`.
    pub mean2d: [f64; 2],
    /// Screen covariance including [`COV2D_DILATION`].
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

pub fn project_gaussian(
    cov: &Matrix3<f64>,
    mean: Vec3,
    camera: &PreviewCamera,
) -> Result<ProjectedGaussian, SplatError> {
    let w = camera.rotation();
    let t = w * Vector3::from(mean) + Vector3::from(camera.pose.translation);
    if !(t.z > Z_NEAR) {
        return Err(SplatError::BehindCamera(t.z));
    }
    let k = &camera.intrinsics;
    let (fx, fy) = (k.fx, k.fy);
    let z2 = t.z * t.z;
    let j = Matrix2x3::new(fx / t.z, 0.0, -fx * t.x / z2, 0.0, fy / t.z, -fy * t.y / z2);
    let m = j * w;
    let mut cov2d = m * cov * m.transpose();
    cov2d[(0, 1)] = 0.5 * (cov2d[(0, 1)] + cov2d[(1, 0)]);
    cov2d[(1, 0)] = cov2d[(0, 1)];
    cov2d[(0, 0)] += COV2D_DILATION;
    cov2d[(1, 1)] += COV2D_DILATION;
    Ok(ProjectedGaussian {
        mean2d: [fx * t.x / t.z + k.cx, fy * t.y / t.z + k.cy],
        cov2d,
        depth: t.z,
    })
}

/// A projected Gaussian ready for compositing.
#[derive(Debug, Clone, Copy)]
pub struct Splat {
    pub index: usize,
    pub mean2d: [f64; 2],
    /// Inverse screen covariance.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: Vec3,
    /// Inclusive pixel bounds of the 3σ box: `[x0, y0, x1, y1]`.
    pub bbox: [i64; 4],
}

impl Splat {
    /// Unnormalized Gaussian `G'(p)` at pixel center `(px + ½, py + ½)`.
    #[inline]
    pub fn falloff(&self, px: i64, py: i64) -> f64 {
        let d = Vector2::new(
            px as f64 + 0.5 - self.mean2d[0],
            py as f64 + 0.5 - self.mean2d[1],
        );
        (-0.5 * (d.transpose() * self.conic * d)[0]).exp()
    }

    #[inline]
    pub fn covers(&self, px: i64, py: i64) -> bool {
        px >= self.bbox[0] && px <= self.bbox[2] && py >= self.bbox[1] && py <= self.bbox[3]
    }

    /// `α·G'(p)` after the clamp, or `None` when it is skipped.
    #[inline]
    pub fn alpha_at(&self, px: i64, py: i64) -> Option<f64> {
        if !self.covers(px, py) {
            return None;
        }
        let a = (self.opacity * self.falloff(px, py)).min(MAX_ALPHA);
        (a >= MIN_ALPHA).then_some(a)
    }
}

/// Projects, culls and depth-sorts (ties by input index) the Gaussians.
pub fn prepare_splats(gaussians: &[Gaussian3D], camera: &PreviewCamera) -> Vec<Splat> {
    let mut splats: Vec<Splat> = gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(index, g)| {
            let cov = covariance_3d(g.scale, g.rotation);
            let p = project_gaussian(&cov, g.mean, camera).ok()?;
            let conic = p.cov2d.try_inverse()?;
            let rx = 3.0 * p.cov2d[(0, 0)].sqrt();
            let ry = 3.0 * p.cov2d[(1, 1)].sqrt();
            let [mx, my] = p.mean2d;
            // pixel centers inside [m - r, m + r]
            let bbox = [
                (mx - rx - 0.5).ceil() as i64,
                (my - ry - 0.5).ceil() as i64,
                (mx + rx - 0.5).floor() as i64,
                (my + ry - 0.5).floor() as i64,
            ];
            Some(Splat {
                index,
                mean2d: p.mean2d,
                conic,
                depth: p.depth,
                opacity: g.opacity,
                color: g.color,
                bbox,
            })
        })
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    splats
}

/// Linear radiance per pixel plus accumulated alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Radiance {
    pub width: u32,
    pub height: u32,
    pub color: Vec<Vec3>,
    pub alpha: Vec<f64>,
}

impl Radiance {
    /// Round-half-up to 8-bit RGB.
    pub fn to_rgb8(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (px, c) in img.pixels_mut().zip(&self.color) {
            px.0 = c.map(|v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
        img
    }
}

pub fn render_radiance(
    gaussians: &[Gaussian3D],
    camera: &PreviewCamera,
    width: u32,
    height: u32,
    background: Vec3,
) -> Radiance {
    let splats = prepare_splats(gaussians, camera);
    let (w, h) = (width as usize, height as usize);

    // Per-row lists of splats touching that row, in depth order.
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); h];
    for (i, s) in splats.iter().enumerate() {
        if s.bbox[2] < 0 || s.bbox[0] >= w as i64 {
            continue;
        }
        let y0 = s.bbox[1].max(0);
        let y1 = s.bbox[3].min(h as i64 - 1);
        for y in y0..=y1 {
            rows[y as usize].push(i as u32);
        }
    }

    let mut color = vec![[0.0; 3]; w * h];
    let mut alpha = vec![0.0; w * h];
    color
        .par_chunks_mut(w.max(1))
        .zip(alpha.par_chunks_mut(w.max(1)))
        .enumerate()
        .for_each(|(y, (crow, arow))| {
            for x in 0..w {
                let mut c = [0.0; 3];
                let mut t = 1.0;
                for &i in &rows[y] {
                    let s = &splats[i as usize];
                    let Some(a) = s.alpha_at(x as i64, y as i64) else {
                        continue;
                    };
                    for (ck, sk) in c.iter_mut().zip(&s.color) {
                        *ck += sk * a * t;
                    }
                    t *= 1.0 - a;
                    if t < MIN_TRANSMITTANCE {
                        break;
                    }
                }
                for k in 0..3 {
                    c[k] += t * background[k];
                }
                crow[x] = c;
                arow[x] = 1.0 - t;
            }
        });

    Radiance {
        width,
        height,
        color,
        alpha,
    }
}

pub fn render_preview(
    gaussians: &[Gaussian3D],
    camera: &PreviewCamera,
    width: u32,
    height: u32,
    background: [u8; 3],
) -> RgbImage {
    render_radiance(
        gaussians,
        camera,
        width,
        height,
        background.map(|v| v as f64 / 255.0),
    )
    .to_rgb8()
}

//! Mesh-prior point-cloud initialization for Gaussian splatting.
//!
//! Pipeline pieces: PLY/COLMAP I/O, area-graded barycentric sampling,
//! k-means color initialization, similarity registration, a CPU splat
//! preview renderer and image metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod colmap;
pub mod color_init;
pub mod geom;
pub mod mesh_io;
pub mod metrics;
pub mod ply;
pub mod registration;
pub mod sampler;
pub mod splat;

pub use colmap::{
    read_model_dir, read_sparse_model, write_model_dir, write_points3d, CameraIntrinsics,
    ColmapError, ImagePose, ModelFormat, SparseModel, SparsePoint,
};
pub use color_init::{
    assign_initial_colors, collect_pixels, kmeans_colors, ColorAssignment, ColorError,
    ColorPalette, KMeansConfig, PixelSet,
};
pub use geom::Vec3;
pub use mesh_io::{
    parse_ply_mesh, parse_ply_points, validate_mesh, write_ply_points, MeshError, PointCloud,
    TriangleMesh, ValidationReport,
};
pub use metrics::{psnr, ssim, BoundingBox, MetricsError, SsimMode};
pub use registration::{
    apply_similarity, estimate_similarity, merge_clouds, Estimate, RegistrationError,
    SimilarityTransform,
};
pub use sampler::{
    choose_num_grades, grade_triangles, sample_mesh, AutoGrades, BarycentricTable, GradeAssignment,
    SampledCloud, SamplerError,
};
pub use splat::{
    init_gaussians, render_preview, render_radiance, Gaussian3D, PreviewCamera, SplatError,
};

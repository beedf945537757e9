//! Deterministic inputs for the benchmarks.

use meshprior_core::colmap::{CameraIntrinsics, ImagePose};
use meshprior_core::splat::{Gaussian3D, PreviewCamera};
use meshprior_core::{PixelSet, TriangleMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Right triangles with the given areas, spaced apart in the z=0 plane.
pub fn mesh_with_areas(areas: &[f64]) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(areas.len() * 3);
    let mut faces = Vec::with_capacity(areas.len());
    for (i, &a) in areas.iter().enumerate() {
        let x0 = 100.0 * i as f64;
        vertices.extend([[x0, 0.0, 0.0], [x0 + 2.0 * a, 0.0, 0.0], [x0, 1.0, 0.0]]);
        let b = 3 * i as u32;
        faces.push([b, b + 1, b + 2]);
    }
    TriangleMesh {
        vertices,
        faces,
        colors: None,
    }
}

/// 1000 triangles that yield exactly 1,000,000 points at N+1 = 9.
pub fn million_point_mesh() -> TriangleMesh {
    let mut areas = vec![1.0; 15];
    areas.extend(std::iter::repeat_n(0.75 * 4f64.powi(-5), 217));
    areas.extend(std::iter::repeat_n(0.75 * 4f64.powi(-7), 768));
    mesh_with_areas(&areas)
}

/// Pixels drawn around a few dominant colors, like a 140p photo set.
pub fn pixels(n: usize, seed: u64) -> PixelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [
        [180.0, 170.0, 160.0],
        [60.0, 90.0, 140.0],
        [40.0, 120.0, 50.0],
    ];
    let colors = (0..n)
        .map(|_| {
            let b = bases[rng.random_range(0..bases.len())];
            b.map(|v: f64| (v + rng.random_range(-30.0..30.0)).clamp(0.0, 255.0))
        })
        .collect();
    PixelSet {
        colors,
        image_count: 1,
    }
}

pub fn scene(n: usize, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Gaussian3D {
            mean: [
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.0..1.0),
                rng.random_range(3.0..6.0),
            ],
            scale: [0.02, 0.02, 0.02],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: 0.1,
            color: [rng.random(), rng.random(), rng.random()],
        })
        .collect()
}

pub fn camera(width: u32, height: u32) -> PreviewCamera {
    PreviewCamera {
        intrinsics: CameraIntrinsics::pinhole(
            1,
            width as u64,
            height as u64,
            width as f64,
            width as f64,
            width as f64 / 2.0,
            height as f64 / 2.0,
        ),
        pose: ImagePose {
            id: 1,
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
            camera_id: 1,
            name: "bench".into(),
            points2d: Vec::new(),
        },
    }
}

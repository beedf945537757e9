//! Reference implementations and fixture generators shared by the
//! integration tests and the acceptance runner. Everything here is written
//! independently of the library internals.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use image::RgbImage;
use meshprior_core::colmap::{CameraIntrinsics, ImagePose, SparsePoint};
use meshprior_core::splat::{Gaussian3D, PreviewCamera};
use meshprior_core::{PointCloud, TriangleMesh};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type V3 = [f64; 3];

// ---------------------------------------------------------------- sampling

/// Grade by counting how many times the area can be quadrupled before it
/// exceeds the largest area (multiplication by 4 is exact).
pub fn oracle_grade(area: f64, max_area: f64, num_grades: usize) -> usize {
    let n = num_grades - 1;
    let mut quarterings = 0usize;
    let mut a = area;
    while a * 4.0 <= max_area && quarterings < n {
        a *= 4.0;
        quarterings += 1;
    }
    n - quarterings
}

pub fn oracle_count(areas: &[f64], num_grades: usize) -> u64 {
    let max = areas.iter().cloned().fold(0.0, f64::max);
    areas
        .iter()
        .map(|&a| 4u64.pow(oracle_grade(a, max, num_grades) as u32))
        .sum()
}

pub fn tri_area(a: V3, b: V3, c: V3) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

pub fn random_point(rng: &mut ChaCha8Rng, r: f64) -> V3 {
    [
        rng.random_range(-r..r),
        rng.random_range(-r..r),
        rng.random_range(-r..r),
    ]
}

/// Random triangle soup with widely varying areas.
pub fn random_mesh(rng: &mut ChaCha8Rng, faces: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(faces * 3);
    let mut tris = Vec::with_capacity(faces);
    for f in 0..faces {
        let s = 10f64.powf(rng.random_range(-2.5..1.0));
        let o = random_point(rng, 5.0);
        for _ in 0..3 {
            let p = random_point(rng, s);
            vertices.push([o[0] + p[0], o[1] + p[1], o[2] + p[2]]);
        }
        let b = 3 * f as u32;
        tris.push([b, b + 1, b + 2]);
    }
    TriangleMesh {
        vertices,
        faces: tris,
        colors: None,
    }
}

/// Right triangles in the z=0 plane whose areas are exactly
/// `max_area * ratio` for each given ratio (ratios must be powers of two
/// times representable legs).
pub fn mesh_with_areas(areas: &[f64]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, &a) in areas.iter().enumerate() {
        // legs (2a, 1): area = a
        let x0 = 100.0 * i as f64;
        vertices.push([x0, 0.0, 0.0]);
        vertices.push([x0 + 2.0 * a, 0.0, 0.0]);
        vertices.push([x0, 1.0, 0.0]);
        let b = 3 * i as u32;
        faces.push([b, b + 1, b + 2]);
    }
    TriangleMesh {
        vertices,
        faces,
        colors: None,
    }
}

/// 1000 faces whose grades at N+1 = 9 give exactly 1,000,000 points:
/// 15 at grade 8, 217 at grade 3, 768 at grade 1.
pub fn million_point_mesh() -> TriangleMesh {
    let mut areas = Vec::with_capacity(1000);
    areas.extend(std::iter::repeat_n(1.0, 15));
    areas.extend(std::iter::repeat_n(0.75 * 4f64.powi(-5), 217));
    areas.extend(std::iter::repeat_n(0.75 * 4f64.powi(-7), 768));
    mesh_with_areas(&areas)
}

/// Barycentric coordinates of `p` w.r.t. triangle `(a, b, c)` from the
/// normal equations, plus the out-of-plane distance.
pub fn barycentric(p: V3, a: V3, b: V3, c: V3) -> (V3, f64) {
    let d = |x: V3, y: V3| [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    let dot = |x: V3, y: V3| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let (v0, v1, v2) = (d(b, a), d(c, a), d(p, a));
    let (d00, d01, d11) = (dot(v0, v0), dot(v0, v1), dot(v1, v1));
    let (d20, d21) = (dot(v2, v0), dot(v2, v1));
    let den = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    let u = 1.0 - v - w;
    let n = [
        v0[1] * v1[2] - v0[2] * v1[1],
        v0[2] * v1[0] - v0[0] * v1[2],
        v0[0] * v1[1] - v0[1] * v1[0],
    ];
    let nn = dot(n, n).sqrt();
    let off = dot(v2, n).abs() / nn;
    ([u, v, w], off)
}

// ----------------------------------------------------------------- k-means

pub fn sq(a: V3, b: V3) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Minimum within-cluster sum of squares over every labeling of `pixels`
/// into at most `k` groups, with the minimizing group means.
pub fn brute_force_kmeans(pixels: &[V3], k: usize) -> (f64, Vec<V3>) {
    let n = pixels.len();
    let total = k.pow(n as u32);
    let mut best = (f64::INFINITY, Vec::new());
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in pixels.iter().zip(&labels) {
            for d in 0..3 {
                sums[l][d] += p[d];
            }
            counts[l] += 1;
        }
        let means: Vec<V3> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    [f64::NAN; 3]
                } else {
                    s.map(|v| v / c as f64)
                }
            })
            .collect();
        let cost: f64 = pixels
            .iter()
            .zip(&labels)
            .map(|(p, &l)| sq(*p, means[l]))
            .sum();
        if cost < best.0 {
            let centers = means.into_iter().filter(|m| !m[0].is_nan()).collect();
            best = (cost, centers);
        }
    }
    best
}

pub fn three_color_fixture() -> Vec<V3> {
    let mut v = Vec::new();
    for c in [[0.0, 0.0, 0.0], [255.0, 255.0, 255.0], [255.0, 0.0, 0.0]] {
        v.extend([c; 3]);
    }
    v
}

pub fn sorted_centers(mut c: Vec<V3>) -> Vec<V3> {
    c.sort_by(|a, b| a.partial_cmp(b).unwrap());
    c
}

// ------------------------------------------------------------- formats

pub fn random_cloud(rng: &mut ChaCha8Rng, max_len: usize) -> PointCloud {
    let n = rng.random_range(1..=max_len);
    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for _ in 0..n {
        positions.push(random_point(rng, 1e4).map(|v| v as f32 as f64));
        // unit normals stored exactly as f32 values
        let nrm = loop {
            let v = random_point(rng, 1.0);
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if l > 0.1 {
                break v.map(|x| (x / l) as f32 as f64);
            }
        };
        normals.push(if rng.random_bool(0.1) { [0.0; 3] } else { nrm });
        colors.push([rng.random(), rng.random(), rng.random()]);
    }
    PointCloud {
        positions,
        colors,
        normals,
    }
}

pub fn random_sparse_points(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<SparsePoint> {
    let n = rng.random_range(0..=max_len);
    let mut id = 0u64;
    (0..n)
        .map(|_| {
            id += rng.random_range(1..1_000_000u64);
            let track_len = rng.random_range(0..6);
            SparsePoint {
                id,
                position: [
                    rng.random::<f64>() * 1e3 - 500.0,
                    rng.random(),
                    -rng.random::<f64>(),
                ],
                color: [rng.random(), rng.random(), rng.random()],
                error: rng.random::<f64>() * 4.0,
                track: (0..track_len)
                    .map(|_| (rng.random(), rng.random()))
                    .collect(),
            }
        })
        .collect()
}

/// The single-point record: u64 count, then id=7, xyz=(1,2,3),
/// rgb=(10,20,30), error=0.5, track=[(1,4)].
pub fn single_point_blob() -> Vec<u8> {
    let mut b = Vec::new();
    b.extend(1u64.to_le_bytes());
    b.extend(7u64.to_le_bytes());
    for v in [1.0f64, 2.0, 3.0] {
        b.extend(v.to_le_bytes());
    }
    b.extend([10u8, 20, 30]);
    b.extend(0.5f64.to_le_bytes());
    b.extend(1u64.to_le_bytes());
    b.extend(1u32.to_le_bytes());
    b.extend(4u32.to_le_bytes());
    b
}

// ------------------------------------------------------------ rendering

pub fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

pub fn test_camera(width: u32, height: u32, focal: f64) -> PreviewCamera {
    PreviewCamera {
        intrinsics: CameraIntrinsics::pinhole(
            1,
            width as u64,
            height as u64,
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
        ),
        pose: ImagePose {
            id: 1,
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
            camera_id: 1,
            name: "view".into(),
            points2d: Vec::new(),
        },
    }
}

pub fn random_scene(rng: &mut ChaCha8Rng, max: usize) -> Vec<Gaussian3D> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| Gaussian3D {
            mean: [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(2.0..6.0),
            ],
            scale: [
                rng.random_range(0.02..0.6),
                rng.random_range(0.02..0.6),
                rng.random_range(0.02..0.6),
            ],
            rotation: [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
            opacity: rng.random_range(0.05..1.0),
            color: [rng.random(), rng.random(), rng.random()],
        })
        .collect()
}

struct Footprint {
    depth: f64,
    index: usize,
    mean: [f64; 2],
    conic: [f64; 3],
    radius: [f64; 2],
    opacity: f64,
    color: V3,
}

fn footprint(g: &Gaussian3D, index: usize, cam: &PreviewCamera) -> Option<Footprint> {
    let r = quat_to_matrix(g.rotation);
    let w = quat_to_matrix(cam.pose.rotation);
    let s2 = g.scale.map(|s| s * s);
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            sigma[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
        }
    }
    let mut t = [0.0; 3];
    for i in 0..3 {
        t[i] = (0..3).map(|k| w[i][k] * g.mean[k]).sum::<f64>() + cam.pose.translation[i];
    }
    if t[2] <= 0.01 {
        return None;
    }
    let k = &cam.intrinsics;
    let jac = [
        [k.fx / t[2], 0.0, -k.fx * t[0] / (t[2] * t[2])],
        [0.0, k.fy / t[2], -k.fy * t[1] / (t[2] * t[2])],
    ];
    // M = J W
    let mut m = [[0.0; 3]; 2];
    for i in 0..2 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|l| jac[i][l] * w[l][j]).sum();
        }
    }
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = (0..3)
                .flat_map(|a| (0..3).map(move |b| (a, b)))
                .map(|(a, b)| m[i][a] * sigma[a][b] * m[j][b])
                .sum();
        }
    }
    let (a, b, d) = (c[0][0] + 0.3, 0.5 * (c[0][1] + c[1][0]), c[1][1] + 0.3);
    let det = a * d - b * b;
    if det <= 0.0 {
        return None;
    }
    Some(Footprint {
        depth: t[2],
        index,
        mean: [k.fx * t[0] / t[2] + k.cx, k.fy * t[1] / t[2] + k.cy],
        conic: [d / det, -b / det, a / det],
        radius: [3.0 * a.sqrt(), 3.0 * d.sqrt()],
        opacity: g.opacity,
        color: g.color,
    })
}

/// Direct per-pixel evaluation of `C = Σ cᵢ αᵢ Πⱼ<ᵢ (1 − αⱼ)` with the
/// product recomputed for each term, plus background times the remaining
/// transmittance.
pub fn oracle_render(
    gaussians: &[Gaussian3D],
    cam: &PreviewCamera,
    width: u32,
    height: u32,
    background: V3,
) -> Vec<V3> {
    let mut fps: Vec<Footprint> = gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| footprint(g, i, cam))
        .collect();
    fps.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    let mut out = Vec::with_capacity((width * height) as usize);
    for py in 0..height {
        for px in 0..width {
            let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
            let alphas: Vec<(f64, V3)> = fps
                .iter()
                .filter_map(|f| {
                    let (dx, dy) = (x - f.mean[0], y - f.mean[1]);
                    if dx.abs() > f.radius[0] || dy.abs() > f.radius[1] {
                        return None;
                    }
                    let q =
                        f.conic[0] * dx * dx + 2.0 * f.conic[1] * dx * dy + f.conic[2] * dy * dy;
                    let a = (f.opacity * (-0.5 * q).exp()).min(0.99);
                    (a >= 1.0 / 255.0).then_some((a, f.color))
                })
                .collect();
            let mut c = [0.0; 3];
            let mut used = 0;
            for i in 0..alphas.len() {
                let t: f64 = alphas[..i].iter().map(|(a, _)| 1.0 - a).product();
                if t < 1e-4 {
                    break;
                }
                for k in 0..3 {
                    c[k] += alphas[i].1[k] * alphas[i].0 * t;
                }
                used = i + 1;
            }
            let t_end: f64 = alphas[..used].iter().map(|(a, _)| 1.0 - a).product();
            for k in 0..3 {
                c[k] += background[k] * t_end;
            }
            out.push(c);
        }
    }
    out
}

// -------------------------------------------------------------- metrics

/// Fixed 64×64 test patterns (see the frozen reference values below).
pub fn pattern(kind: u32) -> RgbImage {
    RgbImage::from_fn(64, 64, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let m = |v: i64| v.rem_euclid(256) as u8;
        let p = match kind {
            0 => [
                m(x * 7 + y * 13 + (x * y) % 31),
                m(x * x + 3 * y),
                m(255 - 4 * x + 2 * y),
            ],
            1 => [
                m(x * 7 + y * 13 + (x * y) % 31 + (x * 5 + y * 3) % 17),
                m(x * x + 3 * y + (x ^ y) % 23),
                m(255 - 4 * x + 2 * y + 9 * ((x / 8 + y / 8) % 2)),
            ],
            2 => [m(((x / 4 + y / 4) % 2) * 200 + 20), m(x * 4), m(y * 4)],
            _ => [
                m(255 - (((x / 4 + y / 4) % 2) * 200 + 20)),
                m(x * 4 + 40),
                m(y * 3),
            ],
        };
        image::Rgb(p)
    })
}

/// `(pattern a, pattern b, full luma SSIM, SSIM in box 5,10,32,40,
/// per-channel-mean SSIM)` computed with scikit-image's
/// `structural_similarity(gaussian_weights=True, sigma=1.5,
/// use_sample_covariance=False, data_range=255)` on float luma.
pub const SSIM_REFERENCE: [(u32, u32, f64, f64, f64); 3] = [
    (
        0,
        1,
        0.7605933198228505,
        0.773989407117312,
        0.7886812392430612,
    ),
    (
        2,
        3,
        -0.8098263788157902,
        -0.8766954655672355,
        0.2534184606736568,
    ),
    (
        0,
        2,
        0.010691679169334908,
        0.010801433609254878,
        0.1566283720431255,
    ),
];

/// Brute-force SSIM: explicit 11×11 window sums at every valid position.
pub fn brute_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let g: Vec<f64> = (0..11)
        .map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp())
        .collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..11 {
                for dx in 0..11 {
                    let wt = g[dy] * g[dx] / (gs * gs);
                    let i = (y0 + dy) * w + x0 + dx;
                    ma += wt * a[i];
                    mb += wt * b[i];
                    saa += wt * a[i] * a[i];
                    sbb += wt * b[i] * b[i];
                    sab += wt * a[i] * b[i];
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn luma_plane(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64)
        .collect()
}

pub fn random_image(rng: &mut ChaCha8Rng) -> RgbImage {
    let w = rng.random_range(11..48);
    let h = rng.random_range(11..48);
    RgbImage::from_fn(w, h, |_, _| {
        image::Rgb([rng.random(), rng.random(), rng.random()])
    })
}

/// Adds uniform noise in `[-amp, amp]`, clamped to 8 bits.
pub fn add_noise(img: &RgbImage, amp: f64, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for v in p.0.iter_mut() {
            let n = *v as f64 + rng.random_range(-amp..=amp);
            *v = n.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

// -------------------------------------------------------------- fixtures

/// Regular tetrahedron with unit edges, outward faces.
pub fn tetrahedron_ply() -> Vec<u8> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = [
        [0.5, 0.0, -0.5 * s],
        [-0.5, 0.0, -0.5 * s],
        [0.0, 0.5, 0.5 * s],
        [0.0, -0.5, 0.5 * s],
    ];
    let mut text = String::from(
        "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 4\nproperty list uchar int vertex_indices\nend_header\n",
    );
    for p in v {
        text.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    text.push_str("3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n");
    text.into_bytes()
}

/// Two small synthetic photos: one red/blue split, one mostly white.
pub fn synthetic_photos() -> Vec<RgbImage> {
    vec![
        RgbImage::from_fn(64, 48, |x, _| {
            if x < 32 {
                image::Rgb([200, 30, 30])
            } else {
                image::Rgb([20, 40, 180])
            }
        }),
        RgbImage::from_fn(64, 48, |x, y| {
            if (x / 8 + y / 8) % 4 == 0 {
                image::Rgb([20, 40, 180])
            } else {
                image::Rgb([240, 240, 235])
            }
        }),
    ]
}

pub struct Fixture {
    pub mesh: std::path::PathBuf,
    pub colmap: std::path::PathBuf,
    pub images: std::path::PathBuf,
}

/// Non-contiguous ids so the synthetic numbering is exercised.
pub fn fixture_sfm_points() -> Vec<SparsePoint> {
    (0..12u64)
        .map(|i| {
            let a = i as f64 * 0.5;
            SparsePoint {
                id: 3 + i * i,
                position: [a.cos() * 0.8, a.sin() * 0.8, 0.1 * i as f64 - 0.5],
                color: [(20 * i) as u8, 100, (250 - 20 * i) as u8],
                error: 0.25 + i as f64 / 16.0,
                track: vec![(1, i as u32), (2, 11 - i as u32)],
            }
        })
        .collect()
}

/// Tetrahedron mesh, two photos and a two-view COLMAP model under `root`.
pub fn write_fixture(root: &std::path::Path) -> Fixture {
    use meshprior_core::colmap::{write_model_dir, ModelFormat, SparseModel};
    let mesh = root.join("tetra.ply");
    std::fs::write(&mesh, tetrahedron_ply()).unwrap();
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let names = ["view_a.png", "view_b.png"];
    for (img, name) in synthetic_photos().iter().zip(names) {
        img.save(images.join(name)).unwrap();
    }
    let colmap = root.join("sparse");
    std::fs::create_dir_all(&colmap).unwrap();
    let mut model = SparseModel::default();
    for p in fixture_sfm_points() {
        model.points.insert(p.id, p);
    }
    model.cameras.insert(
        1,
        CameraIntrinsics::pinhole(1, 64, 48, 60.0, 60.0, 32.0, 24.0),
    );
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for (id, (name, rotation)) in [
        (1u32, (names[0], [1.0, 0.0, 0.0, 0.0])),
        (2, (names[1], [h, 0.0, h, 0.0])),
    ] {
        model.images.insert(
            id,
            ImagePose {
                id,
                rotation,
                translation: [0.0, 0.0, 3.0],
                camera_id: 1,
                name: name.into(),
                points2d: Vec::new(),
            },
        );
    }
    write_model_dir(&colmap, &model, ModelFormat::Binary).unwrap();
    Fixture {
        mesh,
        colmap,
        images,
    }
}

// ---------------------------------------------------------- registration

pub fn random_similarity(rng: &mut ChaCha8Rng) -> meshprior_core::SimilarityTransform {
    let q = loop {
        let v = [0; 4].map(|_: i32| rng.random_range(-1.0..1.0f64));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.2 {
            let q = v.map(|x| x / n);
            break if q[0] < 0.0 { q.map(|x| -x) } else { q };
        }
    };
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    meshprior_core::SimilarityTransform::new(scale, q, random_point(rng, 50.0)).unwrap()
}

/// Largest of: relative scale error, quaternion component error (sign
/// fixed), translation error relative to its magnitude.
pub fn similarity_error(
    a: &meshprior_core::SimilarityTransform,
    b: &meshprior_core::SimilarityTransform,
) -> f64 {
    let ds = (a.scale() - b.scale()).abs() / b.scale();
    let (qa, qb) = (a.rotation(), b.rotation());
    let dot: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let dq = qa
        .iter()
        .zip(&qb)
        .map(|(x, y)| (sign * x - y).abs())
        .fold(0.0, f64::max);
    let tb = b.translation();
    let mag = 1.0 + tb.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dt = a
        .translation()
        .iter()
        .zip(&tb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ds.max(dq).max(dt / mag)
}

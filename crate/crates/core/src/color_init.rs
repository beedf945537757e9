//! Initial colors for sampled points from the photo set.
//!
//! Images are area-averaged down to a small height (140 px by default), all
//! pixels are pooled, and K-means picks `k` representative colors. Each point
//! then receives one of those colors at random.

use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TARGET_HEIGHT: u32 = 140;
pub const DEFAULT_K: usize = 3;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-3;

/// Pixels per work unit in the parallel reductions. Fixed so the summation
/// tree, and therefore every rounding, is independent of the thread count.
const REDUCE_CHUNK: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("no images to collect pixels from")]
    NoImages,
    #[error("{path}: cannot decode image: {reason}")]
    UndecodableImage { path: String, reason: String },
    #[error("target height must be at least 1")]
    InvalidTargetHeight,
    #[error("k-means needs at least k = {k} pixels, got {pixels}")]
    TooFewPixels { k: usize, pixels: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("palette is empty")]
    EmptyPalette,
}

pub type Rgb = [f64; 3];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PixelSet {
    pub colors: Vec<Rgb>,
    pub image_count: usize,
}

impl PixelSet {
    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Every `stride`-th pixel, starting from the first.
    pub fn subsample(&self, stride: usize) -> PixelSet {
        PixelSet {
            colors: self.colors.iter().step_by(stride.max(1)).copied().collect(),
            image_count: self.image_count,
        }
    }
}

/// Image files (`.png`, `.jpg`, `.jpeg`) in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_images(paths: &[PathBuf]) -> Result<Vec<RgbImage>, ColorError> {
    paths
        .par_iter()
        .map(|p| {
            image::open(p)
                .map(|img| img.to_rgb8())
                .map_err(|e| ColorError::UndecodableImage {
                    path: p.display().to_string(),
                    reason: e.to_string(),
                })
        })
        .collect()
}

/// Width after scaling `width × height` to `target_height`, rounded to nearest.
pub fn scaled_width(width: u32, height: u32, target_height: u32) -> u32 {
    ((width as f64 * target_height as f64 / height as f64).round() as u32).max(1)
}

/// Per output cell, the source indices it covers and their coverage weights.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) as f64) - lo.max(s as f64);
                    (overlap > 0.0).then_some((s, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resize; returns row-major real-valued pixels.
pub fn downscale_area(img: &RgbImage, width: u32, height: u32) -> Vec<Rgb> {
    let (sw, sh) = (img.width() as usize, img.height() as usize);
    let (dw, dh) = (width as usize, height as usize);
    let wx = box_weights(sw, dw);
    let wy = box_weights(sh, dh);

    // horizontal pass: sh rows of dw
    let mut tmp = vec![[0.0; 3]; sh * dw];
    tmp.par_chunks_mut(dw).enumerate().for_each(|(y, row)| {
        for (out, weights) in row.iter_mut().zip(&wx) {
            for &(x, w) in weights {
                let p = img.get_pixel(x as u32, y as u32).0;
                for k in 0..3 {
                    out[k] += w * p[k] as f64;
                }
            }
        }
    });

    let mut out = vec![[0.0; 3]; dh * dw];
    out.par_chunks_mut(dw).enumerate().for_each(|(oy, row)| {
        for &(y, w) in &wy[oy] {
            for (o, t) in row.iter_mut().zip(&tmp[y * dw..(y + 1) * dw]) {
                for k in 0..3 {
                    o[k] += w * t[k];
                }
            }
        }
    });
    out
}

pub fn collect_pixels(images: &[RgbImage], target_height: u32) -> Result<PixelSet, ColorError> {
    if images.is_empty() {
        return Err(ColorError::NoImages);
    }
    if target_height == 0 {
        return Err(ColorError::InvalidTargetHeight);
    }
    let mut colors = Vec::new();
    for img in images {
        if img.width() == 0 || img.height() == 0 {
            continue;
        }
        let w = scaled_width(img.width(), img.height(), target_height);
        colors.extend(downscale_area(img, w, target_height));
    }
    Ok(PixelSet {
        colors,
        image_count: images.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no center moves by this much (RGB units) in an iteration.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorPalette {
    pub centers: Vec<Rgb>,
    pub sizes: Vec<usize>,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Within-cluster sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
}

impl ColorPalette {
    /// A palette with the given centers and no clustering history.
    pub fn from_centers(centers: Vec<Rgb>) -> Self {
        let k = centers.len();
        ColorPalette {
            centers,
            sizes: vec![0; k],
            k,
            iterations: 0,
            converged: true,
            objective_history: Vec::new(),
        }
    }

    pub fn centers_rgb8(&self) -> Vec<[u8; 3]> {
        self.centers.iter().map(|c| to_rgb8(*c)).collect()
    }
}

/// Round-half-up to 8 bits.
pub fn to_rgb8(c: Rgb) -> [u8; 3] {
    c.map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8)
}

#[inline]
fn dist2(a: Rgb, b: Rgb) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Balanced pairwise combination in a fixed tree shape.
fn pairwise<T: Clone>(items: &[T], combine: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (l, r) = items.split_at(n / 2);
            Some(combine(&pairwise(l, combine)?, &pairwise(r, combine)?))
        }
    }
}

fn deterministic_sum(values: &[f64]) -> f64 {
    let partial: Vec<f64> = values
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().sum())
        .collect();
    pairwise(&partial, &|a, b| a + b).unwrap_or(0.0)
}

/// Nearest center per pixel (ties to the lower index) and its squared distance.
fn assign(pixels: &[Rgb], centers: &[Rgb]) -> (Vec<usize>, Vec<f64>) {
    pixels
        .par_iter()
        .map(|&p| {
            let mut best = (0, dist2(p, centers[0]));
            for (j, &c) in centers.iter().enumerate().skip(1) {
                let d = dist2(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

/// Within-cluster sum of squared distances for the nearest-center partition.
pub fn objective(pixels: &[Rgb], centers: &[Rgb]) -> f64 {
    deterministic_sum(&assign(pixels, centers).1)
}

type ClusterSums = Vec<([f64; 3], usize)>;

fn cluster_sums(pixels: &[Rgb], labels: &[usize], k: usize) -> ClusterSums {
    let partial: Vec<ClusterSums> = pixels
        .par_chunks(REDUCE_CHUNK)
        .zip(labels.par_chunks(REDUCE_CHUNK))
        .map(|(px, lb)| {
            let mut acc = vec![([0.0; 3], 0usize); k];
            for (p, &l) in px.iter().zip(lb) {
                for (a, v) in acc[l].0.iter_mut().zip(p) {
                    *a += v;
                }
                acc[l].1 += 1;
            }
            acc
        })
        .collect();
    pairwise(&partial, &|a: &ClusterSums, b: &ClusterSums| {
        a.iter()
            .zip(b)
            .map(|((sa, na), (sb, nb))| ([sa[0] + sb[0], sa[1] + sb[1], sa[2] + sb[2]], na + nb))
            .collect()
    })
    .unwrap_or_else(|| vec![([0.0; 3], 0); k])
}

/// k-means++ seeding.
fn seed_centers(pixels: &[Rgb], k: usize, rng: &mut ChaCha8Rng) -> Vec<Rgb> {
    let n = pixels.len();
    let mut centers = vec![pixels[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = pixels.par_iter().map(|&p| dist2(p, centers[0])).collect();
    while centers.len() < k {
        let total = deterministic_sum(&d2);
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just short of `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..n)
        };
        let c = pixels[next];
        centers.push(c);
        d2.par_iter_mut()
            .zip(pixels.par_iter())
            .for_each(|(d, &p)| *d = d.min(dist2(p, c)));
    }
    centers
}

pub fn kmeans_colors(pixels: &PixelSet, config: &KMeansConfig) -> Result<ColorPalette, ColorError> {
    let k = config.k;
    if k == 0 {
        return Err(ColorError::InvalidK);
    }
    let px = &pixels.colors;
    if px.len() < k {
        return Err(ColorError::TooFewPixels {
            k,
            pixels: px.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centers = seed_centers(px, k, &mut rng);
    let mut history = Vec::new();
    let mut sizes = vec![0; k];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let (labels, mut d2) = assign(px, &centers);
        history.push(deterministic_sum(&d2));

        let sums = cluster_sums(px, &labels, k);
        let mut next = centers.clone();
        for (j, (sum, count)) in sums.iter().enumerate() {
            sizes[j] = *count;
            if *count > 0 {
                next[j] = sum.map(|s| s / *count as f64);
            }
        }
        // Empty clusters restart at the pixel worst served by its center.
        for j in 0..k {
            if sums[j].1 == 0 {
                let far = d2
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &d)| if d > d2[best] { i } else { best });
                next[j] = px[far];
                d2[far] = -1.0;
            }
        }

        let movement = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(*a, *b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if movement < config.tol {
            converged = true;
            break;
        }
    }

    Ok(ColorPalette {
        centers,
        sizes,
        k,
        iterations,
        converged,
        objective_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorAssignment {
    /// Every point draws its own palette entry.
    #[default]
    PerPoint,
    /// One palette entry, drawn once, for all points.
    Single,
}

pub fn assign_initial_colors(
    n_points: usize,
    palette: &ColorPalette,
    seed: u64,
    mode: ColorAssignment,
) -> Result<Vec<[u8; 3]>, ColorError> {
    let choices = palette.centers_rgb8();
    if choices.is_empty() {
        return Err(ColorError::EmptyPalette);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match mode {
        ColorAssignment::PerPoint => (0..n_points)
            .map(|_| choices[rng.random_range(0..choices.len())])
            .collect(),
        ColorAssignment::Single => {
            vec![choices[rng.random_range(0..choices.len())]; n_points]
        }
    })
}

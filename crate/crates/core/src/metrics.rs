//! PSNR and SSIM, optionally restricted to a bounding box.
//!
//! SSIM is single-scale with an 11×11 Gaussian window (σ = 1.5), `K1 = 0.01`,
//! `K2 = 0.03`, `L = 255`, evaluated only where the window fits entirely
//! inside the (cropped) image, and averaged over those positions.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;
pub const MIN_BOX_SIDE: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("bounding box {0} does not fit in a {1}x{2} image")]
    BoxOutOfBounds(BoundingBox, u32, u32),
    #[error("region {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(u32, u32),
    #[error("invalid bounding box `{0}` (expected x,y,w,h with w,h >= {MIN_BOX_SIDE})")]
    InvalidBox(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.width, self.height)
    }
}

impl FromStr for BoundingBox {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MetricsError::InvalidBox(s.to_string());
        let parts: Vec<u32> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        let [x, y, width, height] = parts[..] else {
            return Err(bad());
        };
        if width < MIN_BOX_SIDE || height < MIN_BOX_SIDE {
            return Err(bad());
        }
        Ok(BoundingBox {
            x,
            y,
            width,
            height,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsimMode {
    /// Rec. 601 luma.
    #[default]
    Luma,
    /// Mean of the per-channel SSIM values.
    ChannelMean,
}

/// Row-major single-channel image.
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

fn region(
    a: &RgbImage,
    b: &RgbImage,
    bbox: Option<BoundingBox>,
) -> Result<BoundingBox, MetricsError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let full = BoundingBox {
        x: 0,
        y: 0,
        width: a.width(),
        height: a.height(),
    };
    let Some(bb) = bbox else {
        return Ok(full);
    };
    let fits = bb.width >= MIN_BOX_SIDE
        && bb.height >= MIN_BOX_SIDE
        && bb.x.checked_add(bb.width).is_some_and(|r| r <= a.width())
        && bb.y.checked_add(bb.height).is_some_and(|r| r <= a.height());
    if fits {
        Ok(bb)
    } else {
        Err(MetricsError::BoxOutOfBounds(bb, a.width(), a.height()))
    }
}

/// Peak signal-to-noise ratio in dB over all channels; `+∞` for identical
/// inputs.
pub fn psnr(a: &RgbImage, b: &RgbImage, bbox: Option<BoundingBox>) -> Result<f64, MetricsError> {
    let r = region(a, b, bbox)?;
    let sse: f64 = (r.y..r.y + r.height)
        .into_par_iter()
        .map(|y| {
            let mut s = 0.0;
            for x in r.x..r.x + r.width {
                let (pa, pb) = (a.get_pixel(x, y).0, b.get_pixel(x, y).0);
                for k in 0..3 {
                    let d = pa[k] as f64 - pb[k] as f64;
                    s += d * d;
                }
            }
            s
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / (3.0 * r.width as f64 * r.height as f64);
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

fn extract(img: &RgbImage, r: BoundingBox, f: impl Fn([u8; 3]) -> f64) -> Plane {
    let mut data = Vec::with_capacity((r.width * r.height) as usize);
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            data.push(f(img.get_pixel(x, y).0));
        }
    }
    Plane {
        width: r.width as usize,
        height: r.height as usize,
        data,
    }
}

pub fn luma([r, g, b]: [u8; 3]) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable "valid" filtering of `f(a, b)` per pixel.
fn filter_valid(
    a: &Plane,
    b: &Plane,
    f: impl Fn(f64, f64) -> f64 + Sync,
    taps: &[f64],
) -> Vec<f64> {
    let n = taps.len();
    let ow = a.width - n + 1;
    let oh = a.height - n + 1;
    let src: Vec<f64> = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    let mut horiz = vec![0.0; a.height * ow];
    horiz.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let line = &src[y * a.width..(y + 1) * a.width];
        for (x, out) in row.iter_mut().enumerate() {
            *out = taps.iter().zip(&line[x..x + n]).map(|(t, v)| t * v).sum();
        }
    });
    let mut out = vec![0.0; oh * ow];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(y + i) * ow + x])
                .sum();
        }
    });
    out
}

fn ssim_plane(a: &Plane, b: &Plane) -> f64 {
    let taps = gaussian_taps();
    let mu_a = filter_valid(a, b, |x, _| x, &taps);
    let mu_b = filter_valid(a, b, |_, y| y, &taps);
    let aa = filter_valid(a, b, |x, _| x * x, &taps);
    let bb = filter_valid(a, b, |_, y| y * y, &taps);
    let ab = filter_valid(a, b, |x, y| x * y, &taps);
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / mu_a.len() as f64
}

pub fn ssim(
    a: &RgbImage,
    b: &RgbImage,
    bbox: Option<BoundingBox>,
    mode: SsimMode,
) -> Result<f64, MetricsError> {
    let r = region(a, b, bbox)?;
    if (r.width as usize) < SSIM_WINDOW || (r.height as usize) < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(r.width, r.height));
    }
    Ok(match mode {
        SsimMode::Luma => ssim_plane(&extract(a, r, luma), &extract(b, r, luma)),
        SsimMode::ChannelMean => {
            (0..3)
                .map(|k| {
                    ssim_plane(
                        &extract(a, r, |p| p[k] as f64),
                        &extract(b, r, |p| p[k] as f64),
                    )
                })
                .sum::<f64>()
                / 3.0
        }
    })
}

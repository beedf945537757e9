//! COLMAP sparse model I/O (`cameras`, `images`, `points3D`), binary and text.
//!
//! Binary layouts follow COLMAP's `src/colmap/scene/reconstruction_io.cc`;
//! everything is little-endian. Only the pinhole camera models are accepted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::geom::Vec3;
use crate::mesh_io::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColmapError {
    #[error("{file}: truncated file")]
    TruncatedFile { file: &'static str },
    #[error("{file}: malformed record: {reason}")]
    Malformed { file: &'static str, reason: String },
    #[error("unsupported camera model {0} (only SIMPLE_PINHOLE and PINHOLE are supported)")]
    UnsupportedCameraModel(String),
    #[error("image {image_id} references missing camera {camera_id}")]
    DanglingCameraRef { image_id: u32, camera_id: u32 },
    #[error("camera {0} has invalid intrinsics")]
    InvalidCamera(u32),
    #[error("image {0} has a non-unit rotation quaternion")]
    InvalidPose(u32),
    #[error("duplicate point id {0}")]
    DuplicateId(u64),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Binary,
    Text,
}

impl ModelFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ModelFormat::Binary => "bin",
            ModelFormat::Text => "txt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePoint {
    pub id: u64,
    pub position: Vec3,
    pub color: [u8; 3],
    pub error: f64,
    /// `(image_id, point2d_index)` observations; empty for synthetic points.
    pub track: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraModel {
    SimplePinhole,
    Pinhole,
}

impl CameraModel {
    fn id(self) -> i32 {
        match self {
            CameraModel::SimplePinhole => 0,
            CameraModel::Pinhole => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            CameraModel::SimplePinhole => "SIMPLE_PINHOLE",
            CameraModel::Pinhole => "PINHOLE",
        }
    }

    fn from_id(id: i32) -> Result<Self, ColmapError> {
        match id {
            0 => Ok(CameraModel::SimplePinhole),
            1 => Ok(CameraModel::Pinhole),
            other => Err(ColmapError::UnsupportedCameraModel(format!("id {other}"))),
        }
    }

    fn from_name(name: &str) -> Result<Self, ColmapError> {
        match name {
            "SIMPLE_PINHOLE" => Ok(CameraModel::SimplePinhole),
            "PINHOLE" => Ok(CameraModel::Pinhole),
            other => Err(ColmapError::UnsupportedCameraModel(other.to_string())),
        }
    }

    fn num_params(self) -> usize {
        match self {
            CameraModel::SimplePinhole => 3,
            CameraModel::Pinhole => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub id: u32,
    pub model: CameraModel,
    pub width: u64,
    pub height: u64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn pinhole(id: u32, width: u64, height: u64, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        CameraIntrinsics {
            id,
            model: CameraModel::Pinhole,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        }
    }

    fn params(&self) -> Vec<f64> {
        match self.model {
            CameraModel::SimplePinhole => vec![self.fx, self.cx, self.cy],
            CameraModel::Pinhole => vec![self.fx, self.fy, self.cx, self.cy],
        }
    }

    fn from_params(
        id: u32,
        model: CameraModel,
        width: u64,
        height: u64,
        p: &[f64],
    ) -> Result<Self, ColmapError> {
        let cam = match model {
            CameraModel::SimplePinhole => CameraIntrinsics {
                id,
                model,
                width,
                height,
                fx: p[0],
                fy: p[0],
                cx: p[1],
                cy: p[2],
            },
            CameraModel::Pinhole => CameraIntrinsics {
                id,
                model,
                width,
                height,
                fx: p[0],
                fy: p[1],
                cx: p[2],
                cy: p[3],
            },
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), ColmapError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(ColmapError::InvalidCamera(self.id))
        }
    }
}

/// Registered image: world-to-camera rotation `(w, x, y, z)` and translation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePose {
    pub id: u32,
    pub rotation: [f64; 4],
    pub translation: Vec3,
    pub camera_id: u32,
    pub name: String,
    /// Keypoints `(x, y, point3d_id)`; `None` marks an unmatched keypoint.
    pub points2d: Vec<([f64; 2], Option<u64>)>,
}

impl ImagePose {
    pub fn validate(&self) -> Result<(), ColmapError> {
        let n2: f64 = self.rotation.iter().map(|v| v * v).sum();
        if (n2.sqrt() - 1.0).abs() <= 1e-9 {
            Ok(())
        } else {
            Err(ColmapError::InvalidPose(self.id))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseModel {
    pub points: BTreeMap<u64, SparsePoint>,
    pub cameras: BTreeMap<u32, CameraIntrinsics>,
    pub images: BTreeMap<u32, ImagePose>,
}

impl SparseModel {
    /// The sparse points as a cloud in ascending id order, with zero normals.
    pub fn point_cloud(&self) -> PointCloud {
        let n = self.points.len();
        let mut cloud = PointCloud {
            positions: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            normals: vec![[0.0; 3]; n],
        };
        for p in self.points.values() {
            cloud.positions.push(p.position);
            cloud.colors.push(p.color);
        }
        cloud
    }

    pub fn max_point_id(&self) -> Option<u64> {
        self.points.keys().next_back().copied()
    }
}

pub fn read_sparse_model(
    points: &[u8],
    cameras: &[u8],
    images: &[u8],
    format: ModelFormat,
) -> Result<SparseModel, ColmapError> {
    let (points, cameras, images) = match format {
        ModelFormat::Binary => (
            read_points3d_bin(points)?,
            read_cameras_bin(cameras)?,
            read_images_bin(images)?,
        ),
        ModelFormat::Text => (
            read_points3d_txt(points)?,
            read_cameras_txt(cameras)?,
            read_images_txt(images)?,
        ),
    };
    assemble(points, cameras, images)
}

fn assemble(
    points: Vec<SparsePoint>,
    cameras: Vec<CameraIntrinsics>,
    images: Vec<ImagePose>,
) -> Result<SparseModel, ColmapError> {
    let mut model = SparseModel::default();
    for p in points {
        let id = p.id;
        if model.points.insert(id, p).is_some() {
            return Err(ColmapError::DuplicateId(id));
        }
    }
    for c in cameras {
        model.cameras.insert(c.id, c);
    }
    for im in images {
        if !model.cameras.contains_key(&im.camera_id) {
            return Err(ColmapError::DanglingCameraRef {
                image_id: im.id,
                camera_id: im.camera_id,
            });
        }
        model.images.insert(im.id, im);
    }
    Ok(model)
}

/// Loads `cameras`, `images` and `points3D` from a COLMAP `sparse/N`
/// directory, preferring the binary files when both encodings are present.
pub fn read_model_dir(dir: &Path) -> Result<SparseModel, ColmapError> {
    let format = if dir.join("points3D.bin").exists() {
        ModelFormat::Binary
    } else {
        ModelFormat::Text
    };
    let ext = format.extension();
    let load = |stem: &str| -> Result<Vec<u8>, ColmapError> {
        let path = dir.join(format!("{stem}.{ext}"));
        std::fs::read(&path).map_err(|e| ColmapError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    };
    read_sparse_model(
        &load("points3D")?,
        &load("cameras")?,
        &load("images")?,
        format,
    )
}

/// Writes all three model files into `dir` in the given encoding.
pub fn write_model_dir(
    dir: &Path,
    model: &SparseModel,
    format: ModelFormat,
) -> Result<(), ColmapError> {
    let points: Vec<SparsePoint> = model.points.values().cloned().collect();
    let cameras: Vec<CameraIntrinsics> = model.cameras.values().copied().collect();
    let images: Vec<ImagePose> = model.images.values().cloned().collect();
    let ext = format.extension();
    for (stem, bytes) in [
        ("points3D", write_points3d(&points, format)?),
        ("cameras", write_cameras(&cameras, format)),
        ("images", write_images(&images, format)),
    ] {
        let path = dir.join(format!("{stem}.{ext}"));
        std::fs::write(&path, bytes).map_err(|e| ColmapError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary

struct Reader<'a> {
    file: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(file: &'static str, bytes: &'a [u8]) -> Self {
        Reader {
            file,
            bytes,
            pos: 0,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ColmapError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(ColmapError::TruncatedFile { file: self.file })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ColmapError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ColmapError> {
        Ok(self.array::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, ColmapError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32, ColmapError> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ColmapError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ColmapError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn vec3(&mut self) -> Result<Vec3, ColmapError> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Reads a record count and checks that at least `min_record` bytes per
    /// record remain, so a corrupt count cannot trigger a huge allocation.
    fn count(&mut self, min_record: usize) -> Result<usize, ColmapError> {
        let n = self.u64()?;
        if n.saturating_mul(min_record as u64) > self.remaining() as u64 {
            return Err(ColmapError::TruncatedFile { file: self.file });
        }
        Ok(n as usize)
    }

    fn finish(&self) -> Result<(), ColmapError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(ColmapError::Malformed {
                file: self.file,
                reason: format!("{} trailing bytes", self.remaining()),
            })
        }
    }
}

const POINT_MIN_BYTES: usize = 8 + 24 + 3 + 8 + 8;

pub fn read_points3d_bin(bytes: &[u8]) -> Result<Vec<SparsePoint>, ColmapError> {
    let mut r = Reader::new("points3D.bin", bytes);
    let n = r.count(POINT_MIN_BYTES)?;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u64()?;
        let position = r.vec3()?;
        let color = [r.u8()?, r.u8()?, r.u8()?];
        let error = r.f64()?;
        let len = r.count(8)?;
        let mut track = Vec::with_capacity(len);
        for _ in 0..len {
            track.push((r.u32()?, r.u32()?));
        }
        points.push(SparsePoint {
            id,
            position,
            color,
            error,
            track,
        });
    }
    r.finish()?;
    Ok(points)
}

pub fn read_cameras_bin(bytes: &[u8]) -> Result<Vec<CameraIntrinsics>, ColmapError> {
    let mut r = Reader::new("cameras.bin", bytes);
    let n = r.count(4 + 4 + 8 + 8)?;
    let mut cameras = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u32()?;
        let model = CameraModel::from_id(r.i32()?)?;
        let width = r.u64()?;
        let height = r.u64()?;
        let params = (0..model.num_params())
            .map(|_| r.f64())
            .collect::<Result<Vec<_>, _>>()?;
        cameras.push(CameraIntrinsics::from_params(
            id, model, width, height, &params,
        )?);
    }
    r.finish()?;
    Ok(cameras)
}

pub fn read_images_bin(bytes: &[u8]) -> Result<Vec<ImagePose>, ColmapError> {
    let mut r = Reader::new("images.bin", bytes);
    let n = r.count(4 + 32 + 24 + 4 + 1 + 8)?;
    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.u32()?;
        let rotation = [r.f64()?, r.f64()?, r.f64()?, r.f64()?];
        let translation = r.vec3()?;
        let camera_id = r.u32()?;
        let mut name = Vec::new();
        loop {
            match r.u8()? {
                0 => break,
                b => name.push(b),
            }
        }
        let name = String::from_utf8(name).map_err(|_| ColmapError::Malformed {
            file: "images.bin",
            reason: "image name is not UTF-8".into(),
        })?;
        let len = r.count(24)?;
        let mut points2d = Vec::with_capacity(len);
        for _ in 0..len {
            let xy = [r.f64()?, r.f64()?];
            let pid = r.u64()?;
            points2d.push((xy, (pid != u64::MAX).then_some(pid)));
        }
        let image = ImagePose {
            id,
            rotation,
            translation,
            camera_id,
            name,
            points2d,
        };
        image.validate()?;
        images.push(image);
    }
    r.finish()?;
    Ok(images)
}

fn check_unique(points: &[SparsePoint]) -> Result<(), ColmapError> {
    let mut seen = BTreeSet::new();
    for p in points {
        if !seen.insert(p.id) {
            return Err(ColmapError::DuplicateId(p.id));
        }
    }
    Ok(())
}

pub fn write_points3d(points: &[SparsePoint], format: ModelFormat) -> Result<Vec<u8>, ColmapError> {
    check_unique(points)?;
    Ok(match format {
        ModelFormat::Binary => {
            let size: usize = points
                .iter()
                .map(|p| POINT_MIN_BYTES + 8 * p.track.len())
                .sum();
            let mut out = Vec::with_capacity(8 + size);
            out.extend((points.len() as u64).to_le_bytes());
            for p in points {
                out.extend(p.id.to_le_bytes());
                for v in p.position {
                    out.extend(v.to_le_bytes());
                }
                out.extend(p.color);
                out.extend(p.error.to_le_bytes());
                out.extend((p.track.len() as u64).to_le_bytes());
                for &(image, idx) in &p.track {
                    out.extend(image.to_le_bytes());
                    out.extend(idx.to_le_bytes());
                }
            }
            out
        }
        ModelFormat::Text => {
            let mut s = String::from(
                "# 3D point list with one line of data per point:\n\
                 #   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n",
            );
            let _ = writeln!(s, "# Number of points: {}", points.len());
            for p in points {
                let _ = write!(
                    s,
                    "{} {} {} {} {} {} {} {}",
                    p.id,
                    fmt_num(p.position[0]),
                    fmt_num(p.position[1]),
                    fmt_num(p.position[2]),
                    p.color[0],
                    p.color[1],
                    p.color[2],
                    fmt_num(p.error)
                );
                for &(image, idx) in &p.track {
                    let _ = write!(s, " {image} {idx}");
                }
                s.push('\n');
            }
            s.into_bytes()
        }
    })
}

pub fn write_cameras(cameras: &[CameraIntrinsics], format: ModelFormat) -> Vec<u8> {
    match format {
        ModelFormat::Binary => {
            let mut out = Vec::new();
            out.extend((cameras.len() as u64).to_le_bytes());
            for c in cameras {
                out.extend(c.id.to_le_bytes());
                out.extend(c.model.id().to_le_bytes());
                out.extend(c.width.to_le_bytes());
                out.extend(c.height.to_le_bytes());
                for p in c.params() {
                    out.extend(p.to_le_bytes());
                }
            }
            out
        }
        ModelFormat::Text => {
            let mut s = String::from(
                "# Camera list with one line of data per camera:\n\
                 #   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n",
            );
            let _ = writeln!(s, "# Number of cameras: {}", cameras.len());
            for c in cameras {
                let _ = write!(s, "{} {} {} {}", c.id, c.model.name(), c.width, c.height);
                for p in c.params() {
                    let _ = write!(s, " {}", fmt_num(p));
                }
                s.push('\n');
            }
            s.into_bytes()
        }
    }
}

pub fn write_images(images: &[ImagePose], format: ModelFormat) -> Vec<u8> {
    match format {
        ModelFormat::Binary => {
            let mut out = Vec::new();
            out.extend((images.len() as u64).to_le_bytes());
            for im in images {
                out.extend(im.id.to_le_bytes());
                for v in im.rotation.iter().chain(&im.translation) {
                    out.extend(v.to_le_bytes());
                }
                out.extend(im.camera_id.to_le_bytes());
                out.extend(im.name.as_bytes());
                out.push(0);
                out.extend((im.points2d.len() as u64).to_le_bytes());
                for (xy, pid) in &im.points2d {
                    out.extend(xy[0].to_le_bytes());
                    out.extend(xy[1].to_le_bytes());
                    out.extend(pid.unwrap_or(u64::MAX).to_le_bytes());
                }
            }
            out
        }
        ModelFormat::Text => {
            let mut s = String::from(
                "# Image list with two lines of data per image:\n\
                 #   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n\
                 #   POINTS2D[] as (X, Y, POINT3D_ID)\n",
            );
            let _ = writeln!(s, "# Number of images: {}", images.len());
            for im in images {
                let _ = write!(s, "{}", im.id);
                for v in im.rotation.iter().chain(&im.translation) {
                    let _ = write!(s, " {}", fmt_num(*v));
                }
                let _ = writeln!(s, " {} {}", im.camera_id, im.name);
                let row: Vec<String> = im
                    .points2d
                    .iter()
                    .map(|(xy, pid)| {
                        format!(
                            "{} {} {}",
                            fmt_num(xy[0]),
                            fmt_num(xy[1]),
                            pid.map_or("-1".to_string(), |p| p.to_string())
                        )
                    })
                    .collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
            s.into_bytes()
        }
    }
}

// ---------------------------------------------------------------------------
// Text

/// Significant digits used for reals in the text encoding.
pub const TEXT_DIGITS: usize = 12;

/// Formats `v` like C's `%.12g`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", TEXT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= TEXT_DIGITS as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (TEXT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn data_lines<'a>(file: &'static str, bytes: &'a [u8]) -> Result<Vec<&'a str>, ColmapError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ColmapError::Malformed {
        file,
        reason: "not UTF-8".into(),
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect())
}

fn field<T: std::str::FromStr>(
    file: &'static str,
    tokens: &mut std::str::SplitWhitespace<'_>,
    what: &str,
) -> Result<T, ColmapError> {
    let tok = tokens.next().ok_or(ColmapError::TruncatedFile { file })?;
    tok.parse().map_err(|_| ColmapError::Malformed {
        file,
        reason: format!("invalid {what} `{tok}`"),
    })
}

pub fn read_points3d_txt(bytes: &[u8]) -> Result<Vec<SparsePoint>, ColmapError> {
    const F: &str = "points3D.txt";
    let mut points = Vec::new();
    for line in data_lines(F, bytes)? {
        if line.trim().is_empty() {
            continue;
        }
        let mut t = line.split_whitespace();
        let id = field(F, &mut t, "id")?;
        let position = [
            field(F, &mut t, "x")?,
            field(F, &mut t, "y")?,
            field(F, &mut t, "z")?,
        ];
        let color = [
            field(F, &mut t, "r")?,
            field(F, &mut t, "g")?,
            field(F, &mut t, "b")?,
        ];
        let error = field(F, &mut t, "error")?;
        let rest: Vec<&str> = t.collect();
        if !rest.len().is_multiple_of(2) {
            return Err(ColmapError::Malformed {
                file: F,
                reason: format!("odd track length for point {id}"),
            });
        }
        let track = rest
            .chunks(2)
            .map(|pair| {
                let parse = |s: &str| {
                    s.parse::<u32>().map_err(|_| ColmapError::Malformed {
                        file: F,
                        reason: format!("invalid track entry `{s}`"),
                    })
                };
                Ok((parse(pair[0])?, parse(pair[1])?))
            })
            .collect::<Result<Vec<_>, ColmapError>>()?;
        points.push(SparsePoint {
            id,
            position,
            color,
            error,
            track,
        });
    }
    Ok(points)
}

pub fn read_cameras_txt(bytes: &[u8]) -> Result<Vec<CameraIntrinsics>, ColmapError> {
    const F: &str = "cameras.txt";
    let mut cameras = Vec::new();
    for line in data_lines(F, bytes)? {
        if line.trim().is_empty() {
            continue;
        }
        let mut t = line.split_whitespace();
        let id = field(F, &mut t, "camera id")?;
        let model =
            CameraModel::from_name(t.next().ok_or(ColmapError::TruncatedFile { file: F })?)?;
        let width = field(F, &mut t, "width")?;
        let height = field(F, &mut t, "height")?;
        let params = (0..model.num_params())
            .map(|_| field::<f64>(F, &mut t, "parameter"))
            .collect::<Result<Vec<_>, _>>()?;
        cameras.push(CameraIntrinsics::from_params(
            id, model, width, height, &params,
        )?);
    }
    Ok(cameras)
}

pub fn read_images_txt(bytes: &[u8]) -> Result<Vec<ImagePose>, ColmapError> {
    const F: &str = "images.txt";
    let lines = data_lines(F, bytes)?;
    let mut images = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let mut t = lines[i].split_whitespace();
        let id = field(F, &mut t, "image id")?;
        let mut nums = [0.0; 7];
        for v in nums.iter_mut() {
            *v = field(F, &mut t, "pose value")?;
        }
        let camera_id = field(F, &mut t, "camera id")?;
        let name = t.collect::<Vec<_>>().join(" ");
        // The keypoint line always follows, possibly empty.
        let kp_line = lines.get(i + 1).copied().unwrap_or("");
        let toks: Vec<&str> = kp_line.split_whitespace().collect();
        if !toks.len().is_multiple_of(3) {
            return Err(ColmapError::Malformed {
                file: F,
                reason: format!("keypoint list of image {id} is not a multiple of 3"),
            });
        }
        let mut points2d = Vec::with_capacity(toks.len() / 3);
        for chunk in toks.chunks(3) {
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| ColmapError::Malformed {
                    file: F,
                    reason: format!("invalid keypoint value `{s}`"),
                })
            };
            let pid: i64 = chunk[2].parse().map_err(|_| ColmapError::Malformed {
                file: F,
                reason: format!("invalid point3D id `{}`", chunk[2]),
            })?;
            points2d.push((
                [parse(chunk[0])?, parse(chunk[1])?],
                (pid >= 0).then_some(pid as u64),
            ));
        }
        let image = ImagePose {
            id,
            rotation: [nums[0], nums[1], nums[2], nums[3]],
            translation: [nums[4], nums[5], nums[6]],
            camera_id,
            name,
            points2d,
        };
        image.validate()?;
        images.push(image);
        i += 2;
    }
    Ok(images)
}

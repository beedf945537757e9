//! Raw building meshes in, Gaussian-Splatting point clouds out.
//!
//! Meshes are read from any PLY encoding; polygons are fan-triangulated from
//! their first index. Point clouds are always written as binary little-endian
//! with the fixed property layout `x y z nx ny nz red green blue`, the layout
//! splatting trainers expect for their initial point set.

use thiserror::Error;

use crate::geom::{self, Vec3};
use crate::ply::{self, ElementDef, Format, PlyError, PropertyDef, PropertyKind, ScalarType};

/// Faces with an area below this (squared model units) are degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Triangle counts the sampler defaults are tuned for.
pub const RECOMMENDED_TRIANGLES: std::ops::RangeInclusive<usize> = 100..=1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error("face {face} has {len} indices; at least 3 are required")]
    NonTriangulatable { face: usize, len: usize },
    #[error("face {face} references vertex {index}, but there are only {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
}

/// Indexed triangle mesh in model space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    /// Per-vertex colors when the file carried them. Unused for initialization.
    pub colors: Option<Vec<[u8; 3]>>,
}

impl TriangleMesh {
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        geom::triangle_area(a, b, c)
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    pub fn surface_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }
}

/// Positions, colors and normals of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<[u8; 3]>,
    /// Unit normals, or exactly zero where no normal is known.
    pub normals: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<Vec3>,
        colors: Vec<[u8; 3]>,
        normals: Vec<Vec3>,
    ) -> Result<Self, MeshError> {
        let cloud = PointCloud {
            positions,
            colors,
            normals,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.positions.len();
        if self.colors.len() != n || self.normals.len() != n {
            return Err(MeshError::InvalidCloud(format!(
                "length mismatch: {n} positions, {} colors, {} normals",
                self.colors.len(),
                self.normals.len()
            )));
        }
        if let Some(i) = self.normals.iter().position(|&nrm| {
            let len = geom::norm(nrm);
            !(nrm == [0.0; 3] || (len - 1.0).abs() <= 1e-6)
        }) {
            return Err(MeshError::InvalidCloud(format!(
                "normal {i} is neither unit length nor zero"
            )));
        }
        Ok(())
    }

    /// Appends `other` after the points already in `self`.
    pub fn extend(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
        self.normals.extend_from_slice(&other.normals);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub triangle_count: usize,
    pub degenerate_faces: Vec<usize>,
    pub warnings: Vec<String>,
}

pub fn parse_ply_mesh(bytes: &[u8]) -> Result<TriangleMesh, MeshError> {
    let data = ply::parse(bytes)?;
    let vertex = data
        .element("vertex")
        .ok_or_else(|| PlyError::MalformedHeader("no `vertex` element".into()))?;
    let vertices = read_positions(vertex)?;
    let colors = read_colors(vertex);

    let mut faces = Vec::new();
    if let Some(face) = data.element("face") {
        let lists = face
            .list("vertex_indices")
            .or_else(|| face.list("vertex_index"))
            .or_else(|| face.first_list().map(|(_, l)| l))
            .ok_or_else(|| PlyError::MalformedHeader("`face` element has no index list".into()))?;
        faces.reserve(lists.len());
        for (f, indices) in lists.iter().enumerate() {
            if indices.len() < 3 {
                return Err(MeshError::NonTriangulatable {
                    face: f,
                    len: indices.len(),
                });
            }
            let checked = |v: f64| -> Result<u32, MeshError> {
                if v < 0.0 || v as usize >= vertices.len() {
                    Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: v as i64,
                        vertex_count: vertices.len(),
                    })
                } else {
                    Ok(v as u32)
                }
            };
            let first = checked(indices[0])?;
            for pair in indices[1..].windows(2) {
                faces.push([first, checked(pair[0])?, checked(pair[1])?]);
            }
        }
    }

    Ok(TriangleMesh {
        vertices,
        faces,
        colors,
    })
}

/// Reads a point PLY (as written by [`write_ply_points`], or any cloud with
/// at least `x y z`). Missing normals become zero, missing colors black.
pub fn parse_ply_points(bytes: &[u8]) -> Result<PointCloud, MeshError> {
    let data = ply::parse(bytes)?;
    let vertex = data
        .element("vertex")
        .ok_or_else(|| PlyError::MalformedHeader("no `vertex` element".into()))?;
    let positions = read_positions(vertex)?;
    let n = positions.len();
    let normals = match (
        vertex.scalar("nx"),
        vertex.scalar("ny"),
        vertex.scalar("nz"),
    ) {
        (Some(x), Some(y), Some(z)) => (0..n).map(|i| [x[i], y[i], z[i]]).collect(),
        _ => vec![[0.0; 3]; n],
    };
    let colors = read_colors(vertex).unwrap_or_else(|| vec![[0; 3]; n]);
    Ok(PointCloud {
        positions,
        colors,
        normals,
    })
}

fn read_positions(vertex: &ply::Element) -> Result<Vec<Vec3>, MeshError> {
    match (vertex.scalar("x"), vertex.scalar("y"), vertex.scalar("z")) {
        (Some(x), Some(y), Some(z)) => Ok((0..vertex.len()).map(|i| [x[i], y[i], z[i]]).collect()),
        _ => Err(PlyError::MalformedHeader("vertex element lacks x/y/z".into()).into()),
    }
}

fn read_colors(vertex: &ply::Element) -> Option<Vec<[u8; 3]>> {
    let channel = |names: [&str; 2]| -> Option<(Vec<u8>, bool)> {
        names.iter().find_map(|&name| {
            let idx = vertex.def.properties.iter().position(|p| p.name == name)?;
            let is_float = matches!(
                vertex.def.properties[idx].kind,
                PropertyKind::Scalar(ScalarType::F32 | ScalarType::F64)
            );
            let values = vertex.scalar(name)?;
            Some((
                values
                    .iter()
                    .map(|&v| {
                        let v = if is_float { v * 255.0 } else { v };
                        v.round().clamp(0.0, 255.0) as u8
                    })
                    .collect(),
                is_float,
            ))
        })
    };
    let (r, _) = channel(["red", "diffuse_red"])?;
    let (g, _) = channel(["green", "diffuse_green"])?;
    let (b, _) = channel(["blue", "diffuse_blue"])?;
    Some((0..r.len()).map(|i| [r[i], g[i], b[i]]).collect())
}

/// Bytes per point in the body written by [`write_ply_points`].
pub const POINT_RECORD_SIZE: usize = 6 * 4 + 3;

fn point_layout(count: usize) -> ElementDef {
    let float = |name: &str| PropertyDef {
        name: name.into(),
        kind: PropertyKind::Scalar(ScalarType::F32),
    };
    let byte = |name: &str| PropertyDef {
        name: name.into(),
        kind: PropertyKind::Scalar(ScalarType::U8),
    };
    ElementDef {
        name: "vertex".into(),
        count,
        properties: vec![
            float("x"),
            float("y"),
            float("z"),
            float("nx"),
            float("ny"),
            float("nz"),
            byte("red"),
            byte("green"),
            byte("blue"),
        ],
    }
}

/// Serializes a cloud as binary little-endian PLY. Coordinates are stored as
/// 32-bit floats.
pub fn write_ply_points(cloud: &PointCloud) -> Result<Vec<u8>, MeshError> {
    cloud.validate()?;
    if cloud.is_empty() {
        return Err(MeshError::EmptyCloud);
    }
    let header = ply::write_header(Format::BinaryLittleEndian, &[point_layout(cloud.len())]);
    let mut out = Vec::with_capacity(header.len() + cloud.len() * POINT_RECORD_SIZE);
    out.extend_from_slice(header.as_bytes());
    for ((p, n), c) in cloud
        .positions
        .iter()
        .zip(&cloud.normals)
        .zip(&cloud.colors)
    {
        for v in p.iter().chain(n) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(c);
    }
    Ok(out)
}

pub fn validate_mesh(mesh: &TriangleMesh) -> ValidationReport {
    let triangle_count = mesh.faces.len();
    let degenerate_faces: Vec<usize> = (0..triangle_count)
        .filter(|&f| {
            let area = mesh.face_area(f);
            !(area >= DEGENERATE_AREA)
        })
        .collect();

    let mut warnings = Vec::new();
    if !RECOMMENDED_TRIANGLES.contains(&triangle_count) {
        warnings.push(format!(
            "triangle count outside [100,1000]: mesh has {triangle_count}"
        ));
    }
    if !degenerate_faces.is_empty() {
        warnings.push(format!(
            "{} degenerate faces will be skipped",
            degenerate_faces.len()
        ));
    }
    ValidationReport {
        triangle_count,
        degenerate_faces,
        warnings,
    }
}

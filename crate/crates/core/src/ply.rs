//! Minimal PLY 1.0 reader and writer.
//!
//! The reader is element/property generic: it decodes every element declared
//! in the header into per-property columns, so callers pick out what they need
//! (`x`, `y`, `z`, `vertex_indices`, ...) and ignore the rest. All scalar
//! values are widened to `f64`, which is lossless for every PLY scalar type.
//!
//! Reference: <http://paulbourke.net/dataformats/ply/>

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlyError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated body: element `{element}` declares {declared} entries, read {read}")]
    TruncatedBody {
        element: String,
        declared: usize,
        read: usize,
    },
    #[error("malformed body: {0}")]
    MalformedBody(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii,
    BinaryLittleEndian,
    BinaryBigEndian,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Ascii => "ascii",
            Format::BinaryLittleEndian => "binary_little_endian",
            Format::BinaryBigEndian => "binary_big_endian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarType::I8 => "char",
            ScalarType::U8 => "uchar",
            ScalarType::I16 => "short",
            ScalarType::U16 => "ushort",
            ScalarType::I32 => "int",
            ScalarType::U32 => "uint",
            ScalarType::F32 => "float",
            ScalarType::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    /// Numeric range for integer types, used to validate ASCII tokens.
    fn int_range(self) -> (i64, i64) {
        match self {
            ScalarType::I8 => (i8::MIN as i64, i8::MAX as i64),
            ScalarType::U8 => (0, u8::MAX as i64),
            ScalarType::I16 => (i16::MIN as i64, i16::MAX as i64),
            ScalarType::U16 => (0, u16::MAX as i64),
            ScalarType::I32 => (i32::MIN as i64, i32::MAX as i64),
            ScalarType::U32 => (0, u32::MAX as i64),
            ScalarType::F32 | ScalarType::F64 => (i64::MIN, i64::MAX),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDef {
    pub name: String,
    pub kind: PropertyKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementDef {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PropertyDef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub format: Format,
    pub elements: Vec<ElementDef>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyData {
    Scalar(Vec<f64>),
    List(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub def: ElementDef,
    /// One entry per property, in declaration order.
    pub data: Vec<PropertyData>,
}

impl Element {
    pub fn len(&self) -> usize {
        self.def.count
    }

    pub fn is_empty(&self) -> bool {
        self.def.count == 0
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.def.properties.iter().position(|p| p.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        match &self.data[self.index_of(name)?] {
            PropertyData::Scalar(v) => Some(v),
            PropertyData::List(_) => None,
        }
    }

    pub fn list(&self, name: &str) -> Option<&[Vec<f64>]> {
        match &self.data[self.index_of(name)?] {
            PropertyData::List(v) => Some(v),
            PropertyData::Scalar(_) => None,
        }
    }

    /// First list-valued property, whatever its name.
    pub fn first_list(&self) -> Option<(&str, &[Vec<f64>])> {
        self.def
            .properties
            .iter()
            .zip(&self.data)
            .find_map(|(p, d)| match d {
                PropertyData::List(v) => Some((p.name.as_str(), v.as_slice())),
                PropertyData::Scalar(_) => None,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub format: Format,
    pub elements: Vec<Element>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.def.name == name)
    }
}

/// Splits `bytes` into the parsed header and the offset of the first body byte.
pub fn parse_header(bytes: &[u8]) -> Result<(Header, usize), PlyError> {
    let malformed = |m: &str| PlyError::MalformedHeader(m.to_string());

    let mut offset = 0;
    let mut next_line = || -> Option<&[u8]> {
        if offset >= bytes.len() {
            return None;
        }
        let rest = &bytes[offset..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        offset += (end + 1).min(rest.len());
        let line = &rest[..end];
        Some(line.strip_suffix(b"\r").unwrap_or(line))
    };

    match next_line() {
        Some(b"ply") => {}
        _ => return Err(malformed("missing `ply` magic")),
    }

    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    loop {
        let line = next_line().ok_or_else(|| malformed("missing `end_header`"))?;
        let line = std::str::from_utf8(line).map_err(|_| malformed("non-ASCII header line"))?;
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else {
            continue;
        };
        match keyword {
            "comment" | "obj_info" => {}
            "format" => {
                if format.is_some() {
                    return Err(malformed("duplicate `format` line"));
                }
                let f = match tokens.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some("binary_big_endian") => Format::BinaryBigEndian,
                    other => {
                        return Err(PlyError::MalformedHeader(format!(
                            "unknown format {other:?}"
                        )))
                    }
                };
                if tokens.next() != Some("1.0") {
                    return Err(malformed("unsupported format version"));
                }
                format = Some(f);
            }
            "element" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| malformed("element without name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| malformed("element without valid count"))?;
                elements.push(ElementDef {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before any element"))?;
                let ty = tokens
                    .next()
                    .ok_or_else(|| malformed("property without type"))?;
                let kind = if ty == "list" {
                    let count = tokens.next().and_then(ScalarType::parse);
                    let item = tokens.next().and_then(ScalarType::parse);
                    match (count, item) {
                        (Some(count), Some(item)) if count.is_integer() => {
                            PropertyKind::List { count, item }
                        }
                        _ => return Err(malformed("invalid list property types")),
                    }
                } else {
                    PropertyKind::Scalar(ScalarType::parse(ty).ok_or_else(|| {
                        PlyError::MalformedHeader(format!("unknown property type `{ty}`"))
                    })?)
                };
                let name = tokens
                    .next()
                    .ok_or_else(|| malformed("property without name"))?;
                element.properties.push(PropertyDef {
                    name: name.to_string(),
                    kind,
                });
            }
            "end_header" => break,
            other => {
                return Err(PlyError::MalformedHeader(format!(
                    "unexpected header keyword `{other}`"
                )))
            }
        }
    }

    let format = format.ok_or_else(|| malformed("missing `format` line"))?;
    Ok((Header { format, elements }, offset))
}

pub fn parse(bytes: &[u8]) -> Result<PlyData, PlyError> {
    let (header, body_start) = parse_header(bytes)?;
    let body = &bytes[body_start..];
    let elements = match header.format {
        Format::Ascii => read_ascii(&header, body)?,
        Format::BinaryLittleEndian => read_binary::<true>(&header, body)?,
        Format::BinaryBigEndian => read_binary::<false>(&header, body)?,
    };
    Ok(PlyData {
        format: header.format,
        elements,
    })
}

fn empty_columns(def: &ElementDef) -> Vec<PropertyData> {
    // Cap preallocation so a lying header cannot force a huge allocation.
    let cap = def.count.min(1 << 20);
    def.properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(_) => PropertyData::Scalar(Vec::with_capacity(cap)),
            PropertyKind::List { .. } => PropertyData::List(Vec::with_capacity(cap)),
        })
        .collect()
}

fn read_ascii(header: &Header, body: &[u8]) -> Result<Vec<Element>, PlyError> {
    let text = std::str::from_utf8(body)
        .map_err(|_| PlyError::MalformedBody("ASCII body is not valid UTF-8".into()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut out = Vec::with_capacity(header.elements.len());

    for def in &header.elements {
        let mut data = empty_columns(def);
        for read in 0..def.count {
            let truncated = || PlyError::TruncatedBody {
                element: def.name.clone(),
                declared: def.count,
                read,
            };
            let line = lines.next().ok_or_else(truncated)?;
            let mut tokens = line.split_whitespace();
            for (prop, column) in def.properties.iter().zip(data.iter_mut()) {
                match (prop.kind, column) {
                    (PropertyKind::Scalar(ty), PropertyData::Scalar(col)) => {
                        let tok = tokens.next().ok_or_else(truncated)?;
                        col.push(parse_ascii_scalar(tok, ty)?);
                    }
                    (PropertyKind::List { count, item }, PropertyData::List(col)) => {
                        let tok = tokens.next().ok_or_else(truncated)?;
                        let n = parse_ascii_scalar(tok, count)?;
                        if n < 0.0 {
                            return Err(PlyError::MalformedBody(format!(
                                "negative list length in `{}`",
                                def.name
                            )));
                        }
                        let mut items = Vec::with_capacity((n as usize).min(64));
                        for _ in 0..n as usize {
                            let tok = tokens.next().ok_or_else(truncated)?;
                            items.push(parse_ascii_scalar(tok, item)?);
                        }
                        col.push(items);
                    }
                    _ => unreachable!("columns are built from the same definitions"),
                }
            }
        }
        out.push(Element {
            def: def.clone(),
            data,
        });
    }
    Ok(out)
}

fn parse_ascii_scalar(tok: &str, ty: ScalarType) -> Result<f64, PlyError> {
    let bad = || PlyError::MalformedBody(format!("invalid {} value `{tok}`", ty.name()));
    if ty.is_integer() {
        let v: i64 = tok.parse().map_err(|_| bad())?;
        let (lo, hi) = ty.int_range();
        if v < lo || v > hi {
            return Err(bad());
        }
        Ok(v as f64)
    } else {
        let v: f64 = tok.parse().map_err(|_| bad())?;
        // Match what a binary file of the declared type would hold.
        Ok(if ty == ScalarType::F32 {
            v as f32 as f64
        } else {
            v
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let end = self.pos.checked_add(N)?;
        let chunk = self.bytes.get(self.pos..end)?;
        self.pos = end;
        chunk.try_into().ok()
    }

    fn scalar<const LE: bool>(&mut self, ty: ScalarType) -> Option<f64> {
        macro_rules! read {
            ($t:ty) => {{
                let raw = self.take::<{ std::mem::size_of::<$t>() }>()?;
                (if LE {
                    <$t>::from_le_bytes(raw)
                } else {
                    <$t>::from_be_bytes(raw)
                }) as f64
            }};
        }
        Some(match ty {
            ScalarType::I8 => read!(i8),
            ScalarType::U8 => read!(u8),
            ScalarType::I16 => read!(i16),
            ScalarType::U16 => read!(u16),
            ScalarType::I32 => read!(i32),
            ScalarType::U32 => read!(u32),
            ScalarType::F32 => read!(f32),
            ScalarType::F64 => read!(f64),
        })
    }
}

fn read_binary<const LE: bool>(header: &Header, body: &[u8]) -> Result<Vec<Element>, PlyError> {
    let mut cur = Cursor {
        bytes: body,
        pos: 0,
    };
    let mut out = Vec::with_capacity(header.elements.len());

    for def in &header.elements {
        let mut data = empty_columns(def);
        for read in 0..def.count {
            let truncated = || PlyError::TruncatedBody {
                element: def.name.clone(),
                declared: def.count,
                read,
            };
            for (prop, column) in def.properties.iter().zip(data.iter_mut()) {
                match (prop.kind, column) {
                    (PropertyKind::Scalar(ty), PropertyData::Scalar(col)) => {
                        col.push(cur.scalar::<LE>(ty).ok_or_else(truncated)?);
                    }
                    (PropertyKind::List { count, item }, PropertyData::List(col)) => {
                        let n = cur.scalar::<LE>(count).ok_or_else(truncated)?;
                        if n < 0.0 {
                            return Err(PlyError::MalformedBody(format!(
                                "negative list length in `{}`",
                                def.name
                            )));
                        }
                        let n = n as usize;
                        if cur.bytes.len() - cur.pos < n * item.size() {
                            return Err(truncated());
                        }
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(cur.scalar::<LE>(item).ok_or_else(truncated)?);
                        }
                        col.push(items);
                    }
                    _ => unreachable!("columns are built from the same definitions"),
                }
            }
        }
        out.push(Element {
            def: def.clone(),
            data,
        });
    }
    Ok(out)
}

/// Renders a header for `format` and `elements`, ending in `end_header\n`.
pub fn write_header(format: Format, elements: &[ElementDef]) -> String {
    let mut s = format!("ply\nformat {format} 1.0\n");
    for e in elements {
        s.push_str(&format!("element {} {}\n", e.name, e.count));
        for p in &e.properties {
            match p.kind {
                PropertyKind::Scalar(ty) => {
                    s.push_str(&format!("property {} {}\n", ty.name(), p.name))
                }
                PropertyKind::List { count, item } => s.push_str(&format!(
                    "property list {} {} {}\n",
                    count.name(),
                    item.name(),
                    p.name
                )),
            }
        }
    }
    s.push_str("end_header\n");
    s
}

//! Triangle meshes and the STL / OBJ readers.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GeometryError;

const STL_HEADER_LEN: usize = 80;
const STL_RECORD_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Point3 { x, y, z }
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

pub type Triangle = [Point3; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point3,
    pub max: Point3,
}

impl BoundingBox {
    pub fn height(&self) -> f64 {
        self.max.z - self.min.z
    }
}

/// Input encodings accepted by [`load_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    StlBinary,
    StlAscii,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from the file extension and, for `.stl`, the
    /// payload: a binary STL's length is fully determined by its count field.
    pub fn detect(path: &Path, bytes: &[u8]) -> Option<MeshFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "stl" => {
                if bytes.len() >= STL_HEADER_LEN + 4 {
                    let count = u32::from_le_bytes(
                        bytes[STL_HEADER_LEN..STL_HEADER_LEN + 4].try_into().ok()?,
                    ) as usize;
                    if bytes.len() == STL_HEADER_LEN + 4 + count * STL_RECORD_LEN {
                        return Some(MeshFormat::StlBinary);
                    }
                }
                Some(MeshFormat::StlAscii)
            }
            _ => None,
        }
    }
}

impl fmt::Display for MeshFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeshFormat::StlBinary => "stl_binary",
            MeshFormat::StlAscii => "stl_ascii",
            MeshFormat::Obj => "obj",
        })
    }
}

impl std::str::FromStr for MeshFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stl_binary" => Ok(MeshFormat::StlBinary),
            "stl_ascii" => Ok(MeshFormat::StlAscii),
            "obj" => Ok(MeshFormat::Obj),
            other => Err(format!("unknown mesh format `{other}`")),
        }
    }
}

/// Where in the source a parse error happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceLocation {
    Byte(usize),
    Line(usize),
}

impl fmt::Display for SourceLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceLocation::Byte(b) => write!(f, "byte {b}"),
            SourceLocation::Line(l) => write!(f, "line {l}"),
        }
    }
}

/// A triangle soup in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    triangles: Vec<Triangle>,
    bounding_box: BoundingBox,
    dropped_degenerate: usize,
}

impl TriangleMesh {
    /// Builds a mesh, dropping zero-area triangles with a warning.
    pub fn from_triangles(raw: Vec<Triangle>) -> Result<TriangleMesh, GeometryError> {
        let total = raw.len();
        let triangles: Vec<Triangle> = raw.into_iter().filter(|t| !is_degenerate(t)).collect();
        let dropped_degenerate = total - triangles.len();
        if dropped_degenerate > 0 {
            log::warn!("dropped {dropped_degenerate} degenerate triangle(s)");
        }
        let first = triangles.first().ok_or(GeometryError::EmptyMesh)?[0];
        let mut bb = BoundingBox { min: first, max: first };
        for p in triangles.iter().flatten() {
            bb.min = Point3::new(bb.min.x.min(p.x), bb.min.y.min(p.y), bb.min.z.min(p.z));
            bb.max = Point3::new(bb.max.x.max(p.x), bb.max.y.max(p.y), bb.max.z.max(p.z));
        }
        Ok(TriangleMesh {
            triangles,
            bounding_box: bb,
            dropped_degenerate,
        })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bounding_box
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Number of distinct vertex positions.
    pub fn vertex_count(&self) -> usize {
        self.triangles
            .iter()
            .flatten()
            .map(|p| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits()))
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    /// Hex SHA-256 over the little-endian coordinates of every triangle.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in self.triangles.iter().flatten() {
            hasher.update(p.x.to_le_bytes());
            hasher.update(p.y.to_le_bytes());
            hasher.update(p.z.to_le_bytes());
        }
        format!("sha256:{}", hex::encode(hasher.finalize()))
    }

    /// Encodes the mesh as a binary STL (single precision).
    pub fn to_binary_stl(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STL_HEADER_LEN + 4 + self.triangles.len() * STL_RECORD_LEN);
        let mut header = [0u8; STL_HEADER_LEN];
        let tag = b"tasteprint binary stl";
        header[..tag.len()].copy_from_slice(tag);
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let n = t[1].sub(t[0]).cross(t[2].sub(t[0]));
            let len = n.norm();
            for c in [n.x / len, n.y / len, n.z / len] {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
            for p in t {
                for c in [p.x, p.y, p.z] {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }
}

fn is_degenerate(t: &Triangle) -> bool {
    t[1].sub(t[0]).cross(t[2].sub(t[0])).norm() <= 1e-12
}

/// Reads and parses a mesh file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh, GeometryError> {
    let bytes = std::fs::read(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_mesh(&bytes, format)
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh, GeometryError> {
    let triangles = match format {
        MeshFormat::StlBinary => parse_binary_stl(bytes)?,
        MeshFormat::StlAscii => parse_ascii_stl(as_text(bytes)?)?,
        MeshFormat::Obj => parse_obj(as_text(bytes)?)?,
    };
    TriangleMesh::from_triangles(triangles)
}

fn as_text(bytes: &[u8]) -> Result<&str, GeometryError> {
    std::str::from_utf8(bytes).map_err(|e| GeometryError::Parse {
        at: SourceLocation::Byte(e.valid_up_to()),
        message: "input is not valid UTF-8 text".into(),
    })
}

fn parse_binary_stl(bytes: &[u8]) -> Result<Vec<Triangle>, GeometryError> {
    let count_end = STL_HEADER_LEN + 4;
    if bytes.len() < count_end {
        return Err(GeometryError::Parse {
            at: SourceLocation::Byte(bytes.len()),
            message: format!("binary STL needs at least {count_end} bytes for header and count"),
        });
    }
    let count = u32::from_le_bytes(bytes[STL_HEADER_LEN..count_end].try_into().unwrap()) as usize;
    let expected = count_end + count * STL_RECORD_LEN;
    if bytes.len() < expected {
        let complete = (bytes.len() - count_end) / STL_RECORD_LEN;
        return Err(GeometryError::Parse {
            at: SourceLocation::Byte(count_end + complete * STL_RECORD_LEN),
            message: format!("truncated record {complete} of {count}"),
        });
    }
    let mut triangles = Vec::with_capacity(count);
    for (i, record) in bytes[count_end..expected].chunks_exact(STL_RECORD_LEN).enumerate() {
        let f = |k: usize| {
            let at = 12 + 4 * k;
            f32::from_le_bytes(record[at..at + 4].try_into().unwrap()) as f64
        };
        let tri = [
            Point3::new(f(0), f(1), f(2)),
            Point3::new(f(3), f(4), f(5)),
            Point3::new(f(6), f(7), f(8)),
        ];
        if tri.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::Parse {
                at: SourceLocation::Byte(count_end + i * STL_RECORD_LEN + 12),
                message: "non-finite vertex coordinate".into(),
            });
        }
        triangles.push(tri);
    }
    Ok(triangles)
}

fn parse_err(line: usize, message: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        at: SourceLocation::Line(line),
        message: message.into(),
    }
}

fn parse_coords<'a>(
    line_no: usize,
    mut fields: impl Iterator<Item = &'a str>,
) -> Result<Point3, GeometryError> {
    let mut c = [0.0; 3];
    for slot in &mut c {
        let tok = fields
            .next()
            .ok_or_else(|| parse_err(line_no, "expected three coordinates"))?;
        *slot = tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(line_no, format!("invalid coordinate `{tok}`")))?;
    }
    Ok(c.into())
}

fn parse_ascii_stl(text: &str) -> Result<Vec<Triangle>, GeometryError> {
    #[derive(PartialEq)]
    enum State {
        Start,
        Solid,
        Facet,
        Loop(usize),
        LoopDone,
        End,
    }

    let mut state = State::Start;
    let mut triangles = Vec::new();
    let mut current = [Point3::default(); 3];
    let mut last_line = 0;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let mut fields = line.split_whitespace();
        let Some(keyword) = fields.next() else {
            continue;
        };
        state = match (state, keyword) {
            (State::Start, "solid") => State::Solid,
            (State::Solid, "facet") => State::Facet,
            (State::Solid, "endsolid") => State::End,
            (State::Facet, "outer") => State::Loop(0),
            (State::Loop(n), "vertex") if n < 3 => {
                current[n] = parse_coords(line_no, fields)?;
                State::Loop(n + 1)
            }
            (State::Loop(3), "endloop") => State::LoopDone,
            (State::LoopDone, "endfacet") => {
                triangles.push(current);
                State::Solid
            }
            (State::End, _) => return Err(parse_err(line_no, "content after endsolid")),
            (_, kw) => return Err(parse_err(line_no, format!("unexpected `{kw}`"))),
        };
    }
    match state {
        State::End | State::Solid => Ok(triangles),
        _ => Err(parse_err(last_line, "unexpected end of file inside facet")),
    }
}

fn parse_obj(text: &str) -> Result<Vec<Triangle>, GeometryError> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => vertices.push(parse_coords(line_no, fields)?),
            Some("f") => {
                let corners = fields
                    .map(|tok| resolve_obj_index(tok, vertices.len(), line_no))
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least three vertices"));
                }
                // fan triangulation around the first corner
                for k in 1..corners.len() - 1 {
                    triangles.push([
                        vertices[corners[0]],
                        vertices[corners[k]],
                        vertices[corners[k + 1]],
                    ]);
                }
            }
            _ => {}
        }
    }
    Ok(triangles)
}

fn resolve_obj_index(token: &str, available: usize, line_no: usize) -> Result<usize, GeometryError> {
    let head = token.split('/').next().unwrap_or("");
    let raw: i64 = head
        .parse()
        .map_err(|_| parse_err(line_no, format!("invalid face index `{token}`")))?;
    let resolved = if raw > 0 {
        raw - 1
    } else {
        available as i64 + raw
    };
    if raw == 0 || resolved < 0 || resolved as usize >= available {
        return Err(parse_err(line_no, format!("face index {raw} out of range")));
    }
    Ok(resolved as usize)
}

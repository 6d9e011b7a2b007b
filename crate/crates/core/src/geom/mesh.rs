//! Triangle meshes: OBJ/PLY loading, validation, unit-cube normalization.

use std::path::Path;

use super::GeomError;
use super::vec3::{self, Vec3};

/// Cross-product magnitude below this counts as a degenerate face.
const DEGENERATE_AREA_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-vertex unit normals when the source file carried them.
    pub normals: Option<Vec<Vec3>>,
}

/// What `load_mesh` dropped or fixed while reading a file.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadStats {
    pub dropped_degenerate: usize,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        let mesh = Self {
            vertices,
            triangles,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<(), GeomError> {
        if self.triangles.is_empty() {
            return Err(GeomError::EmptyMesh);
        }
        if self
            .vertices
            .iter()
            .any(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(GeomError::ParseError {
                path: "<mesh>".into(),
                detail: "non-finite vertex coordinate".into(),
            });
        }
        let n = self.vertices.len();
        for tri in &self.triangles {
            if tri.iter().any(|&i| i >= n) {
                return Err(GeomError::ParseError {
                    path: "<mesh>".into(),
                    detail: format!("triangle index out of range (vertex count {n})"),
                });
            }
        }
        if let Some(normals) = &self.normals
            && normals.len() != n
        {
            return Err(GeomError::ParseError {
                path: "<mesh>".into(),
                detail: "normal count != vertex count".into(),
            });
        }
        Ok(())
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Twice the triangle's area vector (unnormalized face normal).
    pub fn face_normal_raw(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_vertices(t);
        vec3::cross(vec3::sub(b, a), vec3::sub(c, a))
    }

    pub fn face_area(&self, t: usize) -> f64 {
        0.5 * vec3::length(self.face_normal_raw(t))
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        if self.vertices.is_empty() {
            return None;
        }
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        Some((lo, hi))
    }
}

/// Uniform scale about a pre-scale offset: `v' = (v + pre_offset) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform {
    pub pre_offset: Vec3,
    pub scale: f64,
}

impl NormalizeTransform {
    pub const IDENTITY: Self = Self {
        pre_offset: [0.0; 3],
        scale: 1.0,
    };

    pub fn apply(&self, p: Vec3) -> Vec3 {
        vec3::scale(vec3::add(p, self.pre_offset), self.scale)
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        vec3::sub(vec3::scale(p, 1.0 / self.scale), self.pre_offset)
    }

    pub fn apply_mesh(&self, mesh: &TriMesh) -> TriMesh {
        TriMesh {
            vertices: mesh.vertices.iter().map(|&v| self.apply(v)).collect(),
            triangles: mesh.triangles.clone(),
            normals: mesh.normals.clone(),
        }
    }
}

/// Centers the mesh and scales uniformly by the longest bounding-box axis so
/// the result fits [-0.5, 0.5]^3. Returns the applied transform for inverse
/// mapping back to the source frame.
pub fn normalize_unit_cube(mesh: &TriMesh) -> Result<(TriMesh, NormalizeTransform), GeomError> {
    let (lo, hi) = mesh.bounding_box().ok_or(GeomError::EmptyMesh)?;
    let extent = vec3::sub(hi, lo);
    let longest = extent[0].max(extent[1]).max(extent[2]);
    if longest < 1e-12 {
        return Err(GeomError::DegenerateExtent);
    }
    let center = vec3::scale(vec3::add(lo, hi), 0.5);
    let transform = NormalizeTransform {
        pre_offset: vec3::scale(center, -1.0),
        scale: 1.0 / longest,
    };
    Ok((transform.apply_mesh(mesh), transform))
}

pub fn load_mesh(path: &Path) -> Result<(TriMesh, LoadStats), GeomError> {
    let bytes = std::fs::read(path)?;
    let name = path.display().to_string();
    let (vertices, normals, faces) = if bytes.starts_with(b"ply") {
        parse_ply(&bytes, &name)?
    } else {
        parse_obj(&bytes, &name)?
    };

    let mut stats = LoadStats::default();
    let mut triangles = Vec::with_capacity(faces.len());
    let n = vertices.len();
    for tri in faces {
        if tri.iter().any(|&i| i >= n) {
            return Err(GeomError::ParseError {
                path: name,
                detail: format!("face index out of range (vertex count {n})"),
            });
        }
        let area2 = vec3::length(vec3::cross(
            vec3::sub(vertices[tri[1]], vertices[tri[0]]),
            vec3::sub(vertices[tri[2]], vertices[tri[0]]),
        ));
        if area2 <= DEGENERATE_AREA_EPS {
            stats.dropped_degenerate += 1;
        } else {
            triangles.push(tri);
        }
    }
    if triangles.is_empty() {
        return Err(GeomError::EmptyMesh);
    }
    let normals = match normals {
        Some(ns) if ns.len() == vertices.len() => {
            let mut unit = Vec::with_capacity(ns.len());
            for nrm in ns {
                unit.push(vec3::normalize(nrm).unwrap_or([0.0, 0.0, 1.0]));
            }
            Some(unit)
        }
        _ => None,
    };
    let mesh = TriMesh {
        vertices,
        triangles,
        normals,
    };
    mesh.validate()?;
    Ok((mesh, stats))
}

type ParsedMesh = (Vec<Vec3>, Option<Vec<Vec3>>, Vec<[usize; 3]>);

fn parse_obj(bytes: &[u8], name: &str) -> Result<ParsedMesh, GeomError> {
    let text = std::str::from_utf8(bytes).map_err(|_| GeomError::ParseError {
        path: name.into(),
        detail: "OBJ is not valid UTF-8".into(),
    })?;
    let err = |line_no: usize, detail: String| GeomError::ParseError {
        path: name.into(),
        detail: format!("line {line_no}: {detail}"),
    };

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for slot in &mut v {
                    let tok = parts
                        .next()
                        .ok_or_else(|| err(line_no, "vertex needs 3 coordinates".into()))?;
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| err(line_no, format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let mut idxs = Vec::new();
                for tok in parts {
                    // "v", "v/vt", "v//vn", "v/vt/vn"; negative = relative.
                    let first = tok.split('/').next().unwrap_or("");
                    let raw = first
                        .parse::<i64>()
                        .map_err(|_| err(line_no, format!("bad face index {tok:?}")))?;
                    let resolved = if raw > 0 {
                        (raw - 1) as usize
                    } else if raw < 0 {
                        let n = vertices.len() as i64;
                        let r = n + raw;
                        if r < 0 {
                            return Err(err(line_no, format!("relative index {raw} out of range")));
                        }
                        r as usize
                    } else {
                        return Err(err(line_no, "face index 0 is invalid".into()));
                    };
                    idxs.push(resolved);
                }
                if idxs.len() < 3 {
                    return Err(err(line_no, "face needs at least 3 vertices".into()));
                }
                for i in 1..idxs.len() - 1 {
                    faces.push([idxs[0], idxs[i], idxs[i + 1]]);
                }
            }
            // Normals/texcoords/groups/materials carry no triangle geometry.
            Some(_) => {}
            None => {}
        }
    }
    if vertices.is_empty() && faces.is_empty() {
        return Err(GeomError::ParseError {
            path: name.into(),
            detail: "no vertex or face data".into(),
        });
    }
    Ok((vertices, None, faces))
}

#[derive(Clone, Copy, PartialEq)]
enum PlyScalar {
    F32,
    F64,
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
}

impl PlyScalar {
    fn parse(tok: &str) -> Option<Self> {
        Some(match tok {
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::F32 | Self::I32 | Self::U32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_f64(self, bytes: &[u8]) -> f64 {
        match self {
            Self::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            Self::I8 => bytes[0] as i8 as f64,
            Self::U8 => bytes[0] as f64,
            Self::I16 => i16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            Self::U16 => u16::from_le_bytes(bytes[..2].try_into().unwrap()) as f64,
            Self::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
        }
    }
}

struct PlyElement {
    name: String,
    count: usize,
    // (name, scalar) for plain properties; list properties appear only on faces
    props: Vec<(String, PlyScalar)>,
    list: Option<(PlyScalar, PlyScalar)>,
}

/// Binary little-endian PLY with `vertex` (x/y/z, optional nx/ny/nz) and
/// `face` (one vertex-index list) elements.
fn parse_ply(bytes: &[u8], name: &str) -> Result<ParsedMesh, GeomError> {
    let err = |detail: String| GeomError::ParseError {
        path: name.into(),
        detail,
    };
    let header_end = find_header_end(bytes).ok_or_else(|| err("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| err("header is not valid UTF-8".into()))?;
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    for line in header.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("ply") | Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                let kind = parts.next().unwrap_or("");
                if kind != "binary_little_endian" {
                    return Err(err(format!("unsupported PLY format {kind:?}")));
                }
                format_seen = true;
            }
            Some("element") => {
                let ename = parts.next().ok_or_else(|| err("element needs a name".into()))?;
                let count: usize = parts
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err("element needs a count".into()))?;
                elements.push(PlyElement {
                    name: ename.into(),
                    count,
                    props: Vec::new(),
                    list: None,
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err("property before element".into()))?;
                let kind = parts.next().ok_or_else(|| err("property needs a type".into()))?;
                if kind == "list" {
                    let count_ty = parts
                        .next()
                        .and_then(PlyScalar::parse)
                        .ok_or_else(|| err("bad list count type".into()))?;
                    let item_ty = parts
                        .next()
                        .and_then(PlyScalar::parse)
                        .ok_or_else(|| err("bad list item type".into()))?;
                    element.list = Some((count_ty, item_ty));
                } else {
                    let ty =
                        PlyScalar::parse(kind).ok_or_else(|| err(format!("bad type {kind:?}")))?;
                    let pname = parts.next().unwrap_or("").to_string();
                    element.props.push((pname, ty));
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(err(format!("unexpected header line {other:?}"))),
        }
    }
    if !format_seen {
        return Err(err("missing format line".into()));
    }

    let mut cursor = header_end;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut has_normals = false;
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for element in &elements {
        if element.name == "vertex" {
            let find = |p: &str| element.props.iter().position(|(n, _)| n == p);
            let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(err("vertex element missing x/y/z".into())),
            };
            let normal_idx = match (find("nx"), find("ny"), find("nz")) {
                (Some(a), Some(b), Some(c)) => {
                    has_normals = true;
                    Some((a, b, c))
                }
                _ => None,
            };
            let stride: usize = element.props.iter().map(|(_, t)| t.size()).sum();
            let offsets: Vec<usize> = element
                .props
                .iter()
                .scan(0usize, |acc, (_, t)| {
                    let here = *acc;
                    *acc += t.size();
                    Some(here)
                })
                .collect();
            let need = stride * element.count;
            if cursor + need > bytes.len() {
                return Err(err("truncated vertex data".into()));
            }
            for i in 0..element.count {
                let row = &bytes[cursor + i * stride..];
                let get = |p: usize| element.props[p].1.read_f64(&row[offsets[p]..]);
                vertices.push([get(xi), get(yi), get(zi)]);
                if let Some((a, b, c)) = normal_idx {
                    normals.push([get(a), get(b), get(c)]);
                }
            }
            cursor += need;
        } else if element.name == "face" {
            let (count_ty, item_ty) = element
                .list
                .ok_or_else(|| err("face element missing index list".into()))?;
            for _ in 0..element.count {
                if cursor + count_ty.size() > bytes.len() {
                    return Err(err("truncated face data".into()));
                }
                let n = count_ty.read_f64(&bytes[cursor..]) as usize;
                cursor += count_ty.size();
                let need = n * item_ty.size();
                if cursor + need > bytes.len() {
                    return Err(err("truncated face data".into()));
                }
                let mut idxs = Vec::with_capacity(n);
                for k in 0..n {
                    idxs.push(item_ty.read_f64(&bytes[cursor + k * item_ty.size()..]) as usize);
                }
                cursor += need;
                if idxs.len() < 3 {
                    return Err(err("face with fewer than 3 vertices".into()));
                }
                for i in 1..idxs.len() - 1 {
                    faces.push([idxs[0], idxs[i], idxs[i + 1]]);
                }
            }
        } else {
            // Unknown fixed-stride element: skip its payload.
            if element.list.is_some() {
                return Err(err(format!("unsupported list element {:?}", element.name)));
            }
            let stride: usize = element.props.iter().map(|(_, t)| t.size()).sum();
            cursor += stride * element.count;
            if cursor > bytes.len() {
                return Err(err("truncated element data".into()));
            }
        }
    }

    Ok((vertices, has_normals.then_some(normals), faces))
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header\n";
    bytes
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + needle.len())
}

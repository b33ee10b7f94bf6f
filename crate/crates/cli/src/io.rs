//! Point cloud file formats: PLY (ascii and binary little-endian), OBJ and XYZ.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use preshape_align::{Point3, PointCloud, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: byte {offset}: {message}", path.display())]
    Byte {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{}: cannot detect point cloud format", path.display())]
    UnknownFormat { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Cloud {
        path: PathBuf,
        source: preshape_align::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Ply,
    Obj,
    Xyz,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum SaveFormat {
    /// Binary little-endian PLY with double precision properties.
    #[default]
    Ply,
    PlyAscii,
    Obj,
    Xyz,
}

impl SaveFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SaveFormat::Ply | SaveFormat::PlyAscii => "ply",
            SaveFormat::Obj => "obj",
            SaveFormat::Xyz => "xyz",
        }
    }
}

pub fn load_cloud(path: &Path, format: Format) -> Result<PointCloud, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format = match format {
        Format::Auto => detect(path, &bytes).ok_or_else(|| IoError::UnknownFormat { path: path.to_path_buf() })?,
        f => f,
    };
    let parsed = match format {
        Format::Ply => parse_ply(&bytes),
        Format::Obj => parse_text(&bytes, TextKind::Obj),
        Format::Xyz => parse_text(&bytes, TextKind::Xyz),
        Format::Auto => unreachable!(),
    };
    let (points, normals) = parsed.map_err(|e| e.at(path))?;
    let cloud = match normals {
        Some(ns) => PointCloud::with_normals(points, ns),
        None => PointCloud::new(points),
    };
    cloud.map_err(|source| IoError::Cloud {
        path: path.to_path_buf(),
        source,
    })
}

fn detect(path: &Path, bytes: &[u8]) -> Option<Format> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ply") => return Some(Format::Ply),
        Some("obj") => return Some(Format::Obj),
        Some("xyz") | Some("txt") | Some("pts") => return Some(Format::Xyz),
        _ => {}
    }
    if bytes.starts_with(b"ply\n") || bytes.starts_with(b"ply\r\n") {
        return Some(Format::Ply);
    }
    let text = std::str::from_utf8(&bytes[..bytes.len().min(4096)]).ok()?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))?;
    if first.starts_with("v ") || first.starts_with("vn ") || first.starts_with("o ") || first.starts_with("g ") {
        return Some(Format::Obj);
    }
    let cols = first.split_whitespace().count();
    let numeric = first.split_whitespace().all(|t| t.parse::<f64>().is_ok());
    (numeric && (cols == 3 || cols == 6)).then_some(Format::Xyz)
}

/// A parse failure before the path is attached.
enum Failure {
    Line(usize, String),
    Byte(usize, String),
}

impl Failure {
    fn at(self, path: &Path) -> IoError {
        let path = path.to_path_buf();
        match self {
            Failure::Line(line, message) => IoError::Line { path, line, message },
            Failure::Byte(offset, message) => IoError::Byte { path, offset, message },
        }
    }
}

type Parsed = (Vec<Point3>, Option<Vec<Vector3>>);

#[derive(Clone, Copy, PartialEq)]
enum TextKind {
    Obj,
    Xyz,
}

fn parse_text(bytes: &[u8], kind: TextKind) -> Result<Parsed, Failure> {
    let text = std::str::from_utf8(bytes).map_err(|e| Failure::Byte(e.valid_up_to(), "invalid UTF-8".into()))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        if kind == TextKind::Obj && tokens.next() != Some("v") {
            continue;
        }
        let values = tokens
            .map(|t| parse_finite(t).ok_or_else(|| Failure::Line(line, format!("bad coordinate {t:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        match kind {
            TextKind::Obj => {
                // optional w or vertex colors follow x y z
                if values.len() < 3 {
                    return Err(Failure::Line(line, format!("expected 3 coordinates, found {}", values.len())));
                }
            }
            TextKind::Xyz => {
                if values.len() != 3 && values.len() != 6 {
                    return Err(Failure::Line(line, format!("expected 3 or 6 columns, found {}", values.len())));
                }
                if *columns.get_or_insert(values.len()) != values.len() {
                    return Err(Failure::Line(line, "column count changed".into()));
                }
                if values.len() == 6 {
                    normals.push(Vector3::new(values[3], values[4], values[5]));
                }
            }
        }
        points.push(Point3::new(values[0], values[1], values[2]));
    }
    let normals = (columns == Some(6)).then_some(normals);
    Ok((points, normals))
}

fn parse_finite(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, Failure> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Failure::Line(line_no + 1, "header ends before end_header".into()))?;
        let raw = &bytes[pos..pos + end];
        pos += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Failure::Line(line_no, "header is not text".into()))?
            .trim();
        let err = |msg: &str| Failure::Line(line_no, msg.to_string());
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err("missing ply magic"));
            }
            continue;
        }
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match tokens.get(1).copied() {
                    Some("ascii") => Encoding::Ascii,
                    Some("binary_little_endian") => Encoding::BinaryLe,
                    Some(other) => return Err(err(&format!("unsupported format {other}"))),
                    None => return Err(err("format line without encoding")),
                });
            }
            Some("element") => {
                let (name, count) = match tokens[..] {
                    [_, name, count] => (name, count.parse().map_err(|_| err("bad element count"))?),
                    _ => return Err(err("malformed element line")),
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements.last_mut().ok_or_else(|| err("property before element"))?;
                let prop = match tokens[..] {
                    [_, "list", count, item, _] => Property::List(
                        Scalar::parse(count).ok_or_else(|| err("bad list count type"))?,
                        Scalar::parse(item).ok_or_else(|| err("bad list item type"))?,
                    ),
                    [_, ty, name] => Property::Scalar(name.to_string(), Scalar::parse(ty).ok_or_else(|| err("bad property type"))?),
                    _ => return Err(err("malformed property line")),
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(err(&format!("unknown header keyword {other}"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| Failure::Line(line_no, "missing format line".into()))?,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

/// Column indices of x/y/z and, when all present, nx/ny/nz.
fn vertex_columns(element: &Element, header_line: usize) -> Result<([usize; 3], Option<[usize; 3]>), Failure> {
    let find = |want: &str| {
        element
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(name, _) if name == want))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => return Err(Failure::Line(header_line, "vertex element lacks x/y/z".into())),
    };
    let normals = match (find("nx"), find("ny"), find("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    Ok((xyz, normals))
}

fn parse_ply(bytes: &[u8]) -> Result<Parsed, Failure> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Failure::Line(header.body_line - 1, "no vertex element".into()))?;
    let (xyz, nxyz) = vertex_columns(&header.elements[vertex_pos], header.body_line - 1)?;
    let mut points = Vec::with_capacity(header.elements[vertex_pos].count);
    let mut normals = nxyz.map(|_| Vec::with_capacity(header.elements[vertex_pos].count));
    let mut emit = |row: &[f64]| {
        points.push(Point3::new(row[xyz[0]], row[xyz[1]], row[xyz[2]]));
        if let (Some(cols), Some(ns)) = (nxyz, normals.as_mut()) {
            ns.push(Vector3::new(row[cols[0]], row[cols[1]], row[cols[2]]));
        }
    };
    match header.encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(&bytes[header.body..])
                .map_err(|e| Failure::Byte(header.body + e.valid_up_to(), "invalid UTF-8".into()))?;
            let mut lines = text.lines().enumerate().map(|(i, l)| (header.body_line + i, l)).filter(|(_, l)| !l.trim().is_empty());
            for (idx, element) in header.elements.iter().enumerate().take(vertex_pos + 1) {
                for _ in 0..element.count {
                    let (line, content) = lines
                        .next()
                        .ok_or_else(|| Failure::Line(header.body_line, format!("unexpected end of file in element {}", element.name)))?;
                    if idx != vertex_pos {
                        continue;
                    }
                    let row = content
                        .split_whitespace()
                        .map(|t| parse_finite(t).ok_or_else(|| Failure::Line(line, format!("bad value {t:?}"))))
                        .collect::<Result<Vec<f64>, _>>()?;
                    if row.len() < element.properties.len() {
                        return Err(Failure::Line(line, format!("expected {} values, found {}", element.properties.len(), row.len())));
                    }
                    emit(&row);
                }
            }
        }
        Encoding::BinaryLe => {
            let mut pos = header.body;
            let mut row = Vec::new();
            for (idx, element) in header.elements.iter().enumerate().take(vertex_pos + 1) {
                for _ in 0..element.count {
                    row.clear();
                    for prop in &element.properties {
                        match *prop {
                            Property::Scalar(_, ty) => {
                                let chunk = bytes.get(pos..pos + ty.size()).ok_or_else(|| Failure::Byte(pos, "short read".into()))?;
                                let v = ty.read_le(chunk);
                                if !v.is_finite() {
                                    return Err(Failure::Byte(pos, "non-finite value".into()));
                                }
                                row.push(v);
                                pos += ty.size();
                            }
                            Property::List(count_ty, item_ty) => {
                                let chunk = bytes.get(pos..pos + count_ty.size()).ok_or_else(|| Failure::Byte(pos, "short read".into()))?;
                                let n = count_ty.read_le(chunk);
                                if n < 0.0 {
                                    return Err(Failure::Byte(pos, "negative list length".into()));
                                }
                                pos += count_ty.size() + n as usize * item_ty.size();
                                if pos > bytes.len() {
                                    return Err(Failure::Byte(bytes.len(), "short read".into()));
                                }
                                row.push(f64::NAN);
                            }
                        }
                    }
                    if idx == vertex_pos {
                        emit(&row);
                    }
                }
            }
        }
    }
    Ok((points, normals))
}

/// Writes `cloud` in `format`, creating parent directories.
pub fn save_cloud(path: &Path, cloud: &PointCloud, format: SaveFormat) -> Result<(), IoError> {
    let io_err = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let bytes = encode(cloud, format);
    fs::write(path, bytes).map_err(io_err)
}

pub fn encode(cloud: &PointCloud, format: SaveFormat) -> Vec<u8> {
    let normals = cloud.normals();
    let rows = || {
        cloud.points().iter().enumerate().map(move |(i, p)| {
            let n = normals.map(|ns| ns[i]);
            (p, n)
        })
    };
    match format {
        SaveFormat::Ply | SaveFormat::PlyAscii => {
            let ascii = format == SaveFormat::PlyAscii;
            let mut head = String::from("ply\n");
            head.push_str(if ascii { "format ascii 1.0\n" } else { "format binary_little_endian 1.0\n" });
            let _ = writeln!(head, "element vertex {}", cloud.len());
            let names: &[&str] = if normals.is_some() { &["x", "y", "z", "nx", "ny", "nz"] } else { &["x", "y", "z"] };
            for name in names {
                let _ = writeln!(head, "property double {name}");
            }
            head.push_str("end_header\n");
            let mut out = head.into_bytes();
            for (p, n) in rows() {
                let mut values = vec![p.x, p.y, p.z];
                if let Some(n) = n {
                    values.extend([n.x, n.y, n.z]);
                }
                if ascii {
                    let line: Vec<String> = values.iter().map(f64::to_string).collect();
                    out.extend_from_slice(line.join(" ").as_bytes());
                    out.push(b'\n');
                } else {
                    for v in values {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            out
        }
        SaveFormat::Obj => {
            let mut s = String::new();
            for (p, _) in rows() {
                let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
            }
            s.into_bytes()
        }
        SaveFormat::Xyz => {
            let mut s = String::new();
            for (p, n) in rows() {
                match n {
                    Some(n) => {
                        let _ = writeln!(s, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z);
                    }
                    None => {
                        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
                    }
                }
            }
            s.into_bytes()
        }
    }
}

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("ply parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, PlyError> {
    Err(PlyError::Parse { offset, message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Self::U32 => f64::from(u32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Self::F32 => f64::from(f32::from_le_bytes(b[..4].try_into().expect("4 bytes"))),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
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
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

fn parse_header(bytes: &[u8]) -> Result<(Format, Vec<Element>, usize), PlyError> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String), PlyError> {
        let start = *pos;
        let end = match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(i) => start + i,
            None => return err(start, "header not terminated by end_header"),
        };
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| PlyError::Parse { offset: start, message: "header is not text".into() })?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };
    let (_, magic) = next_line(&mut pos)?;
    if magic.trim() != "ply" {
        return err(0, "missing ply magic");
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, version] => {
                if *version != "1.0" {
                    return err(at, format!("unsupported version {version}"));
                }
                format = Some(match *f {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    other => return err(at, format!("unsupported format {other}")),
                });
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| PlyError::Parse { offset: at, message: format!("bad count {count}") })?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", ct, it, _name] => {
                let (Some(c), Some(i)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return err(at, format!("unsupported list types {ct} {it}"));
                };
                if matches!(c, Scalar::F32 | Scalar::F64) {
                    return err(at, "list count must be an integer type");
                }
                match elements.last_mut() {
                    Some(e) => e.props.push(Property::List(c, i)),
                    None => return err(at, "property before element"),
                }
            }
            ["property", ty, name] => {
                let Some(t) = Scalar::parse(ty) else {
                    return err(at, format!("unsupported property type {ty}"));
                };
                match elements.last_mut() {
                    Some(e) => e.props.push(Property::Scalar(name.to_string(), t)),
                    None => return err(at, "property before element"),
                }
            }
            ["end_header"] => break,
            _ => return err(at, format!("unrecognized header line {line:?}")),
        }
    }
    let format = format.ok_or(PlyError::Parse { offset: 0, message: "missing format line".into() })?;
    Ok((format, elements, pos))
}

fn xyz_indices(e: &Element, at: usize) -> Result<[usize; 3], PlyError> {
    let mut idx = [usize::MAX; 3];
    for (k, p) in e.props.iter().enumerate() {
        if let Property::Scalar(name, _) = p {
            match name.as_str() {
                "x" => idx[0] = k,
                "y" => idx[1] = k,
                "z" => idx[2] = k,
                _ => {}
            }
        }
    }
    if idx.contains(&usize::MAX) {
        return err(at, "vertex element lacks x, y or z");
    }
    Ok(idx)
}

struct AsciiTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl AsciiTokens<'_> {
    fn next(&mut self) -> Result<(usize, f64), PlyError> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return err(start, "unexpected end of data");
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((start, v)),
            _ => err(start, format!("bad number {s:?}")),
        }
    }
}

/// Vertex positions of an in-memory PLY file.
pub fn parse_ply(bytes: &[u8]) -> Result<Vec<[f64; 3]>, PlyError> {
    let (format, elements, body) = parse_header(bytes)?;
    let vertex_at = elements.iter().position(|e| e.name == "vertex").ok_or(PlyError::Parse {
        offset: body,
        message: "no vertex element".into(),
    })?;
    let idx = xyz_indices(&elements[vertex_at], body)?;
    let mut out = Vec::with_capacity(elements[vertex_at].count);
    match format {
        Format::Ascii => {
            let mut t = AsciiTokens { bytes, pos: body };
            for e in &elements[..=vertex_at] {
                let is_vertex = e.name == "vertex";
                for _ in 0..e.count {
                    let mut p = [0.0; 3];
                    for (k, prop) in e.props.iter().enumerate() {
                        match prop {
                            Property::Scalar(..) => {
                                let (_, v) = t.next()?;
                                if let Some(d) = idx.iter().position(|&i| i == k) {
                                    p[d] = v;
                                }
                            }
                            Property::List(..) => {
                                let (at, n) = t.next()?;
                                if n < 0.0 || n.fract() != 0.0 {
                                    return err(at, "bad list length");
                                }
                                for _ in 0..n as usize {
                                    t.next()?;
                                }
                            }
                        }
                    }
                    if is_vertex {
                        out.push(p);
                    }
                }
            }
        }
        Format::BinaryLe => {
            let mut pos = body;
            let take = |pos: &mut usize, n: usize| -> Result<&[u8], PlyError> {
                if bytes.len() - *pos < n {
                    return err(*pos, "truncated binary data");
                }
                let s = &bytes[*pos..*pos + n];
                *pos += n;
                Ok(s)
            };
            for e in &elements[..=vertex_at] {
                let is_vertex = e.name == "vertex";
                for _ in 0..e.count {
                    let mut p = [0.0; 3];
                    for (k, prop) in e.props.iter().enumerate() {
                        match prop {
                            Property::Scalar(_, ty) => {
                                let v = ty.read_le(take(&mut pos, ty.size())?);
                                if let Some(d) = idx.iter().position(|&i| i == k) {
                                    if !v.is_finite() {
                                        return err(pos - ty.size(), "non-finite coordinate");
                                    }
                                    p[d] = v;
                                }
                            }
                            Property::List(ct, it) => {
                                let at = pos;
                                let n = ct.read_le(take(&mut pos, ct.size())?);
                                if n < 0.0 {
                                    return err(at, "negative list length");
                                }
                                take(&mut pos, n as usize * it.size())?;
                            }
                        }
                    }
                    if is_vertex {
                        out.push(p);
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn read_ply(path: &Path) -> Result<Vec<[f64; 3]>, PlyError> {
    parse_ply(&fs::read(path)?)
}

/// Binary little-endian PLY with float `x y z`.
pub fn write_ply(path: &Path, points: &[[f64; 3]]) -> Result<(), PlyError> {
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )
    .into_bytes();
    for p in points {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_ply_ascii(path: &Path, points: &[[f64; 3]]) -> Result<(), PlyError> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    write!(
        f,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )?;
    for p in points {
        writeln!(f, "{} {} {}", p[0], p[1], p[2])?;
    }
    f.flush()?;
    Ok(())
}

//! Binary field files and key=value manifests.
//!
//! Field layout, all little-endian:
//!
//! ```text
//! "HOM3" | version: u32 | kind: u8 (0 vertex, 1 edge-vector) | radius: i32 | f64 payload
//! ```
//!
//! Vertex payloads hold one value per vertex in storage order; edge-vector
//! payloads hold the three components of each vertex consecutively.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, EdgeVectorField, VertexField};
use crate::media::CoefficientField;

pub const MAGIC: &[u8; 4] = b"HOM3";
pub const VERSION: u32 = 1;
pub const KIND_VERTEX: u8 = 0;
pub const KIND_EDGE: u8 = 1;

const HEADER_LEN: usize = 4 + 4 + 1 + 4;

/// A decoded field file.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Vertex(VertexField),
    Edge(EdgeVectorField),
}

fn header(kind: u8, bx: BoxSpec, payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&bx.radius().to_le_bytes());
    out
}

pub fn encode_vertex(f: &VertexField) -> Vec<u8> {
    let mut out = header(KIND_VERTEX, f.box_spec(), f.values().len());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_edge(f: &EdgeVectorField) -> Vec<u8> {
    let mut out = header(KIND_EDGE, f.box_spec(), 3 * f.values().len());
    for v in f.values().iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Coefficients are written as an edge-vector field; box-leaving edges read back as 1.
pub fn encode_coefficients(a: &CoefficientField) -> Vec<u8> {
    let mut out = header(KIND_EDGE, a.box_spec(), 3 * a.values().len());
    for v in a.values().iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = bytes[8];
    let radius = i32::from_le_bytes(bytes[9..13].try_into().unwrap());
    let bx = BoxSpec::new(radius)?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of f64".into()));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match kind {
        KIND_VERTEX => Ok(Field::Vertex(VertexField::from_values(bx, floats)?)),
        KIND_EDGE => {
            if floats.len() != 3 * bx.len() {
                return Err(Error::LengthMismatch {
                    radius,
                    expected: 3 * bx.len(),
                    found: floats.len(),
                });
            }
            let values = floats.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            Ok(Field::Edge(EdgeVectorField::from_values(bx, values)?))
        }
        other => Err(Error::Format(format!("unknown field kind {other}"))),
    }
}

pub fn write_vertex(path: &Path, f: &VertexField) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_vertex(f))?;
    Ok(())
}

pub fn write_edge(path: &Path, f: &EdgeVectorField) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_edge(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn read_vertex(path: &Path) -> Result<VertexField> {
    match read_field(path)? {
        Field::Vertex(v) => Ok(v),
        Field::Edge(_) => Err(Error::Format(format!("{} holds an edge field", path.display()))),
    }
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends or overwrites `key`.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

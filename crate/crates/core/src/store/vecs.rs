//! In-memory datasets and the `.fvecs` / `.bvecs` / `.ivecs` file formats.
//!
//! Each record is a 4-byte little-endian signed dimension `d` followed by `d`
//! elements: f32 for fvecs, u8 for bvecs, i32 for ivecs. All records in a file
//! must share the same `d`. bvecs elements are widened to f32 on load.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major collection of equal-length f32 vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Format(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::InvalidArgument("no rows".into()))?;
        let mut out = Self::new(dim);
        for row in rows {
            out.push(row.as_ref())?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Copies rows `[start, end)` into a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

fn read_dim<R: Read>(reader: &mut R) -> Result<Option<usize>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match reader.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(Error::Format("truncated dimension header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let d = i32::from_le_bytes(buf);
    if d <= 0 {
        return Err(Error::Format(format!("nonpositive dimension {d}")));
    }
    Ok(Some(d as usize))
}

fn read_records<R, T, F>(mut reader: R, elem_size: usize, mut decode: F) -> Result<(usize, Vec<T>)>
where
    R: Read,
    F: FnMut(&[u8]) -> T,
{
    let mut dim = None;
    let mut out = Vec::new();
    let mut buf = Vec::new();
    while let Some(d) = read_dim(&mut reader)? {
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Format(format!(
                    "nonuniform dimension: record has {d}, file started with {expected}"
                )))
            }
            Some(_) => {}
        }
        buf.resize(d * elem_size, 0);
        reader.read_exact(&mut buf).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                Error::Format("truncated record".into())
            } else {
                e.into()
            }
        })?;
        out.extend(buf.chunks_exact(elem_size).map(&mut decode));
    }
    Ok((dim.unwrap_or(0), out))
}

pub fn parse_fvecs<R: Read>(reader: R) -> Result<Dataset> {
    let (dim, data) = read_records(reader, 4, |c| {
        f32::from_le_bytes([c[0], c[1], c[2], c[3]])
    })?;
    Ok(Dataset { dim, data })
}

pub fn parse_bvecs<R: Read>(reader: R) -> Result<Dataset> {
    let (dim, data) = read_records(reader, 1, |c| c[0] as f32)?;
    Ok(Dataset { dim, data })
}

pub fn parse_ivecs<R: Read>(reader: R) -> Result<Vec<Vec<i32>>> {
    let (dim, flat) = read_records(reader, 4, |c| {
        i32::from_le_bytes([c[0], c[1], c[2], c[3]])
    })?;
    if dim == 0 {
        return Ok(Vec::new());
    }
    Ok(flat.chunks_exact(dim).map(|c| c.to_vec()).collect())
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_fvecs(BufReader::new(File::open(path)?))
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_bvecs(BufReader::new(File::open(path)?))
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    parse_ivecs(BufReader::new(File::open(path)?))
}

/// Loads `.fvecs` or `.bvecs` based on the file extension.
pub fn read_vectors(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bvecs") => read_bvecs(path),
        _ => read_fvecs(path),
    }
}

pub fn encode_fvecs<W: Write>(mut writer: W, data: &Dataset) -> Result<()> {
    let d = (data.dim() as i32).to_le_bytes();
    for row in data.iter() {
        writer.write_all(&d)?;
        for v in row {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn encode_ivecs<W: Write, R: AsRef<[i32]>>(mut writer: W, rows: &[R]) -> Result<()> {
    let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::Format("ivecs rows must share one dimension".into()));
        }
        writer.write_all(&(dim as i32).to_le_bytes())?;
        for v in row {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_fvecs(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    encode_fvecs(BufWriter::new(File::create(path)?), data)
}

pub fn write_ivecs<R: AsRef<[i32]>>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    encode_ivecs(BufWriter::new(File::create(path)?), rows)
}

//! Little-endian binary matrix formats.
//!
//! All four formats share the same layout: a 4-byte magic, a `u32` row
//! count, a `u32` column count and `rows * cols` little-endian `f32`s in
//! row-major order. `CGCE` additionally carries a JSON trailer prefixed by
//! its `u32` byte length.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"CGCB";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"CGCE";
pub const HIDDEN_MAGIC: &[u8; 4] = b"CGCH";
pub const GRAPH_MAGIC: &[u8; 4] = b"CGCG";

/// Cursor over a byte buffer that reports truncation in terms of the
/// total size the reader expected.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let found = self.take(4)?;
        if found != expected {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::TruncatedFile {
                expected: (self.pos + n) as u64,
                found: self.buf.len() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    /// Fail early with the full expected length when a payload of `n` bytes
    /// will not fit.
    pub(crate) fn require(&self, n: u64) -> Result<()> {
        let expected = self.pos as u64 + n;
        if (self.buf.len() as u64) < expected {
            return Err(Error::TruncatedFile {
                expected,
                found: self.buf.len() as u64,
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a rows x cols f32 payload, rejecting non-finite entries.
pub(crate) fn read_payload(r: &mut Reader<'_>, rows: usize, cols: usize) -> Result<Array2<f32>> {
    r.require(rows as u64 * cols as u64 * 4)?;
    let mut data = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row, col });
            }
            data.push(v);
        }
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("shape matches payload"))
}

pub(crate) fn encode_matrix(magic: &[u8; 4], m: &Array2<f32>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(12 + rows * cols * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decode a plain `magic, rows, cols, payload` matrix.
pub(crate) fn decode_matrix(magic: &[u8; 4], bytes: &[u8]) -> Result<Array2<f32>> {
    let mut r = Reader::new(bytes);
    r.magic(magic)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    read_payload(&mut r, rows, cols)
}

/// Matrix followed by a `u32`-length-prefixed trailer.
pub(crate) fn encode_with_trailer(magic: &[u8; 4], m: &Array2<f32>, trailer: &[u8]) -> Vec<u8> {
    let mut out = encode_matrix(magic, m);
    out.extend_from_slice(&(trailer.len() as u32).to_le_bytes());
    out.extend_from_slice(trailer);
    out
}

/// Inverse of [`encode_with_trailer`]; trailing bytes after the trailer
/// are rejected.
pub(crate) fn decode_with_trailer<'a>(
    magic: &[u8; 4],
    bytes: &'a [u8],
) -> Result<(Array2<f32>, &'a [u8])> {
    let mut r = Reader::new(bytes);
    r.magic(magic)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let m = read_payload(&mut r, rows, cols)?;
    let len = r.u32()? as usize;
    let trailer = r.take(len)?;
    if !r.rest().is_empty() {
        return Err(Error::MalformedRecord {
            line: 0,
            reason: "trailing bytes after metadata".into(),
        });
    }
    Ok((m, trailer))
}

/// Write a hidden-state matrix in `CGCH` format.
pub fn write_hidden(path: &Path, m: &Array2<f32>) -> Result<()> {
    write_file(path, &encode_matrix(HIDDEN_MAGIC, m))
}

/// Read a hidden-state matrix in `CGCH` format.
pub fn read_hidden(path: &Path) -> Result<Array2<f32>> {
    decode_matrix(HIDDEN_MAGIC, &read_file(path)?)
}

/// Read any of the matrix formats (`CGCB`, `CGCE`, `CGCH`), dispatching on
/// the magic bytes. The `CGCE` metadata trailer is ignored.
pub fn read_any_matrix(path: &Path) -> Result<Array2<f32>> {
    let bytes = read_file(path)?;
    let magic: &[u8] = bytes.get(..4).unwrap_or(&bytes);
    let known = [CODEBOOK_MAGIC, EMBEDDING_MAGIC, HIDDEN_MAGIC];
    match known.iter().find(|m| m.as_slice() == magic) {
        Some(m) => decode_matrix(m, &bytes),
        None => Err(Error::BadMagic {
            expected: "CGCB|CGCE|CGCH".into(),
            found: String::from_utf8_lossy(magic).into_owned(),
        }),
    }
}

//! Float-row container: a text header line `"<count> <dim>\n"` followed by
//! `count * dim` little-endian f32 values. Keyed files carry a sidecar
//! `<path>.ids` with one key per line in row order.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::manifest::{sidecar, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatRows {
    dim: usize,
    data: Vec<f32>,
}

impl FloatRows {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::invalid("row dimension must be positive"));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
            data.extend(r.iter().map(|&x| x as f32));
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{} {}\n", self.count(), self.dim).into_bytes();
        out.reserve(self.data.len() * 4);
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Parses a container from the start of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| header_err("missing header line"))?;
        let header =
            std::str::from_utf8(&bytes[..nl]).map_err(|_| header_err("header is not UTF-8"))?;
        let mut parts = header.split_whitespace();
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(d), None) => (
                c.parse::<usize>()
                    .map_err(|_| header_err("bad row count"))?,
                d.parse::<usize>()
                    .map_err(|_| header_err("bad row dimension"))?,
            ),
            _ => return Err(header_err("header must be \"<count> <dim>\"")),
        };
        let n = count
            .checked_mul(dim)
            .ok_or_else(|| header_err("row count overflow"))?;
        let body = &bytes[nl + 1..];
        if body.len() < n * 4 {
            return Err(Error::Parse {
                line: 2,
                message: format!("expected {} bytes of row data, found {}", n * 4, body.len()),
            });
        }
        let data: Vec<f32> = body[..n * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Integrity(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok((Self::new(dim, data)?, nl + 1 + n * 4))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (rows, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Parse {
                line: 2,
                message: format!("{} trailing bytes after row data", bytes.len() - used),
            });
        }
        Ok(rows)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }
}

fn header_err(msg: &str) -> Error {
    Error::Parse {
        line: 1,
        message: msg.to_string(),
    }
}

/// Float rows addressed by string key.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedRows {
    keys: Vec<String>,
    rows: FloatRows,
    index: HashMap<String, usize>,
}

impl KeyedRows {
    pub fn new(keys: Vec<String>, rows: FloatRows) -> Result<Self> {
        if keys.len() != rows.count() {
            return Err(Error::Integrity(format!(
                "{} keys for {} rows",
                keys.len(),
                rows.count()
            )));
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if k.contains('\n') {
                return Err(Error::invalid(format!("key {k:?} contains a newline")));
            }
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::Integrity(format!("duplicate key {k:?}")));
            }
        }
        Ok(Self { keys, rows, index })
    }

    pub fn from_map<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let (keys, rows): (Vec<String>, Vec<&[f64]>) =
            entries.into_iter().map(|(k, v)| (k.to_string(), v)).unzip();
        Self::new(keys, FloatRows::from_rows(&rows)?)
    }

    pub fn dim(&self) -> usize {
        self.rows.dim()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.rows.row(i))
    }

    pub fn get_f64(&self, key: &str) -> Option<Vec<f64>> {
        self.get(key).map(|r| r.iter().map(|&x| x as f64).collect())
    }

    /// Reads `path` and its `.ids` sidecar.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = FloatRows::read(path)?;
        let ids_path = sidecar(path, "ids");
        let text = fs::read_to_string(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
        let keys: Vec<String> = text.lines().map(str::to_string).collect();
        Self::new(keys, rows)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.rows.write(path)?;
        let mut ids = self.keys.join("\n");
        if !ids.is_empty() {
            ids.push('\n');
        }
        write_atomic(&sidecar(path, "ids"), ids.as_bytes())
    }
}

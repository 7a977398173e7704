//! Path files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "FBMPATH1"
//! hurst      f64
//! n          u64
//! horizon    f64
//! seed       u64
//! stream     u64
//! method     u8       0 = cholesky, 1 = circulant
//! gen_len    u32
//! generator  gen_len bytes, UTF-8
//! count      u64
//! values     count x f64
//! ```
//!
//! CSV layout: a header record `hurst,n,horizon,seed,stream,method,generator`,
//! one metadata record, a `value` header, then one value per node.

use std::fs;
use std::path::Path;

use super::{FbmPath, Hurst, Method, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::StreamId;

const MAGIC: &[u8; 8] = b"FBMPATH1";
const CSV_HEADER: &str = "hurst,n,horizon,seed,stream,method,generator";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathEncoding {
    Binary,
    Csv,
}

impl PathEncoding {
    /// `.csv` files are CSV, everything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => PathEncoding::Csv,
            _ => PathEncoding::Binary,
        }
    }
}

pub fn write_path_binary(path: &FbmPath) -> Vec<u8> {
    let gen = path.generator().as_bytes();
    let mut out = Vec::with_capacity(64 + gen.len() + 8 * path.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&path.hurst().value().to_le_bytes());
    out.extend_from_slice(&(path.grid().n() as u64).to_le_bytes());
    out.extend_from_slice(&path.grid().horizon().to_le_bytes());
    out.extend_from_slice(&path.seed().to_le_bytes());
    out.extend_from_slice(&path.stream().to_le_bytes());
    out.push(match path.method() {
        Method::Cholesky => 0,
        Method::Circulant => 1,
    });
    out.extend_from_slice(&(gen.len() as u32).to_le_bytes());
    out.extend_from_slice(gen);
    out.extend_from_slice(&(path.values().len() as u64).to_le_bytes());
    for v in path.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!("path file truncated at byte {}", self.pos))),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}

pub fn read_path_binary(bytes: &[u8]) -> Result<FbmPath> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("not a path file (bad magic)".into()));
    }
    let hurst = Hurst::new(c.f64()?)?;
    let n = c.u64()? as usize;
    let horizon = c.f64()?;
    let seed = c.u64()?;
    let stream = c.u64()?;
    let method = match c.take(1)?[0] {
        0 => Method::Cholesky,
        1 => Method::Circulant,
        other => return Err(Error::Format(format!("unknown method tag {other}"))),
    };
    let gen_len = u32::from_le_bytes(c.array()?) as usize;
    let generator = std::str::from_utf8(c.take(gen_len)?)
        .map_err(|e| Error::Format(format!("generator name is not UTF-8: {e}")))?
        .to_string();
    let count = c.u64()? as usize;
    let grid = TimeGrid::new(n, horizon)?;
    if count != grid.node_count() {
        return Err(Error::Format(format!("header says {count} values, grid has {}", grid.node_count())));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(c.f64()?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after values", bytes.len() - c.pos)));
    }
    FbmPath::with_generator(hurst, grid, values, StreamId::new(seed, stream), method, generator)
}

pub fn write_path_csv(path: &FbmPath) -> String {
    let mut s = String::with_capacity(24 * path.values().len() + 128);
    s.push_str(CSV_HEADER);
    s.push('\n');
    s.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        path.hurst().value(),
        path.grid().n(),
        path.grid().horizon(),
        path.seed(),
        path.stream(),
        path.method().name(),
        path.generator()
    ));
    s.push_str("value\n");
    for v in path.values() {
        s.push_str(&format!("{v:?}\n"));
    }
    s
}

pub fn read_path_csv(text: &str) -> Result<FbmPath> {
    let mut lines = text.lines();
    let bad = |what: &str| Error::Format(format!("path CSV: {what}"));
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(bad("missing header"));
    }
    let meta: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing metadata record"))?
        .trim()
        .split(',')
        .collect();
    if meta.len() != 7 {
        return Err(bad("metadata record must have 7 fields"));
    }
    let num = |s: &str, name: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| bad(&format!("bad {name} `{s}`"))) };
    let int = |s: &str, name: &str| -> Result<u64> { s.parse::<u64>().map_err(|_| bad(&format!("bad {name} `{s}`"))) };
    let hurst = Hurst::new(num(meta[0], "hurst")?)?;
    let grid = TimeGrid::new(int(meta[1], "n")? as usize, num(meta[2], "horizon")?)?;
    let id = StreamId::new(int(meta[3], "seed")?, int(meta[4], "stream")?);
    let method: Method = meta[5].parse()?;
    let generator = meta[6].to_string();
    if lines.next().map(str::trim) != Some("value") {
        return Err(bad("missing `value` column header"));
    }
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| num(l.trim(), "value"))
        .collect::<Result<Vec<f64>>>()?;
    FbmPath::with_generator(hurst, grid, values, id, method, generator)
}

pub fn write_path(path: &FbmPath, file: &Path, encoding: PathEncoding) -> Result<()> {
    let bytes = match encoding {
        PathEncoding::Binary => write_path_binary(path),
        PathEncoding::Csv => write_path_csv(path).into_bytes(),
    };
    fs::write(file, bytes).map_err(|e| Error::io(file, e))
}

/// Reads a path file, choosing the decoder from the file contents.
pub fn read_path(file: &Path) -> Result<FbmPath> {
    let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
    if bytes.starts_with(MAGIC) {
        read_path_binary(&bytes)
    } else {
        let text =
            String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is neither a binary nor a CSV path file", file.display())))?;
        read_path_csv(&text)
    }
}

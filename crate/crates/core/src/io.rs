//! On-disk point set formats.
//!
//! `PSET` binary layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PSET"
//! 4       2     version (1)
//! 6       2     flags (bit 0: labels present)
//! 8       8     n
//! 16      8     d
//! 24      4·n·d f32 values, row-major
//! ...     4·n   u32 labels, only if flag bit 0 is set
//! ```
//!
//! CSV files hold numeric cells only, one row per point, `,` separated, no
//! header and no quoting. Labels for a CSV point set live in a separate
//! single-column file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pointset::PointSet;

pub const PSET_MAGIC: [u8; 4] = *b"PSET";
pub const PSET_VERSION: u16 = 1;
pub const PSET_HEADER_LEN: usize = 24;
const FLAG_LABELS: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pset,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension; anything but `.csv` is PSET.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Pset,
        }
    }
}

pub fn load_pointset(path: impl AsRef<Path>, format: Format) -> Result<PointSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Pset => {
            let mut r = BufReader::new(file);
            let ps = read_pset(&mut r).map_err(|e| with_path(e, path))?;
            let mut rest = [0u8; 1];
            match r.read(&mut rest) {
                Ok(0) => Ok(ps),
                Ok(_) => Err(Error::Format(format!(
                    "{}: trailing bytes after PSET payload",
                    path.display()
                ))),
                Err(e) => Err(Error::io(path, e)),
            }
        }
        Format::Csv => read_csv(file).map_err(|e| with_path(e, path)),
    }
}

pub fn save_pointset(ps: &PointSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Pset => write_pset(ps, &mut w),
        Format::Csv => write_csv(ps, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

/// Reads a single-column CSV of non-negative integer labels.
pub fn load_csv_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv_reader(file);
    let mut labels = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if rec.len() != 1 {
            return Err(Error::Format(format!(
                "{}: label row {i} has {} cells",
                path.display(),
                rec.len()
            )));
        }
        let v = rec[0].trim().parse::<u32>().map_err(|e| {
            Error::Format(format!("{}: label row {i}: {e}", path.display()))
        })?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn save_csv_labels(labels: &[u32], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a CSV point set and attaches labels from a companion file.
pub fn load_csv_with_labels(data: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<PointSet> {
    let ps = load_pointset(data, Format::Csv)?;
    ps.with_labels(Some(load_csv_labels(labels)?))
}

pub fn write_pset<W: Write>(ps: &PointSet, w: &mut W) -> std::io::Result<()> {
    let flags = if ps.labels().is_some() { FLAG_LABELS } else { 0 };
    w.write_all(&PSET_MAGIC)?;
    w.write_all(&PSET_VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(ps.n() as u64).to_le_bytes())?;
    w.write_all(&(ps.d() as u64).to_le_bytes())?;
    for v in ps.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    if let Some(labels) = ps.labels() {
        for l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads exactly one PSET record from `r`, leaving any following bytes unread.
pub fn read_pset<R: Read>(r: &mut R) -> Result<PointSet> {
    let mut header = [0u8; PSET_HEADER_LEN];
    read_exact(r, &mut header, "PSET header")?;
    if header[0..4] != PSET_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"PSET\"",
            &header[0..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != PSET_VERSION {
        return Err(Error::Format(format!("unsupported PSET version {version}")));
    }
    let flags = u16::from_le_bytes([header[6], header[7]]);
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::Format(format!("unknown PSET flags {flags:#06x}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(header[16..24].try_into().unwrap());
    if d == 0 {
        return Err(Error::Format("PSET dimensionality is 0".into()));
    }
    let values = n
        .checked_mul(d)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format(format!("PSET size overflow: n = {n}, d = {d}")))?;
    let data = read_f32_block(r, values, "PSET values")?;
    let labels = if flags & FLAG_LABELS != 0 {
        let bytes = read_block(r, n * 4, "PSET labels")?;
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    PointSet::new(data, d as usize, labels)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Format(format!("reading {what}: {e}")),
    })
}

/// Reads `len` bytes without trusting `len` for the up-front allocation.
pub(crate) fn read_block<R: Read>(r: &mut R, len: u64, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len.min(1 << 24) as usize);
    r.take(len)
        .read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("reading {what}: {e}")))?;
    if buf.len() as u64 != len {
        return Err(Error::Format(format!(
            "truncated {what}: expected {len} bytes, found {}",
            buf.len()
        )));
    }
    Ok(buf)
}

pub(crate) fn read_f32_block<R: Read>(r: &mut R, len: u64, what: &str) -> Result<Vec<f32>> {
    let bytes = read_block(r, len, what)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(b',')
        .quoting(false)
        .flexible(true)
        .from_reader(r)
}

fn read_csv<R: Read>(r: R) -> Result<PointSet> {
    let mut reader = csv_reader(r);
    let mut data = Vec::new();
    let mut d = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        match d {
            None => d = Some(rec.len()),
            Some(d) if d != rec.len() => {
                return Err(Error::Format(format!(
                    "row {i} has {} cells, expected {d}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f32>()
                .map_err(|e| Error::Format(format!("row {i}, column {j}: {e} ({cell:?})")))?;
            data.push(v);
        }
    }
    let d = d.ok_or_else(|| Error::Validation("CSV file has no rows".into()))?;
    PointSet::new(data, d, None)
}

fn write_csv<W: Write>(ps: &PointSet, w: &mut W) -> std::io::Result<()> {
    for row in ps.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            // `Display` for f32 prints the shortest string that parses back exactly.
            write!(w, "{v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    }
}

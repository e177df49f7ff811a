//! Snapshot persistence and CSV export.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! "RMOR1"                      magic, 5 bytes
//! n, m, flags                  u64 each; flags bit 0 = parameter stamps
//! data                         n·m f64, column-major
//! width                        u64, stamp width (1 for time stamps)
//! stamps                       m·width f64, snapshot-major
//! weights                      m f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use rmor::linalg::DenseMatrix;
use rmor::pod::{SnapshotMatrix, Stamps};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 5] = b"RMOR1";
const FLAG_PARAMETERS: u64 = 1;

pub fn encode_snapshots(snap: &SnapshotMatrix) -> Vec<u8> {
    let (n, m) = snap.data().shape();
    let (flags, width, stamps): (u64, usize, &[f64]) = match snap.stamps() {
        Stamps::Times(t) => (0, 1, t),
        Stamps::Parameters { width, values } => (FLAG_PARAMETERS, *width, values),
    };
    let mut out = Vec::with_capacity(MAGIC.len() + 32 + 8 * (n * m + stamps.len() + m));
    out.extend_from_slice(MAGIC);
    for v in [n as u64, m as u64, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_floats(&mut out, snap.data().as_slice());
    out.extend_from_slice(&(width as u64).to_le_bytes());
    push_floats(&mut out, stamps);
    push_floats(&mut out, snap.weights());
    out
}

fn push_floats(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(CliError::Parse {
                offset: self.pos as u64,
                message: format!("unexpected end of file reading {what}: need {len} bytes, {available} left"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count.checked_mul(8).ok_or_else(|| CliError::Format(format!("{what} length overflows")))?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn to_count(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| CliError::Format(format!("{what} = {v} does not fit in memory")))
}

/// Parses a snapshot file image. Nothing is returned unless the whole image is valid.
pub fn decode_snapshots(bytes: &[u8]) -> Result<SnapshotMatrix> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(CliError::Parse {
            offset: 0,
            message: format!("bad magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let n = to_count(c.u64("row count")?, "n")?;
    let m = to_count(c.u64("column count")?, "m")?;
    let flags = c.u64("flags")?;
    if flags & !FLAG_PARAMETERS != 0 {
        return Err(CliError::Format(format!("unknown flag bits {flags:#x}")));
    }
    if n == 0 || m == 0 {
        return Err(CliError::Format(format!("header declares an empty {n}x{m} matrix")));
    }
    let nm = n
        .checked_mul(m)
        .ok_or_else(|| CliError::Format(format!("header dimensions {n}x{m} overflow")))?;
    let data = c.f64s(nm, "snapshot data")?;
    let width = to_count(c.u64("stamp width")?, "stamp width")?;
    let parameters = flags & FLAG_PARAMETERS != 0;
    if width == 0 || (!parameters && width != 1) {
        return Err(CliError::Format(format!(
            "stamp width {width} does not match {} stamps",
            if parameters { "parameter" } else { "time" }
        )));
    }
    let stamp_count = m
        .checked_mul(width)
        .ok_or_else(|| CliError::Format("stamp block length overflows".into()))?;
    let stamps = c.f64s(stamp_count, "stamps")?;
    let weights = c.f64s(m, "weights")?;
    if c.pos != bytes.len() {
        return Err(CliError::Format(format!(
            "{} trailing bytes after the weights block at byte {}",
            bytes.len() - c.pos,
            c.pos
        )));
    }
    let stamps = if parameters {
        Stamps::Parameters { width, values: stamps }
    } else {
        Stamps::Times(stamps)
    };
    let matrix = DenseMatrix::new(n, m, data).map_err(|e| CliError::Format(e.to_string()))?;
    SnapshotMatrix::new(matrix, stamps, weights).map_err(|e| CliError::Format(e.to_string()))
}

/// Writes through a sibling temporary file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn save_snapshots(path: &Path, snap: &SnapshotMatrix) -> Result<()> {
    write_atomic(path, &encode_snapshots(snap))
}

pub fn load_snapshots(path: &Path) -> Result<SnapshotMatrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    decode_snapshots(&bytes)
}

/// Matrix as CSV: a header line `n,m`, then one line per row.
pub fn write_matrix_csv<W: Write>(out: W, m: &DenseMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record([m.rows().to_string(), m.cols().to_string()])?;
    let mut record = Vec::with_capacity(m.cols());
    for i in 0..m.rows() {
        record.clear();
        record.extend((0..m.cols()).map(|j| m[(i, j)].to_string()));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| CliError::io("<csv>", e))?;
    Ok(())
}

pub fn save_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, m)?;
    write_atomic(path, &buf)
}

/// Inverse of [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = r.records();
    let bad = |line: u64, msg: String| CliError::Format(format!("line {line}: {msg}"));
    let header = records.next().ok_or_else(|| bad(1, "missing n,m header".into()))??;
    if header.len() != 2 {
        return Err(bad(1, format!("header has {} fields, expected 2", header.len())));
    }
    let dim = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(1, format!("{s:?}: {e}")));
    let (n, m) = (dim(&header[0])?, dim(&header[1])?);
    let mut data = vec![0.0; n * m];
    let mut rows = 0;
    for rec in records {
        let rec = rec?;
        let line = rows as u64 + 2;
        if rows == n {
            return Err(bad(line, format!("more than {n} data lines")));
        }
        if rec.len() != m {
            return Err(bad(line, format!("{} fields, expected {m}", rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            data[rows + j * n] = field.trim().parse().map_err(|e| bad(line, format!("{field:?}: {e}")))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(bad(rows as u64 + 2, format!("expected {n} data lines, found {rows}")));
    }
    DenseMatrix::new(n, m, data).map_err(|e| CliError::Format(e.to_string()))
}

pub fn load_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    read_matrix_csv(fs::File::open(path).map_err(|e| CliError::io(path, e))?)
}

/// Header-first CSV of serializable rows.
pub fn save_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let buf = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
    write_atomic(path, &buf)
}

pub fn load_rows_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_atomic(path, &buf)
}

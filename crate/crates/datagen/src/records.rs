//! Labeled flow records and their on-disk formats.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes   "FCPINNDS"
//! version   u32       1
//! columns   u32       8
//! names     per column: u8 length, then UTF-8 bytes
//!           (x, y, t, u_inlet, d_y, u, v, p)
//! rows      u64
//! data      one contiguous f64 block per column, in column order
//! ```
//!
//! The CSV export has a header line with the same column names and one row
//! per record, floats printed in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::geometry::{DesignPoint, RoiGrid};
use crate::solver::FieldSnapshot;
use crate::DatagenError;

pub const MAGIC: &[u8; 8] = b"FCPINNDS";
pub const VERSION: u32 = 1;
pub const COLUMNS: [&str; 8] = ["x", "y", "t", "u_inlet", "d_y", "u", "v", "p"];

/// One labeled sample: `(x, y, t, u_inlet, d_y) -> (u, v, p)`. Positions are
/// ROI-local.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowRecord {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub u_inlet: f64,
    pub d_y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl FlowRecord {
    pub fn design(&self) -> DesignPoint {
        DesignPoint::new(self.u_inlet, self.d_y)
    }

    fn to_array(self) -> [f64; 8] {
        [
            self.x, self.y, self.t, self.u_inlet, self.d_y, self.u, self.v, self.p,
        ]
    }

    fn from_array(a: [f64; 8]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            t: a[2],
            u_inlet: a[3],
            d_y: a[4],
            u: a[5],
            v: a[6],
            p: a[7],
        }
    }
}

/// Records in memory, row order preserved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowTable {
    pub records: Vec<FlowRecord>,
}

impl FlowTable {
    pub fn new(records: Vec<FlowRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Flattens per-design snapshot sequences. Order: design, time, then
    /// ROI rows (`y`), then `x`.
    pub fn from_snapshots(
        runs: &[(DesignPoint, Vec<FieldSnapshot>)],
        roi: &RoiGrid,
    ) -> Result<Self, DatagenError> {
        let total: usize = runs.iter().map(|(_, s)| s.len() * roi.len()).sum();
        let mut records = Vec::with_capacity(total);
        for (design, snaps) in runs {
            for snap in snaps {
                if snap.u.len() != roi.len() || snap.v.len() != roi.len() || snap.p.len() != roi.len() {
                    return Err(DatagenError::DataIntegrity(format!(
                        "snapshot at t = {} does not match the {}x{} ROI grid",
                        snap.t, roi.nx, roi.ny
                    )));
                }
                for j in 0..roi.ny {
                    for i in 0..roi.nx {
                        let k = roi.index(i, j);
                        records.push(FlowRecord {
                            x: roi.x(i),
                            y: roi.y(j),
                            t: snap.t,
                            u_inlet: design.u_inlet,
                            d_y: design.d_y,
                            u: snap.u[k],
                            v: snap.v[k],
                            p: snap.p[k],
                        });
                    }
                }
            }
        }
        let table = Self { records };
        table.check_finite()?;
        Ok(table)
    }

    pub fn check_finite(&self) -> Result<(), DatagenError> {
        for (n, r) in self.records.iter().enumerate() {
            if let Some(c) = r.to_array().iter().position(|v| !v.is_finite()) {
                return Err(DatagenError::DataIntegrity(format!(
                    "record {n} has non-finite `{}`",
                    COLUMNS[c]
                )));
            }
        }
        Ok(())
    }

    pub fn write_binary(&self, path: &Path) -> Result<(), DatagenError> {
        self.check_finite()?;
        let mut w = BufWriter::new(File::create(path)?);
        self.encode(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn encode<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(COLUMNS.len() as u32).to_le_bytes())?;
        for name in COLUMNS {
            w.write_all(&[name.len() as u8])?;
            w.write_all(name.as_bytes())?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for c in 0..COLUMNS.len() {
            for r in &self.records {
                w.write_all(&r.to_array()[c].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self, DatagenError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DatagenError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(DatagenError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(DatagenError::Format(format!("unsupported version {version}")));
        }
        let ncols = cur.u32()? as usize;
        if ncols != COLUMNS.len() {
            return Err(DatagenError::Format(format!("expected 8 columns, found {ncols}")));
        }
        for expected in COLUMNS {
            let len = cur.take(1)?[0] as usize;
            let name = cur.take(len)?;
            if name != expected.as_bytes() {
                return Err(DatagenError::Format(format!(
                    "column `{}` where `{expected}` was expected",
                    String::from_utf8_lossy(name)
                )));
            }
        }
        let rows = cur.u64()? as usize;
        let need = rows
            .checked_mul(8 * ncols)
            .ok_or_else(|| DatagenError::Format("row count overflows".into()))?;
        let data = cur.take(need)?;
        if cur.pos != bytes.len() {
            return Err(DatagenError::Format("trailing bytes after data".into()));
        }
        let col = |c: usize, n: usize| {
            let o = (c * rows + n) * 8;
            f64::from_le_bytes(data[o..o + 8].try_into().unwrap())
        };
        let records = (0..rows)
            .map(|n| FlowRecord::from_array(std::array::from_fn(|c| col(c, n))))
            .collect();
        Ok(Self { records })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DatagenError> {
        self.check_finite()?;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", COLUMNS.join(","))?;
        for r in &self.records {
            let a = r.to_array();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, DatagenError> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| DatagenError::Format("empty CSV".into()))??;
        if header.trim() != COLUMNS.join(",") {
            return Err(DatagenError::Format(format!("unexpected CSV header `{header}`")));
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut a = [0.0; 8];
            let mut fields = line.split(',');
            for slot in a.iter_mut() {
                let f = fields
                    .next()
                    .ok_or_else(|| DatagenError::Format(format!("short CSV row {}", n + 2)))?;
                *slot = f.trim().parse().map_err(|_| {
                    DatagenError::Format(format!("bad number `{f}` on CSV row {}", n + 2))
                })?;
            }
            if fields.next().is_some() {
                return Err(DatagenError::Format(format!("long CSV row {}", n + 2)));
            }
            records.push(FlowRecord::from_array(a));
        }
        Ok(Self { records })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatagenError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| DatagenError::Format("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, DatagenError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DatagenError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes the binary dataset for a set of simulations and returns the
/// record count.
pub fn export_dataset(
    runs: &[(DesignPoint, Vec<FieldSnapshot>)],
    roi: &RoiGrid,
    path: &Path,
) -> Result<usize, DatagenError> {
    let table = FlowTable::from_snapshots(runs, roi)?;
    table.write_binary(path)?;
    Ok(table.len())
}

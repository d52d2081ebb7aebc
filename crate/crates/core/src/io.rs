//! CSV input and output.
//!
//! Output files start with a `#` comment line holding the config hash and
//! seed. Floats are written with 17 significant digits so values round-trip.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{MraError, Result};
use crate::geometry::Locations;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Provenance stamp written at the top of every output file.
#[derive(Debug, Clone, Default)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

pub struct CsvOut {
    w: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, stamp: &Stamp, header: &[String]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "# config_hash={} seed={}", stamp.config_hash, stamp.seed)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        Ok(Self { w })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// Header names `x1, ..., xd`.
pub fn coord_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("x{j}")).collect()
}

/// Writes locations with one or more value columns.
pub fn write_columns(path: &Path, stamp: &Stamp, locs: &Locations, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut header = coord_header(locs.dim());
    header.extend(names.iter().map(|s| s.to_string()));
    let mut out = CsvOut::create(path, stamp, &header)?;
    for (i, p) in locs.iter().enumerate() {
        let row: Vec<String> = p.iter().copied().chain(cols.iter().map(|c| c[i])).map(fmt_f64).collect();
        out.row(&row)?;
    }
    out.finish()
}

/// Numeric table read from CSV (with header; `#` lines skipped).
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Locations from the `x1, x2, ...` columns.
    pub fn locations(&self) -> Result<Locations> {
        let idx: Vec<usize> = (1..)
            .map_while(|j| self.header.iter().position(|h| *h == format!("x{j}")))
            .collect();
        if idx.is_empty() {
            return Err(MraError::Config("CSV has no x1 column".into()));
        }
        let coords = self.rows.iter().flat_map(|r| idx.iter().map(|&j| r[j])).collect();
        Locations::new(idx.len(), coords)
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| MraError::Config(format!("{}: row {}: bad number {f:?}", path.display(), i + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Reads observations: columns `x1..xd` and `y`.
pub fn read_observations(path: &Path) -> Result<(Locations, Vec<f64>)> {
    let t = read_table(path)?;
    let y = t.column("y").ok_or_else(|| MraError::Config(format!("{}: missing y column", path.display())))?;
    Ok((t.locations()?, y))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

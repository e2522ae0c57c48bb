//! Sample CSV files and content hashing.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Writes one sample per row under an `x0,x1,...` header. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_samples(path: &Path, x: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(csv_io)?;
    for row in x.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}"))).map_err(csv_io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    write_file(path, &bytes)
}

/// Reads a sample CSV. A first row that does not parse as numbers is taken as a header.
pub fn read_samples(path: &Path) -> Result<Array2<f64>> {
    if !path.is_file() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    let bad = |msg: String| CliError::SampleFile {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let parsed = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => {
                cols = Some(rec.len());
                continue;
            }
            Err(e) => return Err(bad(format!("row {}: {e}", i + 1))),
        };
        match cols {
            Some(c) if c != parsed.len() => return Err(bad(format!("row {} has {} columns, expected {c}", i + 1, parsed.len()))),
            _ => cols = Some(parsed.len()),
        }
        values.extend(parsed);
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(e.to_string()))
}

/// Writes through a temporary sibling and a rename.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_io(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Git-style object hash: SHA-256 over `blob <len>\0<content>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of named inputs, independent of their order.
pub fn tree_hash(entries: &[(String, String)]) -> String {
    let mut sorted = entries.to_vec();
    sorted.sort();
    let mut h = Sha256::new();
    for (name, digest) in &sorted {
        h.update(format!("{name}\0{digest}\n").as_bytes());
    }
    hex::encode(h.finalize())
}

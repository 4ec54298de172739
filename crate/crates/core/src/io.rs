//! Dense matrix files.
//!
//! Two formats: headerless CSV (one matrix row per line) and a binary
//! layout consisting of the magic bytes `BCAN1`, the row and column counts
//! as little-endian `u64`, and the entries as little-endian `f64` in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"BCAN1";

pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        if rows == 0 {
            cols = record.len();
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("row {}, column {}: {field:?} is not a number", rows + 1, j + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Format("empty matrix".into()));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Values are written with Rust's shortest round-trip formatting, so
/// reading the file back is exact.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut reader: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 5];
    reader.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("missing BCAN1 header".into()));
    }
    let mut word = [0u8; 8];
    let mut dims = [0usize; 2];
    for d in &mut dims {
        reader.read_exact(&mut word)?;
        *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Format("dimension too large".into()))?;
    }
    let [rows, cols] = dims;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("dimension too large".into()))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Format(format!(
            "expected {} bytes of data for {rows}x{cols}, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn write_matrix_binary<W: Write>(m: &DMatrix<f64>, mut writer: W) -> Result<()> {
    writer.write_all(BINARY_MAGIC)?;
    writer.write_all(&(m.nrows() as u64).to_le_bytes())?;
    writer.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for row in m.row_iter() {
        for v in row.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read a matrix file, detecting the binary format by its magic bytes.
pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut head = [0u8; 5];
    let got = read_up_to(&mut reader, &mut head)?;
    let rest = &head[..got];
    if rest == BINARY_MAGIC {
        read_matrix_binary(rest.chain(reader))
    } else {
        read_matrix_csv(rest.chain(reader))
    }
}

/// Write a matrix file; `binary` selects the binary layout.
pub fn write_matrix_file(m: &DMatrix<f64>, path: impl AsRef<Path>, binary: bool) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    if binary {
        write_matrix_binary(m, w)
    } else {
        write_matrix_csv(m, w)
    }
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..])? {
            0 => break,
            k => got += k,
        }
    }
    Ok(got)
}

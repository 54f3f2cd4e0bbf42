//! Complex matrix CSV files.
//!
//! ```text
//! # 2 3
//! re_0,im_0,re_1,im_1,re_2,im_2
//! 1.0000000000000000e0,0.0000000000000000e0,...
//! ```
//!
//! The first line carries the shape, the header names one `re_j,im_j` pair per
//! column, and each record holds one matrix row. Values are written with 17
//! significant digits so every `f64` round-trips exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lin_core::{check_finite, ComplexMatrix};

pub fn write_matrix<W: Write>(out: W, a: &ComplexMatrix) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# {} {}", a.nrows(), a.ncols())?;
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..a.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(2 * a.ncols());
    for i in 0..a.nrows() {
        record.clear();
        for j in 0..a.ncols() {
            let z = a[(i, j)];
            record.push(format!("{:.16e}", z.re));
            record.push(format!("{:.16e}", z.im));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(input: R) -> Result<ComplexMatrix> {
    let mut reader = BufReader::new(input);
    let mut shape_line = String::new();
    reader.read_line(&mut shape_line)?;
    let (rows, cols) = parse_shape(&shape_line)?;

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = csv_reader.headers()?.clone();
    if header.len() != 2 * cols {
        return Err(Error::Parse(format!(
            "header has {} fields, expected {} for {cols} columns",
            header.len(),
            2 * cols
        )));
    }
    for j in 0..cols {
        if header[2 * j] != format!("re_{j}") || header[2 * j + 1] != format!("im_{j}") {
            return Err(Error::Parse(format!("unexpected header near column {j}")));
        }
    }

    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, rec) in csv_reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 * cols {
            return Err(Error::Parse(format!(
                "row {i} has {} fields, expected {}",
                rec.len(),
                2 * cols
            )));
        }
        for j in 0..cols {
            let re = parse_f64(&rec[2 * j], i, j)?;
            let im = parse_f64(&rec[2 * j + 1], i, j)?;
            data.push(Complex64::new(re, im));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!(
            "shape line declares {rows} rows, found {seen}"
        )));
    }
    let m = ComplexMatrix::from_row_slice(rows, cols, &data);
    check_finite(&m)?;
    Ok(m)
}

pub fn write_matrix_file(path: &Path, a: &ComplexMatrix) -> Result<()> {
    write_matrix(File::create(path)?, a)
}

pub fn read_matrix_file(path: &Path) -> Result<ComplexMatrix> {
    read_matrix(File::open(path)?)
}

fn parse_shape(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("expected '# rows cols', got {:?}", line.trim_end()));
    let rest = line.trim().strip_prefix('#').ok_or_else(bad)?;
    let mut parts = rest.split_whitespace();
    let rows = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let cols = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((rows, cols))
}

fn parse_f64(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number {s:?} at row {row}, column {col}")))
}

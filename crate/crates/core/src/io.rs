//! CSV formats for dense matrices and observation sets.
//!
//! Both start with a `rows,cols` line. A dense file then carries one matrix row
//! per line; an observation file carries `row,col,value` triplets with
//! zero-based indices. Values are written with the shortest representation
//! that round-trips, so writing is deterministic and lossless.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, ObservationSet};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

struct Lines<R: Read> {
    name: String,
    records: csv::StringRecordsIntoIter<R>,
}

impl<R: Read> Lines<R> {
    fn new(name: &str, reader: R) -> Self {
        let records = ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        Lines {
            name: name.to_string(),
            records,
        }
    }

    fn parse_error(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.name.clone(),
            line,
            message: message.into(),
        }
    }

    fn next_record(&mut self) -> Result<Option<(u64, StringRecord)>> {
        loop {
            match self.records.next() {
                None => return Ok(None),
                Some(Err(e)) => {
                    let line = e.position().map_or(0, |p| p.line());
                    return Err(self.parse_error(line, e.to_string()));
                }
                Some(Ok(rec)) => {
                    if rec.iter().all(str::is_empty) {
                        continue;
                    }
                    let line = rec.position().map_or(0, |p| p.line());
                    return Ok(Some((line, rec)));
                }
            }
        }
    }

    fn header(&mut self) -> Result<(usize, usize)> {
        let (line, rec) = self
            .next_record()?
            .ok_or_else(|| self.parse_error(1, "missing `rows,cols` header"))?;
        if rec.len() != 2 {
            return Err(self.parse_error(line, "header must be `rows,cols`"));
        }
        let rows = self.index(line, &rec[0])?;
        let cols = self.index(line, &rec[1])?;
        if rows == 0 || cols == 0 {
            return Err(self.parse_error(line, "dimensions must be positive"));
        }
        Ok((rows, cols))
    }

    fn index(&self, line: u64, field: &str) -> Result<usize> {
        field
            .parse()
            .map_err(|_| self.parse_error(line, format!("expected a non-negative integer, found `{field}`")))
    }

    fn value(&self, line: u64, field: &str) -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| self.parse_error(line, format!("expected a number, found `{field}`")))?;
        if !v.is_finite() {
            return Err(self.parse_error(line, format!("non-finite value `{field}`")));
        }
        Ok(v)
    }
}

pub fn parse_dense<R: Read>(name: &str, reader: R) -> Result<DenseMatrix> {
    let mut lines = Lines::new(name, reader);
    let (rows, cols) = lines.header()?;
    let mut entries = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    while let Some((line, rec)) = lines.next_record()? {
        if seen_rows == rows {
            return Err(lines.parse_error(line, format!("more than {rows} rows")));
        }
        if rec.len() != cols {
            return Err(lines.parse_error(
                line,
                format!("expected {cols} values, found {}", rec.len()),
            ));
        }
        for field in rec.iter() {
            entries.push(lines.value(line, field)?);
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(lines.parse_error(0, format!("expected {rows} rows, found {seen_rows}")));
    }
    DenseMatrix::from_row_major(rows, cols, entries)
}

pub fn parse_observations<R: Read>(name: &str, reader: R) -> Result<ObservationSet> {
    let mut lines = Lines::new(name, reader);
    let (rows, cols) = lines.header()?;
    let mut entries = Vec::new();
    while let Some((line, rec)) = lines.next_record()? {
        if rec.len() != 3 {
            return Err(lines.parse_error(line, "expected `row,col,value`"));
        }
        let i = lines.index(line, &rec[0])?;
        let j = lines.index(line, &rec[1])?;
        let y = lines.value(line, &rec[2])?;
        if i >= rows || j >= cols {
            return Err(lines.parse_error(
                line,
                format!("index ({i}, {j}) outside a {rows}x{cols} matrix"),
            ));
        }
        entries.push((i, j, y));
    }
    ObservationSet::new(rows, cols, entries).map_err(|e| lines.parse_error(0, e.to_string()))
}

pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_dense(&path.display().to_string(), file)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<ObservationSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_observations(&path.display().to_string(), file)
}

pub fn format_dense(m: &DenseMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn format_observations(obs: &ObservationSet) -> String {
    let mut out = format!("{},{}\n", obs.rows(), obs.cols());
    for &(i, j, y) in obs.entries() {
        out.push_str(&format!("{i},{j},{y}\n"));
    }
    out
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_text(path.as_ref(), &format_dense(m))
}

pub fn write_observations(path: impl AsRef<Path>, obs: &ObservationSet) -> Result<()> {
    write_text(path.as_ref(), &format_observations(obs))
}

//! Shared CSV plumbing. Floats use the shortest form that parses back to the
//! same bits.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::create_parent;

pub fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn writer(path: &Path) -> Result<csv::Writer<File>> {
    create_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file))
}

pub fn write_row<I, S>(w: &mut csv::Writer<File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| csv_error(path, e))
}

pub fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format { what: "CSV file", path: path.to_path_buf(), message: format!("{other:?}") },
    }
}

/// Opens `path`, checks the header equals `expected` and yields data rows.
pub fn reader(path: &Path, what: &'static str, expected: &[String]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact { what, path: path.to_path_buf() },
        _ => Error::io(path, e),
    })?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Format {
            what,
            path: path.to_path_buf(),
            message: format!("header is {:?}, expected {:?}", header.iter().collect::<Vec<_>>(), expected),
        });
    }
    Ok(r)
}

pub fn parse_fields<'a>(
    fields: impl IntoIterator<Item = &'a str>,
    line: u64,
    path: &Path,
    what: &'static str,
) -> Result<Vec<f64>> {
    fields
        .into_iter()
        .map(|f| {
            f.trim().parse::<f64>().map_err(|_| Error::Format {
                what,
                path: path.to_path_buf(),
                message: format!("line {line}: {f:?} is not a number"),
            })
        })
        .collect()
}

pub fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

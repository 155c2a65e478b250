//! Training dataset CSV: `run,<input channels>,<target channels>`.

use std::path::Path;

use attfis_core::roles::{Dataset, Role};

use crate::csvfmt::{csv_error, finish, float, line_of, parse_fields, reader, write_row, writer};
use crate::error::{Error, Result};

pub fn dataset_header(role: Role) -> Vec<String> {
    std::iter::once("run")
        .chain(role.input_names().iter().copied())
        .chain(role.output_names().iter().copied())
        .map(String::from)
        .collect()
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = writer(path)?;
    write_row(&mut w, path, dataset_header(data.role))?;
    for i in 0..data.len() {
        let row = std::iter::once(data.run[i].to_string())
            .chain(data.input(i).iter().chain(data.target(i)).map(|&v| float(v)));
        write_row(&mut w, path, row)?;
    }
    finish(w, path)
}

pub fn read_dataset(path: &Path, role: Role) -> Result<Dataset> {
    let what = "dataset";
    let mut r = reader(path, what, &dataset_header(role))?;
    let n_in = role.raw_inputs();
    let mut data = Dataset::new(role);
    for record in r.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = line_of(&record);
        let run: u32 = record[0].trim().parse().map_err(|_| Error::Format {
            what,
            path: path.to_path_buf(),
            message: format!("line {line}: run {:?} is not a non-negative integer", &record[0]),
        })?;
        let values = parse_fields(record.iter().skip(1), line, path, what)?;
        data.push(run, &values[..n_in], &values[n_in..]).map_err(|e| Error::Format {
            what,
            path: path.to_path_buf(),
            message: format!("line {line}: {e}"),
        })?;
    }
    Ok(data)
}

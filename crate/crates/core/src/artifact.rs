//! Small helpers shared by the CSV exports of each stage.
//!
//! Exports may begin with a `#` provenance line; readers skip such lines.

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub fn csv_writer(path: &Path, provenance: Option<&str>, header: &[&str]) -> Result<csv::Writer<File>> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    if let Some(line) = provenance {
        writeln!(file, "# {line}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

pub fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Opens an export for reading and checks its header.
pub fn csv_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if !path.is_file() {
        return Err(Error::MissingFile { name });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Invalid(format!(
            "{name}: expected header {}, found {}",
            header.join(","),
            found.join(",")
        )));
    }
    Ok(r)
}

pub(crate) fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, file: &str) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let raw = record
        .get(idx)
        .ok_or_else(|| Error::row(file, line, format!("missing column {idx}")))?;
    raw.parse()
        .map_err(|_| Error::row(file, line, format!("bad value {raw:?} in column {idx}")))
}

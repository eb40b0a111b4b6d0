use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::args::{Format, Output};
use crate::CliError;

/// CSV body: a header, one row per record, then `# ...` summary lines.
pub fn csv_table<T: Serialize>(rows: &[T], header: &[&str], summary: &[String]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Other(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
    }
    let mut buf = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
    for line in summary {
        writeln!(buf, "# {line}")?;
    }
    Ok(buf)
}

pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    buf.push(b'\n');
    Ok(buf)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file.
pub fn emit(output: &Output, body: &[u8]) -> Result<(), CliError> {
    match &output.out {
        None => {
            std::io::stdout().write_all(body)?;
            Ok(())
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(body)?;
            tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
            Ok(())
        }
    }
}

pub fn is_json(output: &Output) -> bool {
    output.format == Format::Json
}

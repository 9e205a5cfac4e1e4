//! Writers for CSV tables, JSON documents and JSON-lines logs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

/// A file at `path`, or standard output.
pub fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<T: Serialize>(items: &[T], mut out: impl Write) -> CliResult<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(item: &T, mut out: impl Write) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut out, item)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

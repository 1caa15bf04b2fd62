//! Plain-text coordinate matrices: one `row col value` entry per line,
//! 0-based indices, `#` comment lines, missing entries are zero.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::blockmat::Dense;
use crate::error::{Error, Result};

pub type Entry = (usize, usize, f64);

pub fn parse_entries<R: BufRead>(reader: R) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let fields: Vec<&str> = trimmed.split(' ').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected `row col value`, found {} fields",
                fields.len()
            )));
        }
        let row = fields[0]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad row index {:?}: {e}", fields[0])))?;
        let col = fields[1]
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad column index {:?}: {e}", fields[1])))?;
        let value = fields[2]
            .parse::<f64>()
            .map_err(|e| parse_err(format!("bad value {:?}: {e}", fields[2])))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite value {value}")));
        }
        entries.push((row, col, value));
    }
    Ok(entries)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    parse_entries(BufReader::new(File::open(path)?))
}

pub fn write_entries<W: Write>(mut w: W, entries: impl IntoIterator<Item = Entry>) -> Result<()> {
    for (r, c, v) in entries {
        writeln!(w, "{r} {c} {v:e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the nonzero entries of `m` in row-major order.
pub fn write_dense(path: &Path, m: &Dense) -> Result<()> {
    write_entries(BufWriter::new(File::create(path)?), m.nonzeros())
}

/// Smallest power of two strictly greater than every index in `entries`
/// (at least 1).
pub fn infer_dimension<'a>(sets: impl IntoIterator<Item = &'a [Entry]>) -> usize {
    let max = sets
        .into_iter()
        .flat_map(|s| s.iter().map(|(r, c, _)| (*r).max(*c)))
        .max();
    match max {
        None => 1,
        Some(m) => (m + 1).next_power_of_two(),
    }
}

//! Matrix Market `array real general` reader and writer.
//!
//! Entries are written one per line in column-major order using the shortest
//! round-trip decimal form, so `read(write(m)) == m` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Error, Result};

pub const HEADER: &str = "%%MatrixMarket matrix array real general";

pub fn write_to<W: Write>(m: &DenseMatrix, mut w: W) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    writeln!(w, "{} {}", m.rows(), m.cols())?;
    for v in m.data() {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_from<R: Read>(r: R) -> Result<DenseMatrix> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = header?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if tokens[2] != "array" || tokens[3] != "real" || tokens[4] != "general" {
        return Err(parse_err(
            1,
            &format!(
                "unsupported format '{} {} {}', only 'array real general'",
                tokens[2], tokens[3], tokens[4]
            ),
        ));
    }

    let mut dims: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        match dims {
            None => {
                let parts: Vec<&str> = t.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(parse_err(lineno, "expected 'rows cols'"));
                }
                let rows = parse_usize(parts[0], lineno)?;
                let cols = parse_usize(parts[1], lineno)?;
                data.reserve(rows * cols);
                dims = Some((rows, cols));
            }
            Some((rows, cols)) => {
                if data.len() == rows * cols {
                    return Err(parse_err(lineno, "more entries than declared"));
                }
                let v: f64 = t
                    .parse()
                    .map_err(|_| parse_err(lineno, &format!("bad number '{t}'")))?;
                data.push(v);
            }
        }
    }
    let (rows, cols) = dims.ok_or_else(|| parse_err(2, "missing dimensions line"))?;
    if data.len() != rows * cols {
        return Err(parse_err(
            0,
            &format!("expected {} entries, found {}", rows * cols, data.len()),
        ));
    }
    DenseMatrix::new(rows, cols, data)
}

pub fn save(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_to(m, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    read_from(File::open(path)?)
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(line, &format!("bad dimension '{s}'")))
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

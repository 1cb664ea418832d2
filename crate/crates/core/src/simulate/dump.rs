//! Plain-text dataset dumps.
//!
//! ```text
//! # rfhmm-dataset 1
//! # <free-form header lines, e.g. the experiment config>
//! @seed <master> <stream>
//! @features <d> <p>
//! <d rows of p numbers>
//! @theta0 <d>
//! <d numbers, one per line>
//! @x <n> <p>
//! <n rows of p numbers>
//! @y <n>
//! <n numbers, one per line>
//! ```
//!
//! Numbers are printed with 17 significant digits, so reading a dump back
//! reproduces every value exactly.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::data::Dataset;
use super::Seed;

const MAGIC: &str = "# rfhmm-dataset 1";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetDump {
    pub header: Vec<String>,
    pub seed: Seed,
    pub features: DMatrix<f64>,
    pub theta0: DVector<f64>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

fn push_rows(out: &mut String, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
}

/// Writes `data` to `path`; each `header` line is emitted as a `#` comment.
pub fn write_dataset(path: &Path, data: &Dataset, header: &[String]) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for line in header {
        for l in line.lines() {
            let _ = writeln!(out, "# {l}");
        }
    }
    let _ = writeln!(out, "@seed {} {}", data.seed.master, data.seed.stream);
    let f = &*data.features;
    let _ = writeln!(out, "@features {} {}", f.nrows(), f.ncols());
    push_rows(&mut out, f);
    let _ = writeln!(out, "@theta0 {}", data.theta0.len());
    for v in data.theta0.iter() {
        let _ = writeln!(out, "{v:.16e}");
    }
    let _ = writeln!(out, "@x {} {}", data.x.nrows(), data.x.ncols());
    push_rows(&mut out, &data.x);
    let _ = writeln!(out, "@y {}", data.y.len());
    for v in data.y.iter() {
        let _ = writeln!(out, "{v:.16e}");
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Io(format!("malformed dataset dump: {}", msg.into()))
}

struct Lines<I: Iterator<Item = std::io::Result<String>>> {
    inner: I,
}

impl<I: Iterator<Item = std::io::Result<String>>> Lines<I> {
    fn next_data(&mut self) -> Result<String> {
        loop {
            match self.inner.next() {
                Some(line) => {
                    let line = line?;
                    if !line.starts_with('#') && !line.trim().is_empty() {
                        return Ok(line);
                    }
                }
                None => return Err(bad("unexpected end of file")),
            }
        }
    }

    fn section(&mut self, name: &str, dims: usize) -> Result<Vec<u64>> {
        let line = self.next_data()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(bad(format!("expected {name}, got {line:?}")));
        }
        let vals: Vec<u64> = parts
            .map(|s| s.parse().map_err(|_| bad(format!("bad size in {line:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != dims {
            return Err(bad(format!("{name} needs {dims} sizes, got {line:?}")));
        }
        Ok(vals)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = self.next_data()?;
            let mut n = 0;
            for (j, tok) in line.split_whitespace().enumerate() {
                if j >= cols {
                    return Err(bad(format!("row {i} has more than {cols} entries")));
                }
                m[(i, j)] = tok.parse().map_err(|_| bad(format!("bad number {tok:?}")))?;
                n += 1;
            }
            if n != cols {
                return Err(bad(format!("row {i} has {n} entries, expected {cols}")));
            }
        }
        Ok(m)
    }
}

pub fn read_dataset(path: &Path) -> Result<DatasetDump> {
    let file = std::fs::File::open(path)?;
    let mut raw = BufReader::new(file).lines();
    match raw.next() {
        Some(Ok(first)) if first == MAGIC => {}
        _ => return Err(bad("missing format line")),
    }
    // Header comments run up to the first data line.
    let mut header = Vec::new();
    let mut pending = None;
    for line in raw.by_ref() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            header.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
        } else {
            pending = Some(line);
            break;
        }
    }
    let mut lines = Lines {
        inner: pending.map(Ok).into_iter().chain(raw),
    };
    let s = lines.section("@seed", 2)?;
    let seed = Seed {
        master: s[0],
        stream: s[1],
    };
    let f = lines.section("@features", 2)?;
    let features = lines.matrix(f[0] as usize, f[1] as usize)?;
    let t = lines.section("@theta0", 1)?;
    let theta0 = DVector::from_column_slice(lines.matrix(t[0] as usize, 1)?.as_slice());
    let xs = lines.section("@x", 2)?;
    let x = lines.matrix(xs[0] as usize, xs[1] as usize)?;
    let ys = lines.section("@y", 1)?;
    let y = DVector::from_column_slice(lines.matrix(ys[0] as usize, 1)?.as_slice());
    Ok(DatasetDump {
        header,
        seed,
        features,
        theta0,
        x,
        y,
    })
}

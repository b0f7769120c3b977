//! Row-major draw matrices shared by both inference methods and the
//! diagnostics.

use std::io::{BufRead, Write};

use crate::data::fmt_f64;
use crate::error::{Error, Result};

/// `rows × names.len()` values, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawMatrix {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl DrawMatrix {
    pub fn new(names: Vec<String>) -> Self {
        DrawMatrix {
            names,
            values: Vec::new(),
        }
    }

    pub fn with_capacity(names: Vec<String>, rows: usize) -> Self {
        let cap = rows * names.len();
        DrawMatrix {
            names,
            values: Vec::with_capacity(cap),
        }
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn nrows(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.values.len() / self.names.len()
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.ncols(), "row width must match the column count");
        self.values.extend_from_slice(row);
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.ncols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        let n = self.ncols();
        self.values.iter().skip(c).step_by(n).copied().collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.column_index(name).map(|c| self.column(c))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let mut line = String::new();
        for r in 0..self.nrows() {
            line.clear();
            for (c, v) in self.row(r).iter().enumerate() {
                if c > 0 {
                    line.push(',');
                }
                line.push_str(&fmt_f64(*v));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Size in bytes of [`Self::write_csv`] output, without materializing it.
    pub fn csv_bytes(&self) -> u64 {
        let mut counter = ByteCounter(0);
        self.write_csv(&mut counter).expect("counting writer cannot fail");
        counter.0
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let parse_err = |row: usize, msg: String| Error::Parse {
            row,
            column: String::new(),
            msg,
        };
        let header = match lines.next() {
            Some(h) => h.map_err(|e| parse_err(0, e.to_string()))?,
            None => return Err(parse_err(0, "empty draw file".into())),
        };
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut out = DrawMatrix::new(names);
        for (idx, line) in lines.enumerate() {
            let line = line.map_err(|e| parse_err(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let start = out.values.len();
            for (c, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: idx + 1,
                    column: out.names.get(c).cloned().unwrap_or_default(),
                    msg: format!("not a number: {cell:?}"),
                })?;
                out.values.push(v);
            }
            if out.values.len() - start != out.ncols() {
                return Err(parse_err(idx + 1, "row width does not match header".into()));
            }
        }
        Ok(out)
    }

    /// The given columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> DrawMatrix {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let mut out = DrawMatrix::with_capacity(names, self.nrows());
        for r in 0..self.nrows() {
            let row = self.row(r);
            out.values.extend(cols.iter().map(|&c| row[c]));
        }
        out
    }

    /// Stacks matrices with identical columns.
    pub fn concat(parts: &[&DrawMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("no draw matrices to concatenate".into()))?;
        let mut out = DrawMatrix::new(first.names.clone());
        for p in parts {
            if p.names != first.names {
                return Err(Error::Shape("draw matrices have different columns".into()));
            }
            out.values.extend_from_slice(&p.values);
        }
        Ok(out)
    }
}

struct ByteCounter(u64);

impl Write for ByteCounter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

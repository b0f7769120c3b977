//! Cohort CSV I/O and biomarker standardization.
//!
//! Header: `x1..xM,r1..rJ,y1..yJ,w1..wK,p1..pL`. Indicator cells are `0` or
//! `1`; a missing biomarker value is an empty cell and requires `r = 0`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelShape, ParamSet, PatientRecord};

/// Formats a float with 17 significant digits so it parses back bit-exactly.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 && v.is_sign_positive() {
        return "0".into();
    }
    format!("{v:.16e}")
}

fn header_for(shape: &ModelShape) -> Vec<String> {
    let mut h = Vec::new();
    h.extend((1..=shape.m).map(|i| format!("x{i}")));
    h.extend((1..=shape.j).map(|i| format!("r{i}")));
    h.extend((1..=shape.j).map(|i| format!("y{i}")));
    h.extend((1..=shape.k).map(|i| format!("w{i}")));
    h.extend((1..=shape.l).map(|i| format!("p{i}")));
    h
}

fn shape_from_header(header: &csv::StringRecord) -> Result<ModelShape> {
    let mut counts = [0usize; 5];
    let prefixes = ['x', 'r', 'y', 'w', 'p'];
    let mut stage = 0;
    for (col, name) in header.iter().enumerate() {
        let name = name.trim();
        let bad = |msg: &str| Error::Parse {
            row: 0,
            column: name.to_string(),
            msg: msg.to_string(),
        };
        let mut chars = name.chars();
        let prefix = chars.next().ok_or_else(|| bad("empty column name"))?;
        let idx: usize = chars
            .as_str()
            .parse()
            .map_err(|_| bad("column name must be a prefix letter followed by an index"))?;
        let pos = prefixes
            .iter()
            .position(|&p| p == prefix)
            .ok_or_else(|| bad("unknown column prefix (expected x, r, y, w or p)"))?;
        if pos < stage {
            return Err(bad("columns must be ordered x, r, y, w, p"));
        }
        stage = pos;
        counts[pos] += 1;
        if idx != counts[pos] {
            return Err(Error::Parse {
                row: 0,
                column: name.to_string(),
                msg: format!("expected {}{} at position {}", prefix, counts[pos], col + 1),
            });
        }
    }
    if counts[1] != counts[2] {
        return Err(Error::Parse {
            row: 0,
            column: "r/y".into(),
            msg: format!(
                "{} availability columns but {} biomarker value columns",
                counts[1], counts[2]
            ),
        });
    }
    ModelShape::new(counts[0], counts[1], counts[3], counts[4])
}

fn parse_bit(cell: &str, row: usize, column: &str) -> Result<bool> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            row,
            column: column.into(),
            msg: format!("indicator must be 0 or 1, got {other:?}"),
        }),
    }
}

fn parse_real(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.into(),
        msg: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.into(),
            msg: "value must be finite".into(),
        });
    }
    Ok(v)
}

/// Parses a cohort from any reader. Rows are numbered from 1 (the first data
/// row) in error messages.
pub fn read_dataset_from<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let csv_err = |e: csv::Error, row: usize| Error::Parse {
        row,
        column: String::new(),
        msg: e.to_string(),
    };
    let header = rdr.headers().map_err(|e| csv_err(e, 0))?.clone();
    let shape = shape_from_header(&header)?;
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let (m, j, k) = (shape.m, shape.j, shape.k);
    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| csv_err(e, row_no))?;
        let cell = |c: usize| row.get(c).unwrap_or("");
        let x = (0..m)
            .map(|c| parse_real(cell(c), row_no, &names[c]))
            .collect::<Result<Vec<_>>>()?;
        let r = (0..j)
            .map(|c| parse_bit(cell(m + c), row_no, &names[m + c]))
            .collect::<Result<Vec<_>>>()?;
        let mut y = Vec::with_capacity(j);
        for c in 0..j {
            let col = m + j + c;
            let raw = cell(col);
            if raw.trim().is_empty() {
                if r[c] {
                    return Err(Error::Parse {
                        row: row_no,
                        column: names[col].clone(),
                        msg: "missing biomarker value where availability is 1".into(),
                    });
                }
                y.push(f64::NAN);
            } else {
                y.push(parse_real(raw, row_no, &names[col])?);
            }
        }
        let w = (0..k)
            .map(|c| parse_bit(cell(m + 2 * j + c), row_no, &names[m + 2 * j + c]))
            .collect::<Result<Vec<_>>>()?;
        let p = (0..shape.l)
            .map(|c| parse_bit(cell(m + 2 * j + k + c), row_no, &names[m + 2 * j + k + c]))
            .collect::<Result<Vec<_>>>()?;
        records.push(PatientRecord { x, r, y, w, p });
    }
    Dataset::new(shape, records)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(std::io::BufReader::new(file))
}

pub fn write_dataset_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Csv {
        path: "<dataset>".into(),
        source: e,
    };
    wtr.write_record(header_for(&data.shape)).map_err(io_err)?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for rec in &data.records {
        let mut row: Vec<String> = Vec::with_capacity(data.shape.m + 2 * data.shape.j + data.shape.k + data.shape.l);
        row.extend(rec.x.iter().map(|&v| fmt_f64(v)));
        row.extend(rec.r.iter().map(|&b| bit(b)));
        row.extend(rec.y.iter().map(|&v| if v.is_finite() { fmt_f64(v) } else { String::new() }));
        row.extend(rec.w.iter().map(|&b| bit(b)));
        row.extend(rec.p.iter().map(|&b| bit(b)));
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(data, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.into(),
            source,
        },
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Per-biomarker location and scale used to z-score values at ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn identity(j: usize) -> Self {
        Standardization {
            means: vec![0.0; j],
            sds: vec![1.0; j],
        }
    }

    /// Mean and sample SD of the available values of each biomarker. A
    /// biomarker with fewer than two values or zero spread keeps scale 1.
    pub fn fit(data: &Dataset) -> Self {
        let j = data.shape.j;
        let mut means = vec![0.0; j];
        let mut sds = vec![1.0; j];
        for c in 0..j {
            let vals: Vec<f64> = data
                .records
                .iter()
                .filter(|r| r.r[c])
                .map(|r| r.y[c])
                .collect();
            if vals.is_empty() {
                continue;
            }
            means[c] = crate::math::mean(&vals);
            let sd = crate::math::variance(&vals).sqrt();
            if vals.len() >= 2 && sd > 0.0 && sd.is_finite() {
                sds[c] = sd;
            }
        }
        Standardization { means, sds }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for rec in &mut out.records {
            for c in 0..rec.y.len() {
                if rec.y[c].is_finite() {
                    rec.y[c] = (rec.y[c] - self.means[c]) / self.sds[c];
                }
            }
        }
        out
    }

    /// Expresses raw-scale biomarker parameters on the standardized scale.
    pub fn standardize_params(&self, params: &ParamSet) -> ParamSet {
        let mut out = params.clone();
        for (j, beta) in out.beta_y.iter_mut().enumerate() {
            beta[0] -= self.means[j];
            for b in beta.iter_mut() {
                *b /= self.sds[j];
            }
            out.tau2[j] /= self.sds[j] * self.sds[j];
        }
        out
    }

    /// Inverse of [`Self::standardize_params`].
    pub fn unstandardize_params(&self, params: &ParamSet) -> ParamSet {
        let mut out = params.clone();
        for (j, beta) in out.beta_y.iter_mut().enumerate() {
            for b in beta.iter_mut() {
                *b *= self.sds[j];
            }
            beta[0] += self.means[j];
            out.tau2[j] *= self.sds[j] * self.sds[j];
        }
        out
    }
}

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{feature_columns, label_columns, ParticleSample, FEATURE_DIM, LABEL_DIM};
use crate::error::{Error, Result};

fn header() -> impl Iterator<Item = &'static str> {
    feature_columns()
        .iter()
        .chain(label_columns())
        .map(String::as_str)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<ParticleSample>> {
    read_csv(File::open(path)?)
}

/// Parses the particle CSV schema; data rows are numbered from 1 in diagnostics.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<ParticleSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let csv_err = |row: usize, e: csv::Error| Error::Csv {
        row,
        column: String::new(),
        message: e.to_string(),
    };
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(0, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, expected) in header().enumerate() {
        match found.get(i) {
            Some(name) if name == expected => {}
            Some(name) => {
                let message = if found.iter().any(|f| f == expected) {
                    format!(
                        "expected `{expected}` at position {}, found `{name}`",
                        i + 1
                    )
                } else {
                    format!(
                        "missing column `{expected}` (found `{name}` at position {})",
                        i + 1
                    )
                };
                return Err(Error::Csv {
                    row: 0,
                    column: expected.to_string(),
                    message,
                });
            }
            None => {
                return Err(Error::Csv {
                    row: 0,
                    column: expected.to_string(),
                    message: "missing column".into(),
                })
            }
        }
    }
    if found.len() != FEATURE_DIM + LABEL_DIM {
        return Err(Error::Csv {
            row: 0,
            column: found[FEATURE_DIM + LABEL_DIM].clone(),
            message: format!(
                "unexpected extra column (expected {} columns)",
                FEATURE_DIM + LABEL_DIM
            ),
        });
    }

    let names: Vec<&str> = header().collect();
    let mut samples = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| csv_err(row, e))?;
        if record.len() != names.len() {
            return Err(Error::Csv {
                row,
                column: String::new(),
                message: format!("expected {} cells, found {}", names.len(), record.len()),
            });
        }
        let mut values = Vec::with_capacity(names.len());
        for (cell, name) in record.iter().zip(&names) {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                row,
                column: name.to_string(),
                message: format!("`{cell}` is not a decimal number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    row,
                    column: name.to_string(),
                    message: format!("`{cell}` is not finite"),
                });
            }
            values.push(v);
        }
        let sample = ParticleSample::from_columns(&values[..FEATURE_DIM], &values[FEATURE_DIM..])?;
        sample.regime().map_err(|e| Error::Csv {
            row,
            column: "Re/phi".into(),
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn write_csv(path: impl AsRef<Path>, samples: &[ParticleSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(&mut w, samples)?;
    w.flush()?;
    Ok(())
}

/// Writes shortest round-trip decimal text, so reading back is value-exact.
pub fn write_csv_to<W: Write>(w: &mut W, samples: &[ParticleSample]) -> Result<()> {
    let head: Vec<&str> = header().collect();
    writeln!(w, "{}", head.join(","))?;
    let mut line = String::new();
    for s in samples {
        line.clear();
        for (i, v) in s.features().iter().chain(s.labels().iter()).enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:?}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

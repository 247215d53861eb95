//! CSV ingestion: comma separated, optional header, last column is the target.

use std::fs::File;
use std::path::Path;

use nng_core::bench::Dataset;

use crate::error::{CliError, Result};

/// Read a numeric CSV file. A first row that does not parse as numbers is
/// taken as a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| CliError::MissingDataset { path: path.to_path_buf(), source: e })?;
    parse_csv(file, &path.display().to_string())
}

/// Parse CSV text from any reader; `name` labels error messages.
pub fn parse_csv<R: std::io::Read>(reader: R, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(reader);
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut width = None;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record =
            record.map_err(|e| CliError::Parse { source_name: name.to_string(), line, reason: e.to_string() })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(CliError::Parse {
                    source_name: name.to_string(),
                    line,
                    reason: format!("non-numeric field ({e})"),
                })
            }
        };
        if row.len() < 2 {
            return Err(CliError::Parse {
                source_name: name.to_string(),
                line,
                reason: "need at least one feature and a target".into(),
            });
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(CliError::Parse {
                    source_name: name.to_string(),
                    line,
                    reason: format!("expected {w} fields, found {}", row.len()),
                });
            }
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Parse {
                source_name: name.to_string(),
                line,
                reason: format!("non-finite value {v}"),
            });
        }
        width = Some(row.len());
        let (x, y) = row.split_at(row.len() - 1);
        features.push(x.to_vec());
        targets.push(y[0]);
    }
    if targets.is_empty() {
        return Err(CliError::EmptyDataset(name.to_string()));
    }
    Ok(Dataset::new(features, targets)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let d = parse_csv("1,2\n3,4".as_bytes(), "t").unwrap();
        assert_eq!(d.features, vec![vec![1.0], vec![3.0]]);
        assert_eq!(d.targets, vec![2.0, 4.0]);
    }

    #[test]
    fn header_is_skipped() {
        let d = parse_csv("x,y\n1,2\n".as_bytes(), "t").unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_csv("1,2\n3,oops\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = parse_csv("1,2,3\n3,4\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse_csv("".as_bytes(), "t"), Err(CliError::EmptyDataset(_))));
        assert!(matches!(parse_csv("a,b\n".as_bytes(), "t"), Err(CliError::EmptyDataset(_))));
    }
}

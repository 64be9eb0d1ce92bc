use std::fs;
use std::path::{Path, PathBuf};

use ddro::data::{Dataset, SupportBox};
use ddro::sets::UncertaintySet;
use serde::Serialize;

use crate::error::CliError;
use crate::Output;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_dataset(path: &Path, support_box: Option<&str>) -> Result<Dataset, CliError> {
    let file = fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ds = Dataset::from_csv_reader(file)?;
    Ok(match support_box {
        Some(s) => ds.with_support_box(SupportBox::parse(s)?)?,
        None => ds,
    })
}

/// One column of a CSV with a header row.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let ds = read_dataset(path, None)?;
    if ds.d() != 1 {
        return Err(CliError::usage(
            path.display().to_string(),
            format!("expected a single column, found {}", ds.d()),
        ));
    }
    Ok(ds.column(0))
}

pub fn read_set(path: &Path) -> Result<UncertaintySet, CliError> {
    Ok(UncertaintySet::from_json(&read_text(path)?)?)
}

pub fn parse_list(field: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(field, format!("'{x}' is not a number")))
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}

impl Output {
    pub fn json<T: Serialize>(&self, value: &T) -> Result<(), CliError> {
        self.raw(&to_json(value))
    }

    pub fn raw(&self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(p) => write_file(p, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn tsv_path(&self) -> Option<PathBuf> {
        self.tsv.clone().or_else(|| self.out.as_ref().map(|p| p.with_extension("tsv")))
    }

    /// Writes the TSV when a destination is known; returns whether it did.
    pub fn table(&self, header: &[&str], rows: &[Vec<String>]) -> Result<bool, CliError> {
        let Some(path) = self.tsv_path() else { return Ok(false) };
        let mut text = header.join("\t");
        text.push('\n');
        for r in rows {
            text.push_str(&r.join("\t"));
            text.push('\n');
        }
        write_file(&path, &text)?;
        Ok(true)
    }
}

/// Shortest decimal that round-trips, for TSV cells.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NA".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_parse_and_reject_junk() {
        assert_eq!(parse_list("v", "1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        let err = parse_list("v", "1,x").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("'x'"));
    }

    #[test]
    fn tsv_cells_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-17, 1e300] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(opt(None), "NA");
        assert_eq!(opt(Some(2.0)), "2");
    }

    #[test]
    fn column_reader_wants_one_column() {
        let dir = tempfile::TempDir::new().unwrap();
        let one = dir.path().join("one.csv");
        fs::write(&one, "x\n1\n2.5\n").unwrap();
        assert_eq!(read_column(&one).unwrap(), vec![1.0, 2.5]);
        let two = dir.path().join("two.csv");
        fs::write(&two, "x,y\n1,2\n").unwrap();
        assert_eq!(read_column(&two).unwrap_err().exit_code(), 2);
        assert_eq!(read_column(&dir.path().join("none.csv")).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn table_goes_next_to_the_json() {
        let dir = tempfile::TempDir::new().unwrap();
        let out = Output {
            out: Some(dir.path().join("r.json")),
            tsv: None,
        };
        assert!(out.table(&["a", "b"], &[vec!["1".into(), "NA".into()]]).unwrap());
        assert_eq!(fs::read_to_string(dir.path().join("r.tsv")).unwrap(), "a\tb\n1\tNA\n");
        let stdout_only = Output { out: None, tsv: None };
        assert!(!stdout_only.table(&["a"], &[]).unwrap());
    }
}

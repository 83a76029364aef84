//! Tab-separated series files.
//!
//! One header row, then one row per grid time. Values carry 17 significant
//! digits, enough to reproduce every f64 bit for bit when parsed back; NaN is
//! written literally. An empty grid produces a header-only file.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Column names; the first is always `time`.
    pub header: Vec<String>,
    /// Row-major values, each row as long as the header.
    pub rows: Vec<Vec<f64>>,
}

/// 17 significant digits: the shortest count that identifies any f64.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_value(s: &str, line: usize) -> Result<f64, TableError> {
    if s == "NaN" {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| TableError::Malformed {
        line,
        msg: format!("not a number: {s:?}"),
    })
}

impl Table {
    pub fn new(header: Vec<String>) -> Table {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Number of modes implied by the `n_<j>` columns.
    pub fn n_modes(&self) -> usize {
        self.header
            .iter()
            .filter(|h| {
                h.strip_prefix("n_")
                    .map_or(false, |s| s.parse::<usize>().is_ok())
            })
            .count()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join("\t"));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for &x in row {
                if !first {
                    out.push('\t');
                }
                first = false;
                out.push_str(&format_value(x));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), TableError> {
        let wrap = |source| TableError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(wrap)?;
        f.write_all(self.render().as_bytes()).map_err(wrap)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Table, TableError> {
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or(TableError::Malformed {
            line: 1,
            msg: "empty file".into(),
        })?;
        let header: Vec<String> = head.split('\t').map(str::to_string).collect();
        if header.is_empty() || header[0] != "time" {
            return Err(TableError::Malformed {
                line: 1,
                msg: "first column must be `time`".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|s| parse_value(s, i + 1))
                .collect::<Result<_, _>>()?;
            if row.len() != header.len() {
                return Err(TableError::Malformed {
                    line: i + 1,
                    msg: format!("{} fields, header has {}", row.len(), header.len()),
                });
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn load(path: &Path) -> Result<Table, TableError> {
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Table::parse(&text)
    }
}

/// Header for a series over `n_modes` modes: occupations, pair correlations,
/// and optionally their standard errors. Mode labels are 1-based.
pub fn series_header(n_modes: usize, with_se: bool) -> Vec<String> {
    let mut h = Vec::with_capacity(1 + n_modes * if with_se { 4 } else { 2 });
    h.push("time".to_string());
    for j in 1..=n_modes {
        h.push(format!("n_{j}"));
    }
    for j in 1..=n_modes {
        h.push(format!("g2_{j}"));
    }
    if with_se {
        for j in 1..=n_modes {
            h.push(format!("se_n_{j}"));
        }
        for j in 1..=n_modes {
            h.push(format!("se_g2_{j}"));
        }
    }
    h
}

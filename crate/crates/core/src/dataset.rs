//! Experimental v–i datasets.
//!
//! CSV with header `r_ext_ohm,v_volt,i_amp[,split]`. When the `split` column
//! is absent (or a cell in it is empty) the record is assigned by position:
//! 1-based index 1, every even index, and the last two records train, the
//! rest test. For a 32-point sweep that is the 18/14 split `1,2:2:30,31,32`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("split must be `train` or `test`, found `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One steady-state measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    /// External load, Ω.
    pub r_ext: f64,
    /// Measured voltage, V.
    pub v_exp: f64,
    /// Measured current, A.
    pub i_exp: f64,
    pub split: Split,
}

/// Default split for 1-based position `k` in a dataset of `len` records.
pub fn default_split(k: usize, len: usize) -> Split {
    if k == 1 || k.is_multiple_of(2) || k + 1 >= len {
        Split::Train
    } else {
        Split::Test
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentalDataset {
    records: Vec<Record>,
}

#[derive(Debug, Deserialize)]
struct Row {
    r_ext_ohm: String,
    v_volt: String,
    i_amp: String,
    #[serde(default)]
    split: Option<String>,
}

impl ExperimentalDataset {
    /// Validates ordering and sign constraints.
    pub fn new(records: Vec<Record>) -> Result<Self> {
        for (idx, r) in records.iter().enumerate() {
            let row = idx + 1;
            if !(r.r_ext.is_finite() && r.r_ext > 0.0) {
                return Err(Error::validation(
                    format!("row {row} r_ext_ohm"),
                    format!("{} must be strictly positive", r.r_ext),
                ));
            }
            if !(r.v_exp.is_finite() && r.v_exp >= 0.0) {
                return Err(Error::validation(
                    format!("row {row} v_volt"),
                    format!("{} must be non-negative", r.v_exp),
                ));
            }
            if !(r.i_exp.is_finite() && r.i_exp >= 0.0) {
                return Err(Error::validation(
                    format!("row {row} i_amp"),
                    format!("{} must be non-negative", r.i_exp),
                ));
            }
        }
        if records.len() >= 2 {
            let ascending = records[1].r_ext > records[0].r_ext;
            for (idx, pair) in records.windows(2).enumerate() {
                let ok = if ascending {
                    pair[1].r_ext > pair[0].r_ext
                } else {
                    pair[1].r_ext < pair[0].r_ext
                };
                if !ok {
                    return Err(Error::validation(
                        format!("row {} r_ext_ohm", idx + 2),
                        "loads must be strictly monotone",
                    ));
                }
            }
        }
        Ok(Self { records })
    }

    /// Builds a dataset with the positional default split.
    pub fn with_default_split(points: &[(f64, f64, f64)]) -> Result<Self> {
        let len = points.len();
        let records = points
            .iter()
            .enumerate()
            .map(|(idx, &(r_ext, v_exp, i_exp))| Record {
                r_ext,
                v_exp,
                i_exp,
                split: default_split(idx + 1, len),
            })
            .collect();
        Self::new(records)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected = ["r_ext_ohm", "v_volt", "i_amp"];
        let got: Vec<&str> = headers.iter().collect();
        let header_ok = got.len() >= 3
            && got.len() <= 4
            && got[..3] == expected
            && (got.len() == 3 || got[3] == "split");
        if !header_ok {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header must be `r_ext_ohm,v_volt,i_amp[,split]`, found `{}`",
                    got.join(",")
                ),
            });
        }

        let mut rows = Vec::new();
        for (idx, row) in reader.deserialize::<Row>().enumerate() {
            let row_no = idx + 1;
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(row_no + 1, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let num = |name: &str, s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: row_no + 1,
                    message: format!("row {row_no} {name}: `{s}` is not a number"),
                })
            };
            let split = match row.split.as_deref().map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(s.parse::<Split>().map_err(|message| Error::Parse {
                    line: row_no + 1,
                    message: format!("row {row_no}: {message}"),
                })?),
            };
            rows.push((
                num("r_ext_ohm", &row.r_ext_ohm)?,
                num("v_volt", &row.v_volt)?,
                num("i_amp", &row.i_amp)?,
                split,
            ));
        }

        let len = rows.len();
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(idx, (r_ext, v_exp, i_exp, split))| Record {
                r_ext,
                v_exp,
                i_exp,
                split: split.unwrap_or_else(|| default_split(idx + 1, len)),
            })
            .collect();
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one split, in file order, with their 0-based file index.
    pub fn subset(&self, split: Split) -> impl Iterator<Item = (usize, &Record)> {
        self.records
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_ext_ohm,v_volt,i_amp,split\n");
        for r in &self.records {
            out.push_str(&format!(
                "{:?},{:?},{:?},{}\n",
                r.r_ext, r.v_exp, r.i_exp, r.split
            ));
        }
        out
    }
}

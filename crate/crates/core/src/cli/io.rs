//! CSV ingestion and emission of the four survey tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{NonResponseRow, ParticipantRow, PostStratRow, RawTables, TractRow, N_TESTS, TEST_NAMES};

use super::CliError;

pub const PARTICIPANTS_FILE: &str = "participants.csv";
pub const TRACTS_FILE: &str = "tracts.csv";
pub const POSTSTRAT_FILE: &str = "poststrat.csv";
pub const NONRESPONSE_FILE: &str = "nonresponse.csv";

/// Tokens read as a missing value (case-insensitive; the empty field too).
pub const NA_TOKENS: [&str; 2] = ["NA", "N/A"];

/// Locations of the four input tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPaths {
    pub participants: PathBuf,
    pub tracts: PathBuf,
    pub poststrat: PathBuf,
    pub nonresponse: PathBuf,
}

impl InputPaths {
    /// Default file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            participants: dir.join(PARTICIPANTS_FILE),
            tracts: dir.join(TRACTS_FILE),
            poststrat: dir.join(POSTSTRAT_FILE),
            nonresponse: dir.join(NONRESPONSE_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.participants, &self.tracts, &self.poststrat, &self.nonresponse]
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn is_na(s: &str) -> bool {
    s.is_empty() || NA_TOKENS.iter().any(|t| t.eq_ignore_ascii_case(s))
}

/// A parsed CSV file with named columns.
struct Sheet {
    file: String,
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Sheet {
    fn parse(path: &Path) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
        let header = rdr
            .headers()
            .map_err(|e| CliError::Csv {
                file: file.clone(),
                message: e.to_string(),
            })?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Csv {
                file: file.clone(),
                message: e.to_string(),
            })?;
        Ok(Sheet { file, header, rows })
    }

    fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })
    }

    fn bad(&self, row: usize, column: &str, message: String) -> CliError {
        CliError::Cell {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            message,
        }
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    fn required(&self, row: usize, col: usize) -> Result<String, CliError> {
        let v = self.text(row, col);
        if is_na(v) {
            return Err(self.bad(row + 1, &self.header[col], "value is missing".into()));
        }
        Ok(v.to_string())
    }

    fn optional(&self, row: usize, col: usize) -> Option<String> {
        let v = self.text(row, col);
        (!is_na(v)).then(|| v.to_string())
    }

    fn number(&self, row: usize, col: usize) -> Result<f64, CliError> {
        let v = self.required(row, col)?;
        v.parse::<f64>()
            .map_err(|_| self.bad(row + 1, &self.header[col], format!("'{v}' is not a number")))
    }

    fn test_result(&self, row: usize, col: usize) -> Result<Option<bool>, CliError> {
        match self.text(row, col) {
            "1" => Ok(Some(true)),
            "0" => Ok(Some(false)),
            v if is_na(v) => Ok(None),
            v => Err(self.bad(row + 1, &self.header[col], format!("'{v}' is not 0, 1 or NA"))),
        }
    }
}

pub fn read_participants(path: &Path) -> Result<Vec<ParticipantRow>, CliError> {
    let s = Sheet::parse(path)?;
    let [id, region, age, sex, tract] = ["id", "region", "age_group", "sex", "tract"].map(|c| s.column(c));
    let (id, region, age, sex, tract) = (id?, region?, age?, sex?, tract?);
    let tests = TEST_NAMES.map(|c| s.column(c));
    let mut test_cols = [0; N_TESTS];
    for (slot, t) in test_cols.iter_mut().zip(tests) {
        *slot = t?;
    }
    (0..s.rows.len())
        .map(|i| {
            let mut results = [None; N_TESTS];
            for (r, &c) in results.iter_mut().zip(&test_cols) {
                *r = s.test_result(i, c)?;
            }
            Ok(ParticipantRow {
                row: i + 1,
                id: s.required(i, id)?,
                region: s.required(i, region)?,
                age_group: s.optional(i, age),
                sex: s.optional(i, sex),
                tract: s.required(i, tract)?,
                tests: results,
            })
        })
        .collect()
}

pub fn read_tracts(path: &Path) -> Result<Vec<TractRow>, CliError> {
    let s = Sheet::parse(path)?;
    let (tract, region, pop) = (s.column("tract")?, s.column("region")?, s.column("total_population")?);
    (0..s.rows.len())
        .map(|i| {
            Ok(TractRow {
                row: i + 1,
                tract: s.required(i, tract)?,
                region: s.required(i, region)?,
                total_population: s.number(i, pop)?,
            })
        })
        .collect()
}

pub fn read_poststrat(path: &Path) -> Result<Vec<PostStratRow>, CliError> {
    let s = Sheet::parse(path)?;
    let cols = ["region", "tract", "age_group", "sex", "adult_population"].map(|c| s.column(c));
    let [region, tract, age, sex, pop] = cols;
    let (region, tract, age, sex, pop) = (region?, tract?, age?, sex?, pop?);
    (0..s.rows.len())
        .map(|i| {
            Ok(PostStratRow {
                row: i + 1,
                region: s.required(i, region)?,
                tract: s.required(i, tract)?,
                age_group: s.required(i, age)?,
                sex: s.required(i, sex)?,
                adult_population: s.number(i, pop)?,
            })
        })
        .collect()
}

pub fn read_nonresponse(path: &Path) -> Result<Vec<NonResponseRow>, CliError> {
    let s = Sheet::parse(path)?;
    let (region, rate) = (s.column("region")?, s.column("rate")?);
    (0..s.rows.len())
        .map(|i| {
            Ok(NonResponseRow {
                row: i + 1,
                region: s.required(i, region)?,
                rate: s.number(i, rate)?,
            })
        })
        .collect()
}

pub fn read_tables(paths: &InputPaths) -> Result<RawTables, CliError> {
    Ok(RawTables {
        participants: read_participants(&paths.participants)?,
        tracts: read_tracts(&paths.tracts)?,
        poststrat: read_poststrat(&paths.poststrat)?,
        nonresponse: read_nonresponse(&paths.nonresponse)?,
    })
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

fn na_or(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "NA".into())
}

fn result_token(r: Option<bool>) -> String {
    match r {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => "NA".into(),
    }
}

pub fn participants_csv(rows: &[ParticipantRow]) -> Vec<u8> {
    let header = ["id", "region", "age_group", "sex", "tract", TEST_NAMES[0], TEST_NAMES[1], TEST_NAMES[2]];
    to_csv(
        header,
        rows.iter().map(|p| {
            [
                p.id.clone(),
                p.region.clone(),
                na_or(&p.age_group),
                na_or(&p.sex),
                p.tract.clone(),
                result_token(p.tests[0]),
                result_token(p.tests[1]),
                result_token(p.tests[2]),
            ]
        }),
    )
}

pub fn tracts_csv(rows: &[TractRow]) -> Vec<u8> {
    to_csv(
        ["tract", "region", "total_population"],
        rows.iter().map(|t| [t.tract.clone(), t.region.clone(), t.total_population.to_string()]),
    )
}

pub fn poststrat_csv(rows: &[PostStratRow]) -> Vec<u8> {
    to_csv(
        ["region", "tract", "age_group", "sex", "adult_population"],
        rows.iter().map(|c| {
            [
                c.region.clone(),
                c.tract.clone(),
                c.age_group.clone(),
                c.sex.clone(),
                c.adult_population.to_string(),
            ]
        }),
    )
}

pub fn nonresponse_csv(rows: &[NonResponseRow]) -> Vec<u8> {
    to_csv(
        ["region", "rate"],
        rows.iter().map(|r| [r.region.clone(), r.rate.to_string()]),
    )
}

/// Writes the four tables under their default names in `dir`.
pub fn write_tables(dir: &Path, raw: &RawTables) -> Result<InputPaths, CliError> {
    let paths = InputPaths::in_dir(dir);
    write_file(&paths.participants, &participants_csv(&raw.participants))?;
    write_file(&paths.tracts, &tracts_csv(&raw.tracts))?;
    write_file(&paths.poststrat, &poststrat_csv(&raw.poststrat))?;
    write_file(&paths.nonresponse, &nonresponse_csv(&raw.nonresponse))?;
    Ok(paths)
}

//! The plate-appearance analysis table shared by the ingest pipeline, the
//! simulator and every estimator.
//!
//! CSV layout: the fixed key/treatment/outcome/instrument columns listed in
//! [`FIXED_COLUMNS`], followed by one column per covariate. Any column not in
//! the fixed set is read back as a covariate.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "ettkit.analysis.v1";

pub const FIXED_COLUMNS: [&str; 12] = [
    "game_id",
    "at_bat_number",
    "game_year",
    "batter_id",
    "pitcher_id",
    "fielding_team",
    "stand",
    "p_throws",
    "treated",
    "delta_re",
    "team_shift_rate",
    "team_shift_rate_se",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Hand {
    pub fn as_char(self) -> char {
        match self {
            Hand::Left => 'L',
            Hand::Right => 'R',
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Hand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" | "l" => Ok(Hand::Left),
            "R" | "r" => Ok(Hand::Right),
            other => Err(Error::Schema(format!("handedness must be L or R, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PaKey {
    pub game_year: i32,
    pub game_id: u64,
    pub at_bat_number: u32,
    pub batter_id: u64,
    pub pitcher_id: u64,
    pub fielding_team: String,
}

/// Fielding team's season-to-date shift rate and its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateAppearance {
    pub key: PaKey,
    pub stand: Hand,
    pub p_throws: Hand,
    pub treated: bool,
    /// ΔRE summed over the plate appearance, in runs.
    pub outcome: f64,
    pub instrument: Instrument,
    /// Values aligned with [`AnalysisDataset::covariate_names`].
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisDataset {
    pub covariate_names: Vec<String>,
    pub rows: Vec<PlateAppearance>,
}

impl AnalysisDataset {
    pub fn new(covariate_names: Vec<String>, rows: Vec<PlateAppearance>) -> Result<Self> {
        let ds = Self { covariate_names, rows };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for name in &self.covariate_names {
            if FIXED_COLUMNS.contains(&name.as_str()) {
                return Err(Error::Schema(format!("covariate `{name}` shadows a fixed column")));
            }
            if !seen.insert(name) {
                return Err(Error::Schema(format!("duplicate covariate `{name}`")));
            }
        }
        let p = self.covariate_names.len();
        for (i, r) in self.rows.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::Schema(format!("row {i} has {} covariates, expected {p}", r.covariates.len())));
            }
            if !r.outcome.is_finite() || r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("row {i} has a missing or non-finite value")));
            }
            if !(0.0..=1.0).contains(&r.instrument.rate) {
                return Err(Error::Schema(format!("row {i} shift rate {} outside [0, 1]", r.instrument.rate)));
            }
        }
        Ok(())
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|n| n == name)
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.rows.iter().map(|r| r.key.game_year).collect();
        set.into_iter().collect()
    }

    pub fn subset(&self, rows: &[usize]) -> AnalysisDataset {
        AnalysisDataset {
            covariate_names: self.covariate_names.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&PlateAppearance) -> bool) -> AnalysisDataset {
        AnalysisDataset {
            covariate_names: self.covariate_names.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome).collect()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.treated).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.treated).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        let mut header: Vec<&str> = FIXED_COLUMNS.to_vec();
        header.extend(self.covariate_names.iter().map(String::as_str));
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for r in &self.rows {
            rec.clear();
            rec.push(r.key.game_id.to_string());
            rec.push(r.key.at_bat_number.to_string());
            rec.push(r.key.game_year.to_string());
            rec.push(r.key.batter_id.to_string());
            rec.push(r.key.pitcher_id.to_string());
            rec.push(r.key.fielding_team.clone());
            rec.push(r.stand.to_string());
            rec.push(r.p_throws.to_string());
            rec.push(u8::from(r.treated).to_string());
            rec.push(fmt_f64(r.outcome));
            rec.push(fmt_f64(r.instrument.rate));
            rec.push(fmt_f64(r.instrument.std_error));
            rec.extend(r.covariates.iter().map(|v| fmt_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
        };
        let fixed: Vec<usize> = FIXED_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
        let cov_cols: Vec<usize> = (0..headers.len()).filter(|i| !fixed.contains(i)).collect();
        let covariate_names = cov_cols.iter().map(|&i| headers[i].to_owned()).collect();

        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let ctx = |e: Error| e.context(format!("{} row {}", path.display(), line + 1));
            let get = |k: usize| &rec[fixed[k]];
            let row = (|| -> Result<PlateAppearance> {
                Ok(PlateAppearance {
                    key: PaKey {
                        game_id: parse(get(0), FIXED_COLUMNS[0])?,
                        at_bat_number: parse(get(1), FIXED_COLUMNS[1])?,
                        game_year: parse(get(2), FIXED_COLUMNS[2])?,
                        batter_id: parse(get(3), FIXED_COLUMNS[3])?,
                        pitcher_id: parse(get(4), FIXED_COLUMNS[4])?,
                        fielding_team: get(5).to_owned(),
                    },
                    stand: get(6).parse()?,
                    p_throws: get(7).parse()?,
                    treated: match get(8) {
                        "1" => true,
                        "0" => false,
                        other => return Err(Error::Schema(format!("treated must be 0/1, got `{other}`"))),
                    },
                    outcome: parse(get(9), FIXED_COLUMNS[9])?,
                    instrument: Instrument {
                        rate: parse(get(10), FIXED_COLUMNS[10])?,
                        std_error: parse(get(11), FIXED_COLUMNS[11])?,
                    },
                    covariates: cov_cols
                        .iter()
                        .map(|&i| parse(&rec[i], &headers[i]))
                        .collect::<Result<_>>()?,
                })
            })()
            .map_err(ctx)?;
            rows.push(row);
        }
        Self::new(covariate_names, rows)
    }

    /// Columnar little-endian cache: magic, schema version, row count, then
    /// each column as (name, type tag, values).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(BINARY_MAGIC)?;
        write_str(&mut w, SCHEMA_VERSION)?;
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        let ncols = FIXED_COLUMNS.len() + self.covariate_names.len();
        w.write_all(&(ncols as u32).to_le_bytes())?;

        let ints = |f: &dyn Fn(&PlateAppearance) -> i64| self.rows.iter().map(f).collect::<Vec<i64>>();
        let floats = |f: &dyn Fn(&PlateAppearance) -> f64| self.rows.iter().map(f).collect::<Vec<f64>>();
        write_column(&mut w, "game_id", &Column::Int(ints(&|r| r.key.game_id as i64)))?;
        write_column(&mut w, "at_bat_number", &Column::Int(ints(&|r| i64::from(r.key.at_bat_number))))?;
        write_column(&mut w, "game_year", &Column::Int(ints(&|r| i64::from(r.key.game_year))))?;
        write_column(&mut w, "batter_id", &Column::Int(ints(&|r| r.key.batter_id as i64)))?;
        write_column(&mut w, "pitcher_id", &Column::Int(ints(&|r| r.key.pitcher_id as i64)))?;
        write_column(
            &mut w,
            "fielding_team",
            &Column::Str(self.rows.iter().map(|r| r.key.fielding_team.clone()).collect()),
        )?;
        write_column(&mut w, "stand", &Column::Int(ints(&|r| r.stand.as_char() as i64)))?;
        write_column(&mut w, "p_throws", &Column::Int(ints(&|r| r.p_throws.as_char() as i64)))?;
        write_column(&mut w, "treated", &Column::Int(ints(&|r| i64::from(r.treated))))?;
        write_column(&mut w, "delta_re", &Column::Float(floats(&|r| r.outcome)))?;
        write_column(&mut w, "team_shift_rate", &Column::Float(floats(&|r| r.instrument.rate)))?;
        write_column(&mut w, "team_shift_rate_se", &Column::Float(floats(&|r| r.instrument.std_error)))?;
        for (j, name) in self.covariate_names.iter().enumerate() {
            write_column(&mut w, name, &Column::Float(floats(&|r| r.covariates[j])))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Schema("not an analysis cache file".into()));
        }
        let version = read_str(&mut r)?;
        if version != SCHEMA_VERSION {
            return Err(Error::Schema(format!("cache schema `{version}`, expected `{SCHEMA_VERSION}`")));
        }
        let n = read_u64(&mut r)? as usize;
        let ncols = read_u32(&mut r)? as usize;
        let mut cols: Vec<(String, Column)> = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            cols.push(read_column(&mut r, n)?);
        }
        let take = |name: &str| -> Result<&Column> {
            cols.iter()
                .find(|(n, _)| n == name)
                .map(|(_, c)| c)
                .ok_or_else(|| Error::Schema(format!("cache lacks column `{name}`")))
        };
        let int = |name: &str| -> Result<Vec<i64>> {
            match take(name)? {
                Column::Int(v) => Ok(v.clone()),
                _ => Err(Error::Schema(format!("column `{name}` has wrong type"))),
            }
        };
        let float = |name: &str| -> Result<Vec<f64>> {
            match take(name)? {
                Column::Float(v) => Ok(v.clone()),
                _ => Err(Error::Schema(format!("column `{name}` has wrong type"))),
            }
        };
        let teams = match take("fielding_team")? {
            Column::Str(v) => v.clone(),
            _ => return Err(Error::Schema("column `fielding_team` has wrong type".into())),
        };
        let hand = |c: i64| if c == 'L' as i64 { Hand::Left } else { Hand::Right };
        let (game, ab, year, bat, pit) = (int("game_id")?, int("at_bat_number")?, int("game_year")?, int("batter_id")?, int("pitcher_id")?);
        let (stand, throws, treated) = (int("stand")?, int("p_throws")?, int("treated")?);
        let (y, z, zse) = (float("delta_re")?, float("team_shift_rate")?, float("team_shift_rate_se")?);
        let covariate_names: Vec<String> =
            cols.iter().map(|(n, _)| n.clone()).filter(|n| !FIXED_COLUMNS.contains(&n.as_str())).collect();
        let cov: Vec<Vec<f64>> = covariate_names.iter().map(|n| float(n)).collect::<Result<_>>()?;
        let rows = (0..n)
            .map(|i| PlateAppearance {
                key: PaKey {
                    game_year: year[i] as i32,
                    game_id: game[i] as u64,
                    at_bat_number: ab[i] as u32,
                    batter_id: bat[i] as u64,
                    pitcher_id: pit[i] as u64,
                    fielding_team: teams[i].clone(),
                },
                stand: hand(stand[i]),
                p_throws: hand(throws[i]),
                treated: treated[i] != 0,
                outcome: y[i],
                instrument: Instrument { rate: z[i], std_error: zse[i] },
                covariates: cov.iter().map(|c| c[i]).collect(),
            })
            .collect();
        Self::new(covariate_names, rows)
    }
}

fn parse<T: FromStr>(s: &str, column: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Schema(format!("cannot parse `{s}` in column `{column}`")))
}

/// Shortest representation that round-trips.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

const BINARY_MAGIC: &[u8; 8] = b"ETTKCOL1";

enum Column {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_column(w: &mut impl Write, name: &str, col: &Column) -> Result<()> {
    write_str(w, name)?;
    match col {
        Column::Int(v) => {
            w.write_all(&[0])?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Column::Float(v) => {
            w.write_all(&[1])?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Column::Str(v) => {
            w.write_all(&[2])?;
            for x in v {
                write_str(w, x)?;
            }
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Schema("invalid UTF-8 in cache".into()))
}

fn read_column(r: &mut impl Read, n: usize) -> Result<(String, Column)> {
    let name = read_str(r)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let mut b = [0u8; 8];
    let col = match tag[0] {
        0 => Column::Int((0..n).map(|_| r.read_exact(&mut b).map(|_| i64::from_le_bytes(b))).collect::<std::io::Result<_>>()?),
        1 => Column::Float((0..n).map(|_| r.read_exact(&mut b).map(|_| f64::from_le_bytes(b))).collect::<std::io::Result<_>>()?),
        2 => Column::Str((0..n).map(|_| read_str(r)).collect::<Result<_>>()?),
        t => return Err(Error::Schema(format!("unknown column type tag {t}"))),
    };
    Ok((name, col))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> AnalysisDataset {
        let row = |i: u64, t: bool, y: f64| PlateAppearance {
            key: PaKey {
                game_year: 2018 + (i % 2) as i32,
                game_id: 100 + i,
                at_bat_number: 1 + i as u32,
                batter_id: 7,
                pitcher_id: 9,
                fielding_team: "NYY".into(),
            },
            stand: if i % 3 == 0 { Hand::Left } else { Hand::Right },
            p_throws: Hand::Right,
            treated: t,
            outcome: y,
            instrument: Instrument { rate: 0.25, std_error: 0.01 },
            covariates: vec![0.1 * i as f64, 1.0 / 3.0],
        };
        AnalysisDataset::new(
            vec!["batter_woba_mean".into(), "pitcher_babip_mean".into()],
            vec![row(0, true, -0.24), row(1, false, 0.1), row(2, false, 1.0 / 7.0)],
        )
        .unwrap()
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let c = dir.path().join("a.csv");
        ds.write_csv(&c).unwrap();
        assert_eq!(AnalysisDataset::read_csv(&c).unwrap(), ds);
        let b = dir.path().join("a.bin");
        ds.write_binary(&b).unwrap();
        assert_eq!(AnalysisDataset::read_binary(&b).unwrap(), ds);
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "game_id,at_bat_number\n1,2\n").unwrap();
        assert!(matches!(AnalysisDataset::read_csv(&p), Err(Error::Schema(_))));
    }

    #[test]
    fn empty_cell_is_rejected() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        ds.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replacen("-0.24", "", 1);
        std::fs::write(&p, text).unwrap();
        assert!(AnalysisDataset::read_csv(&p).is_err());
    }
}

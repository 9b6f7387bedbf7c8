//! Monthly aggregate data model, CSV ingestion and lag-window task encoding.
//!
//! A [`Dataset`] is a gap-free run of [`MonthlyRecord`]s. [`encode_task`]
//! turns it into a supervised regression problem where each row holds the
//! 14 non-year variables of the `m` most recent months and the target is the
//! prevalence of the month that follows.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported lag depth.
pub const MAX_LAG: usize = 6;

/// Canonical CSV header, in column order.
pub const CSV_COLUMNS: [&str; 15] = [
    "year",
    "month",
    "number_screened",
    "median_age_neg",
    "median_age_pos",
    "iqr_age_neg",
    "iqr_age_pos",
    "x_pd",
    "sd_pd",
    "mm_rf",
    "mmP_rf",
    "min_temp",
    "max_temp",
    "x_temp",
    "prev",
];

/// Number of per-month feature variables (every column except `year`).
pub const FEATURES_PER_MONTH: usize = 14;

/// Parasites per microlitre from a thick-film count against white cells.
pub fn parasite_density(mp_count: u64, wbc_count: u64) -> Result<f64> {
    if wbc_count == 0 {
        return Err(Error::DivisionUndefined("white blood cell count is zero"));
    }
    Ok(mp_count as f64 / wbc_count as f64 * 8000.0)
}

/// Proportion of screened individuals who tested positive.
pub fn prevalence(positives: u64, screened: u64) -> Result<f64> {
    if screened == 0 {
        return Err(Error::DivisionUndefined("number screened is zero"));
    }
    if positives > screened {
        return Err(Error::Domain(format!(
            "positives ({positives}) exceed number screened ({screened})"
        )));
    }
    Ok(positives as f64 / screened as f64)
}

/// A calendar month. Ordered lexicographically by (year, month).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    year: i32,
    month: u32,
}

impl MonthKey {
    pub const MIN_YEAR: i32 = 1900;
    pub const MAX_YEAR: i32 = 2200;

    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::param(format!("month {month} outside 1..=12")));
        }
        if !(Self::MIN_YEAR..=Self::MAX_YEAR).contains(&year) {
            return Err(Error::param(format!(
                "year {year} outside {}..={}",
                Self::MIN_YEAR,
                Self::MAX_YEAR
            )));
        }
        Ok(MonthKey { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// Months since January of year 0; used for offset arithmetic.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        MonthKey {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    /// Shift by `delta` months (negative moves backwards).
    pub fn offset(self, delta: i64) -> Self {
        Self::from_ordinal(self.ordinal() + delta)
    }

    pub fn succ(self) -> Self {
        self.offset(1)
    }

    pub fn pred(self) -> Self {
        self.offset(-1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: MonthKey) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::param(format!("month key `{s}` is not YYYY-MM")))?;
        let year = y
            .parse::<i32>()
            .map_err(|_| Error::param(format!("bad year in `{s}`")))?;
        let month = m
            .parse::<u32>()
            .map_err(|_| Error::param(format!("bad month in `{s}`")))?;
        MonthKey::new(year, month)
    }
}

impl Serialize for MonthKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One month of aggregated screening, clinical and weather variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRecord {
    pub key: MonthKey,
    pub number_screened: u32,
    /// Ages are in months.
    pub median_age_neg: f64,
    pub median_age_pos: f64,
    pub iqr_age_neg: f64,
    pub iqr_age_pos: f64,
    /// Mean parasite density, parasites/µl.
    pub x_pd: f64,
    pub sd_pd: f64,
    /// Total rainfall in millimetres.
    pub mm_rf: f64,
    /// Share of the year's total rainfall that fell this month.
    pub mmp_rf: f64,
    pub min_temp: f64,
    pub max_temp: f64,
    pub x_temp: f64,
    pub prev: f64,
}

impl MonthlyRecord {
    /// The 14 feature variables in canonical column order (year excluded).
    pub fn features(&self) -> [f64; FEATURES_PER_MONTH] {
        [
            self.key.month as f64,
            self.number_screened as f64,
            self.median_age_neg,
            self.median_age_pos,
            self.iqr_age_neg,
            self.iqr_age_pos,
            self.x_pd,
            self.sd_pd,
            self.mm_rf,
            self.mmp_rf,
            self.min_temp,
            self.max_temp,
            self.x_temp,
            self.prev,
        ]
    }

    /// Checks every per-record invariant; the message names the offending field.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.number_screened < 1 {
            return Err("number_screened must be at least 1".into());
        }
        let named = [
            ("median_age_neg", self.median_age_neg),
            ("median_age_pos", self.median_age_pos),
            ("iqr_age_neg", self.iqr_age_neg),
            ("iqr_age_pos", self.iqr_age_pos),
            ("x_pd", self.x_pd),
            ("sd_pd", self.sd_pd),
            ("mm_rf", self.mm_rf),
            ("mmP_rf", self.mmp_rf),
            ("min_temp", self.min_temp),
            ("max_temp", self.max_temp),
            ("x_temp", self.x_temp),
            ("prev", self.prev),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
        }
        for (name, v) in &named[..7] {
            if *v < 0.0 {
                return Err(format!("{name} = {v} is negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.prev) {
            return Err(format!("prev = {} outside [0, 1]", self.prev));
        }
        if !(0.0..=1.0).contains(&self.mmp_rf) {
            return Err(format!("mmP_rf = {} outside [0, 1]", self.mmp_rf));
        }
        if self.mm_rf < 0.0 {
            return Err(format!("mm_rf = {} is negative", self.mm_rf));
        }
        if !(self.min_temp <= self.x_temp && self.x_temp <= self.max_temp) {
            return Err(format!(
                "temperatures not ordered: min_temp {} <= x_temp {} <= max_temp {} fails",
                self.min_temp, self.x_temp, self.max_temp
            ));
        }
        Ok(())
    }
}

/// A non-empty, gap-free, strictly increasing run of monthly records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<MonthlyRecord>,
}

impl Dataset {
    /// Sorts by month then validates continuity and per-record invariants.
    pub fn new(mut records: Vec<MonthlyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InsufficientData("dataset has no records".into()));
        }
        // Row indices in errors refer to the order the records were supplied.
        for (row, r) in records.iter().enumerate() {
            r.check().map_err(|message| Error::Validation {
                row: row + 1,
                message,
            })?;
        }
        records.sort_by_key(|r| r.key);
        for w in records.windows(2) {
            let (a, b) = (w[0].key, w[1].key);
            if a == b {
                return Err(Error::Validation {
                    row: 0,
                    message: format!("duplicate month {a}"),
                });
            }
            if b != a.succ() {
                return Err(Error::Continuity {
                    after: a,
                    missing: a.succ(),
                });
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[MonthlyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_key(&self) -> MonthKey {
        self.records[0].key
    }

    pub fn last_key(&self) -> MonthKey {
        self.records[self.records.len() - 1].key
    }

    pub fn get(&self, key: MonthKey) -> Option<&MonthlyRecord> {
        let idx = self.first_key().months_until(key);
        if idx < 0 {
            return None;
        }
        self.records.get(idx as usize)
    }

    /// Joins two datasets where `next` starts the month after `self` ends.
    pub fn concat(&self, next: &Dataset) -> Result<Dataset> {
        if next.first_key() != self.last_key().succ() {
            return Err(Error::Continuity {
                after: self.last_key(),
                missing: self.last_key().succ(),
            });
        }
        let mut records = self.records.clone();
        records.extend_from_slice(&next.records);
        Ok(Dataset { records })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::None)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let positions = column_positions(&header)?;

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let row_no = i + 1;
            let cell = |c: usize| -> &str { row.get(positions[c]).unwrap_or("") };
            let float = |c: usize| -> Result<f64> {
                cell(c).parse::<f64>().map_err(|e| Error::Parse {
                    row: row_no,
                    column: CSV_COLUMNS[c].to_string(),
                    message: format!("`{}`: {e}", cell(c)),
                })
            };
            let int = |c: usize| -> Result<i64> {
                cell(c).parse::<i64>().map_err(|e| Error::Parse {
                    row: row_no,
                    column: CSV_COLUMNS[c].to_string(),
                    message: format!("`{}`: {e}", cell(c)),
                })
            };
            let year = int(0)?;
            let month = int(1)?;
            let key = i32::try_from(year)
                .ok()
                .zip(u32::try_from(month).ok())
                .ok_or_else(|| Error::Validation {
                    row: row_no,
                    message: format!("year/month {year}-{month} out of range"),
                })
                .and_then(|(y, m)| {
                    MonthKey::new(y, m).map_err(|e| Error::Validation {
                        row: row_no,
                        message: e.to_string(),
                    })
                })?;
            let screened = int(2)?;
            let number_screened = u32::try_from(screened).map_err(|_| Error::Validation {
                row: row_no,
                message: format!("number_screened = {screened} out of range"),
            })?;
            records.push(MonthlyRecord {
                key,
                number_screened,
                median_age_neg: float(3)?,
                median_age_pos: float(4)?,
                iqr_age_neg: float(5)?,
                iqr_age_pos: float(6)?,
                x_pd: float(7)?,
                sd_pd: float(8)?,
                mm_rf: float(9)?,
                mmp_rf: float(10)?,
                min_temp: float(11)?,
                max_temp: float(12)?,
                x_temp: float(13)?,
                prev: float(14)?,
            });
        }
        Dataset::new(records)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// Writes the canonical CSV form: fixed column order, shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.key.year.to_string(),
                r.key.month.to_string(),
                r.number_screened.to_string(),
                r.median_age_neg.to_string(),
                r.median_age_pos.to_string(),
                r.iqr_age_neg.to_string(),
                r.iqr_age_pos.to_string(),
                r.x_pd.to_string(),
                r.sd_pd.to_string(),
                r.mm_rf.to_string(),
                r.mmp_rf.to_string(),
                r.min_temp.to_string(),
                r.max_temp.to_string(),
                r.x_temp.to_string(),
                r.prev.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn column_positions(header: &csv::StringRecord) -> Result<[usize; 15]> {
    for (i, name) in header.iter().enumerate() {
        if !CSV_COLUMNS.contains(&name) {
            return Err(Error::Schema {
                column: name.to_string(),
                problem: "is not a recognised column",
            });
        }
        if header.iter().take(i).any(|prev| prev == name) {
            return Err(Error::Schema {
                column: name.to_string(),
                problem: "appears more than once",
            });
        }
    }
    let mut positions = [0usize; 15];
    for (c, want) in CSV_COLUMNS.iter().enumerate() {
        positions[c] = header
            .iter()
            .position(|h| h == *want)
            .ok_or_else(|| Error::Schema {
                column: want.to_string(),
                problem: "is missing",
            })?;
    }
    Ok(positions)
}

/// Splits into months `<= boundary` and months `> boundary`.
pub fn split_train_validation(data: &Dataset, boundary: MonthKey) -> Result<(Dataset, Dataset)> {
    if boundary < data.first_key() || boundary >= data.last_key() {
        return Err(Error::Range(format!(
            "boundary {boundary} must satisfy {} <= boundary < {}",
            data.first_key(),
            data.last_key()
        )));
    }
    let cut = data.first_key().months_until(boundary) as usize + 1;
    let (a, b) = data.records.split_at(cut);
    Ok((
        Dataset {
            records: a.to_vec(),
        },
        Dataset {
            records: b.to_vec(),
        },
    ))
}

/// Feature names for lag depth `m`: lag-0 block first, canonical order within a block.
pub fn feature_names(m: usize) -> Vec<String> {
    (0..m)
        .flat_map(|k| {
            CSV_COLUMNS[1..]
                .iter()
                .map(move |name| format!("{name}_lag{k}"))
        })
        .collect()
}

fn check_lag(m: usize) -> Result<()> {
    if !(1..=MAX_LAG).contains(&m) {
        return Err(Error::param(format!("lag depth {m} outside 1..={MAX_LAG}")));
    }
    Ok(())
}

/// Feature row for the window ending at `records[end]`, or `None` if it would
/// reach before the start of `records`.
pub fn lag_window(records: &[MonthlyRecord], end: usize, m: usize) -> Option<Vec<f64>> {
    if end + 1 < m || end >= records.len() {
        return None;
    }
    let mut row = Vec::with_capacity(m * FEATURES_PER_MONTH);
    for k in 0..m {
        row.extend_from_slice(&records[end - k].features());
    }
    Some(row)
}

/// A supervised next-month regression problem for one lag depth.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTask {
    pub lag_depth: usize,
    pub feature_names: Vec<String>,
    /// One row per instance, `14 * lag_depth` columns.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Most recent month of each row's lag window.
    pub instance_keys: Vec<MonthKey>,
}

impl EncodedTask {
    pub fn n_instances(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }
}

/// Encodes `data` for lag depth `m`.
///
/// One row per month `t` with a full in-dataset window `t-(m-1)..=t` and a
/// known prevalence for `t+1`. The final month's target may come from the
/// first record of `horizon`, which must start the month after `data` ends.
pub fn encode_task(data: &Dataset, m: usize, horizon: Option<&Dataset>) -> Result<EncodedTask> {
    check_lag(m)?;
    if data.len() < m + 1 {
        return Err(Error::InsufficientData(format!(
            "lag depth {m} needs at least {} months, dataset has {}",
            m + 1,
            data.len()
        )));
    }
    let next_prev = match horizon {
        Some(h) => {
            if h.first_key() != data.last_key().succ() {
                return Err(Error::Continuity {
                    after: data.last_key(),
                    missing: data.last_key().succ(),
                });
            }
            Some(h.records[0].prev)
        }
        None => None,
    };

    let records = data.records();
    let last = records.len() - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets = Vec::new();
    let mut keys = Vec::new();
    for end in (m - 1)..records.len() {
        let target = if end < last {
            Some(records[end + 1].prev)
        } else {
            next_prev
        };
        let Some(target) = target else { continue };
        rows.push(lag_window(records, end, m).expect("window lies inside dataset"));
        targets.push(target);
        keys.push(records[end].key);
    }

    let width = m * FEATURES_PER_MONTH;
    let x = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    Ok(EncodedTask {
        lag_depth: m,
        feature_names: feature_names(m),
        x,
        y: DVector::from_vec(targets),
        instance_keys: keys,
    })
}

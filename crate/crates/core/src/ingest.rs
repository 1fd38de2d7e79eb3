//! CSV loading in long (`key,timestamp,value`) and wide (`timestamp,key1,key2,..`) layouts.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{RawSeries, Timestamp};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Long,
    #[default]
    Wide,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "long" => Ok(Layout::Long),
            "wide" => Ok(Layout::Wide),
            other => Err(Error::InvalidParams(format!("unknown layout '{other}'"))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Long => "long",
            Layout::Wide => "wide",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadOptions {
    pub layout: Layout,
    pub frequency_hint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series_by_key: BTreeMap<String, RawSeries>,
    pub frequency_hint: Option<String>,
}

impl Dataset {
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.series_by_key.keys().map(String::as_str)
    }

    pub fn get(&self, key: &str) -> Result<&RawSeries> {
        self.series_by_key
            .get(key)
            .ok_or_else(|| Error::UnknownKey(key.to_string()))
    }

    pub fn len(&self) -> usize {
        self.series_by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series_by_key.is_empty()
    }
}

pub fn read_csv(path: impl AsRef<Path>, options: &ReadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv_from(file, options)
}

pub fn read_csv_from<R: Read>(reader: R, options: &ReadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut points: BTreeMap<String, Vec<(usize, Timestamp, f64)>> = BTreeMap::new();

    // data rows are numbered as file lines, the header being line 1
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let cell = |col: usize| -> Result<&str> {
            match record.get(col) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::BadCell {
                    row,
                    column: headers.get(col).cloned().unwrap_or_else(|| format!("#{}", col + 1)),
                }),
            }
        };
        let timestamp_at = |col: usize| -> Result<Timestamp> {
            Timestamp::parse(cell(col)?).ok_or_else(|| Error::BadCell {
                row,
                column: headers[col].clone(),
            })
        };
        let value_at = |col: usize| -> Result<f64> {
            cell(col)?
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row,
                    column: headers[col].clone(),
                })
        };
        match options.layout {
            Layout::Long => {
                if headers.len() < 3 {
                    return Err(Error::InvalidParams(
                        "long layout needs key, timestamp and value columns".into(),
                    ));
                }
                let key = cell(0)?.to_string();
                let ts = timestamp_at(1)?;
                let value = value_at(2)?;
                points.entry(key).or_default().push((row, ts, value));
            }
            Layout::Wide => {
                if headers.len() < 2 {
                    return Err(Error::InvalidParams(
                        "wide layout needs a timestamp column and at least one series".into(),
                    ));
                }
                let ts = timestamp_at(0)?;
                for (col, key) in headers.iter().enumerate().skip(1) {
                    let value = value_at(col)?;
                    points.entry(key.clone()).or_default().push((row, ts, value));
                }
            }
        }
    }

    let mut series_by_key = BTreeMap::new();
    for (key, mut pts) in points {
        let first_is_date = matches!(pts[0].1, Timestamp::Date(_));
        if let Some(&(row, _, _)) = pts
            .iter()
            .find(|p| matches!(p.1, Timestamp::Date(_)) != first_is_date)
        {
            return Err(Error::BadCell {
                row,
                column: timestamp_column(&headers, options.layout),
            });
        }
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("same timestamp kind"));
        if let Some(w) = pts.windows(2).find(|w| w[0].1 == w[1].1) {
            return Err(Error::DuplicateEntry {
                key,
                timestamp: w[0].1.to_string(),
            });
        }
        let (timestamps, values): (Vec<Timestamp>, Vec<f64>) =
            pts.into_iter().map(|(_, t, v)| (t, v)).unzip();
        let series = RawSeries::with_timestamps(values, timestamps)?;
        series_by_key.insert(key, series);
    }
    if series_by_key.is_empty() {
        return Err(Error::DegenerateData("no data rows"));
    }
    Ok(Dataset {
        series_by_key,
        frequency_hint: options.frequency_hint.clone(),
    })
}

fn timestamp_column(headers: &[String], layout: Layout) -> String {
    let col = match layout {
        Layout::Long => 1,
        Layout::Wide => 0,
    };
    headers.get(col).cloned().unwrap_or_default()
}

/// Writes a dataset. Values use the shortest representation that parses back to the same
/// `f64`. The wide layout requires every series to share its timestamps.
pub fn write_csv<W: Write>(data: &Dataset, layout: Layout, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let stamp = |s: &RawSeries, i: usize| s.timestamp(i).map_or_else(|| i.to_string(), |t| t.to_string());
    match layout {
        Layout::Long => {
            w.write_record(["key", "timestamp", "value"])?;
            for (key, s) in &data.series_by_key {
                for (i, v) in s.values().iter().enumerate() {
                    w.write_record([key.as_str(), &stamp(s, i), &v.to_string()])?;
                }
            }
        }
        Layout::Wide => {
            let keys: Vec<&str> = data.keys().collect();
            let Some(first) = data.series_by_key.values().next() else {
                return Err(Error::DegenerateData("empty dataset"));
            };
            for (k, s) in &data.series_by_key {
                check_aligned(keys[0], first, k, s)?;
            }
            let mut header = vec!["timestamp"];
            header.extend(&keys);
            w.write_record(&header)?;
            for i in 0..first.len() {
                let mut rec = vec![stamp(first, i)];
                rec.extend(data.series_by_key.values().map(|s| s.values()[i].to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn check_aligned(left: &str, a: &RawSeries, right: &str, b: &RawSeries) -> Result<()> {
    let mismatch = |position| Error::TimestampMismatch {
        left: left.to_string(),
        right: right.to_string(),
        position,
    };
    match (a.timestamps(), b.timestamps()) {
        (Some(ta), Some(tb)) => {
            if let Some(p) = ta.iter().zip(tb).position(|(x, y)| x != y) {
                return Err(mismatch(p));
            }
        }
        (None, None) => {}
        _ => return Err(mismatch(0)),
    }
    if a.len() != b.len() {
        return Err(mismatch(a.len().min(b.len())));
    }
    Ok(())
}

/// Element-wise sum of the selected series, which must share their timestamps.
pub fn aggregate_sum(data: &Dataset, keys: &[&str]) -> Result<RawSeries> {
    let Some((&first_key, rest)) = keys.split_first() else {
        return Err(Error::InvalidParams("empty key selection".into()));
    };
    let first = data.get(first_key)?;
    let mut total = first.values().to_vec();
    for &key in rest {
        let s = data.get(key)?;
        check_aligned(first_key, first, key, s)?;
        for (t, v) in total.iter_mut().zip(s.values()) {
            *t += v;
        }
    }
    match first.timestamps() {
        Some(ts) => RawSeries::with_timestamps(total, ts.to_vec()),
        None => RawSeries::new(total),
    }
}

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::schedule::{FaultSchedule, Pattern};

/// One output value per period, sampled at the period end, with its ground-truth label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub outputs: Vec<f64>,
    pub labels: Vec<Pattern>,
    pub input_description: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    period_index: usize,
    time_s: f64,
    output: f64,
    label: Option<u8>,
}

impl SimTrace {
    pub(crate) fn from_schedule(schedule: &FaultSchedule, outputs: Vec<f64>, input_description: String) -> Self {
        let times = (1..=schedule.total_periods).map(|p| schedule.period_end(p)).collect();
        Self {
            times,
            outputs,
            labels: schedule.labels(),
            input_description,
        }
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Maximal runs of abnormal labels as 1-based inclusive period ranges.
    pub fn abnormal_segments(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (i, l) in self.labels.iter().enumerate() {
            if !l.is_abnormal() {
                continue;
            }
            let p = i + 1;
            match out.last_mut() {
                Some((_, e)) if *e + 1 == p => *e = p,
                _ => out.push((p, p)),
            }
        }
        out
    }

    pub fn abnormal_fraction(&self) -> f64 {
        self.labels.iter().filter(|l| l.is_abnormal()).count() as f64 / self.len() as f64
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(Row {
                period_index: i + 1,
                time_s: self.times[i],
                output: self.outputs[i],
                label: Some(self.labels[i].code()),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads a trace written by [`write_csv`](Self::write_csv). A missing or blank label
    /// column yields [`SimError::MissingLabels`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let has_label = rdr.headers()?.iter().any(|h| h == "label");
        if !has_label {
            return Err(SimError::MissingLabels);
        }
        let mut trace = SimTrace {
            times: Vec::new(),
            outputs: Vec::new(),
            labels: Vec::new(),
            input_description: String::new(),
        };
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.period_index != i + 1 {
                return Err(SimError::BadRow {
                    row: i + 2,
                    reason: format!("expected period {}, found {}", i + 1, row.period_index),
                });
            }
            let code = row.label.ok_or(SimError::MissingLabels)?;
            let label = Pattern::from_code(code).ok_or_else(|| SimError::BadRow {
                row: i + 2,
                reason: format!("label must be 1 or 2, got {code}"),
            })?;
            trace.times.push(row.time_s);
            trace.outputs.push(row.output);
            trace.labels.push(label);
        }
        Ok(trace)
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

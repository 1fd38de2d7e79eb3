//! Runs every detector on one labelled trace and tabulates the outcome against ground truth.

use std::io::Write;
use std::time::Instant;

use emodm_core::{detect_rates, relative_change_rate_default, DetectionConfig, RateSeries, RawSeries};
use emodm_sim::{Pattern, SimError, SimTrace};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::methods::{run_detector, IsolationForest, KMeans, Kde, Knn, Lof, Lrm, OutlierDetector};

pub const SCHEMA_VERSION: u32 = 1;

/// Scores flagged rate indices against per-period labels.
///
/// Rate `i` with origin raw index `o` describes the change into period `o + 1`, whose label
/// is `labels[o]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Valid rates whose period is labelled abnormal.
    pub true_count: usize,
    pub true_positives: usize,
    /// Valid rates whose period is labelled normal.
    pub normal_count: usize,
    pub false_flags: usize,
    /// Abnormal segments as 1-based inclusive periods.
    pub segments: Vec<(usize, usize)>,
    pub segment_hits: Vec<bool>,
}

impl Evaluation {
    pub fn new(rates: &RateSeries, labels: &[Pattern], flagged: &[usize]) -> Self {
        let period = |i: usize| rates.origin_index()[i] + 1;
        let abnormal = |i: usize| labels[rates.origin_index()[i]].is_abnormal();
        let valid = rates.valid_positions();
        let true_count = valid.iter().filter(|&&i| abnormal(i)).count();
        let true_positives = flagged.iter().filter(|&&i| abnormal(i)).count();
        let false_flags = flagged.len() - true_positives;

        let mut segments: Vec<(usize, usize)> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_abnormal() {
                match segments.last_mut() {
                    Some((_, e)) if *e == i => *e = i + 1,
                    _ => segments.push((i + 1, i + 1)),
                }
            }
        }
        let segment_hits = segments
            .iter()
            .map(|&(s, e)| flagged.iter().any(|&i| (s..=e).contains(&period(i))))
            .collect();
        Self {
            true_count,
            true_positives,
            normal_count: valid.len() - true_count,
            false_flags,
            segments,
            segment_hits,
        }
    }

    pub fn segments_detected(&self) -> usize {
        self.segment_hits.iter().filter(|h| **h).count()
    }

    /// `None` for traces without abnormal segments.
    pub fn segment_recall(&self) -> Option<f64> {
        (!self.segments.is_empty()).then(|| self.segments_detected() as f64 / self.segments.len() as f64)
    }

    pub fn false_flag_rate(&self) -> f64 {
        if self.normal_count == 0 {
            return 0.0;
        }
        self.false_flags as f64 / self.normal_count as f64
    }
}

/// Which methods to run and with what settings; `None` leaves a method out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonConfig {
    pub emodm: DetectionConfig,
    pub lrm: Option<Lrm>,
    pub kde: Option<Kde>,
    pub knn: Option<Knn>,
    pub kmeans: Option<KMeans>,
    pub iforest: Option<IsolationForest>,
    pub lof: Option<Lof>,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            emodm: DetectionConfig::default(),
            lrm: Some(Lrm::default()),
            kde: Some(Kde::default()),
            knn: Some(Knn::default()),
            kmeans: Some(KMeans::default()),
            iforest: Some(IsolationForest::default()),
            lof: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub detected: Option<usize>,
    pub valid_count: usize,
    pub abnormal_fraction: Option<f64>,
    /// Fitted abnormal weight; only the mixture model reports one.
    pub global_probability: Option<f64>,
    pub true_count: usize,
    pub true_positives: Option<usize>,
    pub segments_detected: Option<usize>,
    pub segments_total: usize,
    pub segment_recall: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub error: Option<String>,
    pub flagged: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// One line per method; missing values are left blank and flag sets are omitted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "detected",
            "valid_count",
            "abnormal_fraction",
            "global_probability",
            "true_count",
            "true_positives",
            "segments_detected",
            "segments_total",
            "segment_recall",
            "wall_time_s",
            "error",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                opt(&r.detected),
                r.valid_count.to_string(),
                opt(&r.abnormal_fraction),
                opt(&r.global_probability),
                r.true_count.to_string(),
                opt(&r.true_positives),
                opt(&r.segments_detected),
                r.segments_total.to_string(),
                opt(&r.segment_recall),
                opt(&r.wall_time_s),
                opt(&r.error),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn row(
    method: &str,
    rates: &RateSeries,
    labels: &[Pattern],
    outcome: Result<(Vec<usize>, f64)>,
    global_probability: Option<f64>,
) -> ComparisonRow {
    let blank = Evaluation::new(rates, labels, &[]);
    let mut r = ComparisonRow {
        method: method.to_string(),
        detected: None,
        valid_count: rates.valid_count(),
        abnormal_fraction: None,
        global_probability,
        true_count: blank.true_count,
        true_positives: None,
        segments_detected: None,
        segments_total: blank.segments.len(),
        segment_recall: None,
        wall_time_s: None,
        error: None,
        flagged: Vec::new(),
    };
    match outcome {
        Ok((flagged, wall)) => {
            let ev = Evaluation::new(rates, labels, &flagged);
            r.detected = Some(flagged.len());
            r.abnormal_fraction = Some(flagged.len() as f64 / rates.valid_count() as f64);
            r.true_positives = Some(ev.true_positives);
            r.segments_detected = (!ev.segments.is_empty()).then(|| ev.segments_detected());
            r.segment_recall = ev.segment_recall();
            r.wall_time_s = Some(wall);
            r.flagged = flagged;
        }
        Err(e) => {
            log::warn!("{method} failed: {e}");
            r.error = Some(e.to_string());
        }
    }
    r
}

/// Runs the mixture detector and every configured baseline on the same rate series.
///
/// `seed` overrides the seeds of the randomized methods. Method failures land in their row.
pub fn run_comparison(trace: &SimTrace, config: &ComparisonConfig, seed: u64) -> Result<ComparisonTable> {
    if trace.labels.len() != trace.outputs.len() {
        return Err(SimError::MissingLabels.into());
    }
    let raw = RawSeries::new(trace.outputs.clone())?;
    let rates = relative_change_rate_default(&raw)?;
    let labels = &trace.labels;

    let start = Instant::now();
    let emodm = detect_rates(rates.clone(), &config.emodm);
    let wall = start.elapsed().as_secs_f64();
    let (outcome, eta) = match emodm {
        Ok(d) => (Ok((d.report.flagged, wall)), Some(d.report.failure_probability)),
        Err(e) => (Err(e.into()), None),
    };
    let mut rows = vec![row("EMODM", &rates, labels, outcome, eta)];

    let mut detectors: Vec<Box<dyn OutlierDetector>> = Vec::new();
    if let Some(c) = &config.lrm {
        detectors.push(Box::new(c.clone()));
    }
    if let Some(c) = &config.kde {
        detectors.push(Box::new(c.clone()));
    }
    if let Some(c) = &config.knn {
        detectors.push(Box::new(c.clone()));
    }
    if let Some(c) = &config.kmeans {
        detectors.push(Box::new(KMeans { seed, ..c.clone() }));
    }
    if let Some(c) = &config.iforest {
        detectors.push(Box::new(IsolationForest { seed, ..c.clone() }));
    }
    if let Some(c) = &config.lof {
        detectors.push(Box::new(c.clone()));
    }
    for d in &detectors {
        let outcome = run_detector(d.as_ref(), &rates).map(|r| (r.flagged, r.wall_time_s));
        rows.push(row(d.name(), &rates, labels, outcome, None));
    }
    Ok(ComparisonTable {
        schema_version: SCHEMA_VERSION,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use emodm_sim::Pattern::{Abnormal, Normal};

    fn trace(outputs: Vec<f64>, labels: Vec<Pattern>) -> SimTrace {
        SimTrace {
            times: (1..=outputs.len()).map(|i| i as f64).collect(),
            outputs,
            labels,
            input_description: "test".into(),
        }
    }

    #[test]
    fn evaluation_maps_rates_to_periods() {
        let raw = RawSeries::new(vec![1.0; 8]).unwrap();
        let rates = relative_change_rate_default(&raw).unwrap();
        let labels = vec![Normal, Normal, Normal, Abnormal, Abnormal, Normal, Normal, Normal];
        // rate 3 has origin 4, i.e. period 5
        let ev = Evaluation::new(&rates, &labels, &[3, 6]);
        assert_eq!(ev.segments, vec![(4, 5)]);
        assert_eq!(ev.segment_hits, vec![true]);
        assert_eq!((ev.true_count, ev.true_positives, ev.false_flags, ev.normal_count), (2, 1, 1, 5));
        assert_eq!(Evaluation::new(&rates, &labels, &[1]).segment_recall(), Some(0.0));
    }

    #[test]
    fn empty_trace_is_too_short() {
        let err = run_comparison(&trace(vec![], vec![]), &ComparisonConfig::default(), 0).unwrap_err();
        assert!(err.to_string().contains("series too short"), "{err}");
    }

    #[test]
    fn all_normal_trace_has_no_recall() {
        let outputs: Vec<f64> = (0..120).map(|i| 10.0 + (i as f64 * 0.7).sin()).collect();
        let t = trace(outputs, vec![Normal; 120]);
        let table = run_comparison(&t, &ComparisonConfig::default(), 1).unwrap();
        assert_eq!(table.rows.len(), 6);
        for r in &table.rows {
            assert_eq!(r.segment_recall, None, "{}", r.method);
            assert_eq!(r.segments_total, 0);
        }
    }

    #[test]
    fn failing_method_leaves_other_rows_intact() {
        let outputs: Vec<f64> = (0..80).map(|i| 5.0 + ((i * 7919) % 13) as f64 * 0.1).collect();
        let t = trace(outputs, vec![Normal; 80]);
        let good = run_comparison(&t, &ComparisonConfig::default(), 2).unwrap();
        let bad_cfg = ComparisonConfig {
            knn: Some(Knn { k: 500, score_quantile: 0.9 }),
            ..Default::default()
        };
        let bad = run_comparison(&t, &bad_cfg, 2).unwrap();
        for (g, b) in good.rows.iter().zip(&bad.rows) {
            if g.method == "KNN" {
                assert!(b.error.is_some() && b.detected.is_none());
            } else {
                assert_eq!(g.flagged, b.flagged);
                assert_eq!(g.error, b.error);
            }
        }
        let mut buf = Vec::new();
        bad.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn mismatched_labels_are_rejected() {
        let t = trace(vec![1.0, 2.0, 3.0], vec![Normal]);
        assert!(run_comparison(&t, &ComparisonConfig::default(), 0).is_err());
    }
}

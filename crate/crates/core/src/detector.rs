//! Posterior scoring, thresholding and segment extraction, in batch and online form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit_default, fit_em, FitConfig, FitResult, MixtureParams, MIN_FIT_SAMPLES};
use crate::preprocess::{relative_change_rate_default, RateSeries, RawSeries};

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Posterior threshold `α_f`.
    pub alpha_f: f64,
    /// Valid rates required before the online detector starts scoring.
    pub warmup_count: usize,
    /// Online steps between fits that ignore the previous parameters.
    pub refit_period: usize,
    pub fit: FitConfig,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            alpha_f: 0.95,
            warmup_count: 50,
            refit_period: 100,
            fit: FitConfig::default(),
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_f > 0.0 && self.alpha_f < 1.0) {
            return Err(Error::InvalidParams(format!(
                "threshold must lie in (0, 1), got {}",
                self.alpha_f
            )));
        }
        if self.warmup_count < MIN_FIT_SAMPLES {
            return Err(Error::InvalidParams(format!(
                "warm-up must be at least {MIN_FIT_SAMPLES}, got {}",
                self.warmup_count
            )));
        }
        if self.refit_period == 0 {
            return Err(Error::InvalidParams("refit period must be positive".into()));
        }
        self.fit.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Abnormal posterior per rate entry; `None` for invalid entries.
    pub posteriors: Vec<Option<f64>>,
    /// Rate indices whose posterior reaches the threshold, ascending.
    pub flagged: Vec<usize>,
    /// Maximal runs of consecutive flagged rate indices, inclusive bounds.
    pub segments: Vec<(usize, usize)>,
    pub failure_probability: f64,
    pub params: MixtureParams,
}

impl DetectionReport {
    /// Flagged entries translated to raw sample indices.
    pub fn flagged_origins(&self, rates: &RateSeries) -> Vec<usize> {
        self.flagged.iter().map(|&i| rates.origin_index()[i]).collect()
    }

    /// Segments translated to raw sample indices.
    pub fn segment_origins(&self, rates: &RateSeries) -> Vec<(usize, usize)> {
        let o = rates.origin_index();
        self.segments.iter().map(|&(s, e)| (o[s], o[e])).collect()
    }
}

/// `p(S=2 | y)` for a validated parameter set.
///
/// When both weighted densities underflow (|y| near the top of the f64 range) the
/// wider component takes the sample.
pub(crate) fn posterior_unchecked(y: f64, params: &MixtureParams) -> f64 {
    match params.responsibilities(y) {
        Some((row, _)) => row[1],
        None => {
            use std::cmp::Ordering::*;
            match params.abnormal.std_dev.partial_cmp(&params.normal.std_dev) {
                Some(Greater) => 1.0,
                Some(Less) => 0.0,
                _ => params.abnormal_weight,
            }
        }
    }
}

/// Posterior probability that `y` was produced by the abnormal component.
pub fn posterior_abnormal(y: f64, params: &MixtureParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::InvalidSample { value: y });
    }
    params.validate()?;
    Ok(posterior_unchecked(y, params))
}

/// Posterior probability that `y` was produced by the normal component.
pub fn posterior_normal(y: f64, params: &MixtureParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::InvalidSample { value: y });
    }
    params.validate()?;
    Ok(match params.responsibilities(y) {
        Some((row, _)) => row[0],
        None => 1.0 - posterior_unchecked(y, params),
    })
}

pub fn failure_probability(params: &MixtureParams) -> f64 {
    params.abnormal_weight
}

/// Puts the smaller-weight component in the abnormal slot.
///
/// At (numerically) equal weights the component with the larger standard deviation is
/// treated as abnormal.
pub fn canonicalize_components(params: &MixtureParams) -> MixtureParams {
    let eta = params.abnormal_weight;
    let swap = if (eta - 0.5).abs() < TIE_TOLERANCE {
        params.normal.std_dev > params.abnormal.std_dev
    } else {
        eta > 0.5
    };
    if swap {
        MixtureParams {
            normal: params.abnormal,
            abnormal: params.normal,
            abnormal_weight: 1.0 - eta,
        }
    } else {
        *params
    }
}

/// Merges ascending indices into maximal runs of consecutive values.
pub fn merge_runs(indices: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == i => *end = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// Thresholds posterior values at `alpha_f`.
pub fn threshold_posteriors(posteriors: &[Option<f64>], alpha_f: f64) -> Vec<usize> {
    posteriors
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.filter(|p| *p >= alpha_f).map(|_| i))
        .collect()
}

pub fn flag_and_segment(
    rates: &RateSeries,
    params: &MixtureParams,
    config: &DetectionConfig,
) -> DetectionReport {
    let posteriors: Vec<Option<f64>> = (0..rates.len())
        .map(|i| rates.get(i).map(|y| posterior_unchecked(y, params)))
        .collect();
    let flagged = threshold_posteriors(&posteriors, config.alpha_f);
    let segments = merge_runs(&flagged);
    DetectionReport {
        posteriors,
        flagged,
        segments,
        failure_probability: failure_probability(params),
        params: *params,
    }
}

/// Output of the batch pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rates: RateSeries,
    /// The raw fit, before canonicalization.
    pub fit: FitResult,
    pub report: DetectionReport,
}

/// Change rates, default-initialized EM, canonicalization and thresholding.
pub fn detect(raw: &RawSeries, config: &DetectionConfig) -> Result<Detection> {
    config.validate()?;
    let rates = relative_change_rate_default(raw)?;
    detect_rates(rates, config)
}

/// [`detect`] on an already transformed series.
pub fn detect_rates(rates: RateSeries, config: &DetectionConfig) -> Result<Detection> {
    config.validate()?;
    let fit = fit_default(&rates.valid_values(), &config.fit)?;
    let params = canonicalize_components(&fit.params);
    let report = flag_and_segment(&rates, &params, config);
    Ok(Detection { rates, fit, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    /// Raw index of the sample that closed the flagged interval.
    pub index: usize,
    pub value: f64,
    pub posterior: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OnlineStatus {
    /// Fewer valid rates than the warm-up requires.
    InsufficientData { valid: usize },
    /// The newest rate was masked by the denominator guard.
    InvalidRate { index: usize },
    /// Both the warm-started and the fresh fit failed; the previous model is kept.
    ModelUnavailable { index: usize },
    Scored {
        index: usize,
        posterior: f64,
        alarm: bool,
    },
}

impl OnlineStatus {
    pub fn alarm(&self) -> bool {
        matches!(self, OnlineStatus::Scored { alarm: true, .. })
    }
}

/// Growing-window detector fed one raw sample at a time.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct OnlineDetectorState {
    values: Vec<f64>,
    buffer: Option<RateSeries>,
    last_params: Option<MixtureParams>,
    samples_since_refit: usize,
}

impl OnlineDetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn buffer(&self) -> Option<&RateSeries> {
        self.buffer.as_ref()
    }

    pub fn last_params(&self) -> Option<&MixtureParams> {
        self.last_params.as_ref()
    }

    pub fn samples_since_refit(&self) -> usize {
        self.samples_since_refit
    }

    /// Appends one raw sample and scores the newest change rate.
    ///
    /// Each step fits EM from the default initialization and, between periodic refits,
    /// also from the previous parameters; the fit with the higher log-likelihood is kept.
    /// The rate buffer is recomputed from all samples so that the denominator guard matches
    /// the batch transform.
    pub fn step(&mut self, value: f64, config: &DetectionConfig) -> Result<OnlineStatus> {
        config.validate()?;
        if !value.is_finite() {
            return Err(Error::InvalidSample { value });
        }
        self.values.push(value);
        if self.values.len() < 2 {
            return Ok(OnlineStatus::InsufficientData { valid: 0 });
        }
        let rates = relative_change_rate_default(&RawSeries::new(self.values.clone())?)?;
        let samples = rates.valid_values();
        let newest = rates.get(rates.len() - 1);
        self.buffer = Some(rates);
        let index = self.values.len() - 1;
        if samples.len() < config.warmup_count {
            return Ok(OnlineStatus::InsufficientData { valid: samples.len() });
        }

        let full_refit = self.last_params.is_none() || self.samples_since_refit + 1 >= config.refit_period;
        let fresh = fit_default(&samples, &config.fit);
        let chosen = if full_refit {
            fresh.ok()
        } else {
            let warm = self
                .last_params
                .as_ref()
                .and_then(|p| fit_em(&samples, p, &config.fit).ok());
            match (warm, fresh.ok()) {
                (Some(w), Some(f)) => Some(if w.final_loglik() > f.final_loglik() { w } else { f }),
                (w, f) => w.or(f),
            }
        };
        let Some(fit) = chosen else {
            log::warn!("no usable mixture fit at sample {index}");
            return Ok(OnlineStatus::ModelUnavailable { index });
        };
        let params = canonicalize_components(&fit.params);
        self.last_params = Some(params);
        self.samples_since_refit = if full_refit { 0 } else { self.samples_since_refit + 1 };

        Ok(match newest {
            None => OnlineStatus::InvalidRate { index },
            Some(y) => {
                let posterior = posterior_unchecked(y, &params);
                OnlineStatus::Scored {
                    index,
                    posterior,
                    alarm: posterior >= config.alpha_f,
                }
            }
        })
    }

    /// Like [`step`](Self::step), returning only the alarm if one was raised.
    pub fn step_alarm(&mut self, value: f64, config: &DetectionConfig) -> Result<Option<Alarm>> {
        Ok(match self.step(value, config)? {
            OnlineStatus::Scored {
                index,
                posterior,
                alarm: true,
            } => Some(Alarm {
                index,
                value,
                posterior,
            }),
            _ => None,
        })
    }
}

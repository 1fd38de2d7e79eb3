//! Classical detectors working on the valid entries of a rate series.
//!
//! Each detector sees the valid samples in index order and returns positions into that
//! sample list; [`run_detector`] maps them back to rate indices.

use std::time::Instant;

use emodm_core::{detect_rates, DetectionConfig, RateSeries};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BaselineError, Result};

pub const MIN_SAMPLES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub method_name: String,
    /// Flagged rate indices, ascending.
    pub flagged: Vec<usize>,
    /// `|flagged| / valid sample count`.
    pub abnormal_fraction: f64,
    pub wall_time_s: f64,
}

pub trait OutlierDetector {
    fn name(&self) -> &'static str;

    /// Positions into `samples` judged abnormal, ascending.
    fn flag(&self, samples: &[f64], positions: &[usize]) -> Result<Vec<usize>>;
}

fn require(n: usize, needed: usize) -> Result<()> {
    if n < needed {
        return Err(BaselineError::TooFewSamples { needed, got: n });
    }
    Ok(())
}

fn check_quantile(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(BaselineError::InvalidParams(format!("quantile must lie in [0, 1], got {q}")));
    }
    Ok(())
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn above(scores: &[f64], threshold: f64) -> Vec<usize> {
    (0..scores.len()).filter(|&i| scores[i] > threshold).collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Least-squares line over rate index; flags standardized residuals with `|z| ≥ z_threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lrm {
    pub z_threshold: f64,
}

impl Default for Lrm {
    fn default() -> Self {
        Self { z_threshold: 3.0 }
    }
}

impl OutlierDetector for Lrm {
    fn name(&self) -> &'static str {
        "LRM"
    }

    fn flag(&self, y: &[f64], positions: &[usize]) -> Result<Vec<usize>> {
        require(y.len(), MIN_SAMPLES)?;
        if !(self.z_threshold > 0.0) {
            return Err(BaselineError::InvalidParams("z threshold must be positive".into()));
        }
        let x: Vec<f64> = positions.iter().map(|&p| p as f64).collect();
        let (mx, _) = mean_std(&x);
        let (my, _) = mean_std(y);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let slope = sxy / sxx;
        let resid: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - (my + slope * (a - mx))).collect();
        let s = (resid.iter().map(|r| r * r).sum::<f64>() / (y.len() - 2) as f64).sqrt();
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // residuals at rounding level: the line is exact and nothing deviates from it
        if s <= 1e-12 * scale || s == 0.0 {
            return Ok(Vec::new());
        }
        Ok((0..y.len()).filter(|&i| (resid[i] / s).abs() >= self.z_threshold).collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    /// `0.9 · min(σ, IQR/1.34) · n^{-1/5}`, falling back to σ when the IQR is zero.
    #[default]
    Silverman,
    /// `1.06 · σ · n^{-1/5}`.
    Scott,
}

impl BandwidthRule {
    pub fn bandwidth(self, x: &[f64]) -> f64 {
        let (_, sd) = mean_std(x);
        let scale = (x.len() as f64).powf(-0.2);
        match self {
            Self::Scott => 1.06 * sd * scale,
            Self::Silverman => {
                let iqr = quantile(x, 0.75) - quantile(x, 0.25);
                let spread = match sd.min(iqr / 1.34) {
                    a if a > 0.0 => a,
                    _ => sd,
                };
                0.9 * spread * scale
            }
        }
    }
}

/// Gaussian kernel density; flags leave-one-out densities below the `density_quantile` of
/// all densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth_rule: BandwidthRule,
    pub density_quantile: f64,
}

impl Default for Kde {
    fn default() -> Self {
        Self {
            bandwidth_rule: BandwidthRule::Silverman,
            density_quantile: 0.05,
        }
    }
}

impl OutlierDetector for Kde {
    fn name(&self) -> &'static str {
        "KDE"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        require(x.len(), MIN_SAMPLES)?;
        check_quantile(self.density_quantile)?;
        let h = self.bandwidth_rule.bandwidth(x);
        if !(h > 0.0) {
            return Err(BaselineError::Degenerate("zero kernel bandwidth"));
        }
        let n = x.len();
        let norm = 1.0 / ((n - 1) as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
        let density: Vec<f64> = (0..n)
            .map(|i| {
                let s: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (-0.5 * ((x[i] - x[j]) / h).powi(2)).exp())
                    .sum();
                s * norm
            })
            .collect();
        let threshold = quantile(&density, self.density_quantile);
        Ok((0..n).filter(|&i| density[i] < threshold).collect())
    }
}

/// Distance to the `k`-th nearest neighbour; flags scores above the `score_quantile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub score_quantile: f64,
}

impl Default for Knn {
    fn default() -> Self {
        Self { k: 10, score_quantile: 0.95 }
    }
}

pub fn kth_neighbor_distances(x: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let mut out = vec![0.0; x.len()];
    for (p, &orig) in order.iter().enumerate() {
        let (mut l, mut r) = (p, p);
        let mut d = 0.0;
        for _ in 0..k {
            let left = (l > 0).then(|| sorted[p] - sorted[l - 1]);
            let right = (r + 1 < sorted.len()).then(|| sorted[r + 1] - sorted[p]);
            d = match (left, right) {
                (Some(a), Some(b)) if a <= b => {
                    l -= 1;
                    a
                }
                (Some(a), None) => {
                    l -= 1;
                    a
                }
                (_, Some(b)) => {
                    r += 1;
                    b
                }
                (None, None) => unreachable!("k < n"),
            };
        }
        out[orig] = d;
    }
    out
}

impl OutlierDetector for Knn {
    fn name(&self) -> &'static str {
        "KNN"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        check_quantile(self.score_quantile)?;
        if self.k == 0 || self.k >= x.len() {
            return Err(BaselineError::InvalidParams(format!("k = {} needs 0 < k < {}", self.k, x.len())));
        }
        let scores = kth_neighbor_distances(x, self.k);
        Ok(above(&scores, quantile(&scores, self.score_quantile)))
    }
}

/// Two-cluster k-means (k-means++ seeding); the smaller cluster is flagged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for KMeans {
    fn default() -> Self {
        Self { seed: 0, max_iterations: 300 }
    }
}

/// Cluster assignments (0 or 1) or `None` if a cluster ends up empty.
fn lloyd(x: &[f64], rng: &mut ChaCha8Rng, max_iterations: usize) -> Option<Vec<u8>> {
    let first = x[rng.random_range(0..x.len())];
    let d2: Vec<f64> = x.iter().map(|v| (v - first).powi(2)).collect();
    let total: f64 = d2.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut pick = rng.random::<f64>() * total;
    let mut second = x[x.len() - 1];
    for (v, w) in x.iter().zip(&d2) {
        if pick < *w {
            second = *v;
            break;
        }
        pick -= w;
    }
    let mut centers = [first, second];
    let mut assign = vec![0u8; x.len()];
    for _ in 0..max_iterations {
        let next: Vec<u8> = x
            .iter()
            .map(|v| u8::from((v - centers[1]).abs() < (v - centers[0]).abs()))
            .collect();
        let mut sums = [0.0; 2];
        let mut counts = [0usize; 2];
        for (v, &a) in x.iter().zip(&next) {
            sums[a as usize] += v;
            counts[a as usize] += 1;
        }
        if counts.contains(&0) {
            return None;
        }
        centers = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
        let done = next == assign;
        assign = next;
        if done {
            break;
        }
    }
    Some(assign)
}

impl OutlierDetector for KMeans {
    fn name(&self) -> &'static str {
        "K-means"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        require(x.len(), MIN_SAMPLES)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let assign = match lloyd(x, &mut rng, self.max_iterations) {
            Some(a) => a,
            None => {
                log::debug!("k-means produced an empty cluster, re-seeding");
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5eed_5eed_5eed);
                lloyd(x, &mut rng, self.max_iterations).ok_or(BaselineError::EmptyCluster)?
            }
        };
        let members = |c: u8| -> Vec<usize> { (0..x.len()).filter(|&i| assign[i] == c).collect() };
        let (a, b) = (members(0), members(1));
        let flagged = match a.len().cmp(&b.len()) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                // equal sizes: the wider cluster is the abnormal one
                let spread = |m: &[usize]| mean_std(&m.iter().map(|&i| x[i]).collect::<Vec<_>>()).1;
                if spread(&a) >= spread(&b) {
                    a
                } else {
                    b
                }
            }
        };
        Ok(flagged)
    }
}

/// Isolation forest on one-dimensional samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: usize,
    /// Defaults to `min(256, N)` when `None`.
    pub subsample: Option<usize>,
    pub score_quantile: f64,
    pub seed: u64,
}

impl Default for IsolationForest {
    fn default() -> Self {
        Self {
            trees: 100,
            subsample: None,
            score_quantile: 0.95,
            seed: 0,
        }
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a binary search tree of `n` nodes.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

enum Node {
    Leaf { size: usize },
    Split { at: f64, left: Box<Node>, right: Box<Node> },
}

fn grow(values: &mut [f64], depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> Node {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if depth >= limit || values.len() <= 1 || !(hi > lo) {
        return Node::Leaf { size: values.len() };
    }
    let at = rng.random_range(lo..hi);
    let mut k = 0;
    for i in 0..values.len() {
        if values[i] < at {
            values.swap(i, k);
            k += 1;
        }
    }
    let (l, r) = values.split_at_mut(k);
    Node::Split {
        at,
        left: Box::new(grow(l, depth + 1, limit, rng)),
        right: Box::new(grow(r, depth + 1, limit, rng)),
    }
}

fn path_length(node: &Node, x: f64, depth: usize) -> f64 {
    match node {
        Node::Leaf { size } => depth as f64 + average_path_length(*size),
        Node::Split { at, left, right } => path_length(if x < *at { left } else { right }, x, depth + 1),
    }
}

impl IsolationForest {
    /// Anomaly scores `2^{-E[h(x)] / c(ψ)}` in `(0, 1]`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let psi = self.subsample.unwrap_or_else(|| x.len().min(256));
        if self.trees == 0 || psi < 2 || psi > x.len() {
            return Err(BaselineError::InvalidParams(format!(
                "need trees > 0 and 2 <= subsample <= {} (trees {}, subsample {psi})",
                x.len(),
                self.trees
            )));
        }
        let limit = (psi as f64).log2().ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let forest: Vec<Node> = (0..self.trees)
            .map(|_| {
                let mut sub: Vec<f64> = sample_indices(&mut rng, x.len(), psi).into_iter().map(|i| x[i]).collect();
                grow(&mut sub, 0, limit, &mut rng)
            })
            .collect();
        let c = average_path_length(psi);
        Ok(x
            .iter()
            .map(|&v| {
                let mean = forest.iter().map(|t| path_length(t, v, 0)).sum::<f64>() / self.trees as f64;
                2f64.powf(-mean / c)
            })
            .collect())
    }
}

impl OutlierDetector for IsolationForest {
    fn name(&self) -> &'static str {
        "IF"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        check_quantile(self.score_quantile)?;
        let scores = self.scores(x)?;
        Ok(above(&scores, quantile(&scores, self.score_quantile)))
    }
}

/// Local outlier factor with `k` neighbours; flags factors above the `score_quantile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lof {
    pub k: usize,
    pub score_quantile: f64,
}

impl Default for Lof {
    fn default() -> Self {
        Self { k: 10, score_quantile: 0.95 }
    }
}

impl Lof {
    pub fn factors(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        if self.k == 0 || self.k >= n {
            return Err(BaselineError::InvalidParams(format!("k = {} needs 0 < k < {n}", self.k)));
        }
        let kdist = kth_neighbor_distances(x, self.k);
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && (x[i] - x[j]).abs() <= kdist[i]).collect())
            .collect();
        let lrd: Vec<f64> = (0..n)
            .map(|i| {
                let reach: f64 = neighbors[i].iter().map(|&j| kdist[j].max((x[i] - x[j]).abs())).sum();
                neighbors[i].len() as f64 / reach
            })
            .collect();
        Ok((0..n)
            .map(|i| {
                let ratio: f64 = neighbors[i].iter().map(|&j| lrd[j] / lrd[i]).sum();
                let f = ratio / neighbors[i].len() as f64;
                // duplicates give infinite densities; treat them as inliers
                if f.is_finite() {
                    f
                } else {
                    1.0
                }
            })
            .collect())
    }
}

impl OutlierDetector for Lof {
    fn name(&self) -> &'static str {
        "LOF"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        check_quantile(self.score_quantile)?;
        let f = self.factors(x)?;
        Ok(above(&f, quantile(&f, self.score_quantile)))
    }
}

/// The mixture-model detector behind the same interface.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Emodm {
    pub config: DetectionConfig,
}

impl OutlierDetector for Emodm {
    fn name(&self) -> &'static str {
        "EMODM"
    }

    fn flag(&self, x: &[f64], _positions: &[usize]) -> Result<Vec<usize>> {
        let rates = RateSeries::from_samples(x)?;
        Ok(detect_rates(rates, &self.config)?.report.flagged)
    }
}

/// Runs `detector` on the valid entries of `rates` and times it.
pub fn run_detector(detector: &dyn OutlierDetector, rates: &RateSeries) -> Result<BaselineResult> {
    let samples = rates.valid_values();
    let positions = rates.valid_positions();
    let start = Instant::now();
    let hits = detector.flag(&samples, &positions)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let flagged: Vec<usize> = hits.into_iter().map(|i| positions[i]).collect();
    Ok(BaselineResult {
        method_name: detector.name().to_string(),
        abnormal_fraction: flagged.len() as f64 / samples.len() as f64,
        flagged,
        wall_time_s,
    })
}

pub fn lrm_detector(rates: &RateSeries, z_threshold: f64) -> Result<BaselineResult> {
    run_detector(&Lrm { z_threshold }, rates)
}

pub fn kde_detector(rates: &RateSeries, bandwidth_rule: BandwidthRule, density_quantile: f64) -> Result<BaselineResult> {
    run_detector(&Kde { bandwidth_rule, density_quantile }, rates)
}

pub fn knn_detector(rates: &RateSeries, k: usize, score_quantile: f64) -> Result<BaselineResult> {
    run_detector(&Knn { k, score_quantile }, rates)
}

pub fn kmeans_detector(rates: &RateSeries, seed: u64) -> Result<BaselineResult> {
    run_detector(&KMeans { seed, ..Default::default() }, rates)
}

pub fn iforest_detector(
    rates: &RateSeries,
    trees: usize,
    subsample: usize,
    score_quantile: f64,
    seed: u64,
) -> Result<BaselineResult> {
    run_detector(
        &IsolationForest {
            trees,
            subsample: Some(subsample),
            score_quantile,
            seed,
        },
        rates,
    )
}

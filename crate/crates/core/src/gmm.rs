//! Two-component Gaussian mixture fitted by expectation-maximization.
//!
//! Component 1 models the normal pattern, component 2 the abnormal one with prior
//! weight `eta`. Responsibilities are evaluated in the log domain, and every sum runs in
//! ascending index order; [`fit_em`] additionally sorts the samples first so that its
//! result does not depend on the order the samples arrive in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(sqrt(2π))`.
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Minimum number of valid samples accepted by [`fit_em`] and [`default_init`].
pub const MIN_FIT_SAMPLES: usize = 10;

/// Initial abnormal weight used by [`default_init`].
pub const INITIAL_ABNORMAL_WEIGHT: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: f64,
    pub std_dev: f64,
}

impl GaussianComponent {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        let c = Self { mean, std_dev };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.std_dev.is_finite() || self.std_dev <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "component needs finite mean and positive std dev, got ({}, {})",
                self.mean, self.std_dev
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn ln_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std_dev;
        -0.5 * z * z - self.std_dev.ln() - LN_SQRT_2PI
    }
}

/// Gaussian density `exp(-(x-μ)²/(2σ²)) / (σ√(2π))`.
///
/// Far in the tails the result underflows to zero; use [`GaussianComponent::ln_density`]
/// there.
pub fn normal_density(x: f64, component: &GaussianComponent) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidSample { value: x });
    }
    component.validate()?;
    Ok(component.ln_density(x).exp())
}

/// The five mixture parameters `{μ₁, σ₁, μ₂, σ₂, η}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub normal: GaussianComponent,
    pub abnormal: GaussianComponent,
    /// Prior weight `η` of the abnormal component.
    pub abnormal_weight: f64,
}

impl MixtureParams {
    pub fn new(
        normal: GaussianComponent,
        abnormal: GaussianComponent,
        abnormal_weight: f64,
    ) -> Result<Self> {
        let p = Self {
            normal,
            abnormal,
            abnormal_weight,
        };
        p.validate()?;
        Ok(p)
    }

    /// Shorthand taking `(μ₁, σ₁, μ₂, σ₂, η)`.
    pub fn from_tuple(m1: f64, s1: f64, m2: f64, s2: f64, eta: f64) -> Result<Self> {
        Self::new(
            GaussianComponent::new(m1, s1)?,
            GaussianComponent::new(m2, s2)?,
            eta,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.normal.validate()?;
        self.abnormal.validate()?;
        if !(0.0..=1.0).contains(&self.abnormal_weight) {
            return Err(Error::InvalidParams(format!(
                "abnormal weight must lie in [0, 1], got {}",
                self.abnormal_weight
            )));
        }
        Ok(())
    }

    pub fn normal_weight(&self) -> f64 {
        1.0 - self.abnormal_weight
    }

    /// Log of the weighted component densities `(ln((1-η) f₁(y)), ln(η f₂(y)))`.
    #[inline]
    pub(crate) fn weighted_ln_densities(&self, y: f64) -> (f64, f64) {
        (
            self.normal_weight().ln() + self.normal.ln_density(y),
            self.abnormal_weight.ln() + self.abnormal.ln_density(y),
        )
    }

    /// Responsibilities `(D₁, D₂)` of one sample and its log mixture density.
    ///
    /// Returns `None` when the mixture density is zero or undefined.
    #[inline]
    pub(crate) fn responsibilities(&self, y: f64) -> Option<([f64; 2], f64)> {
        let (a, b) = self.weighted_ln_densities(y);
        let hi = a.max(b);
        if !hi.is_finite() {
            return None;
        }
        // both entries come from the same difference so the row sums to 1 even when the
        // log-densities are large and `a - lse` would lose absolute precision
        let e = (-(a - b).abs()).exp();
        let lse = hi + e.ln_1p();
        let p_hi = 1.0 / (1.0 + e);
        let p_lo = e * p_hi;
        let row = if a >= b { [p_hi, p_lo] } else { [p_lo, p_hi] };
        Some((row, lse))
    }
}

/// Per-sample soft assignments `D_ik`, one row per valid sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityMatrix {
    rows: Vec<[f64; 2]>,
}

impl ResponsibilityMatrix {
    /// Builds a matrix from explicit rows, checking they are stochastic.
    pub fn from_rows(rows: Vec<[f64; 2]>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let ok = r.iter().all(|v| (0.0..=1.0).contains(v)) && (r[0] + r[1] - 1.0).abs() <= 1e-12;
            if !ok {
                return Err(Error::InvalidParams(format!(
                    "responsibility row {i} is not stochastic: {r:?}"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> [f64; 2] {
        self.rows[i]
    }

    /// Column `k` (0 = normal, 1 = abnormal).
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[k])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Stop once `|Δ log-lik| / max(1, |log-lik|)` drops below this.
    pub rel_loglik_tolerance: f64,
    /// Standard deviations are floored at this multiple of the sample standard deviation.
    pub variance_floor_factor: f64,
    /// Reserved for randomized initialization; the default initialization is deterministic.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_loglik_tolerance: 1e-8,
            variance_floor_factor: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || !(self.rel_loglik_tolerance > 0.0)
            || !(self.variance_floor_factor > 0.0)
        {
            return Err(Error::InvalidParams(format!(
                "invalid fit configuration {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: MixtureParams,
    /// Responsibilities under the final parameters, in the caller's sample order.
    pub responsibilities: ResponsibilityMatrix,
    /// Observed-data log-likelihood of the initial and every subsequent iterate.
    pub loglik_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace holds the initial value")
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if let Some(&value) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidSample { value });
    }
    Ok(())
}

fn e_step_with_loglik(samples: &[f64], params: &MixtureParams) -> Result<(ResponsibilityMatrix, f64)> {
    let mut rows = Vec::with_capacity(samples.len());
    let mut loglik = 0.0;
    for (index, &y) in samples.iter().enumerate() {
        let (row, lse) = params
            .responsibilities(y)
            .ok_or(Error::ResponsibilityUndefined { index })?;
        rows.push(row);
        loglik += lse;
    }
    Ok((ResponsibilityMatrix { rows }, loglik))
}

/// E-step: `D_ik = η_k f(y_i; μ_k, σ_k) / Σ_j η_j f(y_i; μ_j, σ_j)`.
pub fn e_step(samples: &[f64], params: &MixtureParams) -> Result<ResponsibilityMatrix> {
    check_samples(samples)?;
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    params.validate()?;
    e_step_with_loglik(samples, params).map(|(r, _)| r)
}

fn weighted_moments(samples: &[f64], resp: &ResponsibilityMatrix, k: usize) -> Option<(f64, f64, f64)> {
    let mut total = 0.0;
    let mut first = 0.0;
    for (y, r) in samples.iter().zip(&resp.rows) {
        total += r[k];
        first += r[k] * y;
    }
    if !(total > 0.0) {
        return None;
    }
    let mean = first / total;
    let mut second = 0.0;
    for (y, r) in samples.iter().zip(&resp.rows) {
        let d = y - mean;
        second += r[k] * d * d;
    }
    let var = second / total;
    (mean.is_finite() && var.is_finite()).then_some((total, mean, var))
}

fn m_step_inner(samples: &[f64], resp: &ResponsibilityMatrix, std_floor: f64, iteration: usize) -> Result<MixtureParams> {
    let moments = |k: usize| {
        weighted_moments(samples, resp, k).ok_or(Error::EmptyComponent {
            component: k + 1,
            iteration,
        })
    };
    let (_, m1, v1) = moments(0)?;
    let (w2, m2, v2) = moments(1)?;
    let eta = (w2 / samples.len() as f64).clamp(0.0, 1.0);
    let component = |mean: f64, var: f64| -> Result<GaussianComponent> {
        let std_dev = var.sqrt().max(std_floor);
        if std_dev > 0.0 {
            Ok(GaussianComponent { mean, std_dev })
        } else {
            Err(Error::DegenerateData("component collapsed onto a single value"))
        }
    };
    Ok(MixtureParams {
        normal: component(m1, v1)?,
        abnormal: component(m2, v2)?,
        abnormal_weight: eta,
    })
}

/// M-step: responsibility-weighted means and standard deviations, `η = Σ D_i2 / N`.
///
/// Standard deviations are floored at `std_floor` (pass `0.0` for the raw update).
pub fn m_step(samples: &[f64], resp: &ResponsibilityMatrix, std_floor: f64) -> Result<MixtureParams> {
    check_samples(samples)?;
    if resp.len() != samples.len() {
        return Err(Error::InvalidParams(format!(
            "{} responsibility rows for {} samples",
            resp.len(),
            samples.len()
        )));
    }
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    m_step_inner(samples, resp, std_floor, 0)
}

/// `Σ_i ln((1-η) f(y_i; μ₁, σ₁) + η f(y_i; μ₂, σ₂))`, evaluated in the log domain.
pub fn observed_log_likelihood(samples: &[f64], params: &MixtureParams) -> Result<f64> {
    check_samples(samples)?;
    params.validate()?;
    e_step_with_loglik(samples, params).map(|(_, ll)| ll)
}

pub(crate) fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(samples: &[f64]) -> Vec<f64> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Quantile-based starting point.
///
/// Component 1 takes the mean and spread of samples inside the [5th, 95th] percentile band,
/// component 2 those outside it (or `μ₁ + 3σ₁`, `3σ₁` when that tail is empty or has no
/// spread), and `η⁰ = 0.05`.
pub fn default_init(samples: &[f64]) -> Result<MixtureParams> {
    check_samples(samples)?;
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    let sorted = sorted_copy(samples);
    let lo = quantile_sorted(&sorted, 0.05);
    let hi = quantile_sorted(&sorted, 0.95);
    let (central, tail): (Vec<f64>, Vec<f64>) = sorted.iter().partition(|&&y| y >= lo && y <= hi);
    let (m1, s1) = mean_and_std(&central);
    if !(s1 > 0.0) {
        return Err(Error::DegenerateData("zero spread in the central sample band"));
    }
    let (m2, s2) = if tail.is_empty() {
        (m1 + 3.0 * s1, 3.0 * s1)
    } else {
        match mean_and_std(&tail) {
            (m, s) if s > 0.0 => (m, s),
            (m, _) => (m, 3.0 * s1),
        }
    };
    MixtureParams::from_tuple(m1, s1, m2, s2, INITIAL_ABNORMAL_WEIGHT)
}

/// Runs EM from `init` until the relative log-likelihood change falls below the configured
/// tolerance or the iteration budget is spent.
pub fn fit_em(samples: &[f64], init: &MixtureParams, config: &FitConfig) -> Result<FitResult> {
    check_samples(samples)?;
    config.validate()?;
    init.validate()?;
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| samples[i]).collect();
    if sorted.first() == sorted.last() {
        return Err(Error::DegenerateData("all samples are identical"));
    }
    let (_, spread) = mean_and_std(&sorted);
    let floor = config.variance_floor_factor * spread;

    let mut params = *init;
    params.normal.std_dev = params.normal.std_dev.max(floor);
    params.abnormal.std_dev = params.abnormal.std_dev.max(floor);

    let (mut resp, mut loglik) = e_step_with_loglik(&sorted, &params)?;
    let mut trace = vec![loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        params = m_step_inner(&sorted, &resp, floor, iterations)?;
        let (next_resp, next_loglik) = e_step_with_loglik(&sorted, &params)?;
        if next_loglik < loglik - 1e-9_f64.max(1e-12 * loglik.abs()) {
            log::warn!("log-likelihood decreased from {loglik} to {next_loglik} at iteration {iterations}");
        }
        trace.push(next_loglik);
        resp = next_resp;
        let change = (next_loglik - loglik).abs() / loglik.abs().max(1.0);
        loglik = next_loglik;
        if change < config.rel_loglik_tolerance {
            converged = true;
            break;
        }
    }

    let mut rows = vec![[0.0; 2]; samples.len()];
    for (row, &original) in resp.rows.iter().zip(&order) {
        rows[original] = *row;
    }
    Ok(FitResult {
        params,
        responsibilities: ResponsibilityMatrix { rows },
        loglik_trace: trace,
        iterations_used: iterations,
        converged,
    })
}

/// [`default_init`] followed by [`fit_em`].
pub fn fit_default(samples: &[f64], config: &FitConfig) -> Result<FitResult> {
    if samples.len() >= MIN_FIT_SAMPLES {
        let sorted = sorted_copy(samples);
        if sorted.first() == sorted.last() {
            return Err(Error::DegenerateData("all samples are identical"));
        }
    }
    let init = default_init(samples)?;
    fit_em(samples, &init, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn comp(m: f64, s: f64) -> GaussianComponent {
        GaussianComponent::new(m, s).unwrap()
    }

    fn params(m1: f64, s1: f64, m2: f64, s2: f64, eta: f64) -> MixtureParams {
        MixtureParams::from_tuple(m1, s1, m2, s2, eta).unwrap()
    }

    #[test]
    fn density_closed_form_values() {
        let inv_sqrt_2pi = 0.398_942_280_401_432_7;
        assert_relative_eq!(normal_density(0.0, &comp(0.0, 1.0)).unwrap(), inv_sqrt_2pi, max_relative = 1e-15);
        for s in [0.1, 1.0, 7.5] {
            assert_relative_eq!(
                normal_density(3.0, &comp(3.0, s)).unwrap(),
                inv_sqrt_2pi / s,
                max_relative = 1e-15
            );
        }
        // 40-digit reference: 0.05844094433345146031974861608987762890465
        assert_relative_eq!(
            normal_density(1.96, &comp(0.0, 1.0)).unwrap(),
            0.058_440_944_333_451_46,
            max_relative = 1e-14
        );
    }

    #[test]
    fn density_rejects_non_finite_sample() {
        assert!(matches!(
            normal_density(f64::NAN, &comp(0.0, 1.0)),
            Err(Error::InvalidSample { .. })
        ));
        assert!(GaussianComponent::new(0.0, 0.0).is_err());
    }

    #[test]
    fn e_step_identical_components_returns_prior() {
        let p = params(0.3, 2.0, 0.3, 2.0, 0.3);
        let r = e_step(&[-4.0, 0.0, 1.0, 12.0], &p).unwrap();
        for row in r.rows() {
            assert_relative_eq!(row[0], 0.7, max_relative = 1e-14);
            assert_relative_eq!(row[1], 0.3, max_relative = 1e-14);
        }
    }

    #[test]
    fn e_step_zero_weight_assigns_everything_to_normal() {
        let p = params(0.0, 1.0, 5.0, 1.0, 0.0);
        let r = e_step(&[-3.0, 0.0, 5.0, 50.0], &p).unwrap();
        assert!(r.rows().iter().all(|row| *row == [1.0, 0.0]));
    }

    #[test]
    fn e_step_density_ratio() {
        let p = params(0.0, 1.0, 5.0, 1.0, 0.5);
        let r = e_step(&[5.0], &p).unwrap();
        // 1 / (1 + exp(-12.5)) to 40 digits: 0.99999627336071581343861...
        assert_relative_eq!(r.row(0)[1], 0.999_996_273_360_715_8, max_relative = 1e-15);
        assert_relative_eq!(r.row(0)[0], (-12.5f64).exp() / (1.0 + (-12.5f64).exp()), max_relative = 1e-12);
    }

    #[test]
    fn e_step_survives_far_tails() {
        let p = params(0.0, 1.0, 0.0, 2.0, 0.1);
        let r = e_step(&[1e6], &p).unwrap();
        assert_eq!(r.row(0), [0.0, 1.0]);
    }

    #[test]
    fn m_step_hard_assignment() {
        let y = [1.0, 2.0, 3.0, 10.0, 12.0];
        let r = ResponsibilityMatrix::from_rows(vec![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let p = m_step(&y, &r, 0.0).unwrap();
        assert_relative_eq!(p.normal.mean, 2.0, max_relative = 1e-15);
        assert_relative_eq!(p.abnormal.mean, 11.0, max_relative = 1e-15);
        assert_relative_eq!(p.normal.std_dev, (2.0f64 / 3.0).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(p.abnormal.std_dev, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.abnormal_weight, 0.4, max_relative = 1e-15);
    }

    #[test]
    fn m_step_even_split_gives_global_moments() {
        let y = [1.0, 4.0, -2.0, 7.0, 0.5];
        let r = ResponsibilityMatrix::from_rows(vec![[0.5, 0.5]; 5]).unwrap();
        let p = m_step(&y, &r, 0.0).unwrap();
        let (m, s) = mean_and_std(&y);
        for c in [p.normal, p.abnormal] {
            assert_relative_eq!(c.mean, m, max_relative = 1e-14);
            assert_relative_eq!(c.std_dev, s, max_relative = 1e-14);
        }
        assert_eq!(p.abnormal_weight, 0.5);
    }

    #[test]
    fn m_step_empty_component() {
        let y = [1.0, 2.0, 3.0];
        let r = ResponsibilityMatrix::from_rows(vec![[1.0, 0.0]; 3]).unwrap();
        assert!(matches!(
            m_step(&y, &r, 0.0),
            Err(Error::EmptyComponent { component: 2, .. })
        ));
    }

    #[test]
    fn m_step_applies_floor() {
        let y = [1.0, 1.0, 5.0];
        let r = ResponsibilityMatrix::from_rows(vec![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let p = m_step(&y, &r, 0.25).unwrap();
        assert_eq!(p.normal.std_dev, 0.25);
        assert_eq!(p.abnormal.std_dev, 0.25);
    }

    #[test]
    fn loglik_examples() {
        let p = params(0.0, 1.0, 4.0, 1.0, 0.0);
        assert_relative_eq!(
            observed_log_likelihood(&[0.0], &p).unwrap(),
            -0.918_938_533_204_672_7,
            max_relative = 1e-15
        );
        let p = params(0.2, 1.3, 3.0, 4.0, 0.2);
        let y = [0.1, -2.0, 5.0, 3.3];
        let doubled: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
        assert_relative_eq!(
            observed_log_likelihood(&doubled, &p).unwrap(),
            2.0 * observed_log_likelihood(&y, &p).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn loglik_matches_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(-4.0..8.0)).collect();
        let p = params(0.5, 1.5, 3.0, 2.5, 0.3);
        let naive: f64 = y
            .iter()
            .map(|&v| {
                let f = |m: f64, s: f64| (-(v - m) * (v - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
                (0.7 * f(0.5, 1.5) + 0.3 * f(3.0, 2.5)).ln()
            })
            .sum();
        assert_relative_eq!(observed_log_likelihood(&y, &p).unwrap(), naive, max_relative = 1e-10);
    }

    fn draw_mixture(n: usize, truth: &MixtureParams, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(truth.normal.mean, truth.normal.std_dev).unwrap();
        let n2 = Normal::new(truth.abnormal.mean, truth.abnormal.std_dev).unwrap();
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < truth.abnormal_weight {
                    n2.sample(&mut rng)
                } else {
                    n1.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn recovers_generating_parameters() {
        let truth = params(0.0, 1.0, 5.0, 3.0, 0.05);
        let y = draw_mixture(20_000, &truth, 2024);
        let fit = fit_default(&y, &FitConfig::default()).unwrap();
        let p = fit.params;
        assert!(fit.converged);
        // about 1000 abnormal draws: the abnormal estimates carry a sampling error near 0.1
        assert!((p.normal.mean - 0.0).abs() < 0.05, "{p:?}");
        assert!((p.normal.std_dev - 1.0).abs() < 0.05, "{p:?}");
        assert!((p.abnormal.mean - 5.0).abs() < 0.4, "{p:?}");
        assert!((p.abnormal.std_dev - 3.0).abs() < 0.4, "{p:?}");
        assert!((p.abnormal_weight - 0.05).abs() < 0.01, "{p:?}");
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let y = vec![0.25; 40];
        let init = params(0.0, 1.0, 1.0, 1.0, 0.05);
        assert!(matches!(fit_em(&y, &init, &FitConfig::default()), Err(Error::DegenerateData(_))));
        assert!(matches!(default_init(&y[..10]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn too_few_samples() {
        let init = params(0.0, 1.0, 1.0, 1.0, 0.05);
        assert!(matches!(
            fit_em(&[1.0, 2.0, 3.0], &init, &FitConfig::default()),
            Err(Error::TooFewSamples { needed: 10, got: 3 })
        ));
    }

    #[test]
    fn default_init_on_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..2000).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
        let p = default_init(&y).unwrap();
        assert!(p.normal.mean.abs() < 0.05, "{p:?}");
        assert_eq!(p.abnormal_weight, 0.05);
        // the [5, 95] band of a standard normal has std ≈ 0.79
        assert!((p.normal.std_dev - 0.79).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn default_init_without_tail() {
        // every value sits on one of the band edges, so the tail is empty
        let mut y = vec![1.0; 5];
        y.extend(vec![3.0; 5]);
        let p = default_init(&y).unwrap();
        assert_eq!(p.normal.mean, 2.0);
        assert_eq!(p.normal.std_dev, 1.0);
        assert_eq!(p.abnormal.mean, 5.0);
        assert_eq!(p.abnormal.std_dev, 3.0);
    }

    #[test]
    fn default_init_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0) * rng.random_range(0.0..3.0)).collect();
        let a = default_init(&y).unwrap();
        for c in [0.01, 3.0, 1e5] {
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            let b = default_init(&scaled).unwrap();
            assert_relative_eq!(b.normal.mean, c * a.normal.mean, max_relative = 1e-12);
            assert_relative_eq!(b.normal.std_dev, c * a.normal.std_dev, max_relative = 1e-12);
            assert_relative_eq!(b.abnormal.mean, c * a.abnormal.mean, max_relative = 1e-12);
            assert_relative_eq!(b.abnormal.std_dev, c * a.abnormal.std_dev, max_relative = 1e-12);
            assert_eq!(b.abnormal_weight, a.abnormal_weight);
        }
    }

    /// Straightforward reimplementation of one EM iteration, kept independent of the
    /// log-domain code path.
    fn brute_force_iteration(y: &[f64], p: &MixtureParams) -> MixtureParams {
        let pdf = |x: f64, c: &GaussianComponent| {
            (-(x - c.mean).powi(2) / (2.0 * c.std_dev.powi(2))).exp() / (c.std_dev * (2.0 * std::f64::consts::PI).sqrt())
        };
        let d: Vec<(f64, f64)> = y
            .iter()
            .map(|&x| {
                let a = (1.0 - p.abnormal_weight) * pdf(x, &p.normal);
                let b = p.abnormal_weight * pdf(x, &p.abnormal);
                (a / (a + b), b / (a + b))
            })
            .collect();
        let update = |k: usize| {
            let w: Vec<f64> = d.iter().map(|r| if k == 0 { r.0 } else { r.1 }).collect();
            let total: f64 = w.iter().sum();
            let mean = w.iter().zip(y).map(|(w, x)| w * x).sum::<f64>() / total;
            let var = w.iter().zip(y).map(|(w, x)| w * (x - mean).powi(2)).sum::<f64>() / total;
            (total, mean, var.sqrt())
        };
        let (_, m1, s1) = update(0);
        let (w2, m2, s2) = update(1);
        params(m1, s1, m2, s2, w2 / y.len() as f64)
    }

    proptest! {
        #[test]
        fn one_iteration_matches_brute_force(
            y in prop::collection::vec(-5.0f64..5.0, 2..=20),
            m1 in -1.0f64..1.0, s1 in 0.5f64..2.0,
            m2 in -3.0f64..3.0, s2 in 0.5f64..4.0,
            eta in 0.05f64..0.6,
        ) {
            let p = params(m1, s1, m2, s2, eta);
            let r = e_step(&y, &p).unwrap();
            let ours = m_step(&y, &r, 0.0).unwrap();
            let oracle = brute_force_iteration(&y, &p);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
            prop_assert!(close(ours.normal.mean, oracle.normal.mean));
            prop_assert!(close(ours.normal.std_dev, oracle.normal.std_dev));
            prop_assert!(close(ours.abnormal.mean, oracle.abnormal.mean));
            prop_assert!(close(ours.abnormal.std_dev, oracle.abnormal.std_dev));
            prop_assert!(close(ours.abnormal_weight, oracle.abnormal_weight));
        }

        #[test]
        fn rows_are_stochastic(
            y in prop::collection::vec(-1e3f64..1e3, 1..50),
            m1 in -10.0f64..10.0, s1 in 1e-3f64..10.0,
            m2 in -10.0f64..10.0, s2 in 1e-3f64..10.0,
            eta in 0.0f64..=1.0,
        ) {
            let r = e_step(&y, &params(m1, s1, m2, s2, eta)).unwrap();
            for row in r.rows() {
                prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn fit_is_permutation_invariant(seed in 0u64..1000) {
            let truth = params(0.0, 1.0, 4.0, 2.0, 0.1);
            let y = draw_mixture(200, &truth, seed);
            let mut shuffled = y.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let init = default_init(&y).unwrap();
            let a = fit_em(&y, &init, &FitConfig::default()).unwrap();
            let b = fit_em(&shuffled, &init, &FitConfig::default()).unwrap();
            prop_assert_eq!(a.params, b.params);
            prop_assert_eq!(a.loglik_trace, b.loglik_trace);
        }

        #[test]
        fn fit_is_scale_equivariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
            let truth = params(0.0, 1.0, 3.0, 3.0, 0.1);
            let y = draw_mixture(300, &truth, seed);
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            // a short fixed budget keeps the two runs in lockstep; near convergence the
            // likelihood is flat to rounding and the stopping iteration can differ
            let config = FitConfig { max_iterations: 10, rel_loglik_tolerance: 1e-300, ..FitConfig::default() };
            let a = fit_default(&y, &config).unwrap();
            let b = fit_default(&scaled, &config).unwrap();
            prop_assert_eq!(a.iterations_used, b.iterations_used);
            // compared on the data scale: a mean near zero has no useful relative precision
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * c;
            prop_assert!(close(b.params.normal.mean, c * a.params.normal.mean));
            prop_assert!(close(b.params.normal.std_dev, c * a.params.normal.std_dev));
            prop_assert!(close(b.params.abnormal.mean, c * a.params.abnormal.mean));
            prop_assert!(close(b.params.abnormal.std_dev, c * a.params.abnormal.std_dev));
            prop_assert!((b.params.abnormal_weight - a.params.abnormal_weight).abs() <= 1e-9);
            for (ra, rb) in a.responsibilities.rows().iter().zip(b.responsibilities.rows()) {
                prop_assert!((ra[1] - rb[1]).abs() <= 1e-9);
            }
        }

        #[test]
        fn iterates_stay_feasible(seed in 0u64..500) {
            let truth = params(1.0, 0.5, -2.0, 4.0, 0.2);
            let y = draw_mixture(150, &truth, seed);
            let fit = fit_default(&y, &FitConfig::default()).unwrap();
            let (_, spread) = mean_and_std(&y);
            let floor = 1e-6 * spread;
            prop_assert!((0.0..=1.0).contains(&fit.params.abnormal_weight));
            prop_assert!(fit.params.normal.std_dev >= floor && fit.params.abnormal.std_dev >= floor);
            for w in fit.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
        }
    }
}

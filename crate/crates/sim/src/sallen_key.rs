//! Sallen-Key low-pass benchmark: `R₁R₂C₁C₂·V̈ + (R₁+R₂)C₂·V̇ + V = V_in`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::radau::{OdeSystem, RadauIIA};
use crate::schedule::FaultSchedule;
use crate::trace::SimTrace;
use crate::{quantile_sorted, split_seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub r1: f64,
    pub r2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl CircuitParams {
    /// R₁ = R₂ = 1 kΩ, C₁ = C₂ = 0.4 µF.
    pub const NOMINAL: CircuitParams = CircuitParams {
        r1: 1000.0,
        r2: 1000.0,
        c1: 0.4e-6,
        c2: 0.4e-6,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.r1, self.r2, self.c1, self.c2].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("circuit values must be positive: {self:?}")))
        }
    }

    /// Coefficients `(R₁R₂C₁C₂, (R₁+R₂)C₂)` of `V̈` and `V̇`.
    pub fn coefficients(&self) -> (f64, f64) {
        (self.r1 * self.r2 * self.c1 * self.c2, (self.r1 + self.r2) * self.c2)
    }

    /// Sum of the two pole time constants, `(R₁+R₂)C₂`.
    pub fn time_constant(&self) -> f64 {
        self.coefficients().1
    }

    /// `|H(jω)|`.
    pub fn gain(&self, omega: f64) -> f64 {
        let (a, b) = self.coefficients();
        1.0 / ((1.0 - omega * omega * a).powi(2) + (omega * b).powi(2)).sqrt()
    }
}

/// Parameter drift applied in abnormal periods. Second moments are variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDistribution {
    pub r1_mean: f64,
    pub r1_var: f64,
    pub c1_mean: f64,
    pub c1_var: f64,
    pub c2_mean: f64,
    pub c2_var: f64,
    /// Two-tail probability of output draws discarded before averaging.
    pub rejection_tail: f64,
}

impl Default for DriftDistribution {
    fn default() -> Self {
        Self {
            r1_mean: 1000.0,
            r1_var: 1000.0,
            c1_mean: 2.0,
            c1_var: 1.0,
            c2_mean: 2.0,
            c2_var: 1.0,
            rejection_tail: 0.04,
        }
    }
}

impl DriftDistribution {
    pub fn validate(&self) -> Result<()> {
        let vars_ok = [self.r1_var, self.c1_var, self.c2_var].iter().all(|v| *v >= 0.0 && v.is_finite());
        let means_ok = [self.r1_mean, self.c1_mean, self.c2_mean].iter().all(|v| v.is_finite());
        if !vars_ok || !means_ok || !(0.0..0.5).contains(&self.rejection_tail) {
            return Err(SimError::InvalidParams(format!("invalid drift distribution {self:?}")));
        }
        // a non-positive mean with zero variance can never yield a positive draw
        for (m, v) in [(self.r1_mean, self.r1_var), (self.c1_mean, self.c1_var), (self.c2_mean, self.c2_var)] {
            if v == 0.0 && m <= 0.0 {
                return Err(SimError::InvalidParams(format!("degenerate non-positive drift mean {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Single,
    Double,
}

pub const INPUT_AMPLITUDE: f64 = 100.0;
pub const INPUT_FREQUENCY_HZ: f64 = 400.0;

/// `100·sin(800πt)`, plus `100·sin(1600πt)` for the double-component input.
pub fn input_voltage(t: f64, kind: InputKind) -> f64 {
    let w = 2.0 * PI * INPUT_FREQUENCY_HZ;
    match kind {
        InputKind::Single => INPUT_AMPLITUDE * (w * t).sin(),
        InputKind::Double => INPUT_AMPLITUDE * ((w * t).sin() + (2.0 * w * t).sin()),
    }
}

struct Filter<'a, F> {
    a: f64,
    b: f64,
    input: &'a F,
}

impl<F: Fn(f64) -> f64> OdeSystem for Filter<'_, F> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = ((self.input)(t) - y[0] - self.b * y[1]) / self.a;
    }

    fn jacobian(&self, _t: f64, _y: &[f64], jac: &mut [f64]) {
        jac.copy_from_slice(&[0.0, 1.0, -1.0 / self.a, -self.b / self.a]);
    }
}

/// Integrates the filter over `t_span` from `initial = (V, V̇)` and returns the state at
/// `samples` uniform times `t0 + k·(t1 - t0)/samples`, `k = 1..=samples`.
///
/// Each sample interval is covered by equal Radau IIA steps no longer than `step`.
pub fn integrate_filter<F: Fn(f64) -> f64>(
    params: &CircuitParams,
    input: &F,
    t_span: (f64, f64),
    initial: [f64; 2],
    step: f64,
    samples: usize,
) -> Result<Vec<[f64; 2]>> {
    params.validate()?;
    let (t0, t1) = t_span;
    if !(step > 0.0) || !(t1 > t0) || samples == 0 {
        return Err(SimError::InvalidParams(format!(
            "need step > 0, t1 > t0 and samples > 0 (step {step}, span {t_span:?}, samples {samples})"
        )));
    }
    let (a, b) = params.coefficients();
    let sys = Filter { a, b, input };
    let solver = RadauIIA::default();
    let interval = (t1 - t0) / samples as f64;
    // tolerate rounding in interval / step so an exact ratio is not bumped up by one
    let sub = (interval / step - 1e-9).ceil().max(1.0) as usize;
    let h = interval / sub as f64;
    let mut y = initial;
    let mut out = Vec::with_capacity(samples);
    for k in 0..samples {
        let start = t0 + k as f64 * interval;
        for j in 0..sub {
            solver.step(&sys, start + j as f64 * h, &mut y, h)?;
        }
        out.push(y);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SallenKeyConfig {
    pub schedule: FaultSchedule,
    pub nominal: CircuitParams,
    pub drift: DriftDistribution,
    pub input: InputKind,
    pub mc_draws: usize,
    /// Integrator steps per period.
    pub steps_per_period: usize,
    pub seed: u64,
}

impl SallenKeyConfig {
    /// 630 periods over 20 ms with faults at periods 151–160, 211–220 and 501–510.
    pub fn paper(input: InputKind, seed: u64) -> Self {
        Self {
            schedule: FaultSchedule::over_span(630, 0.02, vec![(151, 160), (211, 220), (501, 510)])
                .expect("valid preset"),
            nominal: CircuitParams::NOMINAL,
            drift: DriftDistribution::default(),
            input,
            mc_draws: 1000,
            steps_per_period: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.nominal.validate()?;
        self.drift.validate()?;
        if self.mc_draws == 0 || self.steps_per_period == 0 {
            return Err(SimError::InvalidParams("mc_draws and steps_per_period must be positive".into()));
        }
        Ok(())
    }
}

const MAX_REDRAWS: usize = 10_000;

/// Normal draw truncated to positive values by redrawing.
fn positive_draw<R: Rng>(rng: &mut R, mean: f64, var: f64) -> Result<f64> {
    if var == 0.0 {
        return Ok(mean);
    }
    let dist = Normal::new(mean, var.sqrt()).expect("finite moments");
    (0..MAX_REDRAWS)
        .map(|_| dist.sample(rng))
        .find(|v| *v > 0.0)
        .ok_or_else(|| SimError::InvalidParams(format!("N({mean}, {var}) almost never yields a positive value")))
}

fn draw_params(nominal: &CircuitParams, drift: &DriftDistribution, seed: u64) -> Result<CircuitParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(CircuitParams {
        r1: positive_draw(&mut rng, drift.r1_mean, drift.r1_var)?,
        r2: nominal.r2,
        c1: positive_draw(&mut rng, drift.c1_mean, drift.c1_var)?,
        c2: positive_draw(&mut rng, drift.c2_mean, drift.c2_var)?,
    })
}

/// Runs the benchmark with the filter state carried across period boundaries.
///
/// Abnormal periods integrate `mc_draws` drifted circuits from the current state, drop
/// draws whose output lies in the empirical two-tail rejection region, and continue from
/// the mean of the surviving states.
pub fn run_benchmark(config: &SallenKeyConfig) -> Result<SimTrace> {
    config.validate()?;
    let schedule = &config.schedule;
    let dt = schedule.period_duration;
    let h = dt / config.steps_per_period as f64;
    let input = |t: f64| input_voltage(t, config.input);
    let mut state = [0.0, 0.0];
    let mut outputs = Vec::with_capacity(schedule.total_periods);

    for period in 1..=schedule.total_periods {
        let span = ((period - 1) as f64 * dt, period as f64 * dt);
        if !schedule.pattern(period).is_abnormal() {
            state = integrate_filter(&config.nominal, &input, span, state, h, 1)?[0];
        } else {
            let draws: Vec<[f64; 2]> = (0..config.mc_draws)
                .into_par_iter()
                .map(|d| {
                    let params = draw_params(&config.nominal, &config.drift, split_seed(config.seed, period as u64, d as u64))?;
                    integrate_filter(&params, &input, span, state, h, 1).map(|v| v[0])
                })
                .collect::<Result<_>>()?;
            state = reject_and_average(&draws, config.drift.rejection_tail).ok_or(SimError::RejectionExhausted { period })?;
        }
        outputs.push(state[0]);
    }

    let description = match config.input {
        InputKind::Single => "100 sin(800 pi t) V",
        InputKind::Double => "100 sin(800 pi t) + 100 sin(1600 pi t) V",
    };
    Ok(SimTrace::from_schedule(schedule, outputs, description.to_string()))
}

fn reject_and_average(draws: &[[f64; 2]], tail: f64) -> Option<[f64; 2]> {
    let (lo, hi) = if tail > 0.0 {
        let mut v: Vec<f64> = draws.iter().map(|d| d[0]).collect();
        v.sort_by(f64::total_cmp);
        (quantile_sorted(&v, tail / 2.0), quantile_sorted(&v, 1.0 - tail / 2.0))
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let kept: Vec<&[f64; 2]> = draws.iter().filter(|d| d[0] >= lo && d[0] <= hi).collect();
    if kept.is_empty() {
        return None;
    }
    let n = kept.len() as f64;
    Some([
        kept.iter().map(|d| d[0]).sum::<f64>() / n,
        kept.iter().map(|d| d[1]).sum::<f64>() / n,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_run(span: (f64, f64), samples: usize, step: f64, input: impl Fn(f64) -> f64) -> Vec<[f64; 2]> {
        integrate_filter(&CircuitParams::NOMINAL, &input, span, [0.0, 0.0], step, samples).unwrap()
    }

    #[test]
    fn input_examples() {
        assert_eq!(input_voltage(0.0, InputKind::Single), 0.0);
        assert!((input_voltage(1.0 / 1600.0, InputKind::Single) - 100.0).abs() < 1e-12);
        assert!((input_voltage(1.0 / 1600.0, InputKind::Double) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let out = nominal_run((0.0, 0.01), 50, 1e-5, |_| 0.0);
        assert!(out.iter().all(|s| s[0] == 0.0 && s[1] == 0.0));
    }

    #[test]
    fn step_response_matches_closed_form() {
        // critically damped: V(t) = V0 (1 - (1 + w t) e^{-w t}), w = 2500 rad/s
        let w = 2500.0;
        let out = nominal_run((0.0, 4e-3), 40, 1e-6, |_| 7.0);
        for (k, s) in out.iter().enumerate() {
            let t = (k + 1) as f64 * 1e-4;
            let exact = 7.0 * (1.0 - (1.0 + w * t) * (-w * t).exp());
            assert!((s[0] - exact).abs() < 1e-9, "t = {t}: {} vs {exact}", s[0]);
        }
    }

    #[test]
    fn zero_variance_drift_is_deterministic_fault() {
        let drift = DriftDistribution {
            r1_var: 0.0,
            c1_var: 0.0,
            c2_var: 0.0,
            c1_mean: 1e-6,
            c2_mean: 2e-6,
            ..Default::default()
        };
        let schedule = FaultSchedule::new(12, 1e-4, vec![(4, 6)]).unwrap();
        let config = SallenKeyConfig {
            schedule: schedule.clone(),
            nominal: CircuitParams::NOMINAL,
            drift,
            input: InputKind::Single,
            mc_draws: 8,
            steps_per_period: 20,
            seed: 1,
        };
        let trace = run_benchmark(&config).unwrap();
        let faulty = CircuitParams { r1: 1000.0, r2: 1000.0, c1: 1e-6, c2: 2e-6 };
        let input = |t| input_voltage(t, InputKind::Single);
        let h = 1e-4 / 20.0;
        let mut state = [0.0, 0.0];
        for p in 1..=12 {
            let params = if (4..=6).contains(&p) { faulty } else { CircuitParams::NOMINAL };
            state = integrate_filter(&params, &input, ((p - 1) as f64 * 1e-4, p as f64 * 1e-4), state, h, 1).unwrap()[0];
            assert!((trace.outputs[p - 1] - state[0]).abs() <= 1e-12 * state[0].abs().max(1e-12), "period {p}");
        }
    }

    #[test]
    fn fault_free_schedule_equals_nominal_integration() {
        let mut config = SallenKeyConfig::paper(InputKind::Double, 3);
        config.schedule = FaultSchedule::over_span(630, 0.02, vec![]).unwrap();
        let trace = run_benchmark(&config).unwrap();
        let input = |t| input_voltage(t, InputKind::Double);
        let direct = integrate_filter(&CircuitParams::NOMINAL, &input, (0.0, 0.02), [0.0, 0.0], 0.02 / 630.0 / 20.0, 630).unwrap();
        for (a, b) in trace.outputs.iter().zip(&direct) {
            assert!((a - b[0]).abs() <= 1e-9 * b[0].abs().max(1.0));
        }
    }

    #[test]
    fn rejection_keeps_central_draws() {
        let draws: Vec<[f64; 2]> = (0..101).map(|i| [i as f64, 1.0]).collect();
        let avg = reject_and_average(&draws, 0.04).unwrap();
        assert_eq!(avg, [50.0, 1.0]);
        let lopsided: Vec<[f64; 2]> = (0..10).map(|i| [if i == 9 { 1e6 } else { 1.0 }, 0.0]).collect();
        assert_eq!(reject_and_average(&lopsided, 0.4).unwrap()[0], 1.0);
        assert_eq!(reject_and_average(&lopsided, 0.0).unwrap()[0], (9.0 + 1e6) / 10.0);
    }

    #[test]
    fn truncated_draws_are_positive() {
        let drift = DriftDistribution { c1_mean: 0.1, c1_var: 4.0, ..Default::default() };
        for s in 0..200 {
            let p = draw_params(&CircuitParams::NOMINAL, &drift, s).unwrap();
            assert!(p.r1 > 0.0 && p.c1 > 0.0 && p.c2 > 0.0);
            assert_eq!(p.r2, 1000.0);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(DriftDistribution { rejection_tail: 0.5, ..Default::default() }.validate().is_err());
        assert!(DriftDistribution { r1_var: -1.0, ..Default::default() }.validate().is_err());
        assert!(CircuitParams { r1: 0.0, ..CircuitParams::NOMINAL }.validate().is_err());
        let mut c = SallenKeyConfig::paper(InputKind::Single, 0);
        c.mc_draws = 0;
        assert!(run_benchmark(&c).is_err());
    }
}

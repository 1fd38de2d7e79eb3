//! Macrospin Landau-Lifshitz-Gilbert benchmark in spherical coordinates.
//!
//! Time is physical (seconds). The dimensionless field `h = (0, -h_d·m_y, m_z)` is scaled
//! by `ω_k = Γ·H_k` with `H_k = 2k_u/M_s`, and the spin torque enters as a rate in 1/s.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::schedule::FaultSchedule;
use crate::trace::SimTrace;

pub const POLE_EPSILON: f64 = 1e-10;
pub const POLE_NUDGE: f64 = 1e-9;

type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlgParams {
    /// Anisotropy constant, erg/cm³.
    pub k_u: f64,
    /// Gyromagnetic ratio, rad/(Oe·s).
    pub gamma: f64,
    pub lambda: f64,
    /// Demagnetizing field (dimensionless).
    pub h_d: f64,
    /// Electron charge, C.
    pub q: f64,
    /// Saturation magnetization, emu/cm³.
    pub m_s: f64,
    /// Volume, cm³.
    pub volume: f64,
    /// Bohr magneton, erg/G.
    pub mu_b: f64,
    /// Spin current, A.
    pub i_s: f64,
    pub polarization: Vec3,
}

impl Default for LlgParams {
    fn default() -> Self {
        Self {
            k_u: 3.14e4,
            gamma: 1.76e7,
            lambda: 0.007,
            h_d: 0.0,
            q: 1.6e-19,
            m_s: 780.0,
            volume: 2.72e-17,
            mu_b: 9.274e-21,
            i_s: 1.814e-4,
            polarization: [0.0, 0.0, 1.0],
        }
    }
}

impl LlgParams {
    pub fn validate(&self) -> Result<()> {
        let norm = dot(self.polarization, self.polarization).sqrt();
        let ok = self.gamma > 0.0
            && self.lambda >= 0.0
            && self.m_s > 0.0
            && self.volume > 0.0
            && self.mu_b > 0.0
            && self.q > 0.0
            && self.k_u > 0.0
            && self.h_d.is_finite()
            && self.i_s.is_finite()
            && (norm - 1.0).abs() < 1e-12;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("invalid LLG parameters {self:?}")))
        }
    }

    /// Anisotropy field `2k_u/M_s` in Oe.
    pub fn anisotropy_field(&self) -> f64 {
        2.0 * self.k_u / self.m_s
    }

    /// `Γ·H_k`, rad/s.
    pub fn field_rate(&self) -> f64 {
        self.gamma * self.anisotropy_field()
    }

    /// `I_s / (q·N_s)`, 1/s.
    pub fn torque_rate(&self) -> f64 {
        self.i_s / (self.q * spin_count(self))
    }
}

/// `N_s = M_s·V/μ_B`.
pub fn spin_count(params: &LlgParams) -> f64 {
    params.m_s * params.volume / params.mu_b
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetState {
    pub theta: f64,
    pub phi: f64,
}

impl MagnetState {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    pub fn cartesian(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn m_x(&self) -> f64 {
        self.cartesian()[0]
    }
}

pub fn effective_field(m: Vec3, params: &LlgParams) -> Vec3 {
    [0.0, -params.h_d * m[1], m[2]]
}

/// `m × (I_s p × m) / (q N_s)`.
pub fn spin_torque(m: Vec3, params: &LlgParams) -> Vec3 {
    let r = params.torque_rate();
    let t = cross(m, cross(params.polarization, m));
    [r * t[0], r * t[1], r * t[2]]
}

/// `dm/dt` in Cartesian form.
pub fn cartesian_rhs(m: Vec3, params: &LlgParams) -> Vec3 {
    let w = params.field_rate();
    let l = params.lambda;
    let h = effective_field(m, params);
    let mh = cross(m, h);
    let mmh = cross(m, mh);
    let tau = spin_torque(m, params);
    let mt = cross(m, tau);
    let k = 1.0 / (1.0 + l * l);
    std::array::from_fn(|i| k * (-w * mh[i] - l * w * mmh[i] + tau[i] + l * mt[i]))
}

/// `(dθ/dt, dφ/dt)`: the Cartesian rate projected on `θ̂` and `φ̂ / sin θ`.
pub fn llg_rhs(state: MagnetState, params: &LlgParams) -> Result<[f64; 2]> {
    let (st, ct) = state.theta.sin_cos();
    if st.abs() < POLE_EPSILON {
        return Err(SimError::CoordinateSingularity { theta: state.theta });
    }
    let (sp, cp) = state.phi.sin_cos();
    let mdot = cartesian_rhs([st * cp, st * sp, ct], params);
    let theta_hat = [ct * cp, ct * sp, -st];
    let phi_hat = [-sp, cp, 0.0];
    Ok([dot(mdot, theta_hat), dot(mdot, phi_hat) / st])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbmSolver {
    /// Upper bound on the internal step, seconds.
    pub max_step: f64,
}

impl Default for AbmSolver {
    fn default() -> Self {
        Self { max_step: 0.5e-12 }
    }
}

fn rk4(y: [f64; 2], h: f64, params: &LlgParams) -> Result<[f64; 2]> {
    let f = |y: [f64; 2]| llg_rhs(MagnetState::new(y[0], y[1]), params);
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    let k1 = f(y)?;
    let k2 = f(add(y, k1, h / 2.0))?;
    let k3 = f(add(y, k2, h / 2.0))?;
    let k4 = f(add(y, k3, h))?;
    Ok(std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
}

/// Fourth-order Adams-Bashforth-Moulton PECE integration, started with RK4.
///
/// Returns `sample_count` states at uniform times spanning `t_span`, endpoints included.
/// A state within [`POLE_EPSILON`] of a pole is moved [`POLE_NUDGE`] away from it and the
/// multistep history restarts.
pub fn integrate_llg(
    initial: MagnetState,
    params: &LlgParams,
    t_span: (f64, f64),
    sample_count: usize,
    solver: &AbmSolver,
) -> Result<Vec<MagnetState>> {
    params.validate()?;
    let (t0, t1) = t_span;
    if sample_count < 2 || !(t1 > t0) || !(solver.max_step > 0.0) {
        return Err(SimError::InvalidParams(format!(
            "need sample_count >= 2, t1 > t0, max_step > 0 (got {sample_count}, {t_span:?}, {})",
            solver.max_step
        )));
    }
    let interval = (t1 - t0) / (sample_count - 1) as f64;
    let sub = (interval / solver.max_step - 1e-9).ceil().max(1.0) as usize;
    let h = interval / sub as f64;
    let f = |y: [f64; 2]| llg_rhs(MagnetState::new(y[0], y[1]), params);

    let mut y = [initial.theta, initial.phi];
    let mut hist: Vec<[f64; 2]> = Vec::with_capacity(5);
    let mut out = Vec::with_capacity(sample_count);
    out.push(initial);
    for k in 1..sample_count {
        for j in 0..sub {
            if y[0].sin().abs() < POLE_EPSILON {
                let nudged = if y[0].cos() > 0.0 { y[0] + POLE_NUDGE } else { y[0] - POLE_NUDGE };
                log::warn!(
                    "theta = {:e} at t = {:e} s is at a pole; moved to {nudged:e}",
                    y[0],
                    t0 + ((k - 1) * sub + j) as f64 * h
                );
                y[0] = nudged;
                hist.clear();
            }
            if hist.is_empty() {
                hist.push(f(y)?);
            }
            if hist.len() < 4 {
                y = rk4(y, h, params)?;
                hist.push(f(y)?);
                continue;
            }
            let [f3, f2, f1, f0] = [hist[0], hist[1], hist[2], hist[3]];
            let pred: [f64; 2] = std::array::from_fn(|i| {
                y[i] + h / 24.0 * (55.0 * f0[i] - 59.0 * f1[i] + 37.0 * f2[i] - 9.0 * f3[i])
            });
            let fp = f(pred)?;
            y = std::array::from_fn(|i| y[i] + h / 24.0 * (9.0 * fp[i] + 19.0 * f0[i] - 5.0 * f1[i] + f2[i]));
            hist.remove(0);
            hist.push(f(y)?);
        }
        out.push(MagnetState::new(y[0], y[1]));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlgBenchmarkConfig {
    pub schedule: FaultSchedule,
    pub params: LlgParams,
    pub initial: MagnetState,
    /// Mean and standard deviation of the polar angle drawn at each fault onset.
    pub azimuth_fault: (f64, f64),
    /// Observation noise standard deviation as a fraction of the clean peak-to-peak range.
    pub noise_fraction: f64,
    pub solver: AbmSolver,
    pub seed: u64,
}

impl LlgBenchmarkConfig {
    fn paper(segments: Vec<(usize, usize)>, seed: u64) -> Self {
        Self {
            schedule: FaultSchedule::over_span(200, 0.8e-9, segments).expect("valid preset"),
            params: LlgParams::default(),
            initial: MagnetState::new(PI / 4.0, 0.0),
            azimuth_fault: (PI / 4.0, PI / 12.0),
            noise_fraction: 0.01,
            solver: AbmSolver::default(),
            seed,
        }
    }

    /// 200 periods over 0.8 ns with one fault at periods 51–60.
    pub fn paper_single(seed: u64) -> Self {
        Self::paper(vec![(51, 60)], seed)
    }

    /// 200 periods over 0.8 ns with faults at periods 51–60, 91–100 and 121–130.
    pub fn paper_multi(seed: u64) -> Self {
        Self::paper(vec![(51, 60), (91, 100), (121, 130)], seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.params.validate()?;
        let (mean, std) = self.azimuth_fault;
        if !mean.is_finite() || !(std >= 0.0) || !std.is_finite() || !(self.noise_fraction >= 0.0) {
            return Err(SimError::InvalidParams("fault spread and noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Runs the LLG benchmark and reports `m_x` once per period.
///
/// At the first period `s` of an abnormal segment `(s, e)` the polar angle is redrawn from
/// the fault distribution, keeping the nominal azimuth, and the magnet evolves from there
/// for periods `s..e-1`. From period `e` on the output is back on the nominal trajectory,
/// so both the onset and the recovery jump fall inside the labelled segment.
pub fn run_llg_benchmark(config: &LlgBenchmarkConfig) -> Result<SimTrace> {
    config.validate()?;
    let schedule = &config.schedule;
    let p = schedule.total_periods;
    let dt = schedule.period_duration;
    let nominal = integrate_llg(config.initial, &config.params, (0.0, schedule.duration()), p + 1, &config.solver)?;
    let mut clean: Vec<f64> = nominal[1..].iter().map(MagnetState::m_x).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mean, std) = config.azimuth_fault;
    for &(s, e) in &schedule.abnormal_segments {
        let theta = if std == 0.0 {
            mean
        } else {
            Normal::new(mean, std).expect("validated").sample(&mut rng)
        };
        if e == s {
            continue;
        }
        let start = MagnetState::new(theta, nominal[s - 1].phi);
        let span = ((s - 1) as f64 * dt, (e - 1) as f64 * dt);
        let faulty = integrate_llg(start, &config.params, span, e - s + 1, &config.solver)?;
        for (j, state) in faulty[1..].iter().enumerate() {
            clean[s - 1 + j] = state.m_x();
        }
    }

    let outputs = if config.noise_fraction > 0.0 {
        let (lo, hi) = clean.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let sigma = config.noise_fraction * (hi - lo);
        let noise = Normal::new(0.0, sigma).map_err(|e| SimError::InvalidParams(e.to_string()))?;
        clean.iter().map(|v| v + noise.sample(&mut rng)).collect()
    } else {
        clean
    };
    let description = format!(
        "m_x, polar angle fault N({mean:.6}, {std:.6}^2), noise {} of peak-to-peak",
        config.noise_fraction
    );
    Ok(SimTrace::from_schedule(schedule, outputs, description))
}

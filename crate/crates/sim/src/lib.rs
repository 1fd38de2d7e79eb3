//! Synthetic benchmarks with injected abnormal segments: a Sallen-Key low-pass filter driven
//! by a sinusoid and a spin-torque macrospin governed by the LLG equation.

pub mod error;
pub mod llg;
pub mod radau;
pub mod sallen_key;
pub mod schedule;
pub mod trace;

pub use error::{Result, SimError};
pub use llg::{run_llg_benchmark, AbmSolver, LlgBenchmarkConfig, LlgParams, MagnetState};
pub use sallen_key::{run_benchmark, CircuitParams, DriftDistribution, InputKind, SallenKeyConfig};
pub use schedule::{FaultSchedule, Pattern};
pub use trace::SimTrace;

/// Independent seed for draw `b` of stream `a` (splitmix64 finalizer).
pub(crate) fn split_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

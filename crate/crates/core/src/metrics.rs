//! Rate and fidelity metrics over completed batches.
//!
//! The distribution rate is `p_succ · R(F̄) / t_buffer` where `R` is the
//! Rains bound `1 − H_b(F)` of a Bell-diagonal state, clamped at zero, and
//! `F̄` is the mean delivered fidelity.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::error::{check_unit, Error, Result};
use crate::protocol::{BatchResult, SimConfig, Simulator};

/// Base-2 binary entropy with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_unit("x", x)?;
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Rains bound of a Bell-diagonal state with fidelity `fidelity`, in ebits.
pub fn rains_bound(fidelity: f64) -> Result<f64> {
    check_unit("fidelity", fidelity)?;
    if fidelity <= 0.5 {
        return Ok(0.0);
    }
    Ok((1.0 - binary_entropy(fidelity)?).max(0.0))
}

/// `dR/dF = log2(F / (1 − F))` above one half.
fn rains_slope(fidelity: f64) -> f64 {
    if fidelity <= 0.5 || fidelity >= 1.0 {
        0.0
    } else {
        (fidelity / (1.0 - fidelity)).log2()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateResult {
    pub memories: usize,
    pub buffer_steps: u64,
    pub trials: u64,
    pub successes: u64,
    pub p_succ: f64,
    /// Mean delivered fidelity; `None` without successes.
    pub mean_fidelity: Option<f64>,
    /// Ebits.
    pub rains: f64,
    /// Ebits per second.
    pub rate: f64,
    /// Ebits per second per end-node memory.
    pub per_memory_rate: f64,
    /// Delta-method standard error of `rate` from the binomial success count
    /// and the spread of delivered fidelities.
    pub rate_std_err: f64,
}

impl RateResult {
    pub fn per_memory_std_err(&self) -> f64 {
        self.rate_std_err / self.memories as f64
    }
}

pub fn rate_from_batch(batch: &BatchResult, config: &SimConfig) -> RateResult {
    let t_buffer = config.buffer_time();
    let p_succ = batch.success_prob();
    let fidelities = batch.fidelities();
    let n = fidelities.len();
    let mean_fidelity = (n > 0).then(|| fidelities.iter().sum::<f64>() / n as f64);

    let (rains, rate, rate_std_err) = match mean_fidelity {
        None => (0.0, 0.0, 0.0),
        Some(mean) => {
            let mean = mean.clamp(0.0, 1.0);
            let rains = rains_bound(mean).expect("mean of fidelities lies in [0, 1]");
            let rate = p_succ * rains / t_buffer;
            let var_p = p_succ * (1.0 - p_succ) / batch.trials as f64;
            let var_mean = if n > 1 {
                let ss: f64 = fidelities.iter().map(|f| (f - mean).powi(2)).sum();
                ss / (n - 1) as f64 / n as f64
            } else {
                0.0
            };
            let slope = rains_slope(mean);
            let var_rate =
                (rains / t_buffer).powi(2) * var_p + (p_succ * slope / t_buffer).powi(2) * var_mean;
            (rains, rate, var_rate.sqrt())
        }
    };

    RateResult {
        memories: config.memories,
        buffer_steps: config.buffer_steps,
        trials: batch.trials,
        successes: batch.successes(),
        p_succ,
        mean_fidelity,
        rains,
        rate,
        per_memory_rate: rate / config.memories as f64,
        rate_std_err,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferSweep {
    pub best: RateResult,
    /// One entry per buffer time, in increasing order.
    pub all: Vec<RateResult>,
}

/// Runs `template` at every buffer time in `range` and picks the one with the
/// highest rate (ties go to the shorter buffer).
pub fn optimize_buffer(template: &SimConfig, range: RangeInclusive<u64>) -> Result<BufferSweep> {
    if range.is_empty() || *range.start() == 0 {
        return Err(Error::Usage(format!(
            "buffer range {}..={} must be a nonempty range of positive integers",
            range.start(),
            range.end()
        )));
    }
    let all = range
        .map(|steps| {
            let cfg = template.with_buffer_steps(steps);
            let batch = Simulator::new(cfg.clone())?.run_batch();
            Ok(rate_from_batch(&batch, &cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = all
        .iter()
        .fold(None::<&RateResult>, |best, r| match best {
            Some(b) if b.rate >= r.rate => Some(b),
            _ => Some(r),
        })
        .expect("range is nonempty")
        .clone();
    Ok(BufferSweep { best, all })
}

/// Normalized histogram of delivered fidelities over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityDensity {
    pub samples: usize,
    pub bin_width: f64,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
}

impl FidelityDensity {
    /// True when there were no samples to bin; the bins are then empty.
    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width
    }

    /// Local maxima of the density, highest first.
    ///
    /// A bin counts as a peak when it is strictly higher than every other bin
    /// within `half_window` bins on either side and holds at least
    /// `min_fraction` of the tallest bin.
    pub fn peaks(&self, half_window: usize, min_fraction: f64) -> Vec<Peak> {
        let top = self.density.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return Vec::new();
        }
        let n = self.density.len();
        let mut peaks: Vec<Peak> = (0..n)
            .filter(|&i| {
                let d = self.density[i];
                let lo = i.saturating_sub(half_window);
                let hi = (i + half_window).min(n - 1);
                d >= min_fraction * top
                    && (lo..=hi)
                        .all(|j| j == i || self.density[j] < d || (self.density[j] == d && j > i))
            })
            .map(|i| Peak {
                bin: i,
                center: self.centers[i],
                density: self.density[i],
            })
            .collect();
        peaks.sort_by(|a, b| b.density.total_cmp(&a.density).then(a.bin.cmp(&b.bin)));
        peaks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub bin: usize,
    pub center: f64,
    pub density: f64,
}

pub fn fidelity_density(samples: &[f64], bins: usize) -> Result<FidelityDensity> {
    if bins == 0 {
        return Err(Error::Usage(
            "at least one histogram bin is required".into(),
        ));
    }
    let bin_width = 1.0 / bins as f64;
    let centers = (0..bins).map(|i| (i as f64 + 0.5) * bin_width).collect();
    let mut counts = vec![0u64; bins];
    for &s in samples {
        check_unit("fidelity sample", s)?;
        let i = ((s * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let density = if samples.is_empty() {
        Vec::new()
    } else {
        let norm = samples.len() as f64 * bin_width;
        counts.iter().map(|&c| c as f64 / norm).collect()
    };
    Ok(FidelityDensity {
        samples: samples.len(),
        bin_width,
        centers: if samples.is_empty() {
            Vec::new()
        } else {
            centers
        },
        density,
    })
}

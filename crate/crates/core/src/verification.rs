//! Closed form vs. density-matrix oracle over a fixed parameter grid.

use crate::error::Result;
use crate::ops::{self, OperationNoise};
use crate::oracle;
use crate::states::{make_state, MemoryQuality, StateFamily};

pub const FIDELITY_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const NOISE_GRID: [f64; 3] = [0.8, 0.9, 1.0];
pub const DECAY_STEPS: [u64; 4] = [0, 1, 10, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub formula: &'static str,
    pub inputs: String,
    pub closed_form: f64,
    pub oracle: f64,
    /// Rows where the printed closed form is not expected to match the
    /// modeled channel; reported, never fatal.
    pub known_discrepancy: bool,
}

impl Comparison {
    pub fn abs_diff(&self) -> f64 {
        (self.closed_form - self.oracle).abs()
    }

    pub fn within(&self, tol: f64) -> bool {
        self.abs_diff() <= tol
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<Comparison>,
}

impl Report {
    /// Rows outside `tol` that are not flagged as known discrepancies.
    pub fn failures(&self, tol: f64) -> impl Iterator<Item = &Comparison> {
        self.rows
            .iter()
            .filter(move |r| !r.known_discrepancy && !r.within(tol))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.failures(tol).next().is_none()
    }

    pub fn max_abs_diff(&self, formula: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.formula == formula)
            .map(Comparison::abs_diff)
            .reduce(f64::max)
    }

    fn push(&mut self, formula: &'static str, inputs: String, closed_form: f64, oracle: f64) {
        self.rows.push(Comparison {
            formula,
            inputs,
            closed_form,
            oracle,
            known_discrepancy: false,
        });
    }
}

fn pairs() -> impl Iterator<Item = (f64, f64)> {
    FIDELITY_GRID
        .iter()
        .flat_map(|&a| FIDELITY_GRID.iter().map(move |&b| (a, b)))
}

fn noises() -> impl Iterator<Item = OperationNoise> {
    NOISE_GRID.iter().flat_map(|&p| {
        NOISE_GRID
            .iter()
            .map(move |&eta| OperationNoise::new(p, eta).expect("grid values lie in [0, 1]"))
    })
}

pub fn perfect_operations() -> Result<Report> {
    let mut report = Report::default();
    let perfect = OperationNoise::perfect();
    for (f1, f2) in pairs() {
        let inputs = format!("F1={f1} F2={f2}");
        for family in [StateFamily::Dephased, StateFamily::Werner] {
            let s1 = make_state(family, f1)?;
            let s2 = make_state(family, f2)?;
            let (swap_name, p_name, f_name) = match family {
                StateFamily::Dephased => {
                    ("swap_dephased", "purify_dephased_p", "purify_dephased_F")
                }
                StateFamily::Werner => ("swap_werner", "purify_werner_p", "purify_werner_F"),
            };
            let closed = ops::swap(&s1, &s2, &perfect)?.fidelity();
            report.push(
                swap_name,
                inputs.clone(),
                closed,
                oracle::oracle_swap(&s1, &s2, &perfect)?,
            );

            let closed = ops::purify(&s1, &s2, &perfect)?;
            // Orthogonal dephased inputs never succeed; there is no conditional state.
            if closed.success_prob == 0.0 {
                continue;
            }
            let exact = oracle::oracle_purify(&s1, &s2, &perfect)?;
            report.push(
                p_name,
                inputs.clone(),
                closed.success_prob,
                exact.success_prob,
            );
            report.push(
                f_name,
                inputs.clone(),
                closed.state.fidelity(),
                exact.fidelity,
            );
        }
    }
    Ok(report)
}

/// Printed imperfect-operation Werner formulas, evaluated directly so that
/// the `p = η = 1` rows also check their reduction to the perfect case.
pub fn imperfect_operations() -> Result<Report> {
    let mut report = Report::default();
    for noise in noises() {
        for (f1, f2) in pairs() {
            let inputs = format!(
                "F1={f1} F2={f2} p={} eta={}",
                noise.p_gate(),
                noise.eta_meas()
            );
            let s1 = make_state(StateFamily::Werner, f1)?;
            let s2 = make_state(StateFamily::Werner, f2)?;

            let closed = ops::imperfect_werner_swap(f1, f2, &noise);
            report.push(
                "swap_werner_noisy",
                inputs.clone(),
                closed,
                oracle::oracle_swap(&s1, &s2, &noise)?,
            );

            let (p, f) = ops::imperfect_werner_purify(f1, f2, &noise);
            let exact = oracle::oracle_purify(&s1, &s2, &noise)?;
            report.push(
                "purify_werner_noisy_p",
                inputs.clone(),
                p,
                exact.success_prob,
            );
            report.push("purify_werner_noisy_F", inputs, f, exact.fidelity);
        }
    }
    Ok(report)
}

/// Memory decay against independent single-qubit channels with amplitude
/// `exp(−κt)`. The printed dephased update agrees with two-sided dephasing
/// only at `F = 1`; other dephased rows are flagged.
pub fn memory_decay(quality: &MemoryQuality) -> Result<Report> {
    let mut report = Report::default();
    for &f in &FIDELITY_GRID {
        for &n in &DECAY_STEPS {
            let inputs = format!("F={f} n={n} beta={}", quality.beta());
            for family in [StateFamily::Werner, StateFamily::Dephased] {
                let s = make_state(family, f)?;
                let closed = s.decayed(n, quality).fidelity();
                let exact = oracle::oracle_decay(&s, n, quality)?;
                let name = match family {
                    StateFamily::Werner => "decay_werner",
                    StateFamily::Dephased => "decay_dephased",
                };
                report.push(name, inputs.clone(), closed, exact);
                if family == StateFamily::Dephased && f < 1.0 && n > 0 {
                    report
                        .rows
                        .last_mut()
                        .expect("just pushed")
                        .known_discrepancy = true;
                }
            }
        }
    }
    Ok(report)
}

/// Every comparison, decay rows at the default memory quality
/// (κ = 1/s, τ = 1 ms).
pub fn full_report() -> Result<Report> {
    let quality = MemoryQuality::new(1.0, 1e-3)?;
    let mut report = perfect_operations()?;
    report.rows.extend(imperfect_operations()?.rows);
    report.rows.extend(memory_decay(&quality)?.rows);
    Ok(report)
}

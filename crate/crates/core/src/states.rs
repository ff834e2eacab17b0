//! Noisy Bell-state families and their fidelity dynamics in memory.
//!
//! Two families are tracked by a single scalar, the fidelity `F` to Φ⁺:
//!
//! - dephased: `F Φ⁺ + (1 − F) Φ⁻`
//! - Werner:   `F Φ⁺ + (1 − F)(Φ⁻ + Ψ⁺ + Ψ⁻)/3`
//!
//! Memory decoherence is expressed through the per-step quality factor
//! `β = exp(−2κτ)`; after `n` idle steps `βⁿ` enters an affine update of `F`.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateFamily {
    Dephased,
    Werner,
}

impl StateFamily {
    pub fn name(self) -> &'static str {
        match self {
            StateFamily::Dephased => "dephased",
            StateFamily::Werner => "werner",
        }
    }
}

impl std::fmt::Display for StateFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dephased" => Ok(StateFamily::Dephased),
            "werner" => Ok(StateFamily::Werner),
            other => Err(Error::Usage(format!(
                "unknown state family `{other}` (expected `dephased` or `werner`)"
            ))),
        }
    }
}

/// A Bell-diagonal two-qubit state from one of the two families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyBellState {
    family: StateFamily,
    fidelity: f64,
}

impl NoisyBellState {
    pub fn new(family: StateFamily, fidelity: f64) -> Result<Self> {
        check_unit("fidelity", fidelity)?;
        Ok(Self { family, fidelity })
    }

    /// Clamps tiny floating-point excursions outside `[0, 1]` produced by
    /// closed-form updates.
    pub(crate) fn from_update(family: StateFamily, fidelity: f64) -> Self {
        debug_assert!(
            (-1e-9..=1.0 + 1e-9).contains(&fidelity),
            "fidelity update left [0, 1]: {fidelity}"
        );
        Self {
            family,
            fidelity: fidelity.clamp(0.0, 1.0),
        }
    }

    pub fn family(&self) -> StateFamily {
        self.family
    }

    pub fn fidelity(&self) -> f64 {
        self.fidelity
    }

    /// Weights on (Φ⁺, Φ⁻, Ψ⁺, Ψ⁻).
    pub fn bell_weights(&self) -> [f64; 4] {
        let f = self.fidelity;
        match self.family {
            StateFamily::Dephased => [f, 1.0 - f, 0.0, 0.0],
            StateFamily::Werner => {
                let e = (1.0 - f) / 3.0;
                [f, e, e, e]
            }
        }
    }

    /// Fidelity after `steps` idle time steps in memories of quality `quality`.
    pub fn decayed(&self, steps: u64, quality: &MemoryQuality) -> Self {
        if steps == 0 {
            return *self;
        }
        let survival = quality.survival(steps);
        let f = self.fidelity;
        let fidelity = match self.family {
            StateFamily::Dephased => f * (1.0 + 2.0 * survival) / 3.0 + (1.0 - survival) / 6.0,
            StateFamily::Werner => f * survival + (1.0 - survival) / 4.0,
        };
        Self::from_update(self.family, fidelity)
    }
}

pub fn make_state(family: StateFamily, fidelity: f64) -> Result<NoisyBellState> {
    NoisyBellState::new(family, fidelity)
}

/// Per-step decoherence of a pair of memories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryQuality {
    beta: f64,
    kappa: f64,
    tau: f64,
}

impl MemoryQuality {
    /// `kappa` is the decoherence rate in 1/s, `tau` the step duration in s.
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Domain {
                name: "kappa",
                value: kappa,
                domain: "[0, inf)",
            });
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain {
                name: "tau",
                value: tau,
                domain: "(0, inf)",
            });
        }
        Ok(Self {
            beta: (-2.0 * kappa * tau).exp(),
            kappa,
            tau,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `βⁿ`.
    pub fn survival(&self, steps: u64) -> f64 {
        match i32::try_from(steps) {
            Ok(n) => self.beta.powi(n),
            Err(_) => self.beta.powf(steps as f64),
        }
    }
}

pub fn quality_factor(kappa: f64, tau: f64) -> Result<MemoryQuality> {
    MemoryQuality::new(kappa, tau)
}

/// Free-function form of [`NoisyBellState::decayed`]. The step count is
/// unsigned, so negative counts are unrepresentable.
pub fn decay(state: &NoisyBellState, n_steps: u64, quality: &MemoryQuality) -> NoisyBellState {
    state.decayed(n_steps, quality)
}

//! Closed-form transfer functions for generation, swapping and 2-to-1
//! recurrence purification.
//!
//! Imperfect operations follow the usual gate/measurement model: a two-qubit
//! gate is ideal with probability `p` and otherwise fully depolarizes its two
//! qubits; a single-qubit measurement reports the right outcome with
//! probability `η`. Closed forms for imperfect operations exist only for the
//! Werner family.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::states::{NoisyBellState, StateFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationNoise {
    p_gate: f64,
    eta_meas: f64,
}

impl OperationNoise {
    pub fn new(p_gate: f64, eta_meas: f64) -> Result<Self> {
        check_unit("p_gate", p_gate)?;
        check_unit("eta_meas", eta_meas)?;
        Ok(Self { p_gate, eta_meas })
    }

    pub const fn perfect() -> Self {
        Self {
            p_gate: 1.0,
            eta_meas: 1.0,
        }
    }

    pub fn p_gate(&self) -> f64 {
        self.p_gate
    }

    pub fn eta_meas(&self) -> f64 {
        self.eta_meas
    }

    pub fn is_perfect(&self) -> bool {
        self.p_gate == 1.0 && self.eta_meas == 1.0
    }

    /// Rejects noise that has no closed form for `family`.
    pub fn check_supported(&self, family: StateFamily) -> Result<()> {
        if family == StateFamily::Dephased && !self.is_perfect() {
            return Err(Error::UnsupportedNoise {
                p_gate: self.p_gate,
                eta_meas: self.eta_meas,
            });
        }
        Ok(())
    }
}

impl Default for OperationNoise {
    fn default() -> Self {
        Self::perfect()
    }
}

/// Elementary-link generation and swapping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// Elementary link length in km.
    pub link_length_km: f64,
    /// Fiber attenuation length in km.
    pub attenuation_length_km: f64,
    pub hardware_efficiency: f64,
    /// Fidelity of a freshly generated pair.
    pub raw_fidelity: f64,
    /// Probability that a swap heralds success.
    pub swap_success: f64,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("L0_km", self.link_length_km),
            ("L_att_km", self.attenuation_length_km),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value,
                    domain: "(0, inf)",
                });
            }
        }
        check_unit("eta_h", self.hardware_efficiency)?;
        check_unit("F0", self.raw_fidelity)?;
        check_unit("p_swap", self.swap_success)?;
        Ok(())
    }

    /// `p_g = exp(−L0/L_att)·η_h`: both photons cross half a link each.
    pub fn success_prob(&self) -> f64 {
        (-self.link_length_km / self.attenuation_length_km).exp() * self.hardware_efficiency
    }
}

pub fn gen_success_prob(params: &GenerationParams) -> f64 {
    params.success_prob()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurifyResult {
    pub success_prob: f64,
    /// State conditioned on success, twirled back into the input family.
    pub state: NoisyBellState,
}

fn same_family(a: &NoisyBellState, b: &NoisyBellState) -> Result<StateFamily> {
    if a.family() != b.family() {
        return Err(Error::FamilyMismatch(a.family(), b.family()));
    }
    Ok(a.family())
}

/// State after a successful swap of `s1` and `s2`.
///
/// Whether the swap heralds success is decided by the caller.
pub fn swap(
    s1: &NoisyBellState,
    s2: &NoisyBellState,
    noise: &OperationNoise,
) -> Result<NoisyBellState> {
    let family = same_family(s1, s2)?;
    noise.check_supported(family)?;
    let (f1, f2) = (s1.fidelity(), s2.fidelity());
    let fidelity = match family {
        StateFamily::Dephased => f1 * f2 + (1.0 - f1) * (1.0 - f2),
        StateFamily::Werner if noise.is_perfect() => f1 * f2 + (1.0 - f1) * (1.0 - f2) / 3.0,
        StateFamily::Werner => imperfect_werner_swap(f1, f2, noise),
    };
    Ok(NoisyBellState::from_update(family, fidelity))
}

/// Werner swap fidelity with gate and measurement noise. Reduces to the
/// perfect formula at `p = η = 1`.
pub fn imperfect_werner_swap(f1: f64, f2: f64, noise: &OperationNoise) -> f64 {
    let (p, eta) = (noise.p_gate(), noise.eta_meas());
    let (e1, e2) = ((1.0 - f1) / 3.0, (1.0 - f2) / 3.0);
    // One wrong measurement or two leave the same single Pauli error.
    let correct = f1 * f2 + 3.0 * e1 * e2;
    let flipped = f1 * e2 + e1 * f2 + 2.0 * e1 * e2;
    let eta2 = eta * eta;
    (1.0 - p) / 4.0 + p * (eta2 * correct + (1.0 - eta2) * flipped)
}

/// One round of 2-to-1 recurrence purification.
///
/// `kept` is the control pair that survives on success; the imperfect
/// formulas are not symmetric in the two inputs.
pub fn purify(
    kept: &NoisyBellState,
    sacrificed: &NoisyBellState,
    noise: &OperationNoise,
) -> Result<PurifyResult> {
    let family = same_family(kept, sacrificed)?;
    noise.check_supported(family)?;
    let (f1, f2) = (kept.fidelity(), sacrificed.fidelity());
    let (success_prob, fidelity) = match family {
        StateFamily::Dephased => {
            let p = f1 * f2 + (1.0 - f1) * (1.0 - f2);
            // p = 0 only for orthogonal inputs (Φ⁺ with Φ⁻); success never happens.
            let f = if p > 0.0 { f1 * f2 / p } else { f1 };
            (p, f)
        }
        StateFamily::Werner if noise.is_perfect() => {
            let cross = (f1 * (1.0 - f2) + (1.0 - f1) * f2) / 3.0;
            let both_bad = (1.0 - f1) * (1.0 - f2);
            let p = f1 * f2 + cross + 5.0 * both_bad / 9.0;
            (p, (f1 * f2 + both_bad / 9.0) / p)
        }
        StateFamily::Werner => imperfect_werner_purify(f1, f2, noise),
    };
    Ok(PurifyResult {
        success_prob: success_prob.clamp(0.0, 1.0),
        state: NoisyBellState::from_update(family, fidelity),
    })
}

/// `(success probability, fidelity)` of Werner purification with gate and
/// measurement noise; `f1` belongs to the kept pair.
pub fn imperfect_werner_purify(f1: f64, f2: f64, noise: &OperationNoise) -> (f64, f64) {
    let (p, eta) = (noise.p_gate(), noise.eta_meas());
    let (e1, e2) = ((1.0 - f1) / 3.0, (1.0 - f2) / 3.0);
    let agree = eta * eta + (1.0 - eta) * (1.0 - eta);
    let disagree = 2.0 * eta * (1.0 - eta);
    let p2 = p * p;

    let even_parity = f1 * f2 + f1 * e2 + e1 * f2 + 5.0 * e1 * e2;
    let odd_parity = 2.0 * f1 * e2 + 2.0 * e1 * f2 + 4.0 * e1 * e2;
    let success = p2 * (agree * even_parity + disagree * odd_parity) + (1.0 - p2) / 2.0;

    // Numerator and denominator of the printed fidelity, both scaled by p²
    // so that p = 0 stays finite.
    let good =
        p2 * (agree * (f1 * f2 + e1 * e2) + disagree * (f1 * e2 + e1 * e2)) + (1.0 - p2) / 8.0;
    (success, good / success)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::make_state;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn werner(f: f64) -> NoisyBellState {
        make_state(StateFamily::Werner, f).unwrap()
    }

    fn dephased(f: f64) -> NoisyBellState {
        make_state(StateFamily::Dephased, f).unwrap()
    }

    fn link(l0: f64, latt: f64, eta_h: f64) -> GenerationParams {
        GenerationParams {
            link_length_km: l0,
            attenuation_length_km: latt,
            hardware_efficiency: eta_h,
            raw_fidelity: 1.0,
            swap_success: 0.5,
        }
    }

    #[test]
    fn generation_probability() {
        assert_relative_eq!(
            gen_success_prob(&link(20.0, 20.0, 0.1)),
            0.036787944117144235,
            max_relative = 1e-15
        );
        assert_eq!(gen_success_prob(&link(20.0, 20.0, 0.0)), 0.0);
        assert_relative_eq!(
            gen_success_prob(&link(40.0, 20.0, 1.0)),
            0.1353352832366127,
            max_relative = 1e-15
        );
        assert!(link(0.0, 20.0, 0.1).validate().is_err());
        assert!(link(20.0, 20.0, 1.5).validate().is_err());
    }

    #[test]
    fn swap_examples() {
        let perfect = OperationNoise::perfect();
        assert_relative_eq!(
            swap(&dephased(1.0), &dephased(0.73), &perfect)
                .unwrap()
                .fidelity(),
            0.73
        );
        assert_relative_eq!(
            swap(&werner(0.25), &werner(0.25), &perfect)
                .unwrap()
                .fidelity(),
            0.25,
            epsilon = 1e-16
        );
        let reduced = swap(
            &werner(0.9),
            &werner(0.9),
            &OperationNoise::new(1.0, 1.0).unwrap(),
        );
        assert_relative_eq!(
            reduced.unwrap().fidelity(),
            0.8133333333333334,
            epsilon = 1e-15
        );

        let depolarized = OperationNoise::new(0.0, 0.7).unwrap();
        for (a, b) in [(0.6, 0.9), (1.0, 1.0), (0.3, 0.8)] {
            let out = swap(&werner(a), &werner(b), &depolarized).unwrap();
            assert_relative_eq!(out.fidelity(), 0.25, epsilon = 1e-16);
        }

        let noisy = OperationNoise::new(0.9, 0.9).unwrap();
        let out = swap(&werner(0.95), &werner(0.90), &noisy).unwrap();
        assert_relative_eq!(out.fidelity(), 0.65768, epsilon = 1e-14);
        assert_eq!(out.family(), StateFamily::Werner);
    }

    #[test]
    fn swap_errors() {
        let perfect = OperationNoise::perfect();
        assert!(matches!(
            swap(&werner(0.9), &dephased(0.9), &perfect),
            Err(Error::FamilyMismatch(..))
        ));
        let noisy = OperationNoise::new(0.9, 1.0).unwrap();
        assert!(matches!(
            swap(&dephased(0.9), &dephased(0.9), &noisy),
            Err(Error::UnsupportedNoise { .. })
        ));
        assert!(matches!(
            purify(&dephased(0.9), &dephased(0.9), &noisy),
            Err(Error::UnsupportedNoise { .. })
        ));
        assert!(OperationNoise::new(1.2, 0.9).is_err());
    }

    #[test]
    fn purify_examples() {
        let perfect = OperationNoise::perfect();
        let r = purify(&dephased(1.0), &dephased(1.0), &perfect).unwrap();
        assert_eq!((r.success_prob, r.state.fidelity()), (1.0, 1.0));

        let r = purify(&dephased(0.5), &dephased(0.5), &perfect).unwrap();
        assert_relative_eq!(r.success_prob, 0.5);
        assert_relative_eq!(r.state.fidelity(), 0.5);

        let r = purify(&dephased(0.9), &dephased(0.9), &perfect).unwrap();
        assert_relative_eq!(r.success_prob, 0.82, epsilon = 1e-15);
        assert_relative_eq!(r.state.fidelity(), 0.81 / 0.82, epsilon = 1e-15);

        let r = purify(&werner(0.9), &werner(0.9), &perfect).unwrap();
        assert_relative_eq!(r.success_prob, 0.8755555555555556, epsilon = 1e-15);
        assert_relative_eq!(r.state.fidelity(), 0.9263959390862944, epsilon = 1e-15);

        let noisy = OperationNoise::new(0.9, 0.9).unwrap();
        let r = purify(&werner(0.9), &werner(0.9), &noisy).unwrap();
        assert_relative_eq!(r.success_prob, 0.694688, epsilon = 1e-14);
        assert_relative_eq!(r.state.fidelity(), 0.8162311714035656, epsilon = 1e-14);
    }

    #[test]
    fn imperfect_purify_is_asymmetric() {
        let noise = OperationNoise::new(0.9, 0.8).unwrap();
        let a = purify(&werner(0.95), &werner(0.8), &noise).unwrap();
        let b = purify(&werner(0.8), &werner(0.95), &noise).unwrap();
        assert_relative_eq!(a.success_prob, b.success_prob, epsilon = 1e-15);
        assert_relative_eq!(a.state.fidelity(), 0.7663890148584841, epsilon = 1e-14);
        assert_relative_eq!(b.state.fidelity(), 0.7447815242617439, epsilon = 1e-14);
    }

    #[test]
    fn imperfect_formulas_reduce_to_perfect_ones() {
        let grid = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let perfect = OperationNoise::perfect();
        for &f1 in &grid {
            for &f2 in &grid {
                let closed = purify(&werner(f1), &werner(f2), &perfect).unwrap();
                let (p, f) = imperfect_werner_purify(f1, f2, &perfect);
                assert_relative_eq!(closed.success_prob, p, epsilon = 1e-15);
                assert_relative_eq!(closed.state.fidelity(), f, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn dephased_purification_improves_fidelity() {
        let perfect = OperationNoise::perfect();
        for i in 0..9 {
            let f = 0.55 + 0.05 * i as f64;
            let out = purify(&dephased(f), &dephased(f), &perfect).unwrap();
            assert!(out.state.fidelity() > f, "F = {f}");
        }
    }

    fn family() -> impl Strategy<Value = StateFamily> {
        prop_oneof![Just(StateFamily::Dephased), Just(StateFamily::Werner)]
    }

    proptest! {
        #[test]
        fn perfect_swap_is_symmetric(fam in family(), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let noise = OperationNoise::perfect();
            let s1 = make_state(fam, a).unwrap();
            let s2 = make_state(fam, b).unwrap();
            prop_assert_eq!(
                swap(&s1, &s2, &noise).unwrap().fidelity(),
                swap(&s2, &s1, &noise).unwrap().fidelity()
            );
        }

        #[test]
        fn perfect_werner_swap_is_monotone(a in 0.5..=1.0f64, b in 0.5..=1.0f64, da in 0.0..0.5f64) {
            let noise = OperationNoise::perfect();
            let hi = (a + da).min(1.0);
            let lo = swap(&werner(a), &werner(b), &noise).unwrap().fidelity();
            let up = swap(&werner(hi), &werner(b), &noise).unwrap().fidelity();
            prop_assert!(up >= lo);
        }

        #[test]
        fn outputs_are_probabilities(a in 0.0..=1.0f64, b in 0.0..=1.0f64,
                                     p in 0.0..=1.0f64, eta in 0.0..=1.0f64) {
            let noise = OperationNoise::new(p, eta).unwrap();
            let s = swap(&werner(a), &werner(b), &noise).unwrap().fidelity();
            prop_assert!((0.0..=1.0).contains(&s));
            let r = purify(&werner(a), &werner(b), &noise).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.success_prob));
            prop_assert!((0.0..=1.0).contains(&r.state.fidelity()));
        }
    }
}

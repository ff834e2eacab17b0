//! Exact density-matrix simulation of the swap and purification circuits
//! and of the memory channels.
//!
//! Nothing here calls into [`crate::ops`]; it exists to check those closed
//! forms independently. Matrices are dense and small (at most four qubits).
//!
//! Qubit `0` is the most significant bit of a basis index. For the two-pair
//! circuits the register is laid out as `(a, b) ⊗ (c, d)` where the first
//! pair occupies qubits 0 and 1 and the second pair qubits 2 and 3.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_unit, Error, Result};
use crate::ops::OperationNoise;
use crate::states::{MemoryQuality, NoisyBellState, StateFamily};

pub type CMatrix = DMatrix<Complex64>;

pub const MAX_QUBITS: usize = 4;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn bit(index: usize, qubit: usize, n: usize) -> usize {
    (index >> (n - 1 - qubit)) & 1
}

/// Bits of `index` at `qubits`, packed with the first listed qubit as MSB.
fn gather(index: usize, qubits: &[usize], n: usize) -> usize {
    qubits
        .iter()
        .fold(0, |acc, &q| (acc << 1) | bit(index, q, n))
}

/// `index` with the bits at `qubits` overwritten by `value` (same packing as
/// [`gather`]).
fn scatter(index: usize, qubits: &[usize], value: usize, n: usize) -> usize {
    let k = qubits.len();
    qubits.iter().enumerate().fold(index, |acc, (pos, &q)| {
        let b = (value >> (k - 1 - pos)) & 1;
        let mask = 1 << (n - 1 - q);
        if b == 1 {
            acc | mask
        } else {
            acc & !mask
        }
    })
}

/// A normalized mixed state on up to [`MAX_QUBITS`] qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Wraps `matrix` after checking the shape and the physical invariants.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(matrix)?;
        rho.check_physical()?;
        Ok(rho)
    }

    fn from_matrix_unchecked(matrix: CMatrix) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::Usage(format!(
                "density matrix must be square with a power-of-two dimension, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let qubits = dim.trailing_zeros() as usize;
        if qubits > MAX_QUBITS {
            return Err(Error::Usage(format!(
                "at most {MAX_QUBITS} qubits are supported, got {qubits}"
            )));
        }
        Ok(Self { qubits, matrix })
    }

    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Usage("zero state vector".into()));
        }
        let v = v.unscale(norm);
        Self::from_matrix(&v * v.adjoint())
    }

    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        let dim = 1usize << qubits;
        Self::from_matrix(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // Symmetrize first; eigen-decomposition of the Hermitian part only.
        let h = (&self.matrix + self.matrix.adjoint()).unscale(2.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian, unit trace and positive semidefinite within tolerance.
    pub fn check_physical(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::Usage(format!(
                "matrix is not Hermitian (defect {defect:e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Usage(format!("trace is {tr}, expected 1")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::Usage(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<Self> {
        Self::from_matrix_unchecked(self.matrix.kronecker(&other.matrix))
    }

    fn check_qubits(&self, qubits: &[usize]) -> Result<()> {
        for (i, &q) in qubits.iter().enumerate() {
            if q >= self.qubits {
                return Err(Error::Usage(format!(
                    "qubit {q} out of range for a {}-qubit state",
                    self.qubits
                )));
            }
            if qubits[..i].contains(&q) {
                return Err(Error::Usage(format!("qubit {q} listed twice")));
            }
        }
        Ok(())
    }

    /// `U ρ U†` with `U` acting on `qubits` (first listed qubit is the MSB of
    /// `U`'s index).
    pub fn apply_unitary(&self, unitary: &CMatrix, qubits: &[usize]) -> Result<Self> {
        self.check_qubits(qubits)?;
        if unitary.nrows() != 1 << qubits.len() || unitary.ncols() != unitary.nrows() {
            return Err(Error::Usage(format!(
                "a {}x{} operator cannot act on {} qubits",
                unitary.nrows(),
                unitary.ncols(),
                qubits.len()
            )));
        }
        let full = embed(unitary, qubits, self.qubits);
        Ok(Self {
            qubits: self.qubits,
            matrix: &full * &self.matrix * full.adjoint(),
        })
    }

    /// `I_S/2^|S| ⊗ tr_S ρ` for the qubit set `S`.
    fn replace_with_mixed(&self, qubits: &[usize]) -> Self {
        let n = self.qubits;
        let dim = self.dim();
        let k = qubits.len();
        let weight = 1.0 / (1 << k) as f64;
        let matrix = CMatrix::from_fn(dim, dim, |i, j| {
            if gather(i, qubits, n) != gather(j, qubits, n) {
                return Complex64::default();
            }
            let sum: Complex64 = (0..1 << k)
                .map(|s| self.matrix[(scatter(i, qubits, s, n), scatter(j, qubits, s, n))])
                .sum();
            sum * weight
        });
        Self { qubits: n, matrix }
    }

    /// Traces out `qubits`; the remaining qubits keep their relative order.
    pub fn partial_trace(&self, qubits: &[usize]) -> Result<Self> {
        self.check_qubits(qubits)?;
        if qubits.len() == self.qubits {
            return Err(Error::Usage("cannot trace out every qubit".into()));
        }
        Ok(self.sum_blocks(qubits, |_| true))
    }

    /// `Σ_s ⟨s|ρ|s⟩` over values `s` of `qubits` accepted by `keep`.
    fn sum_blocks(&self, qubits: &[usize], keep: impl Fn(usize) -> bool) -> Self {
        let n = self.qubits;
        let rest: Vec<usize> = (0..n).filter(|q| !qubits.contains(q)).collect();
        let out_dim = 1 << rest.len();
        let matrix = CMatrix::from_fn(out_dim, out_dim, |r, t| {
            (0..1 << qubits.len())
                .filter(|&s| keep(s))
                .map(|s| {
                    let i = scatter(scatter(0, &rest, r, n), qubits, s, n);
                    let j = scatter(scatter(0, &rest, t, n), qubits, s, n);
                    self.matrix[(i, j)]
                })
                .sum()
        });
        Self {
            qubits: rest.len(),
            matrix,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            qubits: self.qubits,
            matrix: self.matrix.scale(factor),
        }
    }

    fn mix(&self, weight: f64, other: &Self, other_weight: f64) -> Self {
        Self {
            qubits: self.qubits,
            matrix: self.matrix.scale(weight) + other.matrix.scale(other_weight),
        }
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Lifts a `2^k`-dimensional operator on `targets` to the full register.
fn embed(op: &CMatrix, targets: &[usize], n: usize) -> CMatrix {
    let dim = 1 << n;
    let rest: Vec<usize> = (0..n).filter(|q| !targets.contains(q)).collect();
    CMatrix::from_fn(dim, dim, |i, j| {
        if gather(i, &rest, n) == gather(j, &rest, n) {
            op[(gather(i, targets, n), gather(j, targets, n))]
        } else {
            Complex64::default()
        }
    })
}

pub fn hadamard() -> CMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_row_slice(2, 2, &[c(h), c(h), c(h), c(-h)])
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// Control is the first qubit of the pair it is applied to.
pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0);
    m[(1, 1)] = c(1.0);
    m[(2, 3)] = c(1.0);
    m[(3, 2)] = c(1.0);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn amplitudes(self) -> [Complex64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = c(0.0);
        match self {
            BellState::PhiPlus => [c(h), z, z, c(h)],
            BellState::PhiMinus => [c(h), z, z, c(-h)],
            BellState::PsiPlus => [z, c(h), c(h), z],
            BellState::PsiMinus => [z, c(h), c(-h), z],
        }
    }

    pub fn projector(self) -> CMatrix {
        let v = nalgebra::DVector::from_column_slice(&self.amplitudes());
        &v * v.adjoint()
    }
}

/// Density matrix with the Bell-diagonal weights of `state`.
pub fn bell_diagonal_density(state: &NoisyBellState) -> DensityMatrix {
    let matrix = BellState::ALL
        .iter()
        .zip(state.bell_weights())
        .fold(CMatrix::zeros(4, 4), |acc, (b, w)| {
            acc + b.projector().scale(w)
        });
    DensityMatrix { qubits: 2, matrix }
}

/// `⟨Φ⁺|ρ|Φ⁺⟩` for a two-qubit state.
pub fn fidelity_to_phi_plus(rho: &DensityMatrix) -> Result<f64> {
    if rho.num_qubits() != 2 {
        return Err(Error::Usage(format!(
            "fidelity to Φ⁺ needs a two-qubit state, got {} qubits",
            rho.num_qubits()
        )));
    }
    Ok(overlap(rho, BellState::PhiPlus))
}

fn overlap(rho: &DensityMatrix, bell: BellState) -> f64 {
    let v = nalgebra::DVector::from_column_slice(&bell.amplitudes());
    (v.adjoint() * &rho.matrix * &v)[(0, 0)].re
}

/// Single-qubit depolarizing channel `λρ + (1−λ) I/2 ⊗ tr_q ρ`.
pub fn apply_depolarizing(rho: &DensityMatrix, qubit: usize, lambda: f64) -> Result<DensityMatrix> {
    check_unit("lambda", lambda)?;
    rho.check_qubits(&[qubit])?;
    Ok(rho.mix(lambda, &rho.replace_with_mixed(&[qubit]), 1.0 - lambda))
}

/// Single-qubit dephasing channel `(1−q)ρ + q ZρZ`.
pub fn apply_dephasing(rho: &DensityMatrix, qubit: usize, flip_prob: f64) -> Result<DensityMatrix> {
    check_unit("flip_prob", flip_prob)?;
    let flipped = rho.apply_unitary(&pauli_z(), &[qubit])?;
    Ok(rho.mix(1.0 - flip_prob, &flipped, flip_prob))
}

/// Imperfect two-qubit gate `p UρU† + (1−p)/4 I_ij ⊗ tr_ij ρ`.
pub fn noisy_gate(
    rho: &DensityMatrix,
    gate: &CMatrix,
    qubits: (usize, usize),
    p: f64,
) -> Result<DensityMatrix> {
    check_unit("p", p)?;
    let targets = [qubits.0, qubits.1];
    let ideal = rho.apply_unitary(gate, &targets)?;
    Ok(ideal.mix(p, &rho.replace_with_mixed(&targets), 1.0 - p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBranch {
    pub probability: f64,
    /// Normalized state of the unmeasured qubits; `None` when the outcome
    /// has zero probability.
    pub state: Option<DensityMatrix>,
}

/// Unnormalized post-measurement states `tr_q(P̃_i ρ)` for `i = 0, 1`.
fn measure_unnormalized(rho: &DensityMatrix, qubit: usize, eta: f64) -> Result<[DensityMatrix; 2]> {
    check_unit("eta", eta)?;
    rho.check_qubits(&[qubit])?;
    if rho.num_qubits() < 2 {
        return Err(Error::Usage("cannot discard the only qubit".into()));
    }
    let zero = rho.sum_blocks(&[qubit], |s| s == 0);
    let one = rho.sum_blocks(&[qubit], |s| s == 1);
    Ok([
        zero.mix(eta, &one, 1.0 - eta),
        one.mix(eta, &zero, 1.0 - eta),
    ])
}

/// Noisy Z-basis measurement of `qubit` with POVM `η|i⟩⟨i| + (1−η)|1−i⟩⟨1−i|`;
/// the measured qubit is discarded.
pub fn noisy_measure(
    rho: &DensityMatrix,
    qubit: usize,
    eta: f64,
) -> Result<[MeasurementBranch; 2]> {
    let branches = measure_unnormalized(rho, qubit, eta)?;
    Ok(branches.map(|b| {
        let probability = b.trace().re;
        let state = (probability > 0.0).then(|| b.scaled(1.0 / probability));
        MeasurementBranch { probability, state }
    }))
}

/// Projects a two-qubit state onto `family`, keeping `⟨Φ⁺|ρ|Φ⁺⟩`.
///
/// For the dephased family this is only a twirl when the input is already
/// supported on {Φ⁺, Φ⁻}; otherwise the weight outside Φ⁺ is assigned to Φ⁻.
pub fn twirl(rho: &DensityMatrix, family: StateFamily) -> Result<DensityMatrix> {
    let f = fidelity_to_phi_plus(rho)?.clamp(0.0, 1.0);
    Ok(bell_diagonal_density(&NoisyBellState::new(family, f)?))
}

fn check_pair(
    a: &NoisyBellState,
    b: &NoisyBellState,
    noise: &OperationNoise,
) -> Result<StateFamily> {
    if a.family() != b.family() {
        return Err(Error::FamilyMismatch(a.family(), b.family()));
    }
    noise.check_supported(a.family())?;
    Ok(a.family())
}

/// Average fidelity after a Bell-state measurement on the middle qubits and
/// outcome-conditioned Pauli correction.
///
/// Circuit: noisy CNOT(1 → 2), ideal Hadamard on 1, noisy Z measurements of
/// 1 and 2, then `Z^{m1} X^{m2}` on qubit 3.
pub fn oracle_swap(
    s1: &NoisyBellState,
    s2: &NoisyBellState,
    noise: &OperationNoise,
) -> Result<f64> {
    check_pair(s1, s2, noise)?;
    let rho = bell_diagonal_density(s1).tensor(&bell_diagonal_density(s2))?;
    let rho = noisy_gate(&rho, &cnot(), (1, 2), noise.p_gate())?;
    let rho = rho.apply_unitary(&hadamard(), &[1])?;

    let mut average = CMatrix::zeros(4, 4);
    // Register after discarding qubit 1: (0, 2, 3).
    for (m1, after_first) in measure_unnormalized(&rho, 1, noise.eta_meas())?
        .iter()
        .enumerate()
    {
        // Register after discarding old qubit 2: (0, 3).
        for (m2, pair) in measure_unnormalized(after_first, 1, noise.eta_meas())?
            .iter()
            .enumerate()
        {
            let mut corrected = pair.clone();
            if m2 == 1 {
                corrected = corrected.apply_unitary(&pauli_x(), &[1])?;
            }
            if m1 == 1 {
                corrected = corrected.apply_unitary(&pauli_z(), &[1])?;
            }
            average += corrected.matrix;
        }
    }
    fidelity_to_phi_plus(&DensityMatrix::from_matrix(average)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePurification {
    pub success_prob: f64,
    pub fidelity: f64,
    /// Output conditioned on success, twirled into the input family.
    pub state: DensityMatrix,
}

/// Bilateral-CNOT recurrence purification.
///
/// Register: kept pair on qubits (0, 1), sacrificed pair on (2, 3); node A
/// holds 0 and 2, node B holds 1 and 3. Each node applies a noisy
/// CNOT(kept → sacrificed), both sacrificed qubits are measured with noise,
/// and the round succeeds when the reported outcomes agree. For the dephased
/// family both pairs are rotated by a local Hadamard on each qubit before
/// and after, which turns phase errors into detectable bit flips.
pub fn oracle_purify(
    kept: &NoisyBellState,
    sacrificed: &NoisyBellState,
    noise: &OperationNoise,
) -> Result<OraclePurification> {
    let family = check_pair(kept, sacrificed, noise)?;
    let rotate = family == StateFamily::Dephased;
    let mut rho = bell_diagonal_density(kept).tensor(&bell_diagonal_density(sacrificed))?;
    if rotate {
        for q in 0..4 {
            rho = rho.apply_unitary(&hadamard(), &[q])?;
        }
    }
    rho = noisy_gate(&rho, &cnot(), (0, 2), noise.p_gate())?;
    rho = noisy_gate(&rho, &cnot(), (1, 3), noise.p_gate())?;

    let mut success = CMatrix::zeros(4, 4);
    for (m_a, after_a) in measure_unnormalized(&rho, 2, noise.eta_meas())?
        .iter()
        .enumerate()
    {
        // Register is now (0, 1, 3); old qubit 3 sits at index 2.
        for (m_b, pair) in measure_unnormalized(after_a, 2, noise.eta_meas())?
            .iter()
            .enumerate()
        {
            if m_a == m_b {
                success += &pair.matrix;
            }
        }
    }
    let mut out = DensityMatrix {
        qubits: 2,
        matrix: success,
    };
    if rotate {
        for q in 0..2 {
            out = out.apply_unitary(&hadamard(), &[q])?;
        }
    }
    let success_prob = out.trace().re;
    if success_prob <= 0.0 {
        return Err(Error::Usage(
            "purification cannot succeed for these inputs".into(),
        ));
    }
    let conditional = DensityMatrix::from_matrix(out.matrix.unscale(success_prob))?;
    let fidelity = fidelity_to_phi_plus(&conditional)?;
    Ok(OraclePurification {
        success_prob,
        fidelity,
        state: twirl(&conditional, family)?,
    })
}

/// Fidelity of `state` after `steps` idle steps, evolved by independent
/// single-qubit channels with amplitude `exp(−κt)`, `t = steps·τ`.
///
/// Werner states see depolarizing noise; dephased states see Z dephasing.
pub fn oracle_decay(state: &NoisyBellState, steps: u64, quality: &MemoryQuality) -> Result<f64> {
    let elapsed = steps as f64 * quality.tau();
    let amplitude = (-quality.kappa() * elapsed).exp();
    let mut rho = bell_diagonal_density(state);
    for q in 0..2 {
        rho = match state.family() {
            StateFamily::Werner => apply_depolarizing(&rho, q, amplitude)?,
            StateFamily::Dephased => apply_dephasing(&rho, q, (1.0 - amplitude) / 2.0)?,
        };
    }
    fidelity_to_phi_plus(&rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::make_state;
    use approx::assert_relative_eq;

    fn werner(f: f64) -> NoisyBellState {
        make_state(StateFamily::Werner, f).unwrap()
    }

    fn dephased(f: f64) -> NoisyBellState {
        make_state(StateFamily::Dephased, f).unwrap()
    }

    fn ket(bits: &[f64]) -> DensityMatrix {
        DensityMatrix::pure(&bits.iter().map(|&b| c(b)).collect::<Vec<_>>()).unwrap()
    }

    fn assert_matrix_eq(a: &CMatrix, b: &CMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let diff = max_abs(&(a - b));
        assert!(diff <= tol, "max entry difference {diff:e}");
    }

    #[test]
    fn bell_diagonal_examples() {
        let pure = bell_diagonal_density(&werner(1.0));
        assert_matrix_eq(pure.matrix(), &BellState::PhiPlus.projector(), 1e-15);
        let mixed = bell_diagonal_density(&werner(0.25));
        assert_matrix_eq(
            mixed.matrix(),
            DensityMatrix::maximally_mixed(2).unwrap().matrix(),
            1e-15,
        );
        let rho = bell_diagonal_density(&dephased(0.9));
        rho.check_physical().unwrap();
        assert_relative_eq!(fidelity_to_phi_plus(&rho).unwrap(), 0.9, epsilon = 1e-15);
        assert_relative_eq!(overlap(&rho, BellState::PhiMinus), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn fidelity_readback() {
        let phi = bell_diagonal_density(&werner(1.0));
        assert_relative_eq!(fidelity_to_phi_plus(&phi).unwrap(), 1.0, epsilon = 1e-15);
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert_relative_eq!(fidelity_to_phi_plus(&mixed).unwrap(), 0.25, epsilon = 1e-15);
        let m =
            BellState::PhiPlus.projector().scale(0.9) + BellState::PsiPlus.projector().scale(0.1);
        let rho = DensityMatrix::from_matrix(m).unwrap();
        assert_relative_eq!(fidelity_to_phi_plus(&rho).unwrap(), 0.9, epsilon = 1e-15);
        let three = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(fidelity_to_phi_plus(&three).is_err());
    }

    #[test]
    fn rejects_unphysical_matrices() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = c(1.5);
        m[(3, 3)] = c(-0.5);
        assert!(DensityMatrix::from_matrix(m).is_err());
        assert!(DensityMatrix::from_matrix(CMatrix::zeros(3, 3)).is_err());
        let mut m = CMatrix::identity(4, 4).unscale(4.0);
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(DensityMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn depolarizing_examples() {
        let phi = bell_diagonal_density(&werner(1.0));
        assert_eq!(apply_depolarizing(&phi, 0, 1.0).unwrap(), phi);
        let both = apply_depolarizing(&apply_depolarizing(&phi, 0, 0.0).unwrap(), 1, 0.0).unwrap();
        assert_matrix_eq(
            both.matrix(),
            DensityMatrix::maximally_mixed(2).unwrap().matrix(),
            1e-15,
        );
        assert!(apply_depolarizing(&phi, 2, 0.5).is_err());
        assert!(apply_depolarizing(&phi, 0, 1.5).is_err());

        for f in [0.3, 0.7, 1.0] {
            for lambda in [0.2, 0.9, 0.999] {
                let mut rho = bell_diagonal_density(&werner(f));
                for q in 0..2 {
                    rho = apply_depolarizing(&rho, q, lambda).unwrap();
                }
                rho.check_physical().unwrap();
                let l2 = lambda * lambda;
                assert_relative_eq!(
                    fidelity_to_phi_plus(&rho).unwrap(),
                    f * l2 + (1.0 - l2) / 4.0,
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn noisy_gate_examples() {
        let rho = bell_diagonal_density(&werner(0.8))
            .tensor(&bell_diagonal_density(&dephased(0.7)))
            .unwrap();
        let ideal = rho.apply_unitary(&cnot(), &[1, 2]).unwrap();
        let p1 = noisy_gate(&rho, &cnot(), (1, 2), 1.0).unwrap();
        assert_matrix_eq(p1.matrix(), ideal.matrix(), 1e-14);

        let p0 = noisy_gate(&rho, &cnot(), (1, 2), 0.0).unwrap();
        p0.check_physical().unwrap();
        // Qubits 1 and 2 become I/4 and uncorrelated with the rest.
        let reduced = rho.partial_trace(&[1, 2]).unwrap();
        let expected = DensityMatrix::maximally_mixed(2)
            .unwrap()
            .tensor(&reduced)
            .unwrap();
        // `expected` is ordered (1, 2, 0, 3); bring it to (0, 1, 2, 3).
        let perm = |i: usize| {
            let b = |q: usize| (i >> (3 - q)) & 1;
            (b(2) << 3) | (b(0) << 2) | (b(1) << 1) | b(3)
        };
        let reordered = CMatrix::from_fn(16, 16, |i, j| expected.matrix()[(perm(i), perm(j))]);
        assert_matrix_eq(p0.matrix(), &reordered, 1e-15);

        let phis = bell_diagonal_density(&werner(1.0))
            .tensor(&bell_diagonal_density(&werner(1.0)))
            .unwrap();
        let noisy = noisy_gate(&phis, &cnot(), (1, 2), 0.9).unwrap();
        let ideal = phis.apply_unitary(&cnot(), &[1, 2]).unwrap();
        let mixed = phis.replace_with_mixed(&[1, 2]);
        let expected = ideal.matrix().scale(0.9) + mixed.matrix().scale(0.1);
        assert_matrix_eq(noisy.matrix(), &expected, 1e-15);
        assert_relative_eq!(noisy.trace().re, 1.0, epsilon = 1e-12);

        assert!(noisy_gate(&rho, &cnot(), (1, 1), 0.9).is_err());
        assert!(noisy_gate(&rho, &cnot(), (1, 4), 0.9).is_err());
    }

    #[test]
    fn measurement_examples() {
        let zero_plus = ket(&[1.0, 0.0, 0.0, 0.0]);
        let [b0, b1] = noisy_measure(&zero_plus, 0, 1.0).unwrap();
        assert_eq!((b0.probability, b1.probability), (1.0, 0.0));
        assert!(b1.state.is_none());

        let [b0, b1] = noisy_measure(&zero_plus, 0, 0.9).unwrap();
        assert_relative_eq!(b0.probability, 0.9, epsilon = 1e-15);
        assert_relative_eq!(b1.probability, 0.1, epsilon = 1e-15);

        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let [b0, b1] = noisy_measure(&mixed, 1, 0.9).unwrap();
        assert_relative_eq!(b0.probability, 0.5, epsilon = 1e-15);
        assert_relative_eq!(b1.probability, 0.5, epsilon = 1e-15);

        let rho = bell_diagonal_density(&werner(0.7))
            .tensor(&bell_diagonal_density(&werner(0.9)))
            .unwrap();
        for q in 0..4 {
            let [b0, b1] = noisy_measure(&rho, q, 0.8).unwrap();
            assert_relative_eq!(b0.probability + b1.probability, 1.0, epsilon = 1e-12);
            for b in [b0, b1] {
                b.state.unwrap().check_physical().unwrap();
            }
        }
    }

    #[test]
    fn perfect_swap_of_pure_pairs_is_pure() {
        let f = oracle_swap(&werner(1.0), &werner(1.0), &OperationNoise::perfect()).unwrap();
        assert_relative_eq!(f, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn swap_oracle_matches_bell_composition() {
        // Perfect swap composes Bell labels; Φ⁺ survives when both inputs
        // carry the same error.
        let noise = OperationNoise::perfect();
        for (a, b) in [(0.9, 0.8), (0.6, 1.0), (0.5, 0.5)] {
            let w = oracle_swap(&werner(a), &werner(b), &noise).unwrap();
            assert_relative_eq!(w, a * b + (1.0 - a) * (1.0 - b) / 3.0, epsilon = 1e-12);
            let d = oracle_swap(&dephased(a), &dephased(b), &noise).unwrap();
            assert_relative_eq!(d, a * b + (1.0 - a) * (1.0 - b), epsilon = 1e-12);
        }
    }

    #[test]
    fn purify_oracle_perfect_examples() {
        let perfect = OperationNoise::perfect();
        let w = oracle_purify(&werner(0.9), &werner(0.9), &perfect).unwrap();
        assert_relative_eq!(w.success_prob, 0.8755555555555556, epsilon = 1e-12);
        assert_relative_eq!(w.fidelity, 0.9263959390862944, epsilon = 1e-12);
        w.state.check_physical().unwrap();

        let d = oracle_purify(&dephased(0.9), &dephased(0.9), &perfect).unwrap();
        assert_relative_eq!(d.success_prob, 0.82, epsilon = 1e-12);
        assert_relative_eq!(d.fidelity, 0.81 / 0.82, epsilon = 1e-12);
        // Output is exactly dephased, so the twirl changes nothing.
        assert_relative_eq!(
            overlap(&d.state, BellState::PhiMinus),
            1.0 - d.fidelity,
            epsilon = 1e-12
        );
    }

    #[test]
    fn decay_oracle_at_full_fidelity() {
        let q = MemoryQuality::new(1.0, 1e-3).unwrap();
        for n in [0, 1, 10, 100] {
            let b = q.survival(n);
            assert_relative_eq!(
                oracle_decay(&werner(1.0), n, &q).unwrap(),
                b + (1.0 - b) / 4.0,
                epsilon = 1e-12
            );
            assert_relative_eq!(
                oracle_decay(&dephased(1.0), n, &q).unwrap(),
                0.5 + b / 2.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn family_mismatch_is_rejected() {
        let noise = OperationNoise::perfect();
        assert!(oracle_swap(&werner(0.9), &dephased(0.9), &noise).is_err());
        assert!(oracle_purify(&werner(0.9), &dephased(0.9), &noise).is_err());
    }
}

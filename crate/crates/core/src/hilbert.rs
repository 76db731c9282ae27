//! Truncated Fock ⊗ two-level Hilbert space: operators, states, expectations,
//! and a fixed-step RK4 update.
//!
//! Basis ordering is |n⟩⊗|q⟩ with q ∈ {g, e}, flat index `2n + q` (q = 0 for
//! ground, 1 for excited). Matrices are dense; dimensions in this problem stay
//! below ~40 so dense wins on simplicity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance for the Hermiticity check.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Truncation of the Fock ladder. The composite space has `2·(n_max + 1)`
/// dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HilbertDim {
    n_max: usize,
}

impl HilbertDim {
    /// Smallest truncation that still resolves the second excitation manifold.
    pub const MIN_N_MAX: usize = 2;

    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < Self::MIN_N_MAX {
            return Err(Error::InvalidParameter(format!(
                "n_max must be at least {}, got {n_max}",
                Self::MIN_N_MAX
            )));
        }
        Ok(HilbertDim { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Total dimension, `2·(n_max + 1)`.
    pub fn size(&self) -> usize {
        2 * (self.n_max + 1)
    }

    /// Flat index of |n, q⟩; `excited` selects q = e.
    pub fn index(&self, n: usize, excited: bool) -> usize {
        debug_assert!(n <= self.n_max);
        2 * n + usize::from(excited)
    }

    /// Fock quantum number of a flat index.
    pub fn fock_of(&self, index: usize) -> usize {
        index / 2
    }

    /// Whether a flat index belongs to the excited qubit state.
    pub fn is_excited(&self, index: usize) -> bool {
        index % 2 == 1
    }
}

/// Dense operator on the composite space. Entries are dimensionless or in
/// rad/ns when the operator is a Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: HilbertDim,
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(dim: HilbertDim, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != dim.size() || mat.ncols() != dim.size() {
            return Err(Error::DimensionMismatch { expected: dim.size(), got: mat.nrows().max(mat.ncols()) });
        }
        Ok(Operator { dim, mat })
    }

    pub fn zeros(dim: HilbertDim) -> Self {
        Operator { dim, mat: DMatrix::zeros(dim.size(), dim.size()) }
    }

    pub fn identity(dim: HilbertDim) -> Self {
        Operator { dim, mat: DMatrix::identity(dim.size(), dim.size()) }
    }

    /// Cavity annihilation operator a ⊗ I₂, with ⟨n−1|a|n⟩ = √n.
    pub fn annihilation(dim: HilbertDim) -> Self {
        let mut mat = DMatrix::zeros(dim.size(), dim.size());
        for n in 1..=dim.n_max() {
            let amp = C64::new((n as f64).sqrt(), 0.0);
            for q in [false, true] {
                mat[(dim.index(n - 1, q), dim.index(n, q))] = amp;
            }
        }
        Operator { dim, mat }
    }

    /// Cavity creation operator a† ⊗ I₂.
    pub fn creation(dim: HilbertDim) -> Self {
        Self::annihilation(dim).adjoint()
    }

    /// Qubit lowering operator I ⊗ σ₋ with σ₋ = |g⟩⟨e|.
    pub fn qubit_lowering(dim: HilbertDim) -> Self {
        let mut mat = DMatrix::zeros(dim.size(), dim.size());
        for n in 0..=dim.n_max() {
            mat[(dim.index(n, false), dim.index(n, true))] = C64::new(1.0, 0.0);
        }
        Operator { dim, mat }
    }

    /// Qubit raising operator I ⊗ σ₊ = (I ⊗ σ₋)†.
    pub fn qubit_raising(dim: HilbertDim) -> Self {
        Self::qubit_lowering(dim).adjoint()
    }

    /// Photon number operator a†a ⊗ I₂.
    pub fn number(dim: HilbertDim) -> Self {
        let mut mat = DMatrix::zeros(dim.size(), dim.size());
        for n in 0..=dim.n_max() {
            for q in [false, true] {
                let i = dim.index(n, q);
                mat[(i, i)] = C64::new(n as f64, 0.0);
            }
        }
        Operator { dim, mat }
    }

    /// Excited-state projector σ₊σ₋ = I ⊗ |e⟩⟨e|.
    pub fn excited_projector(dim: HilbertDim) -> Self {
        let mut mat = DMatrix::zeros(dim.size(), dim.size());
        for n in 0..=dim.n_max() {
            let i = dim.index(n, true);
            mat[(i, i)] = C64::new(1.0, 0.0);
        }
        Operator { dim, mat }
    }

    pub fn dim(&self) -> HilbertDim {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn adjoint(&self) -> Self {
        Operator { dim: self.dim, mat: self.mat.adjoint() }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Operator { dim: self.dim, mat: self.mat.map(|z| z * factor) }
    }

    /// max|M − M†| relative to max|M| (zero for the zero operator).
    pub fn hermiticity_defect(&self) -> f64 {
        let amax = self.mat.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        if amax == 0.0 {
            return 0.0;
        }
        let n = self.mat.nrows();
        let mut dmax = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                dmax = dmax.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        dmax / amax
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() < HERMITICITY_TOL
    }

    /// Eigenvalues of a Hermitian operator, ascending. Rejects operators that
    /// fail the Hermiticity check.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_hermitian() {
            return Err(Error::InvalidParameter(format!(
                "operator is not Hermitian (defect {:.3e})",
                self.hermiticity_defect()
            )));
        }
        let mut eig: Vec<f64> = self.mat.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(eig)
    }

    /// Apply to a state. The result is a plain vector in the space and may be
    /// unnormalized (e.g. a|0⟩ = 0).
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim.size(), got: state.dim.size() });
        }
        Ok(StateVector { dim: self.dim, amp: &self.mat * &state.amp })
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        Operator { dim: self.dim, mat: &self.mat + &rhs.mat }
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        Operator { dim: self.dim, mat: &self.mat - &rhs.mat }
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        Operator { dim: self.dim, mat: &self.mat * &rhs.mat }
    }
}

impl std::ops::Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scaled(C64::new(rhs, 0.0))
    }
}

/// Pure state on the composite space.
///
/// States constructed as quantum states carry norm in (0, 1 + 1e−9];
/// sub-normalization arises during non-Hermitian evolution and is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: HilbertDim,
    amp: DVector<C64>,
}

impl StateVector {
    /// Basis state |n, q⟩.
    pub fn basis(dim: HilbertDim, n: usize, excited: bool) -> Result<Self> {
        if n > dim.n_max() {
            return Err(Error::InvalidParameter(format!(
                "Fock index {n} exceeds n_max = {}",
                dim.n_max()
            )));
        }
        let mut amp = DVector::zeros(dim.size());
        amp[dim.index(n, excited)] = C64::new(1.0, 0.0);
        Ok(StateVector { dim, amp })
    }

    /// Ground state |g, 0⟩ of the composite system.
    pub fn ground(dim: HilbertDim) -> Self {
        Self::basis(dim, 0, false).expect("n = 0 always valid")
    }

    /// Construct from amplitudes, enforcing the state-norm invariant.
    pub fn from_amplitudes(dim: HilbertDim, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != dim.size() {
            return Err(Error::DimensionMismatch { expected: dim.size(), got: amplitudes.len() });
        }
        let amp = DVector::from_vec(amplitudes);
        let norm = amp.norm();
        if norm <= 0.0 || norm > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "state norm {norm} outside (0, 1 + 1e-9]"
            )));
        }
        Ok(StateVector { dim, amp })
    }

    pub(crate) fn from_raw(dim: HilbertDim, amp: DVector<C64>) -> Self {
        StateVector { dim, amp }
    }

    pub fn dim(&self) -> HilbertDim {
        self.dim
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amp
    }

    pub fn amplitude(&self, n: usize, excited: bool) -> C64 {
        self.amp[self.dim.index(n, excited)]
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amp.norm_squared()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        StateVector { dim: self.dim, amp: self.amp.map(|z| z / n) }
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim.size(), got: other.dim.size() });
        }
        Ok(self.amp.dotc(&other.amp))
    }

    /// ⟨ψ|M|ψ⟩ / ⟨ψ|ψ⟩ (normalized convention).
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if self.dim != op.dim {
            return Err(Error::DimensionMismatch { expected: op.dim.size(), got: self.dim.size() });
        }
        let m_psi = &op.mat * &self.amp;
        Ok(self.amp.dotc(&m_psi) / C64::new(self.norm_squared(), 0.0))
    }
}

/// Mixed state. Validated to be Hermitian, unit trace and (on request)
/// positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: HilbertDim,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub const HERMITICITY_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-8;
    pub const EIGENVALUE_FLOOR: f64 = -1e-8;

    /// |ψ⟩⟨ψ| of the normalized state.
    pub fn from_pure(state: &StateVector) -> Self {
        let psi = state.normalized();
        let n = psi.dim.size();
        let mat = DMatrix::from_fn(n, n, |i, j| psi.amp[i] * psi.amp[j].conj());
        DensityMatrix { dim: psi.dim, mat }
    }

    /// Construct from a matrix, running the full invariant check (including
    /// the eigenvalue floor).
    pub fn from_matrix(dim: HilbertDim, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != dim.size() || mat.ncols() != dim.size() {
            return Err(Error::DimensionMismatch { expected: dim.size(), got: mat.nrows().max(mat.ncols()) });
        }
        let rho = DensityMatrix { dim, mat };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(dim: HilbertDim, mat: DMatrix<C64>) -> Self {
        DensityMatrix { dim, mat }
    }

    /// Full invariant check: Hermitian within 1e−10, trace 1 within 1e−8,
    /// eigenvalues ≥ −1e−8.
    pub fn validate(&self) -> Result<()> {
        let op = Operator { dim: self.dim, mat: self.mat.clone() };
        let defect = op.hermiticity_defect();
        if defect > Self::HERMITICITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidParameter(format!("density matrix trace {tr} ≠ 1")));
        }
        let eig = self.mat.clone().symmetric_eigen().eigenvalues;
        if let Some(min) = eig.iter().copied().reduce(f64::min) {
            if min < Self::EIGENVALUE_FLOOR {
                return Err(Error::InvalidParameter(format!(
                    "density matrix has eigenvalue {min:.3e} below the positivity floor"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> HilbertDim {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim.size()).map(|i| self.mat[(i, i)]).sum()
    }

    /// Tr(ρ²), real part.
    pub fn purity(&self) -> f64 {
        let sq = &self.mat * &self.mat;
        (0..self.dim.size()).map(|i| sq[(i, i)].re).sum()
    }

    /// Tr(ρ M).
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if self.dim != op.dim {
            return Err(Error::DimensionMismatch { expected: op.dim.size(), got: self.dim.size() });
        }
        let n = self.dim.size();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.mat[(i, k)] * op.mat[(k, i)];
            }
        }
        Ok(acc)
    }
}

/// One classic fourth-order Runge-Kutta step of dψ/dt = −i G ψ for a constant
/// generator `G` in rad/ns. The norm may decrease when `G` is non-Hermitian.
pub fn evolve_step_rk4(state: &StateVector, generator: &Operator, dt: f64) -> Result<StateVector> {
    if dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if state.dim != generator.dim {
        return Err(Error::DimensionMismatch {
            expected: generator.dim.size(),
            got: state.dim.size(),
        });
    }
    let minus_i = C64::new(0.0, -1.0);
    let f = |psi: &DVector<C64>| (&generator.mat * psi).map(|z| z * minus_i);

    let k1 = f(&state.amp);
    let k2 = f(&(&state.amp + &k1 * C64::new(dt / 2.0, 0.0)));
    let k3 = f(&(&state.amp + &k2 * C64::new(dt / 2.0, 0.0)));
    let k4 = f(&(&state.amp + &k3 * C64::new(dt, 0.0)));

    let amp = &state.amp
        + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    if amp.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::IntegrationFailure {
            reason: "non-finite amplitude after RK4 step".into(),
            t: dt,
        });
    }
    Ok(StateVector { dim: state.dim, amp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    fn dim(n_max: usize) -> HilbertDim {
        HilbertDim::new(n_max).unwrap()
    }

    #[test]
    fn dim_invariants() {
        assert!(HilbertDim::new(1).is_err());
        let d = dim(12);
        assert_eq!(d.size(), 26);
        assert_eq!(d.index(3, true), 7);
    }

    #[test]
    fn annihilation_lowest_rung() {
        // a|1,g⟩ = |0,g⟩ with amplitude √1 = 1.
        let d = dim(2);
        let a = Operator::annihilation(d);
        let one_g = StateVector::basis(d, 1, false).unwrap();
        let lowered = a.apply(&one_g).unwrap();
        assert_abs_diff_eq!(lowered.amplitude(0, false).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lowered.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn annihilation_matrix_element() {
        // ⟨3|a|4⟩ = √4 = 2.
        let d = dim(4);
        let a = Operator::annihilation(d);
        let el = a.matrix()[(d.index(3, false), d.index(4, false))];
        assert_abs_diff_eq!(el.re, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(el.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn number_operator_spectrum() {
        // Eigenvalues of a†a on n_max = 8 are {0..8}, each doubly degenerate.
        let d = dim(8);
        let n_op = &Operator::creation(d) * &Operator::annihilation(d);
        let eig = n_op.hermitian_eigenvalues().unwrap();
        assert_eq!(eig.len(), 18);
        let mut expected: Vec<f64> = (0..=8).flat_map(|n| [n as f64, n as f64]).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in eig.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn qubit_lowering_action() {
        let d = dim(2);
        let sm = Operator::qubit_lowering(d);
        // σ₋|e,0⟩ = |g,0⟩
        let e0 = StateVector::basis(d, 0, true).unwrap();
        let g0 = sm.apply(&e0).unwrap();
        assert_abs_diff_eq!(g0.amplitude(0, false).re, 1.0, epsilon = 1e-15);
        // σ₋|g,n⟩ = 0 for all n
        for n in 0..=2 {
            let gn = StateVector::basis(d, n, false).unwrap();
            assert_abs_diff_eq!(sm.apply(&gn).unwrap().norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn excited_projector_idempotent() {
        let d = dim(3);
        let p = &Operator::qubit_raising(d) * &Operator::qubit_lowering(d);
        let p2 = &p * &p;
        assert_eq!(p2.matrix(), p.matrix());
        assert_eq!(p.matrix(), Operator::excited_projector(d).matrix());
    }

    #[test]
    fn commutator_on_subspace() {
        // [a, a†] = 1 exactly on Fock indices n < n_max.
        let d = dim(6);
        let a = Operator::annihilation(d);
        let adag = Operator::creation(d);
        let comm = &(&a * &adag) - &(&adag * &a);
        for i in 0..d.size() {
            for j in 0..d.size() {
                if d.fock_of(i) < d.n_max() && d.fock_of(j) < d.n_max() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(comm.matrix()[(i, j)].re, expected, epsilon = 1e-12);
                    assert_abs_diff_eq!(comm.matrix()[(i, j)].im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn tensor_factors_commute() {
        let d = dim(5);
        let a = Operator::annihilation(d);
        let sm = Operator::qubit_lowering(d);
        assert_eq!((&a * &sm).matrix(), (&sm * &a).matrix());
    }

    #[test]
    fn expectation_coherent_photon_number() {
        // Amplitudes ∝ α^n/√(n!) with α = 0.3: ⟨a†a⟩ = |α|² = 0.09.
        let d = dim(10);
        let alpha = 0.3_f64;
        let mut amps = vec![C64::new(0.0, 0.0); d.size()];
        let mut fact = 1.0_f64;
        for n in 0..=10 {
            if n > 0 {
                fact *= n as f64;
            }
            amps[d.index(n, false)] = C64::new(alpha.powi(n as i32) / fact.sqrt(), 0.0);
        }
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut amps {
            *a /= norm;
        }
        // Independent oracle: direct sum of |c_n|²·n.
        let direct: f64 = (0..=10)
            .map(|n| amps[d.index(n, false)].norm_sqr() * n as f64)
            .sum();
        let psi = StateVector::from_amplitudes(d, amps).unwrap();
        let n_op = Operator::number(d);
        let got = psi.expectation(&n_op).unwrap();
        assert_abs_diff_eq!(got.re, direct, epsilon = 1e-14);
        assert_abs_diff_eq!(got.re, 0.09, epsilon = 1e-6);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn expectation_two_photon_moment() {
        // |2,g⟩: ⟨a†a†aa⟩ = n(n−1) = 2.
        let d = dim(4);
        let a = Operator::annihilation(d);
        let adag = Operator::creation(d);
        let op = &(&adag * &adag) * &(&a * &a);
        let psi = StateVector::basis(d, 2, false).unwrap();
        assert_abs_diff_eq!(psi.expectation(&op).unwrap().re, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn expectation_identity_is_one() {
        let d = dim(3);
        let psi = StateVector::basis(d, 1, true).unwrap();
        let got = psi.expectation(&Operator::identity(d)).unwrap();
        assert_abs_diff_eq!(got.re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn expectation_rejects_dim_mismatch() {
        let psi = StateVector::ground(dim(3));
        let op = Operator::identity(dim(4));
        assert!(psi.expectation(&op).is_err());
    }

    #[test]
    fn expectation_hermitian_is_real() {
        let d = dim(4);
        let a = Operator::annihilation(d);
        let h = &(&a + &Operator::creation(d)) + &Operator::excited_projector(d);
        assert!(h.is_hermitian());
        let mut amps = vec![C64::new(0.0, 0.0); d.size()];
        amps[0] = C64::new(0.6, 0.1);
        amps[3] = C64::new(0.2, -0.5);
        amps[5] = C64::new(0.3, 0.35);
        let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut amps {
            *z /= norm;
        }
        let psi = StateVector::from_amplitudes(d, amps).unwrap();
        assert_abs_diff_eq!(psi.expectation(&h).unwrap().im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn density_matrix_from_pure() {
        let d = dim(3);
        let psi = StateVector::basis(d, 1, false).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        rho.validate().unwrap();
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-14);
        let n_op = Operator::number(d);
        assert_abs_diff_eq!(rho.expectation(&n_op).unwrap().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rk4_zero_generator_is_identity() {
        let d = dim(2);
        let psi = StateVector::ground(d);
        let stepped = evolve_step_rk4(&psi, &Operator::zeros(d), 0.1).unwrap();
        assert_eq!(stepped.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn rk4_norm_conservation_hermitian() {
        // One step with dt·‖H‖ = 0.03 preserves the norm to 1e−10; the RK4
        // unitarity defect grows as (dt·‖H‖)⁶/72, so 2e-8 bounds dt·‖H‖ = 0.1.
        let d = dim(2);
        let omega = TAU; // ‖H‖ = Ω for σ₊ + σ₋
        let sm = Operator::qubit_lowering(d);
        let h = (&(&Operator::qubit_raising(d) + &sm) * omega).scaled(C64::new(1.0, 0.0));
        let psi = StateVector::ground(d);

        let stepped = evolve_step_rk4(&psi, &h, 0.03 / omega).unwrap();
        assert_abs_diff_eq!(stepped.norm(), 1.0, epsilon = 1e-10);

        let stepped = evolve_step_rk4(&psi, &h, 0.1 / omega).unwrap();
        assert_abs_diff_eq!(stepped.norm(), 1.0, epsilon = 2e-8);
    }

    #[test]
    fn rk4_rabi_return() {
        // H = Ω(σ₊ + σ₋) with Ω/2π = 1 GHz: |g,0⟩ returns at t = 1/(2·Ω/2π) = 0.5 ns.
        let d = dim(2);
        let omega = TAU;
        let h = &(&Operator::qubit_raising(d) + &Operator::qubit_lowering(d)) * omega;
        let mut psi = StateVector::ground(d);
        let steps = 1000;
        let dt = 0.5 / steps as f64;
        for _ in 0..steps {
            psi = evolve_step_rk4(&psi, &h, dt).unwrap();
        }
        // Closed form: ψ_g(t) = cos(Ωt) → population 1 at Ωt = π.
        let pop_g = psi.amplitude(0, false).norm_sqr() / psi.norm_squared();
        assert_abs_diff_eq!(pop_g, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        // Halving dt on a smooth constant-generator problem reduces the final
        // state error by at least 8x.
        let d = dim(4);
        let a = Operator::annihilation(d);
        let h = &(&(&Operator::creation(d) * &Operator::qubit_lowering(d))
            + &(&a * &Operator::qubit_raising(d)))
            * (TAU * 2.0);
        let run = |dt: f64, t_end: f64| {
            let mut psi = StateVector::basis(d, 1, false).unwrap();
            let n = (t_end / dt).round() as usize;
            for _ in 0..n {
                psi = evolve_step_rk4(&psi, &h, dt).unwrap();
            }
            psi
        };
        let t_end = 0.4;
        let reference = run(t_end / 1024.0, t_end);
        let err = |dt: f64| {
            let psi = run(dt, t_end);
            (psi.amplitudes() - reference.amplitudes()).norm()
        };
        let e1 = err(t_end / 32.0);
        let e2 = err(t_end / 64.0);
        assert!(e1 / e2 >= 8.0, "convergence ratio {} below 8", e1 / e2);
    }

    #[test]
    fn rk4_rejects_nan() {
        let d = dim(2);
        let mut mat = DMatrix::zeros(d.size(), d.size());
        mat[(0, 0)] = C64::new(f64::NAN, 0.0);
        let g = Operator::from_matrix(d, mat).unwrap();
        let psi = StateVector::ground(d);
        assert!(evolve_step_rk4(&psi, &g, 0.1).is_err());
    }
}

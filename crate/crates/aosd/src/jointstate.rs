//! The post-transformation joint qutrit⊗qubit state and its decompositions.
//!
//! Index convention: the 6-dimensional composite index is `m = 2s + a` with
//! system (canonical state) index `s ∈ {0,1,2}` and ancilla index
//! `a ∈ {0,1}`. Every serialization and partial operation in the crate uses
//! this ordering.
//!
//! The joint unitary itself is never materialized. Its action on the inputs
//! is `|ψ_i⟩|k⟩ ↦ χ_i = √(1−α_i²)|i⟩|0⟩ + α_i Φ_i |1⟩`, and the existence of
//! a unitary doing this is certified by [`gram_consistency`]: the χ Gram
//! matrix must equal the input Gram matrix.

use nalgebra::{Matrix2, Matrix3, Matrix6, SMatrix, SVector, Vector3, Vector6};
use thiserror::Error;

use crate::ensemble::Ensemble;
use crate::protocol::{ProtocolParams, ThetaAngles};
use crate::C64;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = -1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum JointStateError {
    #[error("matrix is not a valid joint state: {0}")]
    InvalidState(&'static str),
    #[error("success probability is zero; the conditional state is undefined")]
    DegenerateOutcome,
}

/// An orthonormal basis `{η0, η1, η2}` for the principal qutrit, carrying
/// the failure states. The choice does not affect the success probability
/// but controls the entanglement of the joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaBasis {
    vectors: [Vector3<C64>; 3],
}

impl EtaBasis {
    pub const ORTHONORMALITY_TOL: f64 = 1e-12;

    pub fn new(vectors: [Vector3<C64>; 3]) -> Result<Self, JointStateError> {
        for i in 0..3 {
            for j in 0..3 {
                let d = vectors[i].dotc(&vectors[j]);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - C64::from(expect)).norm() > Self::ORTHONORMALITY_TOL {
                    return Err(JointStateError::InvalidState("eta basis is not orthonormal"));
                }
            }
        }
        Ok(Self { vectors })
    }

    /// The computational basis `{|0⟩, |1⟩, |2⟩}`.
    pub fn computational() -> Self {
        Self {
            vectors: [
                Vector3::new(C64::from(1.0), C64::from(0.0), C64::from(0.0)),
                Vector3::new(C64::from(0.0), C64::from(1.0), C64::from(0.0)),
                Vector3::new(C64::from(0.0), C64::from(0.0), C64::from(1.0)),
            ],
        }
    }

    /// Build from real vectors without re-checking beyond orthonormality.
    pub fn from_real(rows: [nalgebra::Vector3<f64>; 3]) -> Result<Self, JointStateError> {
        Self::new(rows.map(|r| Vector3::new(C64::from(r[0]), C64::from(r[1]), C64::from(r[2]))))
    }

    pub fn eta(&self, i: usize) -> &Vector3<C64> {
        &self.vectors[i]
    }
}

/// 6×6 Hermitian, PSD, trace-1 joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    m: Matrix6<C64>,
}

impl JointState {
    /// Validate Hermiticity, unit trace and positive semidefiniteness.
    pub fn from_matrix(m: Matrix6<C64>) -> Result<Self, JointStateError> {
        let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITICITY_TOL {
            return Err(JointStateError::InvalidState("not Hermitian"));
        }
        let tr = m.trace();
        if (tr - C64::from(1.0)).norm() > TRACE_TOL {
            return Err(JointStateError::InvalidState("trace is not 1"));
        }
        let sym = (m + m.adjoint()).scale(0.5);
        let eig = nalgebra::SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min) < PSD_TOL {
            return Err(JointStateError::InvalidState("not positive semidefinite"));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &Matrix6<C64> {
        &self.m
    }

    pub fn min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.m)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Row-major dump, `re,im` pairs at full precision, with a header line
    /// recording the index convention.
    pub fn to_dump_string(&self) -> String {
        let mut out = String::from("# 6x6 row-major, entries re,im; index m = 2*s + a (system-major)\n");
        for r in 0..6 {
            let row: Vec<String> = (0..6)
                .map(|c| {
                    format!(
                        "{},{}",
                        crate::format_full(self.m[(r, c)].re),
                        crate::format_full(self.m[(r, c)].im)
                    )
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Local Bloch vectors and the correlation tensor of a joint state, over
/// Pauli (ancilla) and Gell-Mann (system) generators normalized to
/// `Tr(σ_iσ_j) = Tr(λ_aλ_b) = 2δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochCoefficients {
    /// `x_i = Tr[ρ (I₃ ⊗ σ_i)]`
    pub x: Vector3<f64>,
    /// `y_j = Tr[ρ (λ_j ⊗ I₂)]`
    pub y: SVector<f64, 8>,
    /// `t_ji = Tr[ρ (λ_j ⊗ σ_i)]`
    pub t: SMatrix<f64, 8, 3>,
}

impl BlochCoefficients {
    /// Rebuild the density matrix. Expansion weights are the inverse pairing
    /// norms `Tr[(A⊗B)²]`: 6 for `I₃⊗σ_i`, 4 for `λ_j⊗I₂` and `λ_j⊗σ_i`.
    pub fn reconstruct(&self) -> Matrix6<C64> {
        let sig = pauli_matrices();
        let lam = gell_mann_matrices();
        let i3 = Matrix3::identity();
        let i2 = Matrix2::identity();
        let mut m = Matrix6::<C64>::identity().scale(1.0 / 6.0);
        for i in 0..3 {
            m += kron32(&i3, &sig[i]).scale(self.x[i] / 6.0);
        }
        for j in 0..8 {
            m += kron32(&lam[j], &i2).scale(self.y[j] / 4.0);
            for i in 0..3 {
                m += kron32(&lam[j], &sig[i]).scale(self.t[(j, i)] / 4.0);
            }
        }
        m
    }
}

/// The standard Pauli matrices.
pub fn pauli_matrices() -> [Matrix2<C64>; 3] {
    let (o, l, i) = (C64::from(0.0), C64::from(1.0), C64::new(0.0, 1.0));
    [
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// The eight Gell-Mann matrices in standard order, `Tr(λ_aλ_b) = 2δ_ab`.
pub fn gell_mann_matrices() -> [Matrix3<C64>; 8] {
    let o = C64::from(0.0);
    let l = C64::from(1.0);
    let i = C64::new(0.0, 1.0);
    let r3 = C64::from(1.0 / 3.0f64.sqrt());
    [
        Matrix3::new(o, l, o, l, o, o, o, o, o),
        Matrix3::new(o, -i, o, i, o, o, o, o, o),
        Matrix3::new(l, o, o, o, -l, o, o, o, o),
        Matrix3::new(o, o, l, o, o, o, l, o, o),
        Matrix3::new(o, o, -i, o, o, o, i, o, o),
        Matrix3::new(o, o, o, o, o, l, o, l, o),
        Matrix3::new(o, o, o, o, o, -i, o, i, o),
        Matrix3::new(r3, o, o, o, r3, o, o, o, -2.0 * r3),
    ]
}

/// Kronecker product of a 3×3 and a 2×2 matrix under the `m = 2s + a`
/// convention.
pub fn kron32(a: &Matrix3<C64>, b: &Matrix2<C64>) -> Matrix6<C64> {
    let mut out = Matrix6::zeros();
    for s in 0..3 {
        for sp in 0..3 {
            for q in 0..2 {
                for qp in 0..2 {
                    out[(2 * s + q, 2 * sp + qp)] = a[(s, sp)] * b[(q, qp)];
                }
            }
        }
    }
    out
}

/// Failure states `Φ_i` over an orthonormal basis:
/// `Φ0 = η0`, `Φ1 = cosθ1 η0 + sinθ1 η1`,
/// `Φ2 = cosθ2 η0 + sinθ2 cosθ3 e^{iφ} η1 + sinθ2 sinθ3 η2`.
pub fn phi_states(angles: ThetaAngles, basis: &EtaBasis) -> [Vector3<C64>; 3] {
    let ThetaAngles { theta1, theta2, theta3, phi } = angles;
    let e0 = basis.eta(0);
    let e1 = basis.eta(1);
    let e2 = basis.eta(2);
    let phi0 = *e0;
    let phi1 = e0.scale(theta1.cos()) + e1.scale(theta1.sin());
    let phase = C64::new(0.0, phi).exp();
    let phi2 = e0.scale(theta2.cos())
        + (e1 * phase).scale(theta2.sin() * theta3.cos())
        + e2.scale(theta2.sin() * theta3.sin());
    [phi0, phi1, phi2]
}

/// The transformed inputs `χ_i = √(1−α_i²)|i⟩|0⟩ + α_i Φ_i |1⟩`, canonical
/// frame.
pub fn chi_states(
    params: &ProtocolParams,
    ensemble: &Ensemble,
    basis: &EtaBasis,
) -> [Vector6<C64>; 3] {
    debug_assert_eq!(
        params.perm,
        ensemble.canonical_perm(),
        "protocol parameters belong to a different ensemble"
    );
    let alphas = params.canonical_alpha();
    let phis = phi_states(params.angles(), basis);
    let mut out = [Vector6::zeros(); 3];
    for c in 0..3 {
        let a = alphas[c];
        let b = (1.0 - a * a).max(0.0).sqrt();
        out[c][2 * c] += C64::from(b);
        for s in 0..3 {
            out[c][2 * s + 1] += C64::from(a) * phis[c][s];
        }
    }
    out
}

/// Maximal deviation of the χ Gram matrix from the prescribed overlaps.
/// A small value certifies that a joint unitary implementing the
/// transformation exists, without constructing it.
pub fn gram_consistency(chis: &[Vector6<C64>; 3], ensemble: &Ensemble) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            let overlap = chis[i].dotc(&chis[j]);
            let target = C64::from(ensemble.canonical_overlap(i, j));
            worst = worst.max((overlap - target).norm());
        }
    }
    worst
}

/// The joint mixed state `ρ = Σ p_i χ_i χ_i†` (canonical frame).
pub fn build_rho(
    params: &ProtocolParams,
    ensemble: &Ensemble,
    basis: &EtaBasis,
) -> Result<JointState, JointStateError> {
    let p = ensemble.canonical_priors();
    let chis = chi_states(params, ensemble, basis);
    let mut m = Matrix6::<C64>::zeros();
    for c in 0..3 {
        m += (chis[c] * chis[c].adjoint()).scale(p[c]);
    }
    JointState::from_matrix(m)
}

/// Outcome statistics of the ancilla measurement in `{|0⟩_a, |1⟩_a}`.
#[derive(Debug, Clone)]
pub struct AncillaMeasurement {
    pub p_success: f64,
    /// System state conditioned on the success outcome; diagonal in the
    /// canonical flag basis.
    pub success_state: Matrix3<C64>,
    /// System state conditioned on failure; absent when failure never
    /// occurs.
    pub failure_state: Option<Matrix3<C64>>,
}

/// Measure the ancilla: `P = Tr[(I₃ ⊗ |0⟩⟨0|) ρ]` and the two conditional
/// system states.
pub fn measure_ancilla(rho: &JointState) -> Result<AncillaMeasurement, JointStateError> {
    let m = rho.matrix();
    let mut block0 = Matrix3::<C64>::zeros();
    let mut block1 = Matrix3::<C64>::zeros();
    for s in 0..3 {
        for sp in 0..3 {
            block0[(s, sp)] = m[(2 * s, 2 * sp)];
            block1[(s, sp)] = m[(2 * s + 1, 2 * sp + 1)];
        }
    }
    let p_success = block0.trace().re;
    if p_success <= TRACE_TOL {
        return Err(JointStateError::DegenerateOutcome);
    }
    let p_fail = block1.trace().re;
    let failure_state = if p_fail > TRACE_TOL {
        Some(block1.scale(1.0 / p_fail))
    } else {
        None
    };
    Ok(AncillaMeasurement {
        p_success,
        success_state: block0.scale(1.0 / p_success),
        failure_state,
    })
}

/// Bloch coefficients by trace pairing against the generator basis.
pub fn bloch_decompose(rho: &JointState) -> BlochCoefficients {
    let m = rho.matrix();
    let sig = pauli_matrices();
    let lam = gell_mann_matrices();
    let i3 = Matrix3::identity();
    let i2 = Matrix2::identity();
    let pair = |op: &Matrix6<C64>| (m * op).trace().re;
    let x = Vector3::from_fn(|i, _| pair(&kron32(&i3, &sig[i])));
    let y = SVector::<f64, 8>::from_fn(|j, _| pair(&kron32(&lam[j], &i2)));
    let t = SMatrix::<f64, 8, 3>::from_fn(|j, i| pair(&kron32(&lam[j], &sig[i])));
    BlochCoefficients { x, y, t }
}

//! Correlation measures of the joint state: geometric quantum discord
//! (closed form and definitional oracle), negativity under the partial
//! transpose, the closed-form separable decomposition of the symmetric
//! regime, and its zero-discord commutator witness.
//!
//! For a 3⊗2 system the PPT criterion is necessary and sufficient, so a
//! vanishing negativity certifies separability outright. The geometric
//! discord is measured on the ancilla qubit: the closed form builds the
//! 3×3 matrix `G = XXᵀ/6 + TᵀT/4` from the Bloch coefficients and
//! subtracts its largest eigenvalue from the total, while the oracle
//! minimizes the squared Hilbert–Schmidt distance to the state after a
//! projective ancilla measurement over measurement directions on the
//! sphere.

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector2, Vector3};
use thiserror::Error;

use crate::ensemble::Priors;
use crate::jointstate::{bloch_decompose, kron32, pauli_matrices, JointState};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum CorrelationsError {
    #[error("the closed-form decomposition applies only to the symmetric regime (equal overlaps, triangle condition satisfied)")]
    RegimeMismatch,
}

/// Summary emitted by the CLI `correlations` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub gmqd_closed: f64,
    pub gmqd_oracle: f64,
    pub negativity: f64,
    pub min_pt_eigenvalue: f64,
    /// Present only for the symmetric-regime closed decomposition.
    pub commutator_coefficient: Option<f64>,
}

impl CorrelationReport {
    pub const CSV_HEADER: &'static str =
        "gmqd_closed,gmqd_oracle,negativity,min_pt_eigenvalue,commutator_coefficient";

    pub fn to_csv_row(&self) -> String {
        let comm = self.commutator_coefficient.map(crate::format_full).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            crate::format_full(self.gmqd_closed),
            crate::format_full(self.gmqd_oracle),
            crate::format_full(self.negativity),
            crate::format_full(self.min_pt_eigenvalue),
            comm
        )
    }
}

/// Geometric discord from the Bloch coefficients:
/// `D = ||X||²/6 + ||T||²/4 − k_max`, with `k_max` the largest eigenvalue
/// of `G = XXᵀ/6 + TᵀT/4`.
pub fn gmqd_closed_form(rho: &JointState) -> f64 {
    let b = bloch_decompose(rho);
    let g: Matrix3<f64> = b.x * b.x.transpose() / 6.0 + b.t.transpose() * b.t / 4.0;
    let kmax = nalgebra::SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    b.x.norm_squared() / 6.0 + b.t.norm_squared() / 4.0 - kmax
}

/// Squared Hilbert–Schmidt distance between ρ and its dephasing under a
/// projective ancilla measurement along direction `n`.
fn measurement_distance(rho: &Matrix6<C64>, n: &Vector3<f64>) -> f64 {
    let sig = pauli_matrices();
    let mut nsig = Matrix2::<C64>::zeros();
    for i in 0..3 {
        nsig += sig[i].scale(n[i]);
    }
    let half = C64::from(0.5);
    let pp = (Matrix2::identity() + nsig) * half;
    let pm = (Matrix2::identity() - nsig) * half;
    let i3 = Matrix3::identity();
    let proj_p = kron32(&i3, &pp);
    let proj_m = kron32(&i3, &pm);
    let chi = proj_p * rho * proj_p + proj_m * rho * proj_m;
    (rho - chi).iter().map(|z| z.norm_sqr()).sum()
}

/// Definitional geometric discord: minimize [`measurement_distance`] over
/// the measurement direction, seeded by a deterministic Fibonacci lattice
/// and polished by pattern search.
pub fn gmqd_oracle(rho: &JointState, n_starts: usize) -> f64 {
    let m = rho.matrix();
    let n_starts = n_starts.max(8);
    let golden = std::f64::consts::PI * (1.0 + 5.0f64.sqrt());
    let mut best = f64::INFINITY;
    let mut best_dir = Vector3::new(0.0, 0.0, 1.0);
    for k in 0..n_starts {
        let t = (k as f64 + 0.5) / n_starts as f64;
        let polar = (1.0 - 2.0 * t).acos();
        let azimuth = golden * (k as f64 + 0.5);
        let dir = Vector3::new(
            polar.sin() * azimuth.cos(),
            polar.sin() * azimuth.sin(),
            polar.cos(),
        );
        let v = measurement_distance(m, &dir);
        if v < best || (v == best && lex_less(&dir, &best_dir)) {
            best = v;
            best_dir = dir;
        }
    }
    // Pattern search on the sphere.
    let mut step = 0.2;
    let mut dir = best_dir;
    while step > 1e-9 {
        let mut improved = false;
        for d in 0..3 {
            for sgn in [1.0, -1.0] {
                let mut cand = dir;
                cand[d] += sgn * step;
                let norm = cand.norm();
                if norm < 1e-12 {
                    continue;
                }
                cand /= norm;
                let v = measurement_distance(m, &cand);
                if v < best - 1e-18 {
                    best = v;
                    dir = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn lex_less(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    (a[0], a[1], a[2]) < (b[0], b[1], b[2])
}

/// Partial transpose on the ancilla factor under `m = 2s + a`.
pub fn partial_transpose(rho: &JointState) -> Matrix6<C64> {
    let m = rho.matrix();
    let mut out = Matrix6::zeros();
    for s in 0..3 {
        for sp in 0..3 {
            for a in 0..2 {
                for ap in 0..2 {
                    out[(2 * s + a, 2 * sp + ap)] = m[(2 * s + ap, 2 * sp + a)];
                }
            }
        }
    }
    out
}

/// Eigenvalues of the partial transpose, ascending.
pub fn pt_eigenvalues(rho: &JointState) -> [f64; 6] {
    let pt = partial_transpose(rho);
    let sym = (pt + pt.adjoint()).scale(0.5);
    let mut ev: Vec<f64> =
        nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    [ev[0], ev[1], ev[2], ev[3], ev[4], ev[5]]
}

/// Sum of |negative eigenvalues| of the partial transpose; zero exactly on
/// separable states in 3⊗2.
pub fn negativity(rho: &JointState) -> f64 {
    pt_eigenvalues(rho).iter().filter(|v| **v < 0.0).map(|v| -v).sum()
}

/// The closed-form separable split of the symmetric (equal-overlap,
/// triangle-satisfied) optimum:
/// `ρ = ρ1 ⊗ q|0⟩⟨0| + |η0⟩⟨η0| ⊗ |ξ⟩⟨ξ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime1Decomposition {
    /// Normalized qutrit state multiplying the success projector.
    pub rho1: Matrix3<C64>,
    /// Weight `q = 2(1−γ)(p0p1 + p1p2 + p2p0)`.
    pub q: f64,
    /// `η0 = Σ p_j |j⟩ / √(Σ p_i²)`.
    pub eta0: Vector3<f64>,
    /// Unnormalized ancilla vector `ξ = √(1−γ)√(Σp²)|0⟩ + √γ|1⟩`.
    pub xi: Vector2<f64>,
}

impl Regime1Decomposition {
    /// Reassemble the 6×6 joint state.
    pub fn reconstruct(&self) -> Matrix6<C64> {
        let mut zero_proj = Matrix2::<C64>::zeros();
        zero_proj[(0, 0)] = C64::from(1.0);
        let eta = Vector3::new(
            C64::from(self.eta0[0]),
            C64::from(self.eta0[1]),
            C64::from(self.eta0[2]),
        );
        let xi = Vector2::new(C64::from(self.xi[0]), C64::from(self.xi[1]));
        kron32(&self.rho1, &zero_proj.scale(self.q))
            + kron32(&(eta * eta.adjoint()), &(xi * xi.adjoint()))
    }
}

fn symmetric_regime_holds(priors: &Priors, gamma: f64) -> bool {
    if !(gamma > 0.0 && gamma < 1.0) {
        return false;
    }
    let mut p = priors.as_array();
    p.sort_by(|a, b| b.total_cmp(a));
    p[0].sqrt() <= p[1].sqrt() + p[2].sqrt()
}

/// Closed-form separable decomposition for equal overlaps in the symmetric
/// regime.
pub fn regime1_closed_decomposition(
    priors: &Priors,
    gamma: f64,
) -> Result<Regime1Decomposition, CorrelationsError> {
    if !symmetric_regime_holds(priors, gamma) {
        return Err(CorrelationsError::RegimeMismatch);
    }
    let p = priors.as_array();
    let sum_sq: f64 = p.iter().map(|x| x * x).sum();
    let q = 2.0 * (1.0 - gamma) * (p[0] * p[1] + p[1] * p[2] + p[2] * p[0]);
    let eta0 = Vector3::new(p[0], p[1], p[2]) / sum_sq.sqrt();
    let xi = Vector2::new(((1.0 - gamma) * sum_sq).sqrt(), gamma.sqrt());
    // ρ1 is the residual of the success block after removing the product
    // part; PSD by Cauchy-Schwarz, with (1,1,1) in its kernel.
    let diag = Matrix3::<C64>::from_diagonal(&Vector3::new(
        C64::from(p[0]),
        C64::from(p[1]),
        C64::from(p[2]),
    ));
    let eta_c = Vector3::new(C64::from(eta0[0]), C64::from(eta0[1]), C64::from(eta0[2]));
    let rho1 = (diag - (eta_c * eta_c.adjoint()).scale(sum_sq)).scale((1.0 - gamma) / q);
    Ok(Regime1Decomposition { rho1, q, eta0, xi })
}

/// Coefficient of the ancilla commutator
/// `[q|0⟩⟨0|, |ξ⟩⟨ξ|] = coeff (|0⟩⟨1| − |1⟩⟨0|)` in the symmetric
/// decomposition; zero iff the state has zero discord.
pub fn zero_discord_commutator(priors: &Priors, gamma: f64) -> f64 {
    let p = priors.as_array();
    let sum_sq: f64 = p.iter().map(|x| x * x).sum();
    let q = 2.0 * (1.0 - gamma) * (p[0] * p[1] + p[1] * p[2] + p[2] * p[0]);
    q * (gamma * (1.0 - gamma) * sum_sq).sqrt()
}

/// Assemble a [`CorrelationReport`] for a joint state; the commutator
/// coefficient is attached only when the symmetric-regime context applies.
pub fn report(
    rho: &JointState,
    n_starts: usize,
    regime1_context: Option<(&Priors, f64)>,
) -> CorrelationReport {
    let commutator_coefficient = regime1_context.and_then(|(priors, gamma)| {
        symmetric_regime_holds(priors, gamma).then(|| zero_discord_commutator(priors, gamma))
    });
    CorrelationReport {
        gmqd_closed: gmqd_closed_form(rho),
        gmqd_oracle: gmqd_oracle(rho, n_starts),
        negativity: negativity(rho),
        min_pt_eigenvalue: pt_eigenvalues(rho)[0],
        commutator_coefficient,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{validate_ensemble, OverlapSet};
    use crate::jointstate::{build_rho, EtaBasis};
    use crate::protocol;
    use nalgebra::Vector6;

    fn maximally_entangled() -> JointState {
        let mut v = Vector6::<C64>::zeros();
        v[0] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        v[3] = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        JointState::from_matrix(v * v.adjoint()).unwrap()
    }

    fn product_state() -> JointState {
        let rs = Matrix3::<C64>::from_diagonal(&Vector3::new(
            C64::from(0.5),
            C64::from(0.3),
            C64::from(0.2),
        ));
        let ra = Matrix2::new(C64::from(0.7), C64::from(0.2), C64::from(0.2), C64::from(0.3));
        JointState::from_matrix(kron32(&rs, &ra)).unwrap()
    }

    #[test]
    fn gmqd_vanishes_on_product_states() {
        let rho = product_state();
        assert!(gmqd_closed_form(&rho).abs() < 1e-12);
        assert!(gmqd_oracle(&rho, 200) < 1e-12);
    }

    #[test]
    fn gmqd_maximally_entangled_benchmark() {
        let rho = maximally_entangled();
        assert!((gmqd_closed_form(&rho) - 0.5).abs() < 1e-10);
        assert!((gmqd_oracle(&rho, 500) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn gmqd_closed_matches_oracle_on_protocol_states() {
        for (p, g) in [([0.5, 0.3, 0.2], 0.5), ([0.76, 0.2, 0.04], 0.3), ([0.84, 0.12, 0.04], 0.8)]
        {
            let e = validate_ensemble(
                Priors::new(p[0], p[1], p[2]).unwrap(),
                OverlapSet::equal(g).unwrap(),
            )
            .unwrap();
            let params = protocol::optimize(&e);
            let rho = build_rho(&params, &e, &EtaBasis::computational()).unwrap();
            let closed = gmqd_closed_form(&rho);
            let oracle = gmqd_oracle(&rho, 500);
            assert!((closed - oracle).abs() < 1e-8, "closed {closed} vs oracle {oracle}");
        }
    }

    #[test]
    fn gmqd_on_classically_correlated_state() {
        // Σ p_i |i⟩⟨i| ⊗ |a_i⟩⟨a_i| with orthogonal ancilla states for the
        // first two flags.
        let mut m = nalgebra::Matrix6::<C64>::zeros();
        let p = [0.5, 0.3, 0.2];
        let anc = [(1.0, 0.0), (0.0, 1.0), (1.0, 0.0)];
        for i in 0..3 {
            let (a0, a1) = anc[i];
            let proj = Matrix2::new(
                C64::from(a0 * a0),
                C64::from(a0 * a1),
                C64::from(a0 * a1),
                C64::from(a1 * a1),
            );
            for (q, qp) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                m[(2 * i + q, 2 * i + qp)] += proj[(q, qp)].scale(p[i]);
            }
        }
        let rho = JointState::from_matrix(m).unwrap();
        let closed = gmqd_closed_form(&rho);
        let orc = gmqd_oracle(&rho, 300);
        assert!((closed - orc).abs() < 1e-8, "closed {closed} vs oracle {orc}");
        // Measuring the ancilla in the computational basis leaves the state
        // invariant: zero discord.
        assert!(closed.abs() < 1e-12);
    }

    #[test]
    fn partial_transpose_involution_and_trace() {
        let rho = product_state();
        let pt = partial_transpose(&rho);
        let back = {
            let tmp = JointState::from_matrix(pt).unwrap();
            partial_transpose(&tmp)
        };
        let diff = (back - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-15);
        assert!((pt.trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bell_state_negativity() {
        let rho = maximally_entangled();
        let ev = pt_eigenvalues(&rho);
        assert!((ev[0] + 0.5).abs() < 1e-12, "min PT eigenvalue {}", ev[0]);
        assert!((negativity(&rho) - 0.5).abs() < 1e-12);
        assert!(negativity(&product_state()) < 1e-14);
    }

    #[test]
    fn regime1_decomposition_reconstructs_rho() {
        let priors = Priors::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        let gamma = 0.5;
        let d = regime1_closed_decomposition(&priors, gamma).unwrap();
        assert!((d.q - 1.0 / 3.0).abs() < 1e-14);
        // ρ1 is a state.
        assert!((d.rho1.trace().re - 1.0).abs() < 1e-12);
        let min = nalgebra::SymmetricEigen::new(d.rho1)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min > -1e-12);
        // Reassembly equals the protocol state.
        let e = validate_ensemble(priors, OverlapSet::equal(gamma).unwrap()).unwrap();
        let params = protocol::optimize(&e);
        let e0 = d.eta0;
        let k = (0..3).min_by(|&a, &b| e0[a].abs().total_cmp(&e0[b].abs())).unwrap();
        let mut v = nalgebra::Vector3::zeros();
        v[k] = 1.0;
        let mut e1 = v - e0.scale(e0.dot(&v));
        e1 /= e1.norm();
        let e2 = e0.cross(&e1);
        let basis = EtaBasis::from_real([e0, e1, e2]).unwrap();
        let rho = build_rho(&params, &e, &basis).unwrap();
        let err = (d.reconstruct() - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "reassembly error {err}");
    }

    #[test]
    fn regime1_decomposition_gamma_to_zero_limit() {
        let priors = Priors::new(0.5, 0.3, 0.2).unwrap();
        let d = regime1_closed_decomposition(&priors, 1e-9).unwrap();
        let pairs = 2.0 * (0.5 * 0.3 + 0.3 * 0.2 + 0.2 * 0.5);
        assert!((d.q - pairs).abs() < 1e-8);
        assert!(d.xi[1].abs() < 1e-4);
    }

    #[test]
    fn regime_mismatch_rejected() {
        // Region (b) priors violate the triangle condition for equal
        // overlaps, so the symmetric closed form does not apply.
        let priors = Priors::new(0.76, 0.2, 0.04).unwrap();
        assert_eq!(
            regime1_closed_decomposition(&priors, 0.5).unwrap_err(),
            CorrelationsError::RegimeMismatch
        );
    }

    #[test]
    fn gmqd_positive_on_optimal_separable_states() {
        // Nonzero dissonance across the whole overlap range for the
        // entanglement-free construction.
        for priors in [[0.5, 0.3, 0.2], [0.76, 0.2, 0.04], [0.84, 0.12, 0.04]] {
            for k in 0..=20 {
                let g = 0.01 + k as f64 * (0.95 - 0.01) / 20.0;
                let e = validate_ensemble(
                    Priors::new(priors[0], priors[1], priors[2]).unwrap(),
                    OverlapSet::equal(g).unwrap(),
                )
                .unwrap();
                let params = protocol::optimize(&e);
                let d = crate::separability::build_decomposition(&e, &params).unwrap();
                let rho = build_rho(&params, &e, &d.eta_basis).unwrap();
                let v = gmqd_closed_form(&rho);
                assert!(v > 1e-6, "D_G = {v} at priors {priors:?}, γ = {g}");
            }
        }
    }

    #[test]
    fn commutator_coefficient_values() {
        let priors = Priors::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        assert!((zero_discord_commutator(&priors, 0.5) - 0.09622504486493762).abs() < 1e-14);
        assert!(zero_discord_commutator(&priors, 0.0).abs() < 1e-15);
        assert!(zero_discord_commutator(&priors, 1.0).abs() < 1e-15);
    }
}

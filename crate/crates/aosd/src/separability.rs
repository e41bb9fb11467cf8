//! Entanglement-free pure-product decomposition of the joint state.
//!
//! The joint state is a rank-3 mixture `ρ = Σ p_i χ_i χ_i†`, and any other
//! pure-state ensemble of it is reachable through an orthogonal mixing
//! matrix `C`: `Ψ_i = Σ_j c_ij √p_j χ_j`. The construction here picks `C`
//! and the η basis so that all three `Ψ_i` are product states, certifying
//! that no entanglement is needed anywhere in the optimal protocol.
//!
//! General (symmetry-broken) branch, all amplitudes interior:
//! `C = Ω(κ3) Λ(κ1, κ2)`. The first row of `Λ` is fixed by requiring the
//! failure component `ν_0` of `Ψ_0` to vanish, which pins `(κ1, κ2)`. The
//! basis vectors `η0, η1` are restricted to the plane spanned by the
//! orthonormalized success components `τ0 ∝ μ'_1`, `τ1 ⊥ τ0`, rotated by an
//! angle β. Requiring `Ψ_1` and `Ψ_2` to be products gives two equations
//! for `κ3` whose compatibility condition `A·R = Q·B1 − S·B0` is linear in
//! `tan β`; β comes from that line, κ3 from either equation afterwards.
//!
//! Boundary regimes use the exact limits of this pipeline instead of
//! running it at its degeneration points: the symmetric branch mixes the
//! success block directly (row 0 of `C` parallel to the weighted
//! amplitudes), a single omission fixes the τ pair to computational basis
//! vectors, and a double omission takes `C = Λ(0, −π/2)` with
//! `η0 = |0⟩, η1 = −|1⟩` (the kept state's flag direction).

use nalgebra::{Matrix3, Vector3, Vector6};
use thiserror::Error;

use crate::ensemble::Ensemble;
use crate::jointstate::{self, EtaBasis};
use crate::protocol::{ProtocolParams, Regime};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum SeparabilityError {
    #[error("the ν0 = 0 ratios vanish identically (regime {0}): use the symmetric-branch construction")]
    DegenerateRatios(Regime),
    #[error("the success components span less than two dimensions (regime {0})")]
    DegenerateSpan(Regime),
    #[error("the tan β equation degenerates (regime {0})")]
    DegenerateEquation(Regime),
    #[error("no κ3 solves the product conditions (regime {0})")]
    NoSolution(Regime),
}

/// A complete product-state decomposition of the joint state.
#[derive(Debug, Clone)]
pub struct SeparableDecomposition {
    /// Orthogonal mixing matrix relating `Ψ_i` to `√p_j χ_j`.
    pub c: Matrix3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub beta: f64,
    pub eta_basis: EtaBasis,
    /// Unnormalized product vectors with `Σ Ψ_i Ψ_i† = ρ`.
    pub psi: [Vector6<C64>; 3],
    /// Second singular value of each Ψ's 3×2 coefficient matrix; zero for
    /// exact products.
    pub schmidt_residuals: [f64; 3],
}

/// The β-dependent scalars of the product conditions.
///
/// `A = ⟨τ0|μ'_1⟩`, `B0 = ⟨τ0|μ'_2⟩`, `B1 = ⟨τ1|μ'_2⟩` are β-independent;
/// `P, Q, R, S` are the τ components of the failure vectors `ν'_1, ν'_2`
/// and enter as linear forms in `(cos β, sin β)` through the η components
/// `m_i0, m_i1` stored here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProducts {
    pub a: f64,
    pub b0: f64,
    pub b1: f64,
    pub m10: f64,
    pub m11: f64,
    pub m20: f64,
    pub m21: f64,
}

impl InnerProducts {
    pub fn p(&self, beta: f64) -> f64 {
        self.m10 * beta.cos() - self.m11 * beta.sin()
    }
    pub fn q(&self, beta: f64) -> f64 {
        self.m20 * beta.cos() - self.m21 * beta.sin()
    }
    pub fn r(&self, beta: f64) -> f64 {
        self.m10 * beta.sin() + self.m11 * beta.cos()
    }
    pub fn s(&self, beta: f64) -> f64 {
        self.m20 * beta.sin() + self.m21 * beta.cos()
    }

    /// Residual of the compatibility condition `A·R − Q·B1 + S·B0` at β.
    pub fn compatibility_residual(&self, beta: f64) -> f64 {
        self.a * self.r(beta) - self.q(beta) * self.b1 + self.s(beta) * self.b0
    }
}

/// `Λ(κ1, κ2)` exactly as parametrized (an orthogonal matrix with
/// determinant −1).
pub fn lambda_matrix(kappa1: f64, kappa2: f64) -> Matrix3<f64> {
    let (s1, c1) = kappa1.sin_cos();
    let (s2, c2) = kappa2.sin_cos();
    Matrix3::new(c1, s1 * c2, s1 * s2, 0.0, -s2, c2, -s1, c1 * c2, c1 * s2)
}

/// `Ω(κ3)`: rotation in the (1,2) block.
pub fn omega_matrix(kappa3: f64) -> Matrix3<f64> {
    let (s3, c3) = kappa3.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c3, -s3, 0.0, s3, c3)
}

/// Weighted state data in the canonical frame, all real ( φ = 0 at every
/// analytic optimum).
struct Frame {
    /// `a_j = √p_j α_j`
    aw: [f64; 3],
    /// `b_j = √p_j √(1−α_j²)`
    bw: [f64; 3],
    /// η0 components of the failure states.
    u: [f64; 3],
    /// η1 components of the failure states.
    v: [f64; 3],
}

impl Frame {
    fn new(ensemble: &Ensemble, params: &ProtocolParams) -> Self {
        let p = ensemble.canonical_priors();
        let alpha = params.canonical_alpha();
        let aw = [0, 1, 2].map(|i| p[i].sqrt() * alpha[i]);
        let bw = [0, 1, 2].map(|i| p[i].sqrt() * (1.0 - alpha[i] * alpha[i]).max(0.0).sqrt());
        let u = [1.0, params.theta1.cos(), params.theta2.cos()];
        let v = [0.0, params.theta1.sin(), params.theta2.sin() * params.theta3.cos()];
        Self { aw, bw, u, v }
    }
}

/// Unit kernel vector of `ν_0 = Σ_j c_{0j} a_j Φ_j = 0`: the cross product
/// of the two coefficient rows, oriented so the first component is
/// nonpositive (the `−sin(θ1+θ2)` orientation).
fn nu0_kernel(frame: &Frame, regime: Regime) -> Result<Vector3<f64>, SeparabilityError> {
    let row_u = Vector3::from_fn(|j, _| frame.aw[j] * frame.u[j]);
    let row_v = Vector3::from_fn(|j, _| frame.aw[j] * frame.v[j]);
    let k = row_u.cross(&row_v);
    let n = k.norm();
    if n < 1e-13 {
        return Err(SeparabilityError::DegenerateRatios(regime));
    }
    let mut k = k / n;
    if k[0] > 0.0 || (k[0] == 0.0 && k[1] < 0.0) {
        k = -k;
    }
    Ok(k)
}

/// Angles `(κ1, κ2)` inverting the first row of Λ against the ν0 = 0
/// kernel. For the coplanar optima this reproduces the printed ratios
/// `c00 : c01 : c02 = −sin(θ1+θ2)/(√p0 α0) : sinθ2/(√p1 α1) : sinθ1/(√p2 α2)`.
pub fn nu0_zero_angles(
    params: &ProtocolParams,
    ensemble: &Ensemble,
) -> Result<(f64, f64), SeparabilityError> {
    let frame = Frame::new(ensemble, params);
    let c0 = nu0_kernel(&frame, params.regime)?;
    Ok(kappas_from_row(&c0))
}

fn kappas_from_row(c0: &Vector3<f64>) -> (f64, f64) {
    let kappa1 = c0[0].clamp(-1.0, 1.0).acos();
    let s1 = kappa1.sin();
    let kappa2 = if s1 > 1e-14 { (c0[2] / s1).atan2(c0[1] / s1) } else { 0.0 };
    (kappa1, kappa2)
}

/// Gram–Schmidt pair spanning the success components `μ'_1, μ'_2`.
pub fn tau_basis(
    mu1: &Vector3<f64>,
    mu2: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>), SeparabilityError> {
    let n1 = mu1.norm();
    if n1 < 1e-12 {
        return Err(SeparabilityError::DegenerateSpan(Regime::II));
    }
    let tau0 = mu1 / n1;
    let resid = mu2 - tau0.scale(tau0.dot(mu2));
    let n2 = resid.norm();
    if n2 < 1e-12 {
        return Err(SeparabilityError::DegenerateSpan(Regime::II));
    }
    Ok((tau0, resid / n2))
}

/// β from the compatibility condition, principal branch `(−π/2, π/2]`.
pub fn solve_beta(forms: &InnerProducts) -> Result<f64, SeparabilityError> {
    // A·R − Q·B1 + S·B0 = sinβ [A m10 + B1 m21 + B0 m20]
    //                   + cosβ [A m11 − B1 m20 + B0 m21] = 0.
    let den = forms.a * forms.m10 + forms.b1 * forms.m21 + forms.b0 * forms.m20;
    let num = forms.a * forms.m11 - forms.b1 * forms.m20 + forms.b0 * forms.m21;
    if den.abs() < 1e-14 && num.abs() < 1e-14 {
        return Err(SeparabilityError::DegenerateEquation(Regime::II));
    }
    if den.abs() < 1e-300 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let beta = (-num / den).atan();
    Ok(beta)
}

/// κ3 from the first product condition at the solved β. Both product
/// conditions coincide once compatibility holds; the root with the positive
/// square-root branch is returned.
pub fn solve_kappa3(forms: &InnerProducts, beta: f64) -> Result<f64, SeparabilityError> {
    let (p, q, r, s) = (forms.p(beta), forms.q(beta), forms.r(beta), forms.s(beta));
    let (a, b0, b1) = (forms.a, forms.b0, forms.b1);
    // t²(Q B1 − S B0) + t(R B0 + S A − P B1) − R A = 0 for t = tan κ3.
    let qa = q * b1 - s * b0;
    let qb = r * b0 + s * a - p * b1;
    let qc = -r * a;
    if qa.abs() < 1e-13 {
        if qb.abs() < 1e-13 {
            if qc.abs() < 1e-10 {
                return Ok(0.0);
            }
            return Err(SeparabilityError::NoSolution(Regime::II));
        }
        return Ok((-qc / qb).atan());
    }
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let t = (-qb + disc.sqrt()) / (2.0 * qa);
    Ok(t.atan())
}

fn complete_basis(v0: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let k = (0..3).min_by(|&a, &b| v0[a].abs().total_cmp(&v0[b].abs())).expect("3 indices");
    let mut e = Vector3::zeros();
    e[k] = 1.0;
    let mut v1 = e - v0.scale(v0.dot(&e));
    v1 /= v1.norm();
    (v1, v0.cross(&v1))
}

fn to_complex_basis(rows: [Vector3<f64>; 3]) -> EtaBasis {
    EtaBasis::from_real(rows).expect("constructed rows are orthonormal")
}

/// Assemble `Ψ_i = Σ_j c_ij √p_j χ_j` and their Schmidt residuals for a
/// given mixing matrix and η basis.
fn assemble(
    ensemble: &Ensemble,
    params: &ProtocolParams,
    c: &Matrix3<f64>,
    basis: &EtaBasis,
) -> ([Vector6<C64>; 3], [f64; 3]) {
    let p = ensemble.canonical_priors();
    let chis = jointstate::chi_states(params, ensemble, basis);
    let mut psi = [Vector6::<C64>::zeros(); 3];
    for i in 0..3 {
        for j in 0..3 {
            psi[i] += chis[j].scale(c[(i, j)] * p[j].sqrt());
        }
    }
    let residuals = [0, 1, 2].map(|i| schmidt_residual(&psi[i]));
    (psi, residuals)
}

/// Second singular value of the 3×2 coefficient matrix of a 6-vector under
/// `m = 2s + a`.
pub fn schmidt_residual(psi: &Vector6<C64>) -> f64 {
    let m = nalgebra::SMatrix::<C64, 3, 2>::from_fn(|s, a| psi[2 * s + a]);
    let svd = m.svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv[1]
}

/// Build the full decomposition for the optimal protocol of an ensemble.
///
/// Dispatches on the analytic regime: the general pipeline for the
/// symmetry-broken and single-omission branches (the latter with the τ pair
/// pinned to the computational directions left by the omitted state), and
/// the exact limiting constructions for the symmetric and double-omission
/// branches.
pub fn build_decomposition(
    ensemble: &Ensemble,
    params: &ProtocolParams,
) -> Result<SeparableDecomposition, SeparabilityError> {
    match params.regime {
        Regime::I => build_symmetric(ensemble, params),
        Regime::II => build_general(ensemble, params, None),
        Regime::III => {
            let omitted = params.omitted();
            let o = *omitted.first().ok_or(SeparabilityError::NoSolution(Regime::III))?;
            // With b_o = 0 and λ_10 = 0, μ'_1 is parallel to the remaining
            // computational direction among {1, 2}; τ1 completes with |0⟩.
            let e = |k: usize| {
                let mut v = Vector3::<f64>::zeros();
                v[k] = 1.0;
                v
            };
            let tau = match o {
                2 => Some((e(1), e(0))),
                1 => Some((e(2), e(0))),
                _ => None, // b_0 = 0: the span is generic, Gram-Schmidt applies
            };
            build_general(ensemble, params, tau)
        }
        Regime::IV => build_double_omission(ensemble, params),
    }
}

/// Symmetric branch: all failure states equal η0. Row 0 of `C` is the
/// normalized amplitude-weight vector, which makes `Ψ_0` the pure product
/// `η0 ⊗ ξ` and leaves `Ψ_1, Ψ_2` in the success block.
fn build_symmetric(
    ensemble: &Ensemble,
    params: &ProtocolParams,
) -> Result<SeparableDecomposition, SeparabilityError> {
    let frame = Frame::new(ensemble, params);
    let aw = Vector3::from_row_slice(&frame.aw);
    let m = Vector3::from_fn(|j, _| frame.aw[j] * frame.bw[j]);
    let n_a = aw.norm();
    let n_m = m.norm();
    if n_a < 1e-13 || n_m < 1e-13 {
        return Err(SeparabilityError::DegenerateSpan(Regime::I));
    }
    let eta0 = m / n_m;
    let (eta1, eta2) = complete_basis(&eta0);
    let basis = to_complex_basis([eta0, eta1, eta2]);
    let c0 = aw / n_a;
    let (kappa1, kappa2) = kappas_from_row(&c0);
    let c = lambda_matrix(kappa1, kappa2);
    let (psi, schmidt_residuals) = assemble(ensemble, params, &c, &basis);
    Ok(SeparableDecomposition {
        c,
        kappa1,
        kappa2,
        kappa3: 0.0,
        beta: 0.0,
        eta_basis: basis,
        psi,
        schmidt_residuals,
    })
}

/// Double omission: every transformed input is already a product once
/// `η0 = |0⟩` (the kept flag direction) and `η1 = −|1⟩`; the mixing matrix
/// is `Λ(0, −π/2)`, the sign-fixed identity.
fn build_double_omission(
    ensemble: &Ensemble,
    params: &ProtocolParams,
) -> Result<SeparableDecomposition, SeparabilityError> {
    let omitted = params.omitted();
    let kept = (0..3)
        .find(|c| !omitted.contains(c))
        .ok_or(SeparabilityError::NoSolution(Regime::IV))?;
    // Expansion coefficients of Φ_kept on (η0, η1).
    let (x, y) = match kept {
        0 => (1.0, 0.0),
        1 => (params.theta1.cos(), params.theta1.sin()),
        _ => (params.theta2.cos(), params.theta2.sin() * params.theta3.cos()),
    };
    let mut ek = Vector3::<f64>::zeros();
    ek[kept] = 1.0;
    let other = (0..3).find(|&i| i != kept).expect("two non-kept indices");
    let mut w = Vector3::<f64>::zeros();
    w[other] = -1.0;
    // Rotate so that x η0 + y η1 = |kept⟩ exactly.
    let eta0 = ek.scale(x) - w.scale(y);
    let eta1 = ek.scale(y) + w.scale(x);
    let eta2 = eta0.cross(&eta1);
    let basis = to_complex_basis([eta0, eta1, eta2]);
    let kappa2 = -std::f64::consts::FRAC_PI_2;
    let c = lambda_matrix(0.0, kappa2);
    let (psi, schmidt_residuals) = assemble(ensemble, params, &c, &basis);
    Ok(SeparableDecomposition {
        c,
        kappa1: 0.0,
        kappa2,
        kappa3: 0.0,
        beta: std::f64::consts::FRAC_PI_2,
        eta_basis: basis,
        psi,
        schmidt_residuals,
    })
}

fn build_general(
    ensemble: &Ensemble,
    params: &ProtocolParams,
    tau_override: Option<(Vector3<f64>, Vector3<f64>)>,
) -> Result<SeparableDecomposition, SeparabilityError> {
    let regime = params.regime;
    let frame = Frame::new(ensemble, params);
    let c0 = nu0_kernel(&frame, regime)?;
    let (kappa1, kappa2) = kappas_from_row(&c0);
    let lam = lambda_matrix(kappa1, kappa2);

    // Success components mixed by rows 1, 2 of Λ (computational basis).
    let mu1 = Vector3::from_fn(|j, _| lam[(1, j)] * frame.bw[j]);
    let mu2 = Vector3::from_fn(|j, _| lam[(2, j)] * frame.bw[j]);
    let (tau0, tau1) = match tau_override {
        Some(pair) => pair,
        None => tau_basis(&mu1, &mu2).map_err(|e| match e {
            SeparabilityError::DegenerateSpan(_) => SeparabilityError::DegenerateSpan(regime),
            other => other,
        })?,
    };

    // η components of the failure vectors ν'_i = Σ_j λ_ij a_j Φ_j.
    let au = Vector3::from_fn(|j, _| frame.aw[j] * frame.u[j]);
    let av = Vector3::from_fn(|j, _| frame.aw[j] * frame.v[j]);
    let lam_row = |i: usize| Vector3::new(lam[(i, 0)], lam[(i, 1)], lam[(i, 2)]);
    let forms = InnerProducts {
        a: tau0.dot(&mu1),
        b0: tau0.dot(&mu2),
        b1: tau1.dot(&mu2),
        m10: lam_row(1).dot(&au),
        m11: lam_row(1).dot(&av),
        m20: lam_row(2).dot(&au),
        m21: lam_row(2).dot(&av),
    };
    let beta = solve_beta(&forms).map_err(|e| match e {
        SeparabilityError::DegenerateEquation(_) => SeparabilityError::DegenerateEquation(regime),
        other => other,
    })?;
    let kappa3 = solve_kappa3(&forms, beta).map_err(|e| match e {
        SeparabilityError::NoSolution(_) => SeparabilityError::NoSolution(regime),
        other => other,
    })?;

    let eta0 = tau0.scale(beta.cos()) + tau1.scale(beta.sin());
    let eta1 = tau0.scale(-beta.sin()) + tau1.scale(beta.cos());
    let eta2 = eta0.cross(&eta1);
    let basis = to_complex_basis([eta0, eta1, eta2]);
    let c = omega_matrix(kappa3) * lam;
    let (psi, schmidt_residuals) = assemble(ensemble, params, &c, &basis);
    Ok(SeparableDecomposition {
        c,
        kappa1,
        kappa2,
        kappa3,
        beta,
        eta_basis: basis,
        psi,
        schmidt_residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{validate_ensemble, OverlapSet, Priors};
    use crate::jointstate::build_rho;
    use crate::protocol::{self, ThetaAngles};
    use nalgebra::Matrix6;

    fn ens(p: [f64; 3], g: [f64; 3]) -> Ensemble {
        validate_ensemble(
            Priors::new(p[0], p[1], p[2]).unwrap(),
            OverlapSet::new(g[0], g[1], g[2]).unwrap(),
        )
        .unwrap()
    }

    fn equal(p: [f64; 3], g: f64) -> Ensemble {
        ens(p, [g, g, g])
    }

    fn check_decomposition(e: &Ensemble) -> SeparableDecomposition {
        let params = protocol::optimize(e);
        let d = build_decomposition(e, &params).unwrap();
        // Orthogonality.
        let ortho = (d.c * d.c.transpose() - Matrix3::identity()).norm();
        assert!(ortho < 1e-12, "CᵀC deviation {ortho}");
        // Reconstruction.
        let rho = build_rho(&params, e, &d.eta_basis).unwrap();
        let mut recon = Matrix6::<C64>::zeros();
        for psi in &d.psi {
            recon += psi * psi.adjoint();
        }
        let err = (recon - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "reconstruction error {err} (regime {})", params.regime);
        // Product purity.
        for r in d.schmidt_residuals {
            assert!(r < 1e-10, "schmidt residual {r} (regime {})", params.regime);
        }
        d
    }

    #[test]
    fn lambda_matrix_printed_rows() {
        let l = lambda_matrix(0.0, 0.0);
        let expect = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        assert!((l - expect).norm() < 1e-15);
        let l = lambda_matrix(std::f64::consts::FRAC_PI_2, 0.0);
        assert!((l.row(0) - nalgebra::RowVector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((l.row(2) - nalgebra::RowVector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        for (k1, k2) in [(0.3, 1.2), (2.1, -0.4), (5.0, 3.3)] {
            let l = lambda_matrix(k1, k2);
            assert!((l * l.transpose() - Matrix3::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn omega_matrix_cases() {
        assert!((omega_matrix(0.0) - Matrix3::identity()).norm() < 1e-15);
        let o = omega_matrix(std::f64::consts::FRAC_PI_2);
        assert!((o[(1, 2)] + 1.0).abs() < 1e-15);
        assert!((o[(2, 1)] - 1.0).abs() < 1e-15);
        let c = omega_matrix(0.7) * lambda_matrix(1.1, -0.3);
        assert!((c * c.transpose() - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn nu0_angles_match_printed_ratio() {
        // Symmetry-broken instance: row 0 of Λ must be proportional to
        // (−sin(θ1+θ2)/(√p0 α0), sinθ2/(√p1 α1), sinθ1/(√p2 α2)).
        let e = equal([0.76, 0.2, 0.04], 0.3);
        let params = protocol::optimize(&e);
        let (k1, k2) = nu0_zero_angles(&params, &e).unwrap();
        let row0 = lambda_matrix(k1, k2).row(0).transpose();
        let p = e.canonical_priors();
        let alpha = params.canonical_alpha();
        let expect = Vector3::new(
            -(params.theta1 + params.theta2).sin() / (p[0].sqrt() * alpha[0]),
            params.theta2.sin() / (p[1].sqrt() * alpha[1]),
            params.theta1.sin() / (p[2].sqrt() * alpha[2]),
        );
        let expect = expect / expect.norm();
        assert!((row0 - expect).norm() < 1e-12, "row0 {row0:?} vs {expect:?}");
        // And ν0 built from it vanishes.
        let basis = EtaBasis::computational();
        let phis = jointstate::phi_states(
            ThetaAngles {
                theta1: params.theta1,
                theta2: params.theta2,
                theta3: params.theta3,
                phi: 0.0,
            },
            &basis,
        );
        let mut nu0 = Vector3::<C64>::zeros();
        for j in 0..3 {
            nu0 += phis[j].scale(row0[j] * p[j].sqrt() * alpha[j]);
        }
        assert!(nu0.norm() < 1e-12, "ν0 norm {}", nu0.norm());
    }

    #[test]
    fn nu0_degenerate_for_symmetric_branch() {
        let e = equal([1.0 / 3.0; 3], 0.5);
        let params = protocol::optimize(&e);
        assert!(matches!(
            nu0_zero_angles(&params, &e),
            Err(SeparabilityError::DegenerateRatios(_))
        ));
    }

    #[test]
    fn tau_basis_gram_schmidt() {
        let (t0, t1) = tau_basis(
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::new(1.0, 1.0, 0.0).scale(std::f64::consts::FRAC_1_SQRT_2),
        )
        .unwrap();
        assert!((t0 - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((t1 - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!(tau_basis(&Vector3::zeros(), &Vector3::new(1.0, 0.0, 0.0)).is_err());
        assert!(tau_basis(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(2.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn beta_satisfies_compatibility() {
        let e = equal([0.76, 0.2, 0.04], 0.3);
        let params = protocol::optimize(&e);
        let d = build_decomposition(&e, &params).unwrap();
        // Recompute the forms to evaluate the residual at the chosen β.
        let frame = Frame::new(&e, &params);
        let lam = lambda_matrix(d.kappa1, d.kappa2);
        let mu1 = Vector3::from_fn(|j, _| lam[(1, j)] * frame.bw[j]);
        let mu2 = Vector3::from_fn(|j, _| lam[(2, j)] * frame.bw[j]);
        let (tau0, tau1) = tau_basis(&mu1, &mu2).unwrap();
        let au = Vector3::from_fn(|j, _| frame.aw[j] * frame.u[j]);
        let av = Vector3::from_fn(|j, _| frame.aw[j] * frame.v[j]);
        let row = |i: usize| Vector3::new(lam[(i, 0)], lam[(i, 1)], lam[(i, 2)]);
        let forms = InnerProducts {
            a: tau0.dot(&mu1),
            b0: tau0.dot(&mu2),
            b1: tau1.dot(&mu2),
            m10: row(1).dot(&au),
            m11: row(1).dot(&av),
            m20: row(2).dot(&au),
            m21: row(2).dot(&av),
        };
        assert!(forms.compatibility_residual(d.beta).abs() < 1e-12);
        // Perturbing β breaks compatibility.
        assert!(forms.compatibility_residual(d.beta + 0.05).abs() > 1e-6);
    }

    #[test]
    fn decomposition_all_equal_overlap_regimes() {
        check_decomposition(&equal([0.5, 0.3, 0.2], 0.5)); // I
        check_decomposition(&equal([0.76, 0.2, 0.04], 0.3)); // II
        check_decomposition(&equal([0.76, 0.2, 0.04], 0.8)); // III
        check_decomposition(&equal([0.84, 0.12, 0.04], 0.8)); // IV
    }

    #[test]
    fn symmetric_branch_eta0_direction() {
        let e = equal([1.0 / 3.0; 3], 0.5);
        let params = protocol::optimize(&e);
        let d = build_decomposition(&e, &params).unwrap();
        let eta0 = d.eta_basis.eta(0);
        let uniform = Vector3::from_element(C64::from(1.0 / 3.0f64.sqrt()));
        assert!((eta0 - uniform).norm() < 1e-12);
    }

    #[test]
    fn double_omission_eta_is_kept_flag() {
        let e = equal([0.84, 0.12, 0.04], 0.8);
        let params = protocol::optimize(&e);
        let d = build_decomposition(&e, &params).unwrap();
        let eta0 = d.eta_basis.eta(0);
        assert!((eta0[0].re - 1.0).abs() < 1e-12);
        let eta1 = d.eta_basis.eta(1);
        assert!((eta1[1].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_overlap_decompositions() {
        check_decomposition(&ens([0.6, 0.25, 0.15], [0.8, 0.3, 0.7])); // IV via chained omissions
        check_decomposition(&ens([1.0 / 3.0; 3], [0.8, 0.6, 0.8])); // γ0 > 1 single omission
        check_decomposition(&ens([0.5, 0.3, 0.2], [0.3, 0.6, 0.4])); // generic interior
    }

    #[test]
    fn counterfactual_computational_basis_is_entangled() {
        // The η freedom is what removes entanglement: the computational
        // basis yields negativity in the symmetry-broken regimes.
        let e = equal([0.76, 0.2, 0.04], 0.3);
        let params = protocol::optimize(&e);
        let rho = build_rho(&params, &e, &EtaBasis::computational()).unwrap();
        assert!(crate::correlations::negativity(&rho) > 1e-6);
        let d = build_decomposition(&e, &params).unwrap();
        let rho_sep = build_rho(&params, &e, &d.eta_basis).unwrap();
        assert!(crate::correlations::negativity(&rho_sep) < 1e-10);
    }

    #[test]
    fn two_state_balance_equation() {
        // p0 = p1 with a negligible third state makes θ1 = 0 exactly; the
        // single-omission β then satisfies the two-state balance
        // p0 α0 √(1−α0²) cos β = p1 α1 √(1−α1²) sin(β + θ1).
        let p2 = 1e-6;
        let p0 = (1.0 - p2) / 2.0;
        let e = equal([p0, p0, p2], 0.5);
        let cand = protocol::step2_omit_one(&e, 2).unwrap();
        assert!(cand.is_feasible());
        assert!(cand.theta1.abs() < 1e-12);
        let params = ProtocolParams {
            alpha: {
                let mut a = [0.0; 3];
                for c in 0..3 {
                    a[e.canonical_perm()[c]] = cand.alpha_sq[c].min(1.0).sqrt();
                }
                a
            },
            theta1: cand.theta1,
            theta2: cand.theta2,
            theta3: cand.theta3,
            phi: 0.0,
            regime: cand.regime,
            perm: e.canonical_perm(),
            p_success: cand.p_success,
        };
        let d = build_decomposition(&e, &params).unwrap();
        let alpha = params.canonical_alpha();
        let p = e.canonical_priors();
        let lhs = p[0] * alpha[0] * (1.0 - alpha[0] * alpha[0]).sqrt() * d.beta.cos();
        let rhs = p[1]
            * alpha[1]
            * (1.0 - alpha[1] * alpha[1]).sqrt()
            * (d.beta + params.theta1).sin();
        assert!((lhs - rhs).abs() < 1e-10, "balance residual {}", lhs - rhs);
        for r in d.schmidt_residuals {
            assert!(r < 1e-10);
        }
    }
}

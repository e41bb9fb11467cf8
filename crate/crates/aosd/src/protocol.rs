//! Analytic optimum of the discrimination success probability.
//!
//! Success probability for failure amplitudes `α_i` is
//! `P = 1 − Σ p_i α_i²`, with the `α_i` tied to the failure-state overlaps
//! `J_ij = ⟨Φ_i|Φ_j⟩` by the unitarity constraint `α_i α_j J_ij = g_ij`.
//! Eliminating the amplitudes gives `α_i² = γ_i |J_jk / (J_ij J_ki)|` over
//! cyclic index triples, so the optimization runs over the four angles that
//! parametrize the `Φ` states.
//!
//! The optimum is piecewise over four regimes, resolved in two steps:
//!
//! - Step 1 compares `√(p0γ0)` against `√(p1γ1) + √(p2γ2)` (canonical
//!   descending order of the products). If the triangle condition holds the
//!   symmetric point `Φ_0 = Φ_1 = Φ_2` is stationary (regime I); otherwise a
//!   symmetry-broken coplanar configuration is (regime II).
//! - Step 2 applies when a candidate amplitude exceeds 1: the offending
//!   state is omitted from discrimination (`α = 1` exactly, regime III), and
//!   if an amplitude still overflows, a second state is omitted (regime IV).
//!   With two initial overflows both omission chains are evaluated and the
//!   larger success probability wins.
//!
//! All candidate geometries are coplanar (the `Φ` states share a great
//! circle), so candidates are carried as signed positions on that circle and
//! the angles `(θ1, θ2, θ3 ∈ {0, π}, φ = 0)` are recovered exactly,
//! never through `arccos` of a near-degenerate value.

use thiserror::Error;

use crate::ensemble::Ensemble;
use crate::jointstate;

/// Feasibility slack on `α² ≤ 1`; boundary optima sit exactly on the
/// constraint, so strict comparison would flip regimes on rounding noise.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("f(r, s, t) requires r ≥ 0, s > 0 and 0 < t ≤ 1 (got r={r}, s={s}, t={t})")]
    DomainError { r: f64, s: f64, t: f64 },
    #[error("some |J_ij| vanishes; the amplitude constraint α_i α_j J_ij = g_ij is singular")]
    SingularOverlap,
    #[error("state index {0} out of range")]
    InvalidIndex(usize),
}

/// The four analytic branches of the optimal protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Symmetric optimum, all failure states equal.
    I,
    /// Symmetry-broken optimum, all amplitudes interior.
    II,
    /// One state omitted from discrimination (one `α = 1`).
    III,
    /// Two states omitted (two `α = 1`).
    IV,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::I => write!(f, "I"),
            Regime::II => write!(f, "II"),
            Regime::III => write!(f, "III"),
            Regime::IV => write!(f, "IV"),
        }
    }
}

/// Angles of the failure-state parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub phi: f64,
}

/// The finalized optimal protocol.
///
/// `alpha` and `p_success` are in user index order; the angles refer to the
/// canonical frame (states sorted by descending `p_i γ_i`), which is also the
/// frame in which [`crate::jointstate`] builds the joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    pub alpha: [f64; 3],
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub phi: f64,
    pub regime: Regime,
    /// Canonical position -> user index.
    pub perm: [usize; 3],
    pub p_success: f64,
}

impl ProtocolParams {
    /// Failure amplitudes in canonical order.
    pub fn canonical_alpha(&self) -> [f64; 3] {
        [0, 1, 2].map(|c| self.alpha[self.perm[c]])
    }

    pub fn angles(&self) -> ThetaAngles {
        ThetaAngles { theta1: self.theta1, theta2: self.theta2, theta3: self.theta3, phi: self.phi }
    }

    /// Canonical indices whose amplitude sits on the `α = 1` boundary.
    pub fn omitted(&self) -> Vec<usize> {
        self.canonical_alpha()
            .iter()
            .enumerate()
            .filter(|(_, a)| (**a - 1.0).abs() <= FEASIBILITY_TOL)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Critical overlaps of the equal-overlap protocol,
/// `γᶜ₁ = √p2 / (√p0 − √p1)` and `γᶜ₂ = √p1 / (√p0 − √p1)`.
/// Encoded as `+∞` when `p0 = p1` (the triangle condition then always holds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeBoundaries {
    pub gamma_c1: f64,
    pub gamma_c2: f64,
}

/// An intermediate optimizer candidate in the canonical frame.
///
/// `alpha_sq` entries may exceed 1; [`Candidate::infeasible_indices`] lists
/// them and `optimize` resolves the overflow through the omission chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub regime: Regime,
    /// Squared failure amplitudes, canonical order.
    pub alpha_sq: [f64; 3],
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub phi: f64,
    /// Canonical indices constrained to `α = 1` by construction.
    pub omitted: Vec<usize>,
    pub p_success: f64,
}

impl Candidate {
    pub fn infeasible_indices(&self) -> Vec<usize> {
        self.alpha_sq
            .iter()
            .enumerate()
            .filter(|(_, a2)| **a2 > 1.0 + FEASIBILITY_TOL)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.infeasible_indices().is_empty()
    }
}

/// The angle function `f(r, s, t) = arccos √(1 / [1 + √(r/s)(1/t − 1)])`.
pub fn f_angle(r: f64, s: f64, t: f64) -> Result<f64, ProtocolError> {
    if !(r >= 0.0) || !(s > 0.0) || !(t > 0.0 && t <= 1.0) {
        return Err(ProtocolError::DomainError { r, s, t });
    }
    let inner = 1.0 / (1.0 + (r / s).sqrt() * (1.0 / t - 1.0));
    Ok(inner.sqrt().min(1.0).acos())
}

/// Triangle condition `√(p0γ0) ≤ √(p1γ1) + √(p2γ2)` in canonical order.
/// Equality counts as satisfied (the regime I and II formulas coincide
/// there).
pub fn triangle_condition(ensemble: &Ensemble) -> bool {
    let p = ensemble.canonical_priors();
    let g = ensemble.canonical_derived();
    (p[0] * g[0]).sqrt() <= (p[1] * g[1]).sqrt() + (p[2] * g[2]).sqrt()
}

/// Critical overlaps for the equal-overlap case. Expects priors already in
/// descending order; returns `+∞` boundaries when `p0 = p1`.
pub fn critical_gammas(priors: &crate::ensemble::Priors) -> RegimeBoundaries {
    let d = priors.p0.sqrt() - priors.p1.sqrt();
    if d <= 0.0 {
        return RegimeBoundaries { gamma_c1: f64::INFINITY, gamma_c2: f64::INFINITY };
    }
    RegimeBoundaries { gamma_c1: priors.p2.sqrt() / d, gamma_c2: priors.p1.sqrt() / d }
}

/// Amplitudes from the constraint `α_i² = γ_i |J_jk / (J_ij J_ki)|`, with
/// the `J` overlaps computed from the given angles. Canonical frame; the
/// returned amplitudes may exceed 1.
pub fn alphas_from_phis(
    angles: ThetaAngles,
    ensemble: &Ensemble,
) -> Result<[f64; 3], ProtocolError> {
    let basis = jointstate::EtaBasis::computational();
    let phis = jointstate::phi_states(angles, &basis);
    let j01 = phis[0].dotc(&phis[1]).norm();
    let j12 = phis[1].dotc(&phis[2]).norm();
    let j20 = phis[2].dotc(&phis[0]).norm();
    if j01 < 1e-12 || j12 < 1e-12 || j20 < 1e-12 {
        return Err(ProtocolError::SingularOverlap);
    }
    let g = ensemble.canonical_derived();
    Ok([
        (g[0] * j12 / (j01 * j20)).sqrt(),
        (g[1] * j20 / (j12 * j01)).sqrt(),
        (g[2] * j01 / (j20 * j12)).sqrt(),
    ])
}

/// A coplanar candidate geometry: signed angular positions of the three
/// failure states on a common great circle.
fn candidate_from_positions(
    ensemble: &Ensemble,
    regime: Regime,
    mut pos: [f64; 3],
    omitted: &[usize],
) -> Candidate {
    // Shift so state 0 sits at angle zero and mirror so state 1 has a
    // nonnegative position: Φ_1 then carries +sin θ1 and the side of Φ_2
    // fixes θ3 ∈ {0, π} without any arccos extraction.
    let origin = pos[0];
    for p in pos.iter_mut() {
        *p -= origin;
    }
    if pos[1] < 0.0 {
        for p in pos.iter_mut() {
            *p = -*p;
        }
    }
    let theta1 = pos[1];
    let theta2 = pos[2].abs();
    let theta3 = if pos[2] > 0.0 && theta1 > 0.0 { 0.0 } else { std::f64::consts::PI };

    let j = |a: usize, b: usize| (pos[a] - pos[b]).cos();
    let g = ensemble.canonical_derived();
    let mut alpha_sq = [
        g[0] * (j(1, 2) / (j(0, 1) * j(2, 0))).abs(),
        g[1] * (j(2, 0) / (j(1, 2) * j(0, 1))).abs(),
        g[2] * (j(0, 1) / (j(2, 0) * j(1, 2))).abs(),
    ];
    for &o in omitted {
        alpha_sq[o] = 1.0;
    }
    let p = ensemble.canonical_priors();
    let p_success = 1.0 - p[0] * alpha_sq[0] - p[1] * alpha_sq[1] - p[2] * alpha_sq[2];
    Candidate {
        regime,
        alpha_sq,
        theta1,
        theta2,
        theta3,
        phi: 0.0,
        omitted: omitted.to_vec(),
        p_success,
    }
}

/// Step 1: the unconstrained stationary point. Regime I when the triangle
/// condition holds (all failure states equal, `α_i² = γ_i`), regime II
/// otherwise. Amplitude overflow is reported through the candidate, not an
/// error.
pub fn step1(ensemble: &Ensemble) -> Candidate {
    let p = ensemble.canonical_priors();
    let g = ensemble.canonical_derived();
    let pg = [p[0] * g[0], p[1] * g[1], p[2] * g[2]];
    if triangle_condition(ensemble) {
        let p_success = 1.0 - pg[0] - pg[1] - pg[2];
        return Candidate {
            regime: Regime::I,
            alpha_sq: g,
            theta1: 0.0,
            theta2: 0.0,
            theta3: std::f64::consts::PI,
            phi: 0.0,
            omitted: Vec::new(),
            p_success,
        };
    }
    // Triangle violated: √(pg0) − √(pg1) > √(pg2) > 0, so Υ ∈ (0, 1).
    let upsilon = pg[2].sqrt() / (pg[0].sqrt() - pg[1].sqrt());
    let t12 = f_angle(pg[0], pg[1], upsilon).expect("Υ ∈ (0,1)");
    let t2 = f_angle(pg[1], pg[0], upsilon).expect("Υ ∈ (0,1)");
    candidate_from_positions(ensemble, Regime::II, [0.0, t12 - t2, -t2], &[])
}

/// Step 2, single omission: maximize `P` under `α_omit = 1`.
///
/// For derived overlap `γ_o ≤ 1` the omitted state sits on the far side of
/// state 0 (the printed angle formulas); for `γ_o > 1` — which happens when
/// the overflow came from regime I — the constrained optimum places it
/// inside the wedge of the two kept states, at
/// `tan²u = (1 − 1/γ_o) √(s/r)` and `tan²v = (1 − 1/γ_o) √(r/s)`.
pub fn step2_omit_one(ensemble: &Ensemble, omit: usize) -> Result<Candidate, ProtocolError> {
    if omit > 2 {
        return Err(ProtocolError::InvalidIndex(omit));
    }
    let p = ensemble.canonical_priors();
    let g = ensemble.canonical_derived();
    let kept: Vec<usize> = (0..3).filter(|&i| i != omit).collect();
    let (mut a, mut b) = (kept[0], kept[1]);
    if p[a] * g[a] < p[b] * g[b] {
        std::mem::swap(&mut a, &mut b);
    }
    let (r, s, go) = (p[a] * g[a], p[b] * g[b], g[omit]);

    let mut pos = [0.0f64; 3];
    if go <= 1.0 {
        let v = f_angle(r, s, go)?; // angle between Φ_b and Φ_omit
        let w = f_angle(s, r, go)?; // angle between Φ_a and Φ_omit
        pos[a] = 0.0;
        pos[b] = v - w;
        pos[omit] = -w;
    } else {
        let kappa = 1.0 - 1.0 / go;
        let u = (kappa * (s / r).sqrt()).sqrt().atan();
        let v = (kappa * (r / s).sqrt()).sqrt().atan();
        pos[a] = 0.0;
        pos[omit] = u;
        pos[b] = u + v;
    }
    Ok(candidate_from_positions(ensemble, Regime::III, pos, &[omit]))
}

/// Step 2, double omission: `α = 1` for both indices of `omit_pair`; the
/// surviving amplitude is `α_k² = γ_k (γ_1 + γ_2 − 2γ_1γ_2)/(1 − γ_1γ_2)`
/// over the omitted pair's derived overlaps.
pub fn step2_omit_two(
    ensemble: &Ensemble,
    omit_pair: (usize, usize),
) -> Result<Candidate, ProtocolError> {
    let (o1, o2) = omit_pair;
    if o1 > 2 || o2 > 2 || o1 == o2 {
        return Err(ProtocolError::InvalidIndex(o1.max(o2)));
    }
    let g = ensemble.canonical_derived();
    let k = (0..3).find(|&i| i != o1 && i != o2).expect("third index");
    let (g1, g2) = (g[o1], g[o2]);
    // The omitted pair must sit exactly at its prescribed overlap
    // (α = 1 on both sides), and the two expressions for the surviving
    // amplitude must agree: J_{k,o2}/J_{k,o1} = g_{k,o2}/g_{k,o1}. That
    // ratio line meets the realizability boundary at the optimum. The
    // kept state lands between the omitted pair when both γ ≤ 1 and
    // outside the wedge otherwise. g1 * g2 = overlap(o1,o2)² < 1.
    let c = (g1 * g2).sqrt().min(1.0);
    let ratio = (g2 / g1).sqrt();
    let theta_c = c.acos();
    let psi = ((ratio - c) / theta_c.sin()).atan();
    let mut pos = [0.0f64; 3];
    pos[o1] = 0.0;
    pos[o2] = theta_c;
    pos[k] = psi;
    let mut cand = candidate_from_positions(ensemble, Regime::IV, pos, &[o1, o2]);
    // Pin the survivor to its closed form; the position-derived value agrees
    // to rounding but the closed form is the published quantity.
    cand.alpha_sq[k] = g[k] * (g1 + g2 - 2.0 * g1 * g2) / (1.0 - g1 * g2);
    let p = ensemble.canonical_priors();
    cand.p_success = 1.0 - p[k] * cand.alpha_sq[k] - p[o1] - p[o2];
    Ok(cand)
}

/// Full decision tree: Step 1, then omission chains for any overflowing
/// amplitude, largest feasible success probability wins. Ties prefer a
/// candidate omitting canonical index 2, then the lexicographically
/// smallest omission set.
pub fn optimize(ensemble: &Ensemble) -> ProtocolParams {
    let first = step1(ensemble);
    let flagged = first.infeasible_indices();
    if flagged.is_empty() {
        return finalize(ensemble, first);
    }

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut seen_pairs: Vec<(usize, usize)> = Vec::new();
    for &o in &flagged {
        let c3 = step2_omit_one(ensemble, o).expect("omit index < 3");
        let still = c3.infeasible_indices();
        if still.is_empty() {
            candidates.push(c3);
        } else {
            for &o2 in &still {
                let pair = (o.min(o2), o.max(o2));
                if seen_pairs.contains(&pair) {
                    continue;
                }
                seen_pairs.push(pair);
                let c4 = step2_omit_two(ensemble, pair).expect("distinct indices");
                if c4.is_feasible() {
                    candidates.push(c4);
                }
            }
        }
    }
    let best = candidates
        .into_iter()
        .max_by(|x, y| {
            x.p_success
                .total_cmp(&y.p_success)
                .then_with(|| x.omitted.contains(&2).cmp(&y.omitted.contains(&2)))
                .then_with(|| y.omitted.cmp(&x.omitted))
        })
        .expect("omission chain always yields a feasible candidate for a valid ensemble");
    finalize(ensemble, best)
}

fn finalize(ensemble: &Ensemble, cand: Candidate) -> ProtocolParams {
    let perm = ensemble.canonical_perm();
    let p_user = ensemble.priors().as_array();
    let mut alpha = [0.0f64; 3];
    for c in 0..3 {
        let a2 = cand.alpha_sq[c].clamp(0.0, 1.0);
        alpha[perm[c]] = a2.sqrt();
    }
    let p_success = 1.0
        - p_user
            .iter()
            .zip(alpha.iter())
            .map(|(p, a)| p * a * a)
            .sum::<f64>();
    ProtocolParams {
        alpha,
        theta1: cand.theta1,
        theta2: cand.theta2,
        theta3: cand.theta3,
        phi: cand.phi,
        regime: cand.regime,
        perm,
        p_success,
    }
}

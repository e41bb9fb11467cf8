//! The discrimination instance: prior probabilities and pairwise overlaps.
//!
//! An [`Ensemble`] fixes three pure qutrit states only through their Gram
//! matrix (unit diagonal, real overlaps `g_ij` off the diagonal) and the
//! priors `p_i`. Explicit state vectors, when needed, are realized by a
//! Cholesky factorization of the Gram matrix. Validation enforces strict
//! positivity `0 < g_ij < 1` and positive-definiteness of the Gram matrix;
//! both are required by every downstream formula (the derived ratios
//! `γ_i = g_ij g_ki / g_jk` divide by an overlap, and linear independence
//! fails at `g_ij = 1`).

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::C64;

/// Priors must sum to one within this tolerance.
pub const PRIOR_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("priors must be nonnegative and sum to 1 within 1e-12 (got sum {sum})")]
    NonNormalizedPriors { sum: f64 },
    #[error("overlap g{index} = {value} outside the open interval (0, 1)")]
    OverlapOutOfRange { index: &'static str, value: f64 },
    #[error("Gram matrix is not positive definite: the three states are linearly dependent")]
    LinearlyDependentStates,
}

/// Prior probabilities `(p0, p1, p2)` of the three preparations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Priors {
    pub fn new(p0: f64, p1: f64, p2: f64) -> Result<Self, EnsembleError> {
        let sum = p0 + p1 + p2;
        let ok = p0 >= 0.0 && p1 >= 0.0 && p2 >= 0.0 && (sum - 1.0).abs() <= PRIOR_SUM_TOL;
        if !ok {
            return Err(EnsembleError::NonNormalizedPriors { sum });
        }
        Ok(Self { p0, p1, p2 })
    }

    /// Rescale raw weights to sum to one. Used by the CLI `--renormalize`
    /// path; the core constructor stays strict.
    pub fn renormalized(w0: f64, w1: f64, w2: f64) -> Result<Self, EnsembleError> {
        let sum = w0 + w1 + w2;
        if !(sum > 0.0) || w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
            return Err(EnsembleError::NonNormalizedPriors { sum });
        }
        Ok(Self { p0: w0 / sum, p1: w1 / sum, p2: w2 / sum })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }
}

/// Pairwise overlaps `g01 = ⟨ψ0|ψ1⟩`, `g12 = ⟨ψ1|ψ2⟩`, `g20 = ⟨ψ2|ψ0⟩`,
/// each in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapSet {
    pub g01: f64,
    pub g12: f64,
    pub g20: f64,
}

impl OverlapSet {
    pub fn new(g01: f64, g12: f64, g20: f64) -> Result<Self, EnsembleError> {
        for (name, g) in [("01", g01), ("12", g12), ("20", g20)] {
            if !(g > 0.0 && g < 1.0) {
                return Err(EnsembleError::OverlapOutOfRange { index: name, value: g });
            }
        }
        Ok(Self { g01, g12, g20 })
    }

    /// Equal-overlap shorthand used by the sweep subcommand and fixtures.
    pub fn equal(g: f64) -> Result<Self, EnsembleError> {
        Self::new(g, g, g)
    }

    /// Overlap between states `i` and `j` (`i != j`).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 1) => self.g01,
            (1, 2) => self.g12,
            (0, 2) => self.g20,
            _ => panic!("overlap indices must be distinct and < 3"),
        }
    }
}

/// The cyclic ratios `γ_i = g_ij g_ki / g_jk` entering the success
/// probability. They satisfy `γ_i γ_j = g_ij²` pairwise, and each is
/// strictly positive; individual `γ_i` may exceed 1 for strongly asymmetric
/// overlap sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedOverlaps {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl DerivedOverlaps {
    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma0, self.gamma1, self.gamma2]
    }
}

/// A validated discrimination instance.
///
/// `canonical_perm` maps canonical positions to user indices: position `c`
/// in the descending ordering of the products `p_i γ_i` holds the user state
/// `canonical_perm[c]`. Ties prefer the identity permutation, then the
/// lexicographically smallest one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ensemble {
    priors: Priors,
    overlaps: OverlapSet,
    canonical_perm: [usize; 3],
}

/// All six permutations of `{0,1,2}` in lexicographic order. The identity
/// comes first, which implements the tie-break rule.
const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Validate raw priors and overlaps and build the canonical permutation.
pub fn validate_ensemble(priors: Priors, overlaps: OverlapSet) -> Result<Ensemble, EnsembleError> {
    // Positive definiteness via Cholesky; this is the same factorization
    // that realize_states uses.
    if Matrix3::new(
        1.0,
        overlaps.g01,
        overlaps.g20,
        overlaps.g01,
        1.0,
        overlaps.g12,
        overlaps.g20,
        overlaps.g12,
        1.0,
    )
    .cholesky()
    .is_none()
    {
        return Err(EnsembleError::LinearlyDependentStates);
    }

    let p = priors.as_array();
    let gam = derived_from(&overlaps);
    let products = [p[0] * gam[0], p[1] * gam[1], p[2] * gam[2]];
    let perm = *PERMUTATIONS
        .iter()
        .find(|perm| {
            products[perm[0]] >= products[perm[1]] && products[perm[1]] >= products[perm[2]]
        })
        .expect("some permutation always sorts three reals");

    Ok(Ensemble { priors, overlaps, canonical_perm: perm })
}

fn derived_from(overlaps: &OverlapSet) -> [f64; 3] {
    let OverlapSet { g01, g12, g20 } = *overlaps;
    [g01 * g20 / g12, g12 * g01 / g20, g20 * g12 / g01]
}

impl Ensemble {
    pub fn new(priors: Priors, overlaps: OverlapSet) -> Result<Self, EnsembleError> {
        validate_ensemble(priors, overlaps)
    }

    pub fn priors(&self) -> Priors {
        self.priors
    }

    pub fn overlaps(&self) -> OverlapSet {
        self.overlaps
    }

    pub fn canonical_perm(&self) -> [usize; 3] {
        self.canonical_perm
    }

    pub fn derived_overlaps(&self) -> DerivedOverlaps {
        let [gamma0, gamma1, gamma2] = derived_from(&self.overlaps);
        DerivedOverlaps { gamma0, gamma1, gamma2 }
    }

    /// Priors in canonical (descending `p_i γ_i`) order.
    pub fn canonical_priors(&self) -> [f64; 3] {
        let p = self.priors.as_array();
        self.canonical_perm.map(|u| p[u])
    }

    /// Derived overlaps in canonical order. Relabeling the states permutes
    /// the `γ_i` alongside, since `γ_i` depends symmetrically on the two
    /// overlaps involving state `i`.
    pub fn canonical_derived(&self) -> [f64; 3] {
        let g = derived_from(&self.overlaps);
        self.canonical_perm.map(|u| g[u])
    }

    /// Overlap between canonical states `c` and `d`.
    pub fn canonical_overlap(&self, c: usize, d: usize) -> f64 {
        self.overlaps.get(self.canonical_perm[c], self.canonical_perm[d])
    }

    /// Position of user state `u` in the canonical ordering.
    pub fn canonical_position(&self, u: usize) -> usize {
        self.canonical_perm.iter().position(|&x| x == u).expect("index < 3")
    }

    /// The symmetric Gram matrix of the three states.
    pub fn gram_matrix(&self) -> Matrix3<f64> {
        gram_matrix(&self.overlaps)
    }

    /// Explicit unit vectors with the prescribed pairwise overlaps, from the
    /// Cholesky factor of the Gram matrix (row `i` of `L` is state `i`).
    pub fn realize_states(&self) -> Result<[Vector3<C64>; 3], EnsembleError> {
        let chol = self
            .gram_matrix()
            .cholesky()
            .ok_or(EnsembleError::LinearlyDependentStates)?;
        let l = chol.l();
        Ok([0, 1, 2].map(|i| Vector3::new(C64::from(l[(i, 0)]), C64::from(l[(i, 1)]), C64::from(l[(i, 2)]))))
    }

    /// Flat text record `p0,p1,p2,g01,g12,g20` used by the CLI and fixtures.
    pub fn to_record(&self) -> String {
        let p = self.priors.as_array();
        let o = self.overlaps;
        [p[0], p[1], p[2], o.g01, o.g12, o.g20]
            .map(crate::format_full)
            .join(",")
    }

    /// Parse the flat record format produced by [`Ensemble::to_record`].
    pub fn from_record(s: &str) -> Result<Self, EnsembleError> {
        let nums: Vec<f64> = s
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| EnsembleError::NonNormalizedPriors { sum: f64::NAN })?;
        if nums.len() != 6 {
            return Err(EnsembleError::NonNormalizedPriors { sum: f64::NAN });
        }
        let priors = Priors::new(nums[0], nums[1], nums[2])?;
        let overlaps = OverlapSet::new(nums[3], nums[4], nums[5])?;
        validate_ensemble(priors, overlaps)
    }
}

/// Gram matrix of an overlap set: unit diagonal, `g_ij` off the diagonal.
pub fn gram_matrix(overlaps: &OverlapSet) -> Matrix3<f64> {
    Matrix3::new(
        1.0,
        overlaps.g01,
        overlaps.g20,
        overlaps.g01,
        1.0,
        overlaps.g12,
        overlaps.g20,
        overlaps.g12,
        1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ens(p: [f64; 3], g: [f64; 3]) -> Ensemble {
        validate_ensemble(Priors::new(p[0], p[1], p[2]).unwrap(), OverlapSet::new(g[0], g[1], g[2]).unwrap())
            .unwrap()
    }

    #[test]
    fn symmetric_case_is_identity_permutation() {
        let e = ens([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.5, 0.5, 0.5]);
        assert_eq!(e.canonical_perm(), [0, 1, 2]);
    }

    #[test]
    fn strong_overlaps_still_positive_definite() {
        // Smallest Gram eigenvalue of the equal-overlap matrix is 1 - g.
        let e = ens([0.5, 0.3, 0.2], [0.9, 0.9, 0.9]);
        let eig = nalgebra::SymmetricEigen::new(e.gram_matrix());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - 0.1).abs() < 1e-12, "min eigenvalue {min}");
    }

    #[test]
    fn boundary_overlap_rejected() {
        let priors = Priors::new(0.5, 0.3, 0.2).unwrap();
        let err = OverlapSet::new(1.0, 0.5, 0.5).unwrap_err();
        assert!(matches!(err, EnsembleError::OverlapOutOfRange { .. }));
        let _ = priors;
    }

    #[test]
    fn dependent_states_rejected() {
        // g = (0.9, 0.1, 0.9) has Gram determinant -0.468.
        let priors = Priors::new(0.5, 0.3, 0.2).unwrap();
        let overlaps = OverlapSet::new(0.9, 0.1, 0.9).unwrap();
        assert_eq!(
            validate_ensemble(priors, overlaps).unwrap_err(),
            EnsembleError::LinearlyDependentStates
        );
    }

    #[test]
    fn non_normalized_priors_rejected() {
        assert!(matches!(
            Priors::new(0.5, 0.3, 0.3),
            Err(EnsembleError::NonNormalizedPriors { .. })
        ));
        assert!(matches!(
            Priors::new(-0.1, 0.6, 0.5),
            Err(EnsembleError::NonNormalizedPriors { .. })
        ));
    }

    #[test]
    fn equal_overlap_gram_eigenvalues() {
        // Closed form: 1 + 2g and a doubly degenerate 1 - g.
        let e = ens([0.5, 0.3, 0.2], [0.5, 0.5, 0.5]);
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(e.gram_matrix())
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - 0.5).abs() < 1e-12);
        assert!((eig[1] - 0.5).abs() < 1e-12);
        assert!((eig[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn realized_states_reproduce_overlaps() {
        let e = ens([0.5, 0.3, 0.2], [0.3, 0.6, 0.4]);
        let v = e.realize_states().unwrap();
        let dot = |a: &nalgebra::Vector3<crate::C64>, b: &nalgebra::Vector3<crate::C64>| {
            a.dotc(b).re
        };
        assert!((dot(&v[0], &v[1]) - 0.3).abs() < 1e-12);
        assert!((dot(&v[1], &v[2]) - 0.6).abs() < 1e-12);
        assert!((dot(&v[2], &v[0]) - 0.4).abs() < 1e-12);
        for vi in &v {
            assert!((vi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_overlaps_round_trip() {
        let e = ens([0.5, 0.3, 0.2], [0.3, 0.6, 0.4]);
        let d = e.derived_overlaps();
        assert!((d.gamma0 * d.gamma1 - 0.3f64.powi(2)).abs() < 1e-14);
        assert!((d.gamma1 * d.gamma2 - 0.6f64.powi(2)).abs() < 1e-14);
        assert!((d.gamma2 * d.gamma0 - 0.4f64.powi(2)).abs() < 1e-14);
    }

    #[test]
    fn canonical_products_non_increasing() {
        let e = ens([0.5, 0.3, 0.2], [0.8, 0.8, 0.6]);
        let p = e.canonical_priors();
        let g = e.canonical_derived();
        assert!(p[0] * g[0] >= p[1] * g[1] && p[1] * g[1] >= p[2] * g[2]);
        // Inverse permutation restores user order.
        for u in 0..3 {
            assert_eq!(e.canonical_perm()[e.canonical_position(u)], u);
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let e = ens([0.5, 0.3, 0.2], [0.3, 0.6, 0.4]);
        let again = validate_ensemble(e.priors(), e.overlaps()).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn record_round_trip() {
        let e = ens([0.5, 0.3, 0.2], [0.3, 0.6, 0.4]);
        let rec = e.to_record();
        let back = Ensemble::from_record(&rec).unwrap();
        assert_eq!(e, back);
    }
}

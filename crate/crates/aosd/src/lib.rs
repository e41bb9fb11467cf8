//! Assisted optimal state discrimination (AOSD) of three nonorthogonal qutrit
//! states with a qubit ancilla.
//!
//! The library computes, for an ensemble of three linearly independent pure
//! qutrit states with real positive pairwise overlaps and arbitrary prior
//! probabilities:
//!
//! - the analytic optimum of the unambiguous-discrimination success
//!   probability, including the four piecewise regimes in which zero, one or
//!   two failure amplitudes sit on the `α = 1` boundary ([`protocol`]);
//! - an independent brute-force grid/pattern-search maximizer used to
//!   cross-check the analytic branch selection ([`oracle`]);
//! - the post-measurement joint qutrit⊗qubit density matrix, its ancilla
//!   statistics and its Bloch decomposition over Gell-Mann ⊗ Pauli
//!   generators ([`jointstate`]);
//! - an explicit entanglement-free pure-product decomposition of the joint
//!   state, certifying that the optimal protocol never requires
//!   entanglement ([`separability`]);
//! - geometric quantum discord (closed form and a definitional
//!   measurement-minimization oracle), negativity of the partial transpose,
//!   and a zero-discord commutator witness ([`correlations`]);
//! - a shot-level Monte Carlo simulator with reproducible, partition-proof
//!   seeding ([`montecarlo`]).
//!
//! The `aosd` binary exposes all of the above as subcommands; `aosd sweep`
//! emits CSV suitable for reproducing success-probability and discord curves
//! as functions of the common overlap γ.

pub mod cli;
pub mod correlations;
pub mod ensemble;
pub mod jointstate;
pub mod montecarlo;
pub mod oracle;
pub mod protocol;
pub mod separability;

pub use ensemble::{DerivedOverlaps, Ensemble, EnsembleError, OverlapSet, Priors};
pub use protocol::{ProtocolParams, Regime, RegimeBoundaries};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;

/// Format a float with 17 significant digits, enough to round-trip `f64`.
///
/// All CSV and record output goes through this so that byte-identical reruns
/// are byte-identical files.
pub fn format_full(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.16e}", x)
}

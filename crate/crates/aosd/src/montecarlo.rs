//! Shot-level stochastic simulation of the discrimination protocol.
//!
//! Randomness is counter-based: every shot gets its own ChaCha8 stream
//! derived from the report seed and the shot index, so the merged report is
//! identical for any partitioning of the shot range across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::Ensemble;
use crate::jointstate::{self, EtaBasis};
use crate::protocol::ProtocolParams;

/// Outcome counts of a simulation run.
///
/// The confusion matrix counts `(prepared, identified)` pairs on the
/// success branch only, in user index order; unambiguity means it stays
/// diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotReport {
    pub shots: u64,
    pub successes: u64,
    pub failures: u64,
    pub confusion: [[u64; 3]; 3],
    pub seed: u64,
}

impl ShotReport {
    fn empty(seed: u64) -> Self {
        Self { shots: 0, successes: 0, failures: 0, confusion: [[0; 3]; 3], seed }
    }

    fn merge(mut self, other: &ShotReport) -> Self {
        self.shots += other.shots;
        self.successes += other.successes;
        self.failures += other.failures;
        for i in 0..3 {
            for j in 0..3 {
                self.confusion[i][j] += other.confusion[i][j];
            }
        }
        self
    }

    /// CSV row `shots,successes,failures,c00,c01,...,c22,seed`.
    pub fn to_csv_row(&self) -> String {
        let mut fields = vec![
            self.shots.to_string(),
            self.successes.to_string(),
            self.failures.to_string(),
        ];
        for row in &self.confusion {
            for c in row {
                fields.push(c.to_string());
            }
        }
        fields.push(self.seed.to_string());
        fields.join(",")
    }

    pub const CSV_HEADER: &'static str =
        "shots,successes,failures,c00,c01,c02,c10,c11,c12,c20,c21,c22,seed";
}

/// Knobs for [`simulate_opts`].
#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    /// Number of contiguous worker partitions the shot range is split into.
    /// Results are independent of this value.
    pub partitions: usize,
    /// Sample the success-branch readout from the Born distribution of the
    /// transformed state instead of the (equivalent) prepared-index point
    /// mass. Slower; used for cross-validation.
    pub full_born: bool,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self { partitions: rayon::current_num_threads(), full_born: false }
    }
}

/// Simulate `shots` preparations and ancilla measurements.
pub fn simulate(
    ensemble: &Ensemble,
    params: &ProtocolParams,
    basis: &EtaBasis,
    shots: u64,
    seed: u64,
) -> ShotReport {
    simulate_opts(ensemble, params, basis, shots, seed, SimulateOptions::default())
}

pub fn simulate_opts(
    ensemble: &Ensemble,
    params: &ProtocolParams,
    basis: &EtaBasis,
    shots: u64,
    seed: u64,
    opts: SimulateOptions,
) -> ShotReport {
    let p = ensemble.priors().as_array();
    let cum = [p[0], p[0] + p[1]];
    // Success-branch readout distribution per prepared canonical state:
    // |⟨s|⟨0_a| χ_c⟩|², normalized. A point mass at s = c by construction.
    let chis = jointstate::chi_states(params, ensemble, basis);
    let mut born = [[0.0f64; 3]; 3];
    for c in 0..3 {
        let mut tot = 0.0;
        for s in 0..3 {
            born[c][s] = chis[c][2 * s].norm_sqr();
            tot += born[c][s];
        }
        if tot > 0.0 {
            for s in 0..3 {
                born[c][s] /= tot;
            }
        }
    }
    let alpha = params.alpha;
    let perm = params.perm;

    let partitions = opts.partitions.max(1) as u64;
    let chunk = shots.div_ceil(partitions);
    let ranges: Vec<(u64, u64)> = (0..partitions)
        .map(|w| (w * chunk, ((w + 1) * chunk).min(shots)))
        .filter(|(lo, hi)| lo < hi)
        .collect();

    ranges
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut rep = ShotReport::empty(seed);
            for shot in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(shot);
                let u1: f64 = rng.gen();
                let prepared = if u1 < cum[0] {
                    0
                } else if u1 < cum[1] {
                    1
                } else {
                    2
                };
                let a = alpha[prepared];
                let u2: f64 = rng.gen();
                rep.shots += 1;
                if u2 < 1.0 - a * a {
                    rep.successes += 1;
                    let identified = if opts.full_born {
                        let c = perm.iter().position(|&u| u == prepared).expect("index < 3");
                        let u3: f64 = rng.gen();
                        let mut acc = 0.0;
                        let mut s_out = 2;
                        for s in 0..3 {
                            acc += born[c][s];
                            if u3 < acc {
                                s_out = s;
                                break;
                            }
                        }
                        perm[s_out]
                    } else {
                        prepared
                    };
                    rep.confusion[prepared][identified] += 1;
                } else {
                    rep.failures += 1;
                }
            }
            rep
        })
        .reduce(|| ShotReport::empty(seed), |a, b| a.merge(&b))
}

//! Brute-force maximization of the success probability, independent of the
//! analytic branch selection.
//!
//! The search runs over the four angles of the failure-state
//! parametrization on a uniform grid over `[0, 2π)⁴`, followed by a
//! pattern search with shrinking step started from the best grid points.
//! Feasibility (`α_i² ≤ 1`) is handled with an exact penalty during
//! refinement so that boundary optima — where one or two amplitudes sit on
//! the constraint — can be approached from either side; the reported point
//! is always feasible within a small slack. φ is searched even though every
//! analytic optimum here has φ = 0; this validates the restriction instead
//! of assuming it.

use rayon::prelude::*;
use thiserror::Error;

use crate::ensemble::Ensemble;
use crate::protocol::Regime;

/// Amplitude slack α² ≤ 1 + `FEASIBLE_SLACK` for reported points; boundary
/// optima have measure zero on any grid.
pub const FEASIBLE_SLACK: f64 = 1e-9;

/// Exact-penalty weight; the objective's sensitivity to a constraint
/// violation is at most `max p_i < 1`, so any weight above that keeps the
/// penalized optimum on the boundary. Kept close to that bound: a shallow
/// kink lets the pattern search creep along the constraint manifold.
const PENALTY: f64 = 2.0;

/// Pattern-search seeds taken from the grid.
const REFINE_SEEDS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("grid resolution must be at least 8 (got {0})")]
    GridTooCoarse(usize),
    #[error("no feasible point found on the grid or during refinement")]
    NoFeasiblePoint,
}

/// Best point found by the numeric search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub p_success: f64,
    /// `(θ1, θ2, θ3, φ)` at the reported optimum.
    pub angles: [f64; 4],
    /// Failure amplitudes at the optimum (canonical order).
    pub alphas: [f64; 3],
    pub grid_resolution: usize,
    pub refined: bool,
}

/// Histogram of active `α = 1` constraints at the numeric optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeScan {
    /// Number of amplitudes within [`ACTIVE_TOL`] of 1.
    pub active_constraints: usize,
    /// Which canonical amplitudes are active.
    pub active: [bool; 3],
    /// The analytic regimes a boundary structure of this kind corresponds
    /// to: 0 → I/II, 1 → III, 2 → IV.
    pub implied_regimes: Vec<Regime>,
}

struct Objective {
    p: [f64; 3],
    g: [f64; 3],
}

impl Objective {
    /// Squared amplitudes at the given angles; `None` when some |J|
    /// collapses and the constraint becomes singular.
    fn alpha_sq(&self, x: &[f64; 4]) -> Option<[f64; 3]> {
        let [t1, t2, t3, phi] = *x;
        // J01 = cosθ1, J02 = cosθ2,
        // J12 = cosθ1 cosθ2 + sinθ1 sinθ2 cosθ3 e^{iφ}.
        let j01 = t1.cos().abs();
        let j02 = t2.cos().abs();
        let re = t1.cos() * t2.cos() + t1.sin() * t2.sin() * t3.cos() * phi.cos();
        let im = t1.sin() * t2.sin() * t3.cos() * phi.sin();
        let j12 = (re * re + im * im).sqrt();
        if j01 < 1e-9 || j02 < 1e-9 || j12 < 1e-9 {
            return None;
        }
        Some([
            self.g[0] * j12 / (j01 * j02),
            self.g[1] * j02 / (j12 * j01),
            self.g[2] * j01 / (j02 * j12),
        ])
    }

    fn p_of(&self, a2: &[f64; 3]) -> f64 {
        1.0 - self.p[0] * a2[0] - self.p[1] * a2[1] - self.p[2] * a2[2]
    }

    /// Penalized objective: success probability minus an exact penalty on
    /// constraint violation. `-inf` on singular points.
    fn penalized(&self, x: &[f64; 4]) -> f64 {
        match self.alpha_sq(x) {
            None => f64::NEG_INFINITY,
            Some(a2) => {
                let viol: f64 = a2.iter().map(|v| (v - 1.0).max(0.0)).sum();
                self.p_of(&a2) - PENALTY * viol
            }
        }
    }

    /// `α_con²(x) − 1`, defined wherever this particular ratio is
    /// regular. A vanishing numerator overlap is a regular point (the
    /// amplitude goes to zero) even though the other two amplitudes
    /// diverge there, so this sees constraint curves that the full
    /// amplitude vector cannot.
    fn constraint_excess(&self, con: usize, x: &[f64; 4]) -> Option<f64> {
        let [t1, t2, t3, phi] = *x;
        let j01 = t1.cos().abs();
        let j02 = t2.cos().abs();
        let re = t1.cos() * t2.cos() + t1.sin() * t2.sin() * t3.cos() * phi.cos();
        let im = t1.sin() * t2.sin() * t3.cos() * phi.sin();
        let j12 = (re * re + im * im).sqrt();
        let (num, den) = match con {
            0 => (j12, j01 * j02),
            1 => (j02, j12 * j01),
            _ => (j01, j02 * j12),
        };
        if den < 1e-12 {
            return None;
        }
        Some(self.g[con] * num / den - 1.0)
    }

    fn feasible_p(&self, x: &[f64; 4]) -> Option<f64> {
        let a2 = self.alpha_sq(x)?;
        if a2.iter().any(|v| *v > 1.0 + FEASIBLE_SLACK) {
            return None;
        }
        Some(self.p_of(&a2))
    }
}

/// Deterministic comparison: by value, then lexicographically by angles so
/// evaluation order cannot change the winner.
fn better(a: &(f64, [f64; 4]), b: &(f64, [f64; 4])) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.1 < b.1,
    }
}

fn fold_best(acc: &mut Option<(f64, [f64; 4])>, cand: (f64, [f64; 4])) {
    if acc.is_none() || better(&cand, acc.as_ref().unwrap()) {
        *acc = Some(cand);
    }
}

/// Exhaustive grid search plus optional pattern-search refinement.
pub fn numeric_optimize(
    ensemble: &Ensemble,
    grid_n: usize,
    refine: bool,
) -> Result<OracleResult, OracleError> {
    if grid_n < 8 {
        return Err(OracleError::GridTooCoarse(grid_n));
    }
    let obj = Objective { p: ensemble.canonical_priors(), g: ensemble.canonical_derived() };
    let step = 2.0 * std::f64::consts::PI / grid_n as f64;

    // Per-θ1 slice: the top feasible points and the top penalized points.
    // Feasible points drive both the unrefined answer and the refinement
    // seeds; penalized points only pad the seed list when the feasible set
    // is too thin to show up on the grid.
    let slices: Vec<(Vec<(f64, [f64; 4])>, Vec<(f64, [f64; 4])>)> = (0..grid_n)
        .into_par_iter()
        .map(|i1| {
            let mut feas: Vec<(f64, [f64; 4])> = Vec::new();
            let mut pen: Vec<(f64, [f64; 4])> = Vec::new();
            for i2 in 0..grid_n {
                for i3 in 0..grid_n {
                    for i4 in 0..grid_n {
                        let x = [
                            i1 as f64 * step,
                            i2 as f64 * step,
                            i3 as f64 * step,
                            i4 as f64 * step,
                        ];
                        let pv = obj.penalized(&x);
                        if pv.is_finite() {
                            push_seed(&mut pen, (pv, x));
                        }
                        if let Some(p) = obj.feasible_p(&x) {
                            push_seed(&mut feas, (p, x));
                        }
                    }
                }
            }
            (feas, pen)
        })
        .collect();

    let mut feas: Vec<(f64, [f64; 4])> = Vec::new();
    let mut pen: Vec<(f64, [f64; 4])> = Vec::new();
    for (fs, ps) in slices {
        for s in fs {
            push_seed(&mut feas, s);
        }
        for s in ps {
            push_seed(&mut pen, s);
        }
    }
    let mut best_feasible: Option<(f64, [f64; 4])> = feas.first().copied();
    let mut seeds: Vec<(f64, [f64; 4])> = feas.clone();
    for s in pen {
        if seeds.len() >= REFINE_SEEDS {
            break;
        }
        seeds.push(s);
    }

    if refine {
        let refined: Vec<(f64, [f64; 4])> = seeds
            .par_iter()
            .map(|(_, x0)| pattern_search(&obj, *x0, step))
            .collect();
        for (p, x) in refined {
            if p.is_finite() {
                fold_best(&mut best_feasible, (p, x));
            }
        }
        // Boundary optima sit on a thin feasible sliver that free pattern
        // search tracks poorly; walk the active-constraint curves of the
        // coplanar sections directly.
        for cand in boundary_following(&obj) {
            fold_best(&mut best_feasible, cand);
        }
    }

    let (p_success, angles) = best_feasible.ok_or(OracleError::NoFeasiblePoint)?;
    let alphas = obj
        .alpha_sq(&angles)
        .map(|a2| a2.map(|v| v.max(0.0).sqrt()))
        .unwrap_or([f64::NAN; 3]);
    Ok(OracleResult {
        p_success,
        angles: angles.map(normalize_angle),
        alphas,
        grid_resolution: grid_n,
        refined: refine,
    })
}

fn normalize_angle(a: f64) -> f64 {
    a.rem_euclid(2.0 * std::f64::consts::PI)
}

fn push_seed(seeds: &mut Vec<(f64, [f64; 4])>, cand: (f64, [f64; 4])) {
    let sort = |v: &mut Vec<(f64, [f64; 4])>| {
        v.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.partial_cmp(&b.1).unwrap()))
    };
    if seeds.len() < REFINE_SEEDS {
        seeds.push(cand);
        sort(seeds);
    } else if better(&cand, seeds.last().unwrap()) {
        *seeds.last_mut().unwrap() = cand;
        sort(seeds);
    }
}

/// Search directions: the coordinate axes plus all two-coordinate
/// diagonals. At a boundary optimum the penalized objective has a kink
/// along the active constraints; the diagonals span the constraint tangent
/// space, where axis moves alone jam.
fn directions() -> Vec<[f64; 4]> {
    let mut dirs = Vec::with_capacity(32);
    for d in 0..4 {
        for sgn in [1.0, -1.0] {
            let mut v = [0.0; 4];
            v[d] = sgn;
            dirs.push(v);
        }
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            for si in [1.0, -1.0] {
                for sj in [1.0, -1.0] {
                    let mut v = [0.0; 4];
                    v[i] = si;
                    v[j] = sj;
                    dirs.push(v);
                }
            }
        }
    }
    dirs
}

/// Pattern search on the penalized objective; returns the best feasible
/// point visited. Accepted moves are extended while they keep improving,
/// which turns the slow creep along a curved constraint manifold into a
/// geometric number of evaluations; a couple of step-reset restarts shake
/// the walk out of kink jams.
fn pattern_search(obj: &Objective, x: [f64; 4], step0: f64) -> (f64, [f64; 4]) {
    pattern_search_dirs(obj, x, step0, &directions())
}

fn pattern_search_dirs(
    obj: &Objective,
    mut x: [f64; 4],
    step0: f64,
    dirs: &[[f64; 4]],
) -> (f64, [f64; 4]) {
    let mut best_feasible =
        obj.feasible_p(&x).map(|p| (p, x)).unwrap_or((f64::NEG_INFINITY, x));
    let track = |best: &mut (f64, [f64; 4]), y: &[f64; 4]| {
        if let Some(p) = obj.feasible_p(y) {
            let cand = (p, *y);
            if better(&cand, best) {
                *best = cand;
            }
        }
    };
    for _restart in 0..3 {
        let mut step = step0;
        let mut current = obj.penalized(&x);
        while step > 1e-10 {
            let mut best_move: Option<(f64, [f64; 4])> = None;
            for dir in dirs {
                let mut y = x;
                for d in 0..4 {
                    y[d] += dir[d] * step;
                }
                let fy = obj.penalized(&y);
                track(&mut best_feasible, &y);
                if fy > current && best_move.map_or(true, |(fb, _)| fy > fb) {
                    // Expand along the improving direction while it pays.
                    let mut scale = 2.0;
                    let (mut fy, mut y) = (fy, y);
                    loop {
                        let mut z = x;
                        for d in 0..4 {
                            z[d] += dir[d] * step * scale;
                        }
                        let fz = obj.penalized(&z);
                        track(&mut best_feasible, &z);
                        if fz > fy {
                            fy = fz;
                            y = z;
                            scale *= 2.0;
                        } else {
                            break;
                        }
                    }
                    best_move = Some((fy, y));
                }
            }
            match best_move {
                Some((f, y)) => {
                    current = f;
                    x = y;
                }
                None => step *= 0.5,
            }
        }
    }
    track(&mut best_feasible, &x);
    best_feasible
}

/// Resolution of the boundary-following sweeps.
const ARC_GRID: usize = 256;

/// θ2 roots of `α_i²(θ1, θ2) = 1` in a coplanar section, by sign scan and
/// bisection.
fn boundary_roots(obj: &Objective, con: usize, t1: f64, t3: f64) -> Vec<f64> {
    let h = |t2: f64| obj.constraint_excess(con, &[t1, t2, t3, 0.0]);
    let m = ARC_GRID;
    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=m {
        let t2 = std::f64::consts::PI * k as f64 / m as f64;
        let Some(val) = h(t2) else {
            prev = None;
            continue;
        };
        if let Some((t2p, vp)) = prev {
            if vp == 0.0 {
                roots.push(t2p);
            } else if vp * val < 0.0 {
                let (mut lo, mut hi) = (t2p, t2);
                let (mut vlo, _) = (vp, val);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    match h(mid) {
                        Some(vm) => {
                            if vlo * vm <= 0.0 {
                                hi = mid;
                            } else {
                                lo = mid;
                                vlo = vm;
                            }
                        }
                        None => break,
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        prev = Some((t2, val));
    }
    roots
}

/// Best feasible point on the `α_con = 1` curve at this θ1, if any.
fn arc_value(obj: &Objective, con: usize, t1: f64, t3: f64) -> Option<(f64, [f64; 4])> {
    let mut best: Option<(f64, [f64; 4])> = None;
    for t2 in boundary_roots(obj, con, t1, t3) {
        let x = [t1, t2, t3, 0.0];
        if let Some(p) = obj.feasible_p(&x) {
            fold_best(&mut best, (p, x));
        }
    }
    best
}

/// Walk the active-constraint curves of the two coplanar sections
/// (θ3 ∈ {0, π}, φ = 0): sweep θ1, polish the best arc point with a 1-D
/// shrinking-step search, and pin down arc endpoints (where a second
/// amplitude reaches the boundary) by bisection. Returns feasible
/// candidates to merge with the free search.
fn boundary_following(obj: &Objective) -> Vec<(f64, [f64; 4])> {
    let mut out = Vec::new();
    let m = ARC_GRID;
    for t3 in [0.0, std::f64::consts::PI] {
        // Interior optima of the section: dense 2-D grid plus pattern
        // search restricted to (θ1, θ2).
        let rows: Vec<Option<(f64, [f64; 4])>> = (0..=m)
            .into_par_iter()
            .map(|k1| {
                let mut best: Option<(f64, [f64; 4])> = None;
                let t1 = std::f64::consts::PI * k1 as f64 / m as f64;
                for k2 in 0..=m {
                    let t2 = std::f64::consts::PI * k2 as f64 / m as f64;
                    let x = [t1, t2, t3, 0.0];
                    if let Some(p) = obj.feasible_p(&x) {
                        fold_best(&mut best, (p, x));
                    }
                }
                best
            })
            .collect();
        let mut section_best: Option<(f64, [f64; 4])> = None;
        for row in rows.into_iter().flatten() {
            fold_best(&mut section_best, row);
        }
        if let Some((_, x0)) = section_best {
            let plane_dirs: Vec<[f64; 4]> = directions()
                .into_iter()
                .filter(|d| d[2] == 0.0 && d[3] == 0.0)
                .collect();
            let polished =
                pattern_search_dirs(obj, x0, std::f64::consts::PI / m as f64 * 4.0, &plane_dirs);
            if polished.0.is_finite() {
                out.push(polished);
            }
        }
        for con in 0..3 {
            let sweep: Vec<Option<(f64, [f64; 4])>> = (0..=m)
                .into_par_iter()
                .map(|k| arc_value(obj, con, std::f64::consts::PI * k as f64 / m as f64, t3))
                .collect();
            // Best sweep point, polished along θ1.
            let mut best: Option<(f64, usize)> = None;
            for (k, v) in sweep.iter().enumerate() {
                if let Some((p, _)) = v {
                    if best.map_or(true, |(pb, _)| *p > pb) {
                        best = Some((*p, k));
                    }
                }
            }
            if let Some((_, k0)) = best {
                let t1 = std::f64::consts::PI * k0 as f64 / m as f64;
                out.push(polish_arc(obj, con, t1, t3, sweep[k0].expect("feasible")));
            }
            // Arc endpoints: feasibility flips between consecutive sweep
            // points mark a corner where a second constraint activates.
            for k in 1..=m {
                let (a, b) = (&sweep[k - 1], &sweep[k]);
                if a.is_some() == b.is_some() {
                    continue;
                }
                let (mut lo, mut hi) = (
                    std::f64::consts::PI * (k - 1) as f64 / m as f64,
                    std::f64::consts::PI * k as f64 / m as f64,
                );
                let lo_feasible = a.is_some();
                let mut last = if lo_feasible { *a } else { *b };
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let v = arc_value(obj, con, mid, t3);
                    if v.is_some() == lo_feasible {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if let Some(cand) = v {
                        last = Some(cand);
                    }
                }
                if let Some(cand) = last {
                    out.push(cand);
                }
            }
            // Double-boundary corners (and the feasible slivers they
            // bound) can be far smaller than any sweep spacing; locate them
            // from the sign of the second amplitude along this constraint
            // curve, which needs no feasible samples at all, then polish
            // along the curve from each.
            let mut corners = Vec::new();
            for other in 0..3 {
                if other != con {
                    corner_candidates(obj, con, other, t3, &mut corners);
                }
            }
            for cand in corners {
                out.push(polish_arc(obj, con, cand.1[0], t3, cand));
            }
        }
    }
    out
}

/// Shrinking-step search along the `α_con = 1` curve starting from a
/// feasible point on it. Steps that leave the feasible part of the curve
/// are rejected, so the walk adapts to arbitrarily thin segments.
fn polish_arc(
    obj: &Objective,
    con: usize,
    t1_start: f64,
    t3: f64,
    start: (f64, [f64; 4]),
) -> (f64, [f64; 4]) {
    let mut t1 = t1_start;
    let mut cur = start;
    let mut step = std::f64::consts::PI / ARC_GRID as f64;
    while step > 1e-12 {
        let mut moved = false;
        for sgn in [1.0, -1.0] {
            if let Some(cand) = arc_value(obj, con, t1 + sgn * step, t3) {
                if cand.0 > cur.0 {
                    cur = cand;
                    t1 += sgn * step;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    cur
}

/// Excess of a second amplitude on the `α_con = 1` curve: for each θ2 root
/// at this θ1, the pair `(θ2, α_other² − 1)`.
fn excess_on_curve(obj: &Objective, con: usize, other: usize, t1: f64, t3: f64) -> Vec<(f64, f64)> {
    boundary_roots(obj, con, t1, t3)
        .into_iter()
        .filter_map(|t2| obj.constraint_excess(other, &[t1, t2, t3, 0.0]).map(|h| (t2, h)))
        .collect()
}

/// Find points where `α_other` crosses its boundary along the
/// `α_con = 1` curve, by sign scan over θ1 with curve branches matched by
/// θ2 proximity, then bisection. Pushes any feasible corner points found.
fn corner_candidates(
    obj: &Objective,
    con: usize,
    other: usize,
    t3: f64,
    out: &mut Vec<(f64, [f64; 4])>,
) {
    let m = ARC_GRID;
    let step = std::f64::consts::PI / m as f64;
    let mut prev: Vec<(f64, f64)> = Vec::new();
    for k in 0..=m {
        let t1 = step * k as f64;
        let pts = excess_on_curve(obj, con, other, t1, t3);
        for &(t2p, hp) in &prev {
            let Some(&(t2c, hc)) = pts
                .iter()
                .min_by(|a, b| (a.0 - t2p).abs().total_cmp(&(b.0 - t2p).abs()))
            else {
                continue;
            };
            // Same curve branch and a sign change of the second amplitude.
            if (t2c - t2p).abs() > 4.0 * step || hp * hc >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (t1 - step, t1);
            let (mut sign_lo, mut t2_track) = (hp, t2p);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let mid_pts = excess_on_curve(obj, con, other, mid, t3);
                let Some(&(t2m, hm)) = mid_pts
                    .iter()
                    .min_by(|a, b| (a.0 - t2_track).abs().total_cmp(&(b.0 - t2_track).abs()))
                else {
                    break;
                };
                if hm * sign_lo >= 0.0 {
                    lo = mid;
                    sign_lo = hm;
                } else {
                    hi = mid;
                }
                t2_track = t2m;
            }
            let x = [0.5 * (lo + hi), t2_track, t3, 0.0];
            if let Some(p) = obj.feasible_p(&x) {
                out.push((p, x));
            }
        }
        prev = pts;
    }
}

/// Amplitudes within this distance of the boundary count as active when
/// classifying the numeric optimum.
pub const ACTIVE_TOL: f64 = 1e-4;

/// Classify the numeric optimum by its active `α = 1` constraints.
pub fn scan_feasible_regimes(
    ensemble: &Ensemble,
    grid_n: usize,
) -> Result<RegimeScan, OracleError> {
    let result = numeric_optimize(ensemble, grid_n, true)?;
    let active = result.alphas.map(|a| (a - 1.0).abs() <= ACTIVE_TOL);
    let count = active.iter().filter(|b| **b).count();
    let implied = match count {
        0 => vec![Regime::I, Regime::II],
        1 => vec![Regime::III],
        _ => vec![Regime::IV],
    };
    Ok(RegimeScan { active_constraints: count, active, implied_regimes: implied })
}

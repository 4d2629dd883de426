//! Deliberately naive grid reference for the inner problem.
//!
//! [`oracle_grid`] enumerates time splits and phase-2 energies on uniform
//! grids and completes each user's phase-1 energy by exact rate inversion
//! (the smallest `E_1` meeting the residual QoS need, in closed form). It
//! shares no code with the barrier solver — no Newton steps, no barriers,
//! no scaling — so the two can serve as independent checks of each other:
//!
//! * every point the oracle returns is feasible, hence an **upper bound**
//!   on the true optimum that the solver must not exceed (beyond
//!   tolerance);
//! * the best grid point converges to the optimum as the grid refines, so
//!   the solver's objective must match it to within a resolution-limited
//!   gap.
//!
//! Completing `E_1` exactly instead of gridding it only tightens the upper
//! bound (for fixed times and `E_2`, the rate is increasing in `E_1`, so
//! the inverted value is the cheapest feasible choice); both bullet points
//! above are unaffected.
//!
//! Cost grows as `C(R+2J, 2J) · (R+1)^J` for resolution `R` and `J` users;
//! enumeration is parallelized over the first time axis and refuses
//! obviously intractable sizes.

use rayon::prelude::*;
use std::f64::consts::LN_2;

use super::{Allocation, InnerError, InnerProblem};

/// Outcome of [`oracle_grid`].
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Best feasible grid point, if any survived every constraint.
    pub best: Option<Allocation>,
    /// Objective of `best`; `+∞` when no grid point was feasible.
    pub objective: f64,
    /// Number of (time split, phase-2 energy) combinations examined.
    pub candidates: u64,
}

impl OracleResult {
    /// True when no grid point satisfied every constraint. For a truly
    /// infeasible instance this always holds; for a feasible one it can
    /// only occur when the feasible region is thinner than the grid.
    pub fn infeasible_at_resolution(&self) -> bool {
        self.best.is_none()
    }
}

/// Work estimate guard: `C(R+2J, 2J) · (R+1)^J` combinations.
fn estimated_work(j: usize, resolution: usize) -> f64 {
    let mut tuples = 1.0_f64;
    for k in 1..=2 * j {
        tuples *= (resolution + k) as f64 / k as f64;
    }
    tuples * ((resolution + 1) as f64).powi(j as i32)
}

/// Exhaustive uniform-grid search over time splits and phase-2 energies
/// with exact phase-1 completion; see the module docs. `resolution` is the
/// number of grid steps per axis (each time axis takes values
/// `k·T/resolution`, each phase-2 energy `k·p_max·t_2/resolution`).
pub fn oracle_grid(problem: &InnerProblem, resolution: usize) -> Result<OracleResult, InnerError> {
    problem.validate()?;
    let j = problem.n_users();
    if resolution < 2 {
        return Err(InnerError::OracleTooLarge(
            "resolution must be at least 2".into(),
        ));
    }
    if j > 3 {
        return Err(InnerError::OracleTooLarge(format!(
            "grid oracle supports at most 3 users, got {j}"
        )));
    }
    let work = estimated_work(j, resolution);
    if work > 2e9 {
        return Err(InnerError::OracleTooLarge(format!(
            "about {work:.2e} grid combinations for {j} users at resolution {resolution}"
        )));
    }

    let r = resolution;
    let h = problem.frame_seconds / r as f64;

    // Parallelize over the first time axis; each worker scans its subtree
    // sequentially. Results are reduced in axis order afterwards so ties
    // resolve deterministically.
    let per_first: Vec<(Option<(f64, Allocation)>, u64)> = (0..=r)
        .into_par_iter()
        .map(|first| {
            let mut times = vec![0usize; 2 * j];
            times[0] = first;
            let mut state = ScanState {
                problem,
                r,
                h,
                best: None,
                candidates: 0,
            };
            state.scan_times(&mut times, 1, r - first);
            (state.best, state.candidates)
        })
        .collect();

    let mut best: Option<(f64, Allocation)> = None;
    let mut candidates = 0;
    for (local, n) in per_first {
        candidates += n;
        if let Some((obj, alloc)) = local {
            let better = match &best {
                None => true,
                Some((cur, _)) => obj < *cur,
            };
            if better {
                best = Some((obj, alloc));
            }
        }
    }

    Ok(match best {
        Some((objective, alloc)) => OracleResult {
            best: Some(alloc),
            objective,
            candidates,
        },
        None => OracleResult {
            best: None,
            objective: f64::INFINITY,
            candidates,
        },
    })
}

struct ScanState<'a> {
    problem: &'a InnerProblem,
    r: usize,
    h: f64,
    best: Option<(f64, Allocation)>,
    candidates: u64,
}

impl ScanState<'_> {
    /// Recursively fixes time indices `axis..2J` with at most `left` grid
    /// steps remaining in the frame.
    fn scan_times(&mut self, times: &mut Vec<usize>, axis: usize, left: usize) {
        if axis == times.len() {
            let mut e2 = vec![0.0; self.problem.n_users()];
            self.scan_energies(times, &mut e2, 0, 0.0);
            return;
        }
        for k in 0..=left {
            times[axis] = k;
            self.scan_times(times, axis + 1, left - k);
        }
        times[axis] = 0;
    }

    /// Recursively fixes each user's phase-2 energy on its grid, pruning on
    /// the (monotone) energy drain, then completes phase-1 energies.
    fn scan_energies(&mut self, times: &[usize], e2: &mut Vec<f64>, user: usize, drained: f64) {
        let p = self.problem;
        let j = p.n_users();
        let budget_tol = 1e-12 * p.budget.max(1e-12);
        if user == j {
            self.candidates += 1;
            self.complete_and_score(times, e2);
            return;
        }
        let t2 = times[j + user] as f64 * self.h;
        let cap = p.p_max * t2;
        for k in 0..=self.r {
            let e = cap * k as f64 / self.r as f64;
            let d = drained + p.amp_weight[user] * e + p.static_power * t2;
            // The drain is monotone in each e2, so once over budget every
            // later grid value for this user is over too.
            if d + p.fixed_energy > p.budget + budget_tol {
                break;
            }
            e2[user] = e;
            self.scan_energies(times, e2, user + 1, d);
            if t2 == 0.0 {
                break; // only e2 = 0 exists on a zero-length phase
            }
        }
        e2[user] = 0.0;
    }

    fn complete_and_score(&mut self, times: &[usize], e2: &[f64]) {
        let p = self.problem;
        let j = p.n_users();
        let best_obj = self.best.as_ref().map(|(o, _)| *o).unwrap_or(f64::INFINITY);
        let mut e1 = vec![0.0; j];
        let mut obj: f64 = 0.0;
        for user in 0..j {
            let t1 = times[user] as f64 * self.h;
            let t2 = times[j + user] as f64 * self.h;
            let r2 = if t2 > 0.0 {
                t2 * (p.b[user] * e2[user] / t2).ln_1p() / LN_2
            } else {
                0.0
            };
            let residual = p.q_min - r2;
            if residual > 0.0 {
                // Exact inversion: the cheapest E1 with
                // t1·log2(1 + a·E1/t1) = residual.
                if t1 == 0.0 || p.a[user] == 0.0 {
                    return;
                }
                let e = t1 * (residual * LN_2 / t1).exp_m1() / p.a[user];
                let cap = p.p_max * t1;
                if e > cap * (1.0 + 1e-12) {
                    return;
                }
                e1[user] = e.min(cap);
            }
            obj = obj.max(e1[user] + e2[user]);
            if obj >= best_obj {
                return;
            }
        }
        let alloc = Allocation {
            e1,
            e2: e2.to_vec(),
            t1: (0..j).map(|u| times[u] as f64 * self.h).collect(),
            t2: (0..j).map(|u| times[j + u] as f64 * self.h).collect(),
        };
        self.best = Some((obj, alloc));
    }
}

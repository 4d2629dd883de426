//! Exhaustive enumeration over per-element mode assignments: the global
//! optimum certificate for small surfaces.
//!
//! Two granularities: `uniform_rho` sweeps one shared amplification bucket
//! across every active element (the restriction used for desk-scale
//! optimality checks), while the full mode gives each element its own
//! bucket. Candidates are counted as raw composite actions; physically
//! identical ones (an idle element's amplification choice, say) collapse
//! into a single inner solve through a canonicalization cache.

use rayon::prelude::*;
use std::collections::HashSet;

use super::config::rho_bucket_value;
use super::ris_env::problem_for;
use super::{EnvConfig, EnvError, Scheme};
use crate::agent::RHO_BUCKETS;
use crate::channel::ChannelSet;
use crate::inner::solve;
use crate::sysmodel::ModeAssignment;

/// Largest surface the oracle will exhaust.
pub const MAX_ORACLE_ELEMENTS: usize = 6;

/// Result of an exhaustive search.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    /// The best assignment found (the first enumerated candidate if
    /// nothing was feasible).
    pub modes: ModeAssignment,
    /// Its min-max energy; `+∞` when no candidate was feasible.
    pub objective: f64,
    /// Whether any candidate admitted a feasible allocation.
    pub feasible: bool,
    /// Raw composite actions considered (before canonicalization).
    pub candidates: u64,
    /// Distinct inner problems actually solved.
    pub solves: u64,
}

/// One element's canonical physical configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Cell {
    Idle,
    Passive,
    Active(u8),
}

impl Cell {
    fn beta(self) -> bool {
        !matches!(self, Cell::Idle)
    }

    fn alpha(self) -> bool {
        matches!(self, Cell::Active(_))
    }

    fn rho(self, rho_max: f64) -> f64 {
        match self {
            Cell::Active(k) => rho_bucket_value(k as usize, rho_max),
            _ => 1.0,
        }
    }
}

/// Exhaustively evaluates every mode assignment reachable under the
/// config's scheme on one channel realization and returns the global
/// optimum over that set.
///
/// With `uniform_rho`, active elements share a single swept bucket; the
/// hybrid candidate count is then exactly `4^N · 10` raw `(β, α)` tuples
/// times buckets. Without it, each element sweeps its own bucket
/// (`12^N` canonical states under hybrid). Refuses more than
/// [`MAX_ORACLE_ELEMENTS`] elements.
pub fn enumerate_oracle(
    channels: &ChannelSet,
    config: &EnvConfig,
    uniform_rho: bool,
) -> Result<OracleOutcome, EnvError> {
    config.validate()?;
    let n = channels.n_elements();
    if n > MAX_ORACLE_ELEMENTS {
        return Err(EnvError::TooManyElements { n, max: MAX_ORACLE_ELEMENTS });
    }
    if n == 0 {
        return Err(EnvError::InvalidConfig("oracle needs at least one element".into()));
    }

    // Distinct canonical assignments in first-encounter order, plus the
    // raw candidate count.
    let mut seen: HashSet<Vec<Cell>> = HashSet::new();
    let mut distinct: Vec<Vec<Cell>> = Vec::new();
    let mut candidates: u64 = 0;
    let mut consider = |cells: Vec<Cell>, candidates: &mut u64| {
        *candidates += 1;
        if seen.insert(cells.clone()) {
            distinct.push(cells);
        }
    };

    if uniform_rho {
        // Raw per-element choices with the amplification bucket factored
        // out and swept as one shared outer loop.
        let raw: &[Cell] = match config.scheme {
            // (β, α) ∈ {0,1}²; α is physically ignored when β = 0, so two
            // of the four raw tuples canonicalize to Idle.
            Scheme::Hybrid => &[Cell::Idle, Cell::Idle, Cell::Passive, Cell::Active(0)],
            Scheme::ActivePassive => &[Cell::Passive, Cell::Active(0)],
            Scheme::Active => &[Cell::Active(0)],
            Scheme::Passive => &[Cell::Passive],
            Scheme::NoRis => &[Cell::Idle],
        };
        for k in 0..RHO_BUCKETS as u8 {
            let mut odometer = vec![0usize; n];
            loop {
                let cells: Vec<Cell> = odometer
                    .iter()
                    .map(|&c| match raw[c] {
                        Cell::Active(_) => Cell::Active(k),
                        other => other,
                    })
                    .collect();
                consider(cells, &mut candidates);
                if !advance(&mut odometer, raw.len()) {
                    break;
                }
            }
        }
    } else {
        // Canonical per-element states, each active element with its own
        // bucket.
        let mut cells_menu: Vec<Cell> = Vec::new();
        match config.scheme {
            Scheme::Hybrid => {
                cells_menu.push(Cell::Idle);
                cells_menu.push(Cell::Passive);
                cells_menu.extend((0..RHO_BUCKETS as u8).map(Cell::Active));
            }
            Scheme::ActivePassive => {
                cells_menu.push(Cell::Passive);
                cells_menu.extend((0..RHO_BUCKETS as u8).map(Cell::Active));
            }
            Scheme::Active => {
                cells_menu.extend((0..RHO_BUCKETS as u8).map(Cell::Active));
            }
            Scheme::Passive => cells_menu.push(Cell::Passive),
            Scheme::NoRis => cells_menu.push(Cell::Idle),
        }
        let mut odometer = vec![0usize; n];
        loop {
            let cells: Vec<Cell> = odometer.iter().map(|&c| cells_menu[c]).collect();
            consider(cells, &mut candidates);
            if !advance(&mut odometer, cells_menu.len()) {
                break;
            }
        }
    }

    let solves = distinct.len() as u64;

    // Solve the distinct set in parallel. The indexed collect preserves
    // first-encounter order, so the strict-less scan below resolves ties
    // to the earliest candidate regardless of thread scheduling.
    let evaluated: Result<Vec<f64>, EnvError> = distinct
        .par_iter()
        .map(|cells| {
            let modes = assignment_from_cells(cells, config.rho_max)?;
            let problem = problem_for(config, channels, &modes)?;
            let solution = solve(&problem)?;
            Ok(if solution.is_feasible() { solution.objective } else { f64::INFINITY })
        })
        .collect();
    let evaluated = evaluated?;

    let mut best_idx = 0usize;
    let mut best_obj = f64::INFINITY;
    for (idx, &obj) in evaluated.iter().enumerate() {
        if obj < best_obj {
            best_idx = idx;
            best_obj = obj;
        }
    }

    let modes = assignment_from_cells(&distinct[best_idx], config.rho_max)?;
    Ok(OracleOutcome {
        modes,
        objective: best_obj,
        feasible: best_obj.is_finite(),
        candidates,
        solves,
    })
}

/// Advances a mixed-radix odometer (last element fastest); false on wrap.
fn advance(odometer: &mut [usize], radix: usize) -> bool {
    for digit in odometer.iter_mut().rev() {
        *digit += 1;
        if *digit < radix {
            return true;
        }
        *digit = 0;
    }
    false
}

fn assignment_from_cells(cells: &[Cell], rho_max: f64) -> Result<ModeAssignment, EnvError> {
    let beta = cells.iter().map(|c| c.beta()).collect();
    let alpha = cells.iter().map(|c| c.alpha()).collect();
    let rho = cells.iter().map(|c| c.rho(rho_max)).collect();
    ModeAssignment::new(beta, alpha, rho, rho_max).map_err(EnvError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel_set, users_on_circle};
    use crate::env::ris_env::state_for;
    use crate::env::RisEnv;
    use crate::sysmodel::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle_config(n: usize) -> EnvConfig {
        let mut cfg = EnvConfig::default_desk();
        cfg.geometry.ris_elements = n;
        cfg.geometry.ehs_elements = 8;
        cfg.geometry.user_pos = users_on_circle(2, 0.5);
        cfg.params.q_min = 1.5;
        cfg
    }

    fn draw(cfg: &EnvConfig, seed: u64) -> ChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_channel_set(&cfg.geometry, &cfg.links, &mut rng).unwrap()
    }

    #[test]
    fn uniform_candidate_count_is_four_to_the_n_times_buckets() {
        let cfg = oracle_config(4);
        let ch = draw(&cfg, 1);
        let out = enumerate_oracle(&ch, &cfg, true).unwrap();
        assert_eq!(out.candidates, 4u64.pow(4) * 10);
        // Canonicalization collapses the raw set: assignments with no
        // active element appear once, the rest once per bucket.
        assert_eq!(out.solves, 2u64.pow(4) + 10 * (3u64.pow(4) - 2u64.pow(4)));
    }

    #[test]
    fn full_mode_counts_canonical_states() {
        let cfg = oracle_config(2);
        let ch = draw(&cfg, 2);
        let out = enumerate_oracle(&ch, &cfg, false).unwrap();
        assert_eq!(out.candidates, 12u64.pow(2));
        assert_eq!(out.solves, 12u64.pow(2));
    }

    #[test]
    fn oracle_refuses_large_surfaces() {
        let cfg = oracle_config(7);
        let ch = draw(&cfg, 3);
        assert!(matches!(
            enumerate_oracle(&ch, &cfg, true),
            Err(EnvError::TooManyElements { n: 7, max: MAX_ORACLE_ELEMENTS })
        ));
    }

    #[test]
    fn oracle_never_loses_to_hand_picked_assignments() {
        let cfg = oracle_config(3);
        let ch = draw(&cfg, 4);
        let out = enumerate_oracle(&ch, &cfg, false).unwrap();
        assert!(out.feasible);
        let env = {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            RisEnv::new(cfg.clone(), &mut rng).unwrap()
        };
        // A handful of hand-picked composite actions, never better than
        // the exhaustive optimum.
        let hand = [
            vec![0, 0, 0, 0, 0, 0, 0, 0, 0],       // all idle
            vec![1, 0, 0, 1, 0, 0, 1, 0, 0],       // all passive
            vec![1, 1, 9, 1, 1, 9, 1, 1, 9],       // all active, max gain
            vec![1, 1, 4, 1, 0, 0, 0, 0, 0],       // mixed
        ];
        for action in &hand {
            let rec = env.evaluate(&ch, action).unwrap();
            if rec.solution.is_feasible() {
                assert!(
                    out.objective <= rec.solution.objective * (1.0 + 1e-9),
                    "oracle {} beaten by hand-picked {}",
                    out.objective,
                    rec.solution.objective
                );
            }
        }
    }

    #[test]
    fn oracle_beats_or_matches_all_idle_when_reflection_helps() {
        // Idle is in the searched set, so the optimum can never be worse.
        let cfg = oracle_config(2);
        let ch = draw(&cfg, 5);
        let out = enumerate_oracle(&ch, &cfg, true).unwrap();
        let all_idle = {
            let env = {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                RisEnv::new(cfg.clone(), &mut rng).unwrap()
            };
            env.evaluate(&ch, &[0, 0, 0, 0, 0, 0]).unwrap()
        };
        if all_idle.solution.is_feasible() {
            assert!(out.feasible);
            assert!(out.objective <= all_idle.solution.objective * (1.0 + 1e-9));
        }
    }

    #[test]
    fn feasible_set_nesting_across_schemes() {
        // Restricted schemes search subsets of hybrid's assignments, so
        // hybrid's optimum is at least as good everywhere.
        let base = oracle_config(2);
        let ch = draw(&base, 6);
        let hybrid = enumerate_oracle(&ch, &base, false).unwrap();
        for scheme in [
            Scheme::ActivePassive,
            Scheme::Active,
            Scheme::Passive,
            Scheme::NoRis,
        ] {
            let mut cfg = base.clone();
            cfg.scheme = scheme;
            let restricted = enumerate_oracle(&ch, &cfg, false).unwrap();
            if restricted.feasible {
                assert!(hybrid.feasible);
                assert!(
                    hybrid.objective <= restricted.objective * (1.0 + 1e-9),
                    "{scheme:?}: hybrid {} vs restricted {}",
                    hybrid.objective,
                    restricted.objective
                );
            }
        }
    }

    #[test]
    fn restricted_schemes_only_search_their_own_cells() {
        let mut cfg = oracle_config(2);
        cfg.scheme = Scheme::Passive;
        let ch = draw(&cfg, 7);
        let out = enumerate_oracle(&ch, &cfg, false).unwrap();
        assert_eq!(out.candidates, 1);
        for n in 0..2 {
            assert_eq!(out.modes.mode(n), Mode::Passive);
        }
        cfg.scheme = Scheme::Active;
        let out = enumerate_oracle(&ch, &cfg, false).unwrap();
        assert_eq!(out.candidates, 100);
        for n in 0..2 {
            assert_eq!(out.modes.mode(n), Mode::Active);
        }
    }

    #[test]
    fn identical_draws_give_identical_outcomes() {
        let cfg = oracle_config(3);
        let ch = draw(&cfg, 8);
        let a = enumerate_oracle(&ch, &cfg, true).unwrap();
        let b = enumerate_oracle(&ch, &cfg, true).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.modes, b.modes);
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn infeasible_everywhere_is_reported_not_erred() {
        let mut cfg = oracle_config(2);
        cfg.params.q_min = 40.0;
        let ch = draw(&cfg, 9);
        let out = enumerate_oracle(&ch, &cfg, true).unwrap();
        assert!(!out.feasible);
        assert!(out.objective.is_infinite());
    }

    #[test]
    fn state_helper_respects_compact_flag() {
        // Exercised here because the oracle and env share the helper.
        let mut cfg = oracle_config(2);
        let ch = draw(&cfg, 10);
        assert_eq!(state_for(&cfg, &ch).len(), 2 * 2 + 2 + 2 + 1);
        cfg.compact_state = true;
        assert_eq!(state_for(&cfg, &ch).len(), 6);
    }
}

//! The inner convex program: min-max per-user transmit energy.
//!
//! Given per-user SNR coefficients and the energy pricing of a mode
//! assignment, choose per-user, per-phase transmit energies `E_{i,j}` and
//! time shares `t_{i,j}` (`i ∈ {1, 2}` the protocol phase, `j` the user) to
//!
//! ```text
//! minimize    max_j  E_{1,j} + E_{2,j}
//! subject to  Σ_{i,j} t_{i,j} ≤ T,                    t_{i,j} ≥ 0
//!             0 ≤ E_{i,j} ≤ p_max · t_{i,j}
//!             t_{1,j}·log2(1 + a_j E_{1,j}/t_{1,j})
//!               + t_{2,j}·log2(1 + b_j E_{2,j}/t_{2,j}) ≥ q_min   ∀j
//!             Σ_j amp_j E_{2,j} + static · Σ_j t_{2,j} + fixed ≤ budget
//! ```
//!
//! Every rate term is the perspective of a concave log, so the feasible set
//! is convex; the epigraph reformulation (`τ ≥ E_{1,j} + E_{2,j}`) turns the
//! min-max into a linear objective. [`solve`] runs a log-barrier
//! interior-point method on that reformulation; [`feasibility_probe`] runs
//! the phase-1 max-slack problem that both decides feasibility and supplies
//! the strictly interior starting point. [`oracle::oracle_grid`] is an
//! intentionally naive grid search over the same constraint set, kept free
//! of any solver machinery so the two paths can check each other.
//!
//! Internally the solver rescales energies by `p_max·T` and times by `T`,
//! which makes the power caps `e ≤ θ`, the frame constraint `Σθ ≤ 1`, and
//! every barrier quantity O(1) regardless of the physical scale (typical
//! energies here are millijoules).

mod barrier;
pub mod oracle;

pub use oracle::{oracle_grid, OracleResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors distinct from a clean "infeasible" verdict.
#[derive(Debug, Error)]
pub enum InnerError {
    /// Problem data failed validation (non-finite, negative, or mis-shaped).
    #[error("invalid problem data: {0}")]
    InvalidProblem(String),
    /// `rate_term` called with positive energy but zero time.
    #[error("rate term undefined: positive energy with zero time")]
    RateDomain,
    /// The barrier method hit an iteration cap before converging — a solver
    /// failure, reported separately from infeasibility.
    #[error("iteration cap exceeded during {stage}")]
    IterationCap { stage: &'static str },
    /// Grid oracle asked to enumerate more than it reasonably can.
    #[error("oracle grid too large: {0}")]
    OracleTooLarge(String),
}

/// Data of one inner problem instance. Vector fields are per user.
///
/// Deserialization rejects unknown keys so a typo in a problem file fails
/// loudly instead of silently falling back to a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnerProblem {
    /// Frame duration `T` (s).
    pub frame_seconds: f64,
    /// Per-user QoS target `q_min` (bits/Hz).
    pub q_min: f64,
    /// Per-user transmit power cap `p_max` (W).
    pub p_max: f64,
    /// Phase-1 SNR coefficients `a_j` (1/W).
    pub a: Vec<f64>,
    /// Phase-2 SNR coefficients `b_j` (1/W).
    pub b: Vec<f64>,
    /// Budget weight on phase-2 energy, `amp_j` (dimensionless).
    pub amp_weight: Vec<f64>,
    /// Budget drain per second of phase-2 time (W).
    pub static_power: f64,
    /// Mode-independent energy drain per frame (J).
    pub fixed_energy: f64,
    /// Harvested energy budget per frame (J).
    pub budget: f64,
}

impl InnerProblem {
    /// Number of users.
    pub fn n_users(&self) -> usize {
        self.a.len()
    }

    /// Validates shapes, finiteness, and sign constraints.
    pub fn validate(&self) -> Result<(), InnerError> {
        let j = self.a.len();
        if j == 0 {
            return Err(InnerError::InvalidProblem("at least one user required".into()));
        }
        if self.b.len() != j || self.amp_weight.len() != j {
            return Err(InnerError::InvalidProblem(format!(
                "per-user vectors disagree: a {}, b {}, amp_weight {}",
                j,
                self.b.len(),
                self.amp_weight.len()
            )));
        }
        let scalars = [
            self.frame_seconds,
            self.q_min,
            self.p_max,
            self.static_power,
            self.fixed_energy,
            self.budget,
        ];
        if !scalars.iter().all(|v| v.is_finite())
            || !self.a.iter().chain(&self.b).chain(&self.amp_weight).all(|v| v.is_finite())
        {
            return Err(InnerError::InvalidProblem("non-finite field".into()));
        }
        if self.frame_seconds <= 0.0 {
            return Err(InnerError::InvalidProblem("frame_seconds must be > 0".into()));
        }
        if self.q_min < 0.0 {
            return Err(InnerError::InvalidProblem("q_min must be >= 0".into()));
        }
        if self.p_max <= 0.0 {
            return Err(InnerError::InvalidProblem("p_max must be > 0".into()));
        }
        if self.a.iter().chain(&self.b).chain(&self.amp_weight).any(|&v| v < 0.0) {
            return Err(InnerError::InvalidProblem("coefficients must be >= 0".into()));
        }
        if self.static_power < 0.0 || self.fixed_energy < 0.0 || self.budget < 0.0 {
            return Err(InnerError::InvalidProblem("energy terms must be >= 0".into()));
        }
        Ok(())
    }
}

/// A primal point of the inner problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Phase-1 energies (J), one per user.
    pub e1: Vec<f64>,
    /// Phase-2 energies (J), one per user.
    pub e2: Vec<f64>,
    /// Phase-1 time shares (s), one per user.
    pub t1: Vec<f64>,
    /// Phase-2 time shares (s), one per user.
    pub t2: Vec<f64>,
}

impl Allocation {
    fn zeros(j: usize) -> Self {
        Self { e1: vec![0.0; j], e2: vec![0.0; j], t1: vec![0.0; j], t2: vec![0.0; j] }
    }

    /// The min-max objective at this point: `max_j E_{1,j} + E_{2,j}` (J).
    pub fn objective(&self) -> f64 {
        self.e1
            .iter()
            .zip(&self.e2)
            .map(|(a, b)| a + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Per-user achieved rate (bits/Hz). Zero-time phases contribute zero.
    pub fn rate(&self, problem: &InnerProblem, j: usize) -> f64 {
        let r1 = rate_term_lenient(self.e1[j], self.t1[j], problem.a[j]);
        let r2 = rate_term_lenient(self.e2[j], self.t2[j], problem.b[j]);
        r1 + r2
    }

    /// Largest normalized constraint violation at this point (0 when every
    /// constraint holds). Families are normalized by their natural scales
    /// (frame duration, QoS target, caps, budget span), so the value is
    /// comparable to a relative tolerance.
    pub fn max_violation(&self, problem: &InnerProblem) -> f64 {
        let j_users = problem.n_users();
        let t_scale = problem.frame_seconds;
        let e_scale = problem.p_max * problem.frame_seconds;
        let mut worst: f64 = 0.0;
        let time_sum: f64 =
            self.t1.iter().sum::<f64>() + self.t2.iter().sum::<f64>();
        worst = worst.max((time_sum - problem.frame_seconds) / t_scale);
        let q_scale = problem.q_min.max(1e-12);
        for j in 0..j_users {
            worst = worst.max((problem.q_min - self.rate(problem, j)) / q_scale);
            for (e, t) in [(self.e1[j], self.t1[j]), (self.e2[j], self.t2[j])] {
                worst = worst.max(-e / e_scale);
                worst = worst.max(-t / t_scale);
                worst = worst.max((e - problem.p_max * t) / e_scale);
            }
        }
        let drained: f64 = (0..j_users)
            .map(|j| problem.amp_weight[j] * self.e2[j] + problem.static_power * self.t2[j])
            .sum::<f64>()
            + problem.fixed_energy;
        let budget_scale = problem.budget.max(problem.fixed_energy).max(1e-12);
        worst = worst.max((drained - problem.budget) / budget_scale);
        worst
    }
}

/// Constraint families referenced by infeasibility certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    /// `Σ t_{i,j} ≤ T`.
    TimeBudget,
    /// The QoS constraint of one user.
    Rate(usize),
    /// The harvested-energy constraint.
    EnergyBudget,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintFamily::TimeBudget => write!(f, "time budget"),
            ConstraintFamily::Rate(j) => write!(f, "rate of user {j}"),
            ConstraintFamily::EnergyBudget => write!(f, "energy budget"),
        }
    }
}

/// Why an instance admits no feasible allocation.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibleReason {
    /// Even full power for the whole frame cannot reach `q_min` for this
    /// user: `T·log2(1 + max(a_j, b_j)·p_max) < q_min`.
    CapacityBound { user: usize },
    /// The mode-independent drain alone exceeds the harvested budget.
    FixedEnergyExceedsBudget,
    /// The phase-1 max-slack problem topped out below zero; these families
    /// were binding at the maximal slack.
    PhaseOne { binding: Vec<ConstraintFamily> },
}

impl std::fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibleReason::CapacityBound { user } => {
                write!(f, "user {user} cannot reach q_min even at full power for the whole frame")
            }
            InfeasibleReason::FixedEnergyExceedsBudget => {
                write!(f, "fixed circuit energy exceeds the harvested budget")
            }
            InfeasibleReason::PhaseOne { binding } => {
                write!(f, "no allocation satisfies every constraint; binding: ")?;
                for (i, fam) in binding.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{fam}")?;
                }
                Ok(())
            }
        }
    }
}

/// Outcome classification of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    /// A feasible allocation meeting the tolerance was found.
    Optimal,
    /// The instance is infeasible; the allocation is all zeros.
    Infeasible(InfeasibleReason),
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    /// Feasible/infeasible classification.
    pub status: SolveStatus,
    /// The returned point (zeros when infeasible).
    pub allocation: Allocation,
    /// `max_j E_{1,j} + E_{2,j}` at the returned point; `+∞` when
    /// infeasible.
    pub objective: f64,
    /// Total Newton steps across both barrier stages (diagnostic).
    pub newton_steps: usize,
}

impl InnerSolution {
    /// True when the status is [`SolveStatus::Optimal`].
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal)
    }
}

/// Feasibility verdict from the phase-1 max-slack problem.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// True when a strictly feasible allocation exists (up to solver
    /// tolerance).
    pub feasible: bool,
    /// The maximized minimum normalized slack; positive iff feasible.
    pub slack: f64,
    /// Families binding at the maximal slack (meaningful when infeasible).
    pub binding: Vec<ConstraintFamily>,
    pub(crate) interior: Option<Allocation>,
}

/// Solver constants. Defaults: relative tolerance `1e-6`, Newton tolerance
/// `1e-8` (on half the squared Newton decrement), barrier parameter
/// decrease factor `10`, time floor `1e-9` s.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative duality-gap target on the objective.
    pub tol: f64,
    /// Newton stopping threshold on `λ²/2`.
    pub newton_tol: f64,
    /// Factor by which the barrier parameter shrinks per outer stage.
    pub barrier_decrease: f64,
    /// Hard lower bound on time shares inside the barrier (s). Returned
    /// times below `10 × t_floor` are snapped to exactly zero.
    pub t_floor: f64,
    /// Newton iteration cap per barrier stage.
    pub max_newton: usize,
    /// Outer barrier stage cap per solve phase.
    pub max_stages: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            newton_tol: 1e-8,
            barrier_decrease: 10.0,
            t_floor: 1e-9,
            max_newton: 80,
            max_stages: 60,
        }
    }
}

/// The perspective rate of one phase: `t · log2(1 + c·E/t)` (bits/Hz), with
/// the continuous extension `0` at `t = 0, E = 0`.
///
/// Errors when `t = 0` with `E > 0` (the physical model cannot spend energy
/// in zero time) or when any argument is negative or non-finite.
pub fn rate_term(energy: f64, time: f64, coeff: f64) -> Result<f64, InnerError> {
    if !(energy.is_finite() && time.is_finite() && coeff.is_finite())
        || energy < 0.0
        || time < 0.0
        || coeff < 0.0
    {
        return Err(InnerError::InvalidProblem(format!(
            "rate_term arguments must be finite and nonnegative: E={energy}, t={time}, c={coeff}"
        )));
    }
    if time == 0.0 {
        if energy == 0.0 {
            return Ok(0.0);
        }
        return Err(InnerError::RateDomain);
    }
    Ok(time * (coeff * energy / time).ln_1p() / std::f64::consts::LN_2)
}

/// Rate with zero-time phases treated as contributing zero regardless of
/// the (then meaningless) energy. Used for evaluating candidate points.
fn rate_term_lenient(energy: f64, time: f64, coeff: f64) -> f64 {
    if time <= 0.0 {
        0.0
    } else {
        time * (coeff * energy / time).ln_1p() / std::f64::consts::LN_2
    }
}

/// Decides feasibility by maximizing the minimum normalized constraint
/// slack over all energies and times (power caps and nonnegativity held
/// exactly; frame, QoS, and energy-budget families slacked). Positive
/// maximal slack means a strictly interior allocation exists.
pub fn feasibility_probe(problem: &InnerProblem) -> Result<FeasibilityReport, InnerError> {
    problem.validate()?;
    let opts = SolveOptions::default();
    if let Some(reason) = analytic_infeasibility(problem) {
        return Ok(FeasibilityReport {
            feasible: false,
            slack: f64::NEG_INFINITY,
            binding: match &reason {
                InfeasibleReason::CapacityBound { user } => vec![ConstraintFamily::Rate(*user)],
                InfeasibleReason::FixedEnergyExceedsBudget => {
                    vec![ConstraintFamily::EnergyBudget]
                }
                InfeasibleReason::PhaseOne { binding } => binding.clone(),
            },
            interior: None,
        });
    }
    barrier::phase_one(problem, &opts)
}

/// Quick analytic infeasibility checks that need no iteration: the
/// per-user capacity bound and the constant part of the energy budget.
fn analytic_infeasibility(problem: &InnerProblem) -> Option<InfeasibleReason> {
    if problem.fixed_energy > problem.budget {
        return Some(InfeasibleReason::FixedEnergyExceedsBudget);
    }
    if problem.q_min > 0.0 {
        for j in 0..problem.n_users() {
            let c = problem.a[j].max(problem.b[j]) * problem.p_max;
            let capacity = problem.frame_seconds * c.ln_1p() / std::f64::consts::LN_2;
            if capacity < problem.q_min {
                return Some(InfeasibleReason::CapacityBound { user: j });
            }
        }
    }
    None
}

/// Solves the inner problem with default [`SolveOptions`].
///
/// Feasible instances return [`SolveStatus::Optimal`] with a point whose
/// constraint violations are within tolerance and whose objective sits
/// within the relative duality-gap target of the optimum. Infeasible
/// instances (decided by [`feasibility_probe`], never by divergence) return
/// [`SolveStatus::Infeasible`] with a certificate description. Iteration
/// caps surface as [`InnerError::IterationCap`].
pub fn solve(problem: &InnerProblem) -> Result<InnerSolution, InnerError> {
    solve_with(problem, &SolveOptions::default())
}

/// [`solve`] with explicit options.
pub fn solve_with(
    problem: &InnerProblem,
    opts: &SolveOptions,
) -> Result<InnerSolution, InnerError> {
    problem.validate()?;
    let j = problem.n_users();

    // Trivial QoS: nothing forces any transmission; the zero allocation is
    // optimal whenever the fixed drain fits the budget.
    if problem.q_min == 0.0 {
        if problem.fixed_energy > problem.budget {
            return Ok(infeasible_solution(j, InfeasibleReason::FixedEnergyExceedsBudget));
        }
        return Ok(InnerSolution {
            status: SolveStatus::Optimal,
            allocation: Allocation::zeros(j),
            objective: 0.0,
            newton_steps: 0,
        });
    }

    if let Some(reason) = analytic_infeasibility(problem) {
        return Ok(infeasible_solution(j, reason));
    }

    let report = barrier::phase_one(problem, opts)?;
    if !report.feasible {
        return Ok(infeasible_solution(
            j,
            InfeasibleReason::PhaseOne { binding: report.binding },
        ));
    }
    let interior = report.interior.expect("feasible probe carries its interior point");
    let (mut allocation, newton_steps) = barrier::minimize(problem, interior, opts)?;
    post_process(&mut allocation, problem, opts);
    let objective = allocation.objective();
    Ok(InnerSolution {
        status: SolveStatus::Optimal,
        allocation,
        objective,
        newton_steps,
    })
}

fn infeasible_solution(j: usize, reason: InfeasibleReason) -> InnerSolution {
    InnerSolution {
        status: SolveStatus::Infeasible(reason),
        allocation: Allocation::zeros(j),
        objective: f64::INFINITY,
        newton_steps: 0,
    }
}

/// Snaps barrier dust to clean zeros: time shares below `10 × t_floor`
/// (with their energies) drop to exactly zero when that does not push any
/// constraint violation past tolerance.
fn post_process(allocation: &mut Allocation, problem: &InnerProblem, opts: &SolveOptions) {
    let snap = 10.0 * opts.t_floor;
    let mut candidate = allocation.clone();
    for j in 0..problem.n_users() {
        if candidate.t1[j] < snap {
            candidate.t1[j] = 0.0;
            candidate.e1[j] = 0.0;
        }
        if candidate.t2[j] < snap {
            candidate.t2[j] = 0.0;
            candidate.e2[j] = 0.0;
        }
    }
    if candidate.max_violation(problem) <= 10.0 * opts.tol {
        *allocation = candidate;
    }
}

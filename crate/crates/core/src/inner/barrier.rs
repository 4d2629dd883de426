//! Log-barrier interior-point engine behind [`super::solve`] and
//! [`super::feasibility_probe`].
//!
//! Both stages share one Newton loop. Phase 1 minimizes a shared slack `s`
//! over the frame, QoS, and energy-budget families (power caps, energy
//! nonnegativity, and the time floor stay hard): its optimum is the
//! negated max-min normalized slack, so its sign decides feasibility and
//! its iterate provides a strictly interior start for the main stage. The
//! main stage minimizes the epigraph variable `τ` over all constraints.
//!
//! All work happens in scaled variables — energies divided by `p_max·T`,
//! times by `T`, constraint families by their natural magnitudes — so power
//! caps read `e ≤ θ`, the frame constraint reads `Σθ ≤ 1`, and gradients
//! stay O(1) whether the physical energies are joules or nanojoules.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::LN_2;

use super::{
    Allocation, ConstraintFamily, FeasibilityReport, InnerError, InnerProblem, SolveOptions,
};

/// Barrier parameter floor for the phase-1 stage: below this, the maximal
/// slack is pinned to zero at beyond-tolerance precision and the instance
/// is classified infeasible (a boundary-only "feasible" set is
/// indistinguishable from empty at solver resolution).
const PHASE1_MU_FLOOR: f64 = 1e-13;

/// Barrier parameter floor for the main stage; `m·μ` below this bounds the
/// absolute gap by ~1e-14 in scaled units, far past any physical meaning.
const MAIN_MU_FLOOR: f64 = 1e-15;

/// Normalized slack below which phase 1 declares strict feasibility.
const FEASIBLE_MARGIN: f64 = 1e-7;

/// Problem data in solver scale.
struct Scaled {
    j: usize,
    /// Phase-1 scaled SNR coefficients `a_j · p_max`.
    c1: Vec<f64>,
    /// Phase-2 scaled SNR coefficients `b_j · p_max`.
    c2: Vec<f64>,
    /// QoS per unit scaled time, `q_min / T`.
    q_hat: f64,
    /// Energy-budget weight on scaled phase-2 energy.
    amp_hat: Vec<f64>,
    /// Energy-budget weight on scaled phase-2 time.
    static_hat: f64,
    /// Whether the energy budget constrains any variable at all.
    has_energy: bool,
    /// Scaled time floor `t_floor / T`.
    floor_hat: f64,
    /// Energy unit `p_max · T` (J) for mapping back.
    e_unit: f64,
    /// Time unit `T` (s) for mapping back.
    t_unit: f64,
}

impl Scaled {
    fn new(problem: &InnerProblem, opts: &SolveOptions) -> Result<Self, InnerError> {
        let j = problem.n_users();
        let t = problem.frame_seconds;
        let e_unit = problem.p_max * t;
        let floor_hat = opts.t_floor / t;
        if floor_hat >= 1.0 / (8.0 * j as f64) {
            return Err(InnerError::InvalidProblem(format!(
                "frame of {t} s is too short for the {} s time floor with {j} users",
                opts.t_floor
            )));
        }
        let has_energy =
            problem.static_power > 0.0 || problem.amp_weight.iter().any(|&w| w > 0.0);
        // Span left for the variable part of the energy budget. The caller
        // has already rejected fixed > budget; an exactly zero span with
        // active weights still admits only boundary points, which the
        // barrier classifies infeasible, matching the documented tolerance
        // semantics. Guard the division anyway.
        let span = (problem.budget - problem.fixed_energy).max(f64::MIN_POSITIVE);
        Ok(Self {
            j,
            c1: problem.a.iter().map(|&a| a * problem.p_max).collect(),
            c2: problem.b.iter().map(|&b| b * problem.p_max).collect(),
            q_hat: problem.q_min / t,
            amp_hat: problem.amp_weight.iter().map(|&w| w * e_unit / span).collect(),
            static_hat: problem.static_power * t / span,
            has_energy,
            floor_hat,
            e_unit,
            t_unit: t,
        })
    }

    // Variable layout: e1[0..J], e2[J..2J], θ1[2J..3J], θ2[3J..4J], extra
    // (slack s in phase 1, epigraph τ in the main stage) at index 4J.
    fn ie1(&self, j: usize) -> usize {
        j
    }
    fn ie2(&self, j: usize) -> usize {
        self.j + j
    }
    fn it1(&self, j: usize) -> usize {
        2 * self.j + j
    }
    fn it2(&self, j: usize) -> usize {
        3 * self.j + j
    }
    fn extra(&self) -> usize {
        4 * self.j
    }
    fn dim(&self) -> usize {
        4 * self.j + 1
    }

    fn unscale(&self, z: &DVector<f64>) -> Allocation {
        let j = self.j;
        Allocation {
            e1: (0..j).map(|k| z[self.ie1(k)].max(0.0) * self.e_unit).collect(),
            e2: (0..j).map(|k| z[self.ie2(k)].max(0.0) * self.e_unit).collect(),
            t1: (0..j).map(|k| z[self.it1(k)] * self.t_unit).collect(),
            t2: (0..j).map(|k| z[self.it2(k)] * self.t_unit).collect(),
        }
    }
}

/// One phase's scaled rate `r = θ·log2(1 + c·e/θ)` and its derivatives.
/// The Hessian is the negative semidefinite rank-1 form
/// `∇²r = −curv · v vᵀ` over `(e, θ)` with `v = (c, −u)`, `u = c·e/θ`.
struct RatePiece {
    r: f64,
    dr_de: f64,
    dr_dt: f64,
    curv: f64,
    v_e: f64,
    v_t: f64,
}

fn rate_piece(c: f64, e: f64, theta: f64) -> RatePiece {
    debug_assert!(theta > 0.0);
    let u = c * e / theta;
    let one_pu = 1.0 + u;
    RatePiece {
        r: theta * u.ln_1p() / LN_2,
        dr_de: c / (one_pu * LN_2),
        dr_dt: (u.ln_1p() - u / one_pu) / LN_2,
        curv: 1.0 / (LN_2 * theta * one_pu * one_pu),
        v_e: c,
        v_t: -u,
    }
}

/// Value, gradient, and Hessian of the barrier objective `ψ` at one point.
struct Eval {
    psi: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Accumulates one barrier term `−ln(w)` whose residual `w > 0` has the
/// sparse gradient `∇w = Σ coeff_k · e_{idx_k}` and no curvature of its
/// own. Returns false (domain violation) when `w ≤ 0`.
fn add_log_term(eval: &mut Eval, w: f64, parts: &[(usize, f64)]) -> bool {
    if !(w > 0.0) {
        return false;
    }
    eval.psi -= w.ln();
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    for &(i, ci) in parts {
        eval.grad[i] -= ci * inv;
        for &(k, ck) in parts {
            eval.hess[(i, k)] += ci * ck * inv2;
        }
    }
    true
}

enum Stage {
    /// Minimize the shared slack `s` over the slacked families.
    PhaseOne,
    /// Minimize the epigraph variable `τ` over all constraints.
    Main,
}

/// Number of barrier terms (the `m` in the `m·μ` duality-gap bound).
fn term_count(sc: &Scaled, stage: &Stage) -> usize {
    let energy = sc.has_energy as usize;
    match stage {
        // Hard: e > 0, e < θ, θ > floor (3 per phase-user pair). Slacked:
        // frame, one QoS per user, energy budget.
        Stage::PhaseOne => 6 * sc.j + 1 + sc.j + energy,
        // Same hard terms plus frame, QoS, energy, and J epigraph terms.
        Stage::Main => 6 * sc.j + 1 + sc.j + energy + sc.j,
    }
}

/// Evaluates `ψ = objective/μ + φ(z)` with derivatives; `None` outside the
/// barrier domain.
fn eval(sc: &Scaled, stage: &Stage, z: &DVector<f64>, mu: f64) -> Option<Eval> {
    let n = sc.dim();
    let mut ev = Eval {
        psi: z[sc.extra()] / mu,
        grad: DVector::zeros(n),
        hess: DMatrix::zeros(n, n),
    };
    ev.grad[sc.extra()] = 1.0 / mu;

    // Hard per-pair terms.
    for k in 0..2 * sc.j {
        let (ie, it) = if k < sc.j {
            (sc.ie1(k), sc.it1(k))
        } else {
            (sc.ie2(k - sc.j), sc.it2(k - sc.j))
        };
        let e = z[ie];
        let th = z[it];
        if !add_log_term(&mut ev, e, &[(ie, 1.0)]) {
            return None;
        }
        if !add_log_term(&mut ev, th - e, &[(it, 1.0), (ie, -1.0)]) {
            return None;
        }
        if !add_log_term(&mut ev, th - sc.floor_hat, &[(it, 1.0)]) {
            return None;
        }
    }

    let is_phase1 = matches!(stage, Stage::PhaseOne);
    let s = z[sc.extra()];
    // Residual of a slacked family given its normalized value g: phase 1
    // uses w = s − g, the main stage w = −g. In both cases ∂w/∂x = −∂g/∂x,
    // and in phase 1 additionally ∂w/∂s = +1; `parts` lists ∇w.
    let resid = |g: f64| if is_phase1 { s - g } else { -g };
    let slack_part: &[(usize, f64)] = &[(sc.extra(), 1.0)];

    // Frame time: g = Σθ − 1.
    {
        let sum: f64 = (0..2 * sc.j).map(|k| z[2 * sc.j + k]).sum();
        let mut parts: Vec<(usize, f64)> = (0..2 * sc.j).map(|k| (2 * sc.j + k, -1.0)).collect();
        if is_phase1 {
            parts.extend_from_slice(slack_part);
        }
        if !add_log_term(&mut ev, resid(sum - 1.0), &parts) {
            return None;
        }
    }

    // QoS per user: g = (q̂ − r1 − r2)/q̂. The rate curvature enters the
    // barrier Hessian as +(piece.curv/q̂)·v vᵀ per phase (PSD).
    for j in 0..sc.j {
        let p1 = rate_piece(sc.c1[j], z[sc.ie1(j)], z[sc.it1(j)]);
        let p2 = rate_piece(sc.c2[j], z[sc.ie2(j)], z[sc.it2(j)]);
        let g = (sc.q_hat - p1.r - p2.r) / sc.q_hat;
        let w = resid(g);
        if !(w > 0.0) {
            return None;
        }
        ev.psi -= w.ln();
        let inv = 1.0 / w;
        let inv2 = inv * inv;
        // ∇w = −∇g = +∇(r1 + r2)/q̂ on the allocation variables.
        let mut parts: Vec<(usize, f64)> = vec![
            (sc.ie1(j), p1.dr_de / sc.q_hat),
            (sc.it1(j), p1.dr_dt / sc.q_hat),
            (sc.ie2(j), p2.dr_de / sc.q_hat),
            (sc.it2(j), p2.dr_dt / sc.q_hat),
        ];
        if is_phase1 {
            parts.extend_from_slice(slack_part);
        }
        for &(i, ci) in &parts {
            ev.grad[i] -= ci * inv;
            for &(k, ck) in &parts {
                ev.hess[(i, k)] += ci * ck * inv2;
            }
        }
        for (piece, ie, it) in [(p1, sc.ie1(j), sc.it1(j)), (p2, sc.ie2(j), sc.it2(j))] {
            let scale = piece.curv / (sc.q_hat * w);
            let idx = [ie, it];
            let v = [piece.v_e, piece.v_t];
            for a in 0..2 {
                for b in 0..2 {
                    ev.hess[(idx[a], idx[b])] += scale * v[a] * v[b];
                }
            }
        }
    }

    // Energy budget: g = Σ amp̂·e2 + stât·Σθ2 − 1 (already normalized).
    if sc.has_energy {
        let mut g = -1.0;
        let mut parts: Vec<(usize, f64)> = Vec::with_capacity(2 * sc.j + 1);
        for j in 0..sc.j {
            g += sc.amp_hat[j] * z[sc.ie2(j)] + sc.static_hat * z[sc.it2(j)];
            if sc.amp_hat[j] > 0.0 {
                parts.push((sc.ie2(j), -sc.amp_hat[j]));
            }
            if sc.static_hat > 0.0 {
                parts.push((sc.it2(j), -sc.static_hat));
            }
        }
        if is_phase1 {
            parts.extend_from_slice(slack_part);
        }
        if !add_log_term(&mut ev, resid(g), &parts) {
            return None;
        }
    }

    // Epigraph (main stage only): w = τ − e1 − e2.
    if !is_phase1 {
        for j in 0..sc.j {
            let w = z[sc.extra()] - z[sc.ie1(j)] - z[sc.ie2(j)];
            let parts =
                [(sc.extra(), 1.0), (sc.ie1(j), -1.0), (sc.ie2(j), -1.0)];
            if !add_log_term(&mut ev, w, &parts) {
                return None;
            }
        }
    }

    if !ev.psi.is_finite() {
        return None;
    }
    Some(ev)
}

/// `ψ` value only (line-search probe).
fn eval_psi(sc: &Scaled, stage: &Stage, z: &DVector<f64>, mu: f64) -> Option<f64> {
    let mut psi = z[sc.extra()] / mu;
    let is_phase1 = matches!(stage, Stage::PhaseOne);
    let s = z[sc.extra()];
    let resid = |g: f64| if is_phase1 { s - g } else { -g };
    let mut take = |w: f64| -> bool {
        if w > 0.0 {
            psi -= w.ln();
            true
        } else {
            false
        }
    };
    for k in 0..2 * sc.j {
        let (ie, it) = if k < sc.j {
            (sc.ie1(k), sc.it1(k))
        } else {
            (sc.ie2(k - sc.j), sc.it2(k - sc.j))
        };
        if !take(z[ie]) || !take(z[it] - z[ie]) || !take(z[it] - sc.floor_hat) {
            return None;
        }
    }
    let sum: f64 = (0..2 * sc.j).map(|k| z[2 * sc.j + k]).sum();
    if !take(resid(sum - 1.0)) {
        return None;
    }
    for j in 0..sc.j {
        let p1 = rate_piece(sc.c1[j], z[sc.ie1(j)], z[sc.it1(j)]);
        let p2 = rate_piece(sc.c2[j], z[sc.ie2(j)], z[sc.it2(j)]);
        if !take(resid((sc.q_hat - p1.r - p2.r) / sc.q_hat)) {
            return None;
        }
    }
    if sc.has_energy {
        let mut g = -1.0;
        for j in 0..sc.j {
            g += sc.amp_hat[j] * z[sc.ie2(j)] + sc.static_hat * z[sc.it2(j)];
        }
        if !take(resid(g)) {
            return None;
        }
    }
    if !is_phase1 {
        for j in 0..sc.j {
            if !take(z[sc.extra()] - z[sc.ie1(j)] - z[sc.ie2(j)]) {
                return None;
            }
        }
    }
    psi.is_finite().then_some(psi)
}

/// Damped Newton minimization of `ψ` at fixed `μ`. Returns the Newton step
/// count; errors only on the iteration cap with the decrement still large.
fn newton_center(
    sc: &Scaled,
    stage: &Stage,
    z: &mut DVector<f64>,
    mu: f64,
    opts: &SolveOptions,
    stage_name: &'static str,
) -> Result<usize, InnerError> {
    let mut steps = 0;
    loop {
        let ev = eval(sc, stage, z, mu).ok_or_else(|| InnerError::InvalidProblem(
            "barrier iterate left the feasible domain".into(),
        ))?;
        // The Hessian is strictly positive definite (every variable has a
        // dedicated log term), so Cholesky succeeds up to rounding; an
        // escalating ridge, sized relative to the Hessian's own scale,
        // covers the rounding case.
        let scale = 1.0 + ev.hess.trace().abs() / ev.hess.nrows() as f64;
        let mut ridge = 0.0;
        let step = loop {
            let mut h = ev.hess.clone();
            if ridge > 0.0 {
                for i in 0..h.nrows() {
                    h[(i, i)] += ridge;
                }
            }
            if let Some(chol) = h.cholesky() {
                break chol.solve(&(-&ev.grad));
            }
            ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
            if ridge > scale {
                return Err(InnerError::IterationCap { stage: stage_name });
            }
        };
        let lambda_sq = -ev.grad.dot(&step);
        if !lambda_sq.is_finite() {
            return Err(InnerError::IterationCap { stage: stage_name });
        }
        // λ²/2 approximates the ψ decrease of a full Newton step. Once it
        // sinks beneath ψ's own floating-point granularity (ψ carries the
        // objective divided by μ, so late stages run at ~1e8), further
        // centering is unresolvable in f64 — and unnecessary: accuracy is
        // governed by the m·μ gap bound, not by centering beyond machine
        // precision.
        let noise_floor = 64.0 * f64::EPSILON * ev.psi.abs();
        if lambda_sq / 2.0 <= opts.newton_tol.max(noise_floor) {
            return Ok(steps);
        }
        if steps >= opts.max_newton {
            return Err(InnerError::IterationCap { stage: stage_name });
        }

        // Backtracking line search: shrink into the domain, then require an
        // Armijo decrease. A fully stalled search means the iterate is
        // pinned by floating-point resolution; accept it as centered.
        // The Armijo test tolerates ψ's float granularity so acceptance
        // near the noise floor doesn't depend on rounding luck.
        let armijo_slack = 16.0 * f64::EPSILON * ev.psi.abs();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..90 {
            let trial = &*z + alpha * &step;
            if let Some(psi) = eval_psi(sc, stage, &trial, mu) {
                if psi <= ev.psi + 0.01 * alpha * ev.grad.dot(&step) + armijo_slack {
                    *z = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(steps);
        }
        steps += 1;
    }
}

/// Strictly interior-for-hard-constraints starting point shared by both
/// stages: equal time shares summing to half the frame, energies at half
/// the power cap.
fn initial_point(sc: &Scaled) -> DVector<f64> {
    let mut z = DVector::zeros(sc.dim());
    let theta0 = 1.0 / (4.0 * sc.j as f64);
    for k in 0..2 * sc.j {
        z[2 * sc.j + k] = theta0;
        z[k] = 0.5 * theta0;
    }
    z
}

/// Normalized slacked-family values `g` at a point, in certificate order.
fn slacked_values(sc: &Scaled, z: &DVector<f64>) -> Vec<(ConstraintFamily, f64)> {
    let mut out = Vec::with_capacity(2 + sc.j);
    let sum: f64 = (0..2 * sc.j).map(|k| z[2 * sc.j + k]).sum();
    out.push((ConstraintFamily::TimeBudget, sum - 1.0));
    for j in 0..sc.j {
        let p1 = rate_piece(sc.c1[j], z[sc.ie1(j)], z[sc.it1(j)]);
        let p2 = rate_piece(sc.c2[j], z[sc.ie2(j)], z[sc.it2(j)]);
        out.push((ConstraintFamily::Rate(j), (sc.q_hat - p1.r - p2.r) / sc.q_hat));
    }
    if sc.has_energy {
        let mut g = -1.0;
        for j in 0..sc.j {
            g += sc.amp_hat[j] * z[sc.ie2(j)] + sc.static_hat * z[sc.it2(j)];
        }
        out.push((ConstraintFamily::EnergyBudget, g));
    }
    out
}

/// Phase 1: minimize the shared slack `s`; see [`super::feasibility_probe`].
pub(super) fn phase_one(
    problem: &InnerProblem,
    opts: &SolveOptions,
) -> Result<FeasibilityReport, InnerError> {
    let sc = Scaled::new(problem, opts)?;
    let stage = Stage::PhaseOne;
    let mut z = initial_point(&sc);
    let g0 = slacked_values(&sc, &z);
    let gmax = g0.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
    z[sc.extra()] = gmax + 1.0;

    let m = term_count(&sc, &stage) as f64;
    let mut mu = z[sc.extra()].abs().max(1.0);
    for _ in 0..opts.max_stages {
        newton_center(&sc, &stage, &mut z, mu, opts, "feasibility phase")?;
        let s = z[sc.extra()];
        if s < -FEASIBLE_MARGIN {
            return Ok(FeasibilityReport {
                feasible: true,
                slack: -s,
                binding: Vec::new(),
                interior: Some(sc.unscale(&z)),
            });
        }
        // At a μ-central point the true optimum satisfies s* ≥ s − m·μ, so
        // a positive lower bound proves infeasibility outright.
        let certified_infeasible = s - m * mu > 0.0;
        if certified_infeasible || mu < PHASE1_MU_FLOOR {
            let bind_tol = (100.0 * m * mu).max(1e-7 * (1.0 + s.abs()));
            let binding: Vec<ConstraintFamily> = slacked_values(&sc, &z)
                .into_iter()
                .filter(|&(_, g)| s - g <= bind_tol)
                .map(|(fam, _)| fam)
                .collect();
            return Ok(FeasibilityReport {
                feasible: false,
                slack: -s,
                binding,
                interior: None,
            });
        }
        mu /= opts.barrier_decrease;
    }
    Err(InnerError::IterationCap { stage: "feasibility phase" })
}

/// Main stage: minimize `τ` from a strictly feasible interior point.
/// Returns the unscaled allocation and the total Newton step count.
pub(super) fn minimize(
    problem: &InnerProblem,
    interior: Allocation,
    opts: &SolveOptions,
) -> Result<(Allocation, usize), InnerError> {
    let sc = Scaled::new(problem, opts)?;
    let stage = Stage::Main;
    let mut z = DVector::zeros(sc.dim());
    for j in 0..sc.j {
        z[sc.ie1(j)] = interior.e1[j] / sc.e_unit;
        z[sc.ie2(j)] = interior.e2[j] / sc.e_unit;
        z[sc.it1(j)] = interior.t1[j] / sc.t_unit;
        z[sc.it2(j)] = interior.t2[j] / sc.t_unit;
    }
    let worst = (0..sc.j)
        .map(|j| z[sc.ie1(j)] + z[sc.ie2(j)])
        .fold(f64::NEG_INFINITY, f64::max);
    z[sc.extra()] = worst * 1.1 + 1e-3;

    let m = term_count(&sc, &stage) as f64;
    let mut mu = (z[sc.extra()] / m).max(1e-6);
    let mut total_steps = 0;
    for _ in 0..opts.max_stages {
        total_steps += newton_center(&sc, &stage, &mut z, mu, opts, "objective phase")?;
        let tau = z[sc.extra()];
        // m·μ bounds the duality gap at a μ-central point; stop once it is
        // small relative to the (always positive here) objective.
        if m * mu <= opts.tol * tau.max(1e-9) || mu < MAIN_MU_FLOOR {
            return Ok((sc.unscale(&z), total_steps));
        }
        mu /= opts.barrier_decrease;
    }
    Err(InnerError::IterationCap { stage: "objective phase" })
}

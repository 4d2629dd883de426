//! Element modes, co-phased effective links, and energy accounting.
//!
//! Each RIS element `n` carries a reflection flag `β_n`, an amplification
//! flag `α_n`, and an amplification factor `ρ_n`; its reflection
//! coefficient is `β_n · ρ_n^{α_n} · e^{iθ_n}`. With the base station
//! combining the direct path and the RIS path, the phase that maximizes the
//! received magnitude for user `j` at element `n` is
//!
//! ```text
//! θ*_{j,n} = arg(h_j^UB) − arg(conj(h_n^RB)) − arg(h_{j,n}^UR)
//! ```
//!
//! which aligns every reflected term with the direct link and collapses the
//! combined channel magnitude to
//! `|h_j^UB| + Σ_n β_n ρ_n^{α_n} |h_n^RB| |h_{j,n}^UR|`.
//!
//! Energy accounting per frame (duration `T`, phase-2 times `t_{2,j}`,
//! phase-2 energies `E_{2,j}`) on the RIS/EHS side:
//!
//! * passive elements burn `P_C` while reflecting;
//! * active elements burn `P_C + P_DC` plus amplifier output energy
//!   `ξ·(Σ_j ‖Φ_j h_j^UR‖² E_{2,j}/t_{2,j} + σ_F² ‖Φ_j‖²)` per unit time,
//!   which splits into a per-user weight on `E_{2,j}` and a static term;
//! * the harvesting circuit draws `M · P_b · T` regardless;
//! * everything must fit inside the harvested budget
//!   `η_EH · p_s · ‖h^ES‖² · T`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelSet;
use crate::inner::InnerProblem;

/// Errors from mode-assignment and system-parameter validation.
#[derive(Debug, Error)]
pub enum SysModelError {
    /// Vector lengths inside a `ModeAssignment` disagree.
    #[error("mode vectors must share one length: beta {beta}, alpha {alpha}, rho {rho}")]
    LengthMismatch { beta: usize, alpha: usize, rho: usize },
    /// An active element's amplification factor is outside `[1, rho_max]`.
    #[error("element {index}: active amplification {rho} outside [1, {rho_max}]")]
    RhoOutOfRange { index: usize, rho: f64, rho_max: f64 },
    /// A system parameter is out of range.
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    /// Channel shapes do not match the mode assignment.
    #[error("channel set has {channels} elements but mode assignment has {modes}")]
    ShapeMismatch { channels: usize, modes: usize },
}

/// Operating mode of one RIS element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Off: no reflection, no power draw.
    Idle,
    /// Unit-gain reflection, circuit power only.
    Passive,
    /// Amplified reflection: gain `ρ`, injects amplifier noise, draws
    /// circuit, DC, and amplifier output power.
    Active,
}

/// Per-element operating modes and amplification factors.
///
/// Raw `alpha`/`rho` entries are retained even where masked (an idle
/// element's `alpha` and an inactive element's `rho` have no physical
/// effect), so distinct raw choices stay distinguishable. The invariant
/// `rho ∈ [1, rho_max]` is enforced only where it matters: elements that are
/// both reflecting and amplifying.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment {
    beta: Vec<bool>,
    alpha: Vec<bool>,
    rho: Vec<f64>,
}

impl ModeAssignment {
    /// Builds an assignment, checking lengths and active-`ρ` bounds.
    pub fn new(
        beta: Vec<bool>,
        alpha: Vec<bool>,
        rho: Vec<f64>,
        rho_max: f64,
    ) -> Result<Self, SysModelError> {
        if beta.len() != alpha.len() || beta.len() != rho.len() {
            return Err(SysModelError::LengthMismatch {
                beta: beta.len(),
                alpha: alpha.len(),
                rho: rho.len(),
            });
        }
        for n in 0..beta.len() {
            if beta[n] && alpha[n] && (!rho[n].is_finite() || rho[n] < 1.0 || rho[n] > rho_max) {
                return Err(SysModelError::RhoOutOfRange { index: n, rho: rho[n], rho_max });
            }
        }
        Ok(Self { beta, alpha, rho })
    }

    /// All elements idle (`β = 0` everywhere) — the no-RIS configuration.
    pub fn all_idle(n: usize) -> Self {
        Self { beta: vec![false; n], alpha: vec![false; n], rho: vec![1.0; n] }
    }

    /// All elements passive (`β = 1, α = 0`).
    pub fn all_passive(n: usize) -> Self {
        Self { beta: vec![true; n], alpha: vec![false; n], rho: vec![1.0; n] }
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    /// True when the surface has zero elements.
    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Reflection flag `β_n`.
    pub fn beta(&self, n: usize) -> bool {
        self.beta[n]
    }

    /// Amplification flag `α_n` (raw; physically masked unless `β_n`).
    pub fn alpha(&self, n: usize) -> bool {
        self.alpha[n]
    }

    /// Amplification factor `ρ_n` (raw; physically masked unless active).
    pub fn rho(&self, n: usize) -> f64 {
        self.rho[n]
    }

    /// Effective operating mode of element `n`.
    pub fn mode(&self, n: usize) -> Mode {
        match (self.beta[n], self.alpha[n]) {
            (false, _) => Mode::Idle,
            (true, false) => Mode::Passive,
            (true, true) => Mode::Active,
        }
    }

    /// Reflection magnitude `β_n · ρ_n^{α_n}`: 0 idle, 1 passive, `ρ_n`
    /// active.
    pub fn gain(&self, n: usize) -> f64 {
        match self.mode(n) {
            Mode::Idle => 0.0,
            Mode::Passive => 1.0,
            Mode::Active => self.rho[n],
        }
    }

    /// Element counts `(active, passive, idle)`.
    pub fn mode_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for n in 0..self.len() {
            match self.mode(n) {
                Mode::Active => counts.0 += 1,
                Mode::Passive => counts.1 += 1,
                Mode::Idle => counts.2 += 1,
            }
        }
        counts
    }

    /// Element fractions `(active, passive, idle)`; sums to 1 for nonempty
    /// surfaces.
    pub fn mode_ratios(&self) -> (f64, f64, f64) {
        let (a, p, i) = self.mode_counts();
        let n = self.len().max(1) as f64;
        (a as f64 / n, p as f64 / n, i as f64 / n)
    }

    /// Mean `ρ` over active elements; 0 when none are active.
    pub fn mean_rho_active(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for n in 0..self.len() {
            if self.mode(n) == Mode::Active {
                sum += self.rho[n];
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Physical constants of the scenario, in SI units (W, J, s, bits/Hz).
///
/// Invariants: noise powers strictly positive, circuit/station powers
/// nonnegative, `xi >= 1`, `eta_eh ∈ [0, 1]`, `frame_seconds > 0`,
/// `q_min >= 0`, `p_max > 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SystemParams {
    /// Base-station noise power `σ_B²` (W).
    pub sigma_b_sq: f64,
    /// Per-element amplifier noise power `σ_F²` (W).
    pub sigma_f_sq: f64,
    /// Reflection circuit power `P_C` (W).
    pub p_c: f64,
    /// Amplifier DC bias power `P_DC` (W).
    pub p_dc: f64,
    /// Per-element harvesting circuit power `P_b` (W).
    pub p_b: f64,
    /// Amplifier inefficiency factor `ξ >= 1`.
    pub xi: f64,
    /// RF-to-DC conversion efficiency `η_EH ∈ [0, 1]`.
    pub eta_eh: f64,
    /// Energy-station transmit power `p_s` (W).
    pub p_s: f64,
    /// Frame duration `T` (s).
    pub frame_seconds: f64,
    /// Per-user QoS target `Q_min` (bits/Hz).
    pub q_min: f64,
    /// Per-user transmit power cap `p_max` (W).
    pub p_max: f64,
}

impl Default for SystemParams {
    /// Desk-scale defaults: −80 dBm BS noise, −70 dBm amplifier noise,
    /// −10 dBm reflection circuit, −5 dBm DC bias, 2.1 µW harvesting
    /// circuit, ξ = 1.1, η = 0.8, 38 dBm energy station, 1 s frame,
    /// 5 bits/Hz QoS, 20 dBm power cap.
    fn default() -> Self {
        Self {
            sigma_b_sq: 1e-11,
            sigma_f_sq: 1e-10,
            p_c: 1e-4,
            p_dc: 3.1622776601683794e-4,
            p_b: 2.1e-6,
            xi: 1.1,
            eta_eh: 0.8,
            p_s: 6.309573444801933,
            frame_seconds: 1.0,
            q_min: 5.0,
            p_max: 0.1,
        }
    }
}

impl SystemParams {
    /// Checks the invariants listed on the type.
    pub fn validate(&self) -> Result<(), SysModelError> {
        let all = [
            self.sigma_b_sq,
            self.sigma_f_sq,
            self.p_c,
            self.p_dc,
            self.p_b,
            self.xi,
            self.eta_eh,
            self.p_s,
            self.frame_seconds,
            self.q_min,
            self.p_max,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(SysModelError::InvalidParams("non-finite field".into()));
        }
        if self.sigma_b_sq <= 0.0 {
            return Err(SysModelError::InvalidParams("sigma_b_sq must be > 0".into()));
        }
        if self.sigma_f_sq <= 0.0 {
            return Err(SysModelError::InvalidParams("sigma_f_sq must be > 0".into()));
        }
        if self.p_c < 0.0 || self.p_dc < 0.0 || self.p_b < 0.0 || self.p_s < 0.0 {
            return Err(SysModelError::InvalidParams("powers must be >= 0".into()));
        }
        if self.xi < 1.0 {
            return Err(SysModelError::InvalidParams("xi must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta_eh) {
            return Err(SysModelError::InvalidParams("eta_eh must lie in [0, 1]".into()));
        }
        if self.frame_seconds <= 0.0 {
            return Err(SysModelError::InvalidParams("frame_seconds must be > 0".into()));
        }
        if self.q_min < 0.0 {
            return Err(SysModelError::InvalidParams("q_min must be >= 0".into()));
        }
        if self.p_max <= 0.0 {
            return Err(SysModelError::InvalidParams("p_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-user effective link quantities after co-phasing.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLinks {
    /// Direct-link power gain `g1_j = |h_j^UB|²`.
    pub g1: Vec<f64>,
    /// Combined-link power gain
    /// `g2_j = (|h_j^UB| + Σ_n β_n ρ_n^{α_n} |h_n^RB||h_{j,n}^UR|)²`.
    pub g2: Vec<f64>,
    /// Forwarded amplifier noise `ν_j = σ_F² Σ_n α_n β_n ρ_n² |h_n^RB|²`.
    pub nu: Vec<f64>,
    /// Phase-1 SNR coefficient `a_j = g1_j / σ_B²` (per W).
    pub a: Vec<f64>,
    /// Phase-2 SNR coefficient `b_j = g2_j / (σ_B² + ν_j)` (per W).
    pub b: Vec<f64>,
}

/// How a mode assignment prices the inner problem's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCoefficients {
    /// Amplifier-output weight on `E_{2,j}`:
    /// `ξ Σ_n α_n β_n ρ_n² |h_{j,n}^UR|²`.
    pub amp_weight: Vec<f64>,
    /// Power drawn per second of phase-2 time:
    /// `P_C Σ_n β_n + P_DC Σ_n α_n β_n + ξ σ_F² Σ_n α_n β_n ρ_n²` (W).
    pub static_power: f64,
    /// Mode-independent harvesting circuit energy `M · P_b · T` (J).
    pub fixed_energy: f64,
    /// Harvested energy budget `η_EH · p_s · ‖h^ES‖² · T` (J).
    pub budget: f64,
}

/// The phase aligning element `n`'s reflected path with user `j`'s direct
/// link: `arg(h_ub) − arg(conj(h_rb_n)) − arg(h_ur_jn)`, wrapped to
/// `[0, 2π)`. A zero coefficient contributes phase 0 (`arg(0) = 0`).
pub fn optimal_phase(h_ub: Complex64, h_rb_n: Complex64, h_ur_jn: Complex64) -> f64 {
    let theta = h_ub.arg() - h_rb_n.conj().arg() - h_ur_jn.arg();
    theta.rem_euclid(2.0 * std::f64::consts::PI)
}

/// Combined complex channel for one user under explicit per-element phases:
/// `h_ub + Σ_n conj(h_rb_n) · β_n ρ_n^{α_n} e^{iθ_n} · h_ur_jn`.
///
/// With `θ_n = θ*` from [`optimal_phase`] its magnitude equals
/// [`combined_magnitude`]; any other phase choice can only reduce it.
pub fn combined_complex(
    h_ub: Complex64,
    h_rb: &[Complex64],
    h_ur_row: &[Complex64],
    modes: &ModeAssignment,
    thetas: &[f64],
) -> Complex64 {
    debug_assert_eq!(h_rb.len(), modes.len());
    debug_assert_eq!(h_ur_row.len(), modes.len());
    debug_assert_eq!(thetas.len(), modes.len());
    let mut sum = h_ub;
    for n in 0..modes.len() {
        let gain = modes.gain(n);
        if gain > 0.0 {
            sum += h_rb[n].conj() * Complex64::from_polar(gain, thetas[n]) * h_ur_row[n];
        }
    }
    sum
}

/// Co-phased combined channel magnitude for one user:
/// `|h_ub| + Σ_n β_n ρ_n^{α_n} |h_rb_n| |h_ur_jn|`.
pub fn combined_magnitude(
    h_ub: Complex64,
    h_rb: &[Complex64],
    h_ur_row: &[Complex64],
    modes: &ModeAssignment,
) -> f64 {
    debug_assert_eq!(h_rb.len(), modes.len());
    debug_assert_eq!(h_ur_row.len(), modes.len());
    let mut mag = h_ub.norm();
    for n in 0..modes.len() {
        mag += modes.gain(n) * h_rb[n].norm() * h_ur_row[n].norm();
    }
    mag
}

fn check_shapes(channels: &ChannelSet, modes: &ModeAssignment) -> Result<(), SysModelError> {
    if channels.n_elements() != modes.len() {
        return Err(SysModelError::ShapeMismatch {
            channels: channels.n_elements(),
            modes: modes.len(),
        });
    }
    Ok(())
}

/// Per-user co-phased gains and SNR coefficients for a channel realization
/// under a mode assignment.
pub fn effective_links(
    channels: &ChannelSet,
    modes: &ModeAssignment,
    sigma_b_sq: f64,
    sigma_f_sq: f64,
) -> Result<EffectiveLinks, SysModelError> {
    check_shapes(channels, modes)?;
    if sigma_b_sq <= 0.0 || sigma_f_sq < 0.0 {
        return Err(SysModelError::InvalidParams("noise powers out of range".into()));
    }
    let j_users = channels.n_users();
    let mut links = EffectiveLinks {
        g1: Vec::with_capacity(j_users),
        g2: Vec::with_capacity(j_users),
        nu: Vec::with_capacity(j_users),
        a: Vec::with_capacity(j_users),
        b: Vec::with_capacity(j_users),
    };
    // Forwarded amplifier noise only depends on modes and the RIS→BS link,
    // not on which user transmits; computed once, stored per user.
    let mut nu = 0.0;
    for n in 0..modes.len() {
        if modes.mode(n) == Mode::Active {
            let rho = modes.rho(n);
            nu += sigma_f_sq * rho * rho * channels.h_rb[n].norm_sqr();
        }
    }
    for j in 0..j_users {
        let g1 = channels.h_ub[j].norm_sqr();
        let mag = combined_magnitude(channels.h_ub[j], &channels.h_rb, &channels.h_ur[j], modes);
        let g2 = mag * mag;
        links.g1.push(g1);
        links.g2.push(g2);
        links.nu.push(nu);
        links.a.push(g1 / sigma_b_sq);
        links.b.push(g2 / (sigma_b_sq + nu));
    }
    Ok(links)
}

/// Energy pricing of a mode assignment for a channel realization.
pub fn energy_coefficients(
    channels: &ChannelSet,
    modes: &ModeAssignment,
    params: &SystemParams,
) -> Result<EnergyCoefficients, SysModelError> {
    check_shapes(channels, modes)?;
    params.validate()?;
    let mut static_power = 0.0;
    for n in 0..modes.len() {
        match modes.mode(n) {
            Mode::Idle => {}
            Mode::Passive => static_power += params.p_c,
            Mode::Active => {
                let rho = modes.rho(n);
                static_power += params.p_c + params.p_dc + params.xi * params.sigma_f_sq * rho * rho;
            }
        }
    }
    let mut amp_weight = Vec::with_capacity(channels.n_users());
    for j in 0..channels.n_users() {
        let mut w = 0.0;
        for n in 0..modes.len() {
            if modes.mode(n) == Mode::Active {
                let rho = modes.rho(n);
                w += rho * rho * channels.h_ur[j][n].norm_sqr();
            }
        }
        amp_weight.push(params.xi * w);
    }
    let fixed_energy =
        channels.h_es.len() as f64 * params.p_b * params.frame_seconds;
    let budget = params.eta_eh * params.p_s * channels.h_es_norm_sq() * params.frame_seconds;
    Ok(EnergyCoefficients { amp_weight, static_power, fixed_energy, budget })
}

/// Assembles the full inner convex problem for a channel realization under
/// a mode assignment: per-user SNR coefficients from [`effective_links`],
/// energy pricing from [`energy_coefficients`], and the frame/QoS/power
/// parameters from `params`.
pub fn assemble_inner_problem(
    channels: &ChannelSet,
    modes: &ModeAssignment,
    params: &SystemParams,
) -> Result<InnerProblem, SysModelError> {
    let links = effective_links(channels, modes, params.sigma_b_sq, params.sigma_f_sq)?;
    let energy = energy_coefficients(channels, modes, params)?;
    Ok(InnerProblem {
        frame_seconds: params.frame_seconds,
        q_min: params.q_min,
        p_max: params.p_max,
        a: links.a,
        b: links.b,
        amp_weight: energy.amp_weight,
        static_power: energy.static_power,
        fixed_energy: energy.fixed_energy,
        budget: energy.budget,
    })
}

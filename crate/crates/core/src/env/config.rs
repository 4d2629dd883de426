//! Environment configuration: operating schemes, action decoding, and the
//! bundle of geometry/fading/system parameters an environment runs with.

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::agent::{ActionLayout, RHO_BUCKETS};
use crate::channel::{users_on_circle, Geometry, LinkParams, LinkSet};
use crate::sysmodel::{ModeAssignment, SystemParams};

/// Which per-element choices the policy controls. Restricted schemes force
/// the remaining switches and *exclude* them from the action space, so a
/// policy trained under a scheme emits exactly the free heads and nothing
/// else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Free (β, α, ρ̂) per element: idle, passive, or active with a chosen
    /// amplification bucket.
    Hybrid,
    /// β forced on; the policy picks (α, ρ̂) — every element reflects,
    /// choosing passive or active.
    ActivePassive,
    /// β and α forced on; the policy picks ρ̂ — every element amplifies.
    Active,
    /// All elements passive; nothing to decide.
    Passive,
    /// All elements idle; nothing to decide.
    NoRis,
}

impl Scheme {
    /// Head sizes per element under this scheme, in decode order.
    /// Hybrid: (β, α, ρ̂) → [2, 2, 10]; active-passive: (α, ρ̂) → [2, 10];
    /// active: (ρ̂) → [10]; passive and no-RIS have no free heads.
    pub fn head_sizes_per_element(&self) -> &'static [usize] {
        match self {
            Scheme::Hybrid => &[2, 2, RHO_BUCKETS],
            Scheme::ActivePassive => &[2, RHO_BUCKETS],
            Scheme::Active => &[RHO_BUCKETS],
            Scheme::Passive | Scheme::NoRis => &[],
        }
    }

    /// The policy's action layout for `n` elements: the per-element head
    /// sizes repeated `n` times (empty for passive/no-RIS).
    pub fn action_layout(&self, n: usize) -> ActionLayout {
        let per = self.head_sizes_per_element();
        let mut sizes = Vec::with_capacity(per.len() * n);
        for _ in 0..n {
            sizes.extend_from_slice(per);
        }
        ActionLayout::new(sizes)
    }

    /// Decodes sampled head indices into a mode assignment for `n`
    /// elements, forcing whatever this scheme pins. `rho_max` bounds the
    /// amplification buckets (see [`rho_bucket_value`]).
    ///
    /// The action must have exactly `heads-per-element × n` entries; any
    /// out-of-range index is rejected.
    pub fn decode_action(
        &self,
        action: &[usize],
        n: usize,
        rho_max: f64,
    ) -> Result<ModeAssignment, EnvError> {
        let per = self.head_sizes_per_element();
        let expected = per.len() * n;
        if action.len() != expected {
            return Err(EnvError::InvalidAction(format!(
                "expected {expected} head indices for {n} elements under {self:?}, got {}",
                action.len()
            )));
        }
        for (i, (&idx, &size)) in action.iter().zip(per.iter().cycle()).enumerate() {
            if idx >= size {
                return Err(EnvError::InvalidAction(format!(
                    "head {i} index {idx} out of range 0..{size}"
                )));
            }
        }
        let mut beta = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        for e in 0..n {
            let heads = &action[e * per.len()..(e + 1) * per.len()];
            let (b, a, r) = match self {
                Scheme::Hybrid => (
                    heads[0] == 1,
                    heads[1] == 1,
                    rho_bucket_value(heads[2], rho_max),
                ),
                Scheme::ActivePassive => {
                    (true, heads[0] == 1, rho_bucket_value(heads[1], rho_max))
                }
                Scheme::Active => (true, true, rho_bucket_value(heads[0], rho_max)),
                Scheme::Passive => (true, false, 1.0),
                Scheme::NoRis => (false, false, 1.0),
            };
            beta.push(b);
            alpha.push(a);
            rho.push(r);
        }
        ModeAssignment::new(beta, alpha, rho, rho_max).map_err(EnvError::from)
    }
}

/// Amplification factor of bucket `index ∈ 0..RHO_BUCKETS`:
/// `(index + 1) · rho_max / RHO_BUCKETS`, clamped up to the unit-gain floor
/// an active amplifier requires. The top bucket is exactly `rho_max`; with
/// the default `rho_max = 100` the ladder is 10, 20, …, 100.
pub fn rho_bucket_value(index: usize, rho_max: f64) -> f64 {
    assert!(index < RHO_BUCKETS, "bucket index {index} out of range");
    assert!(
        rho_max.is_finite() && rho_max >= 1.0,
        "rho_max must be finite and >= 1"
    );
    ((index + 1) as f64 * rho_max / RHO_BUCKETS as f64).max(1.0)
}

/// Everything an environment instance needs: physical layout, fading
/// statistics, system powers, the amplification cap, reward shaping
/// constants, and the operating scheme.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    /// Node positions and array sizes.
    pub geometry: Geometry,
    /// Large-/small-scale fading parameters per link.
    pub links: LinkSet,
    /// Noise, circuit, and budget powers plus frame/QoS constants.
    pub params: SystemParams,
    /// Maximum amplification factor `ρ_max ≥ 1`.
    pub rho_max: f64,
    /// Reward scale: reward = −F*/e_ref for solvable steps (J).
    pub e_ref: f64,
    /// Penalty reward magnitude for infeasible steps; also the clamp
    /// bound, so every reward lies in [−κ, 0].
    pub kappa: f64,
    /// Which per-element switches the policy controls.
    pub scheme: Scheme,
    /// Use the compact all-norms state (dimension 2J+2) instead of the
    /// per-element layout (dimension J·N+N+J+1).
    pub compact_state: bool,
    /// Under no-RIS, drop the harvesting-circuit energy term from the
    /// budget constraint (a "no hardware deployed" variant). Off by
    /// default: an idle surface still runs its harvesting circuits.
    pub no_hardware_baseline: bool,
}

impl EnvConfig {
    /// Desk-scale defaults: two users at equal angular spacing on the
    /// 0.5 m circle, BS at (20,0,0), RIS at (5,3,0), EHS at (5,3,5),
    /// ES at (5,−2,5), 20 RIS and 20 EHS elements, the direct link
    /// Rayleigh at −30 dB/3.2 and all surface links Rician (K = 2) at
    /// −20 dB/2.2, λ/2 spacing, ρ_max = 100, 1 mJ reward scale, κ = 10,
    /// hybrid scheme.
    pub fn default_desk() -> Self {
        Self {
            geometry: Geometry {
                bs_pos: [20.0, 0.0, 0.0],
                ris_pos: [5.0, 3.0, 0.0],
                ehs_pos: [5.0, 3.0, 5.0],
                es_pos: [5.0, -2.0, 5.0],
                user_pos: users_on_circle(2, 0.5),
                ris_elements: 20,
                ehs_elements: 20,
                ris_axis: [0.0, 1.0, 0.0],
                ehs_axis: [0.0, 1.0, 0.0],
            },
            links: LinkSet {
                ub: LinkParams {
                    ref_loss_db: -30.0,
                    exponent: 3.2,
                    rician_k: 0.0,
                    spacing_ratio: 0.5,
                },
                ur: LinkParams {
                    ref_loss_db: -20.0,
                    exponent: 2.2,
                    rician_k: 2.0,
                    spacing_ratio: 0.5,
                },
                rb: LinkParams {
                    ref_loss_db: -20.0,
                    exponent: 2.2,
                    rician_k: 2.0,
                    spacing_ratio: 0.5,
                },
                es: LinkParams {
                    ref_loss_db: -20.0,
                    exponent: 2.2,
                    rician_k: 2.0,
                    spacing_ratio: 0.5,
                },
            },
            params: SystemParams::default(),
            rho_max: 100.0,
            e_ref: 1e-3,
            kappa: 10.0,
            scheme: Scheme::Hybrid,
            compact_state: false,
            no_hardware_baseline: false,
        }
    }

    /// Number of RIS elements `N`.
    pub fn n_elements(&self) -> usize {
        self.geometry.ris_elements
    }

    /// Number of users `J`.
    pub fn n_users(&self) -> usize {
        self.geometry.n_users()
    }

    /// State dimension under the configured layout: `J·N+N+J+1`
    /// per-element, or `2J+2` compact.
    pub fn state_dim(&self) -> usize {
        let j = self.n_users();
        let n = self.n_elements();
        if self.compact_state {
            2 * j + 2
        } else {
            j * n + n + j + 1
        }
    }

    /// The policy action layout implied by scheme and element count.
    pub fn action_layout(&self) -> ActionLayout {
        self.scheme.action_layout(self.n_elements())
    }

    /// Checks every embedded invariant.
    pub fn validate(&self) -> Result<(), EnvError> {
        self.geometry.validate()?;
        self.links.validate()?;
        self.params.validate()?;
        if !self.rho_max.is_finite() || self.rho_max < 1.0 {
            return Err(EnvError::InvalidConfig(format!(
                "rho_max must be finite and >= 1, got {}",
                self.rho_max
            )));
        }
        if !self.e_ref.is_finite() || self.e_ref <= 0.0 {
            return Err(EnvError::InvalidConfig(format!(
                "e_ref must be finite and > 0, got {}",
                self.e_ref
            )));
        }
        if !self.kappa.is_finite() || self.kappa <= 0.0 {
            return Err(EnvError::InvalidConfig(format!(
                "kappa must be finite and > 0, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Converts a dBm power level to watts: `10^((dbm − 30)/10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::Mode;
    use approx::assert_relative_eq;

    #[test]
    fn layouts_per_scheme() {
        assert_eq!(Scheme::Hybrid.action_layout(20).head_sizes(), {
            let mut v = Vec::new();
            for _ in 0..20 {
                v.extend_from_slice(&[2, 2, 10]);
            }
            v
        });
        assert_eq!(Scheme::ActivePassive.action_layout(3).head_sizes(), vec![2, 10, 2, 10, 2, 10]);
        assert_eq!(Scheme::Active.action_layout(2).head_sizes(), vec![10, 10]);
        assert_eq!(Scheme::Passive.action_layout(5).num_heads(), 0);
        assert_eq!(Scheme::NoRis.action_layout(5).num_heads(), 0);
    }

    #[test]
    fn rho_buckets_default_ladder() {
        // rho_max = 100: the ladder is 10, 20, ..., 100.
        for k in 0..RHO_BUCKETS {
            assert_relative_eq!(
                rho_bucket_value(k, 100.0),
                10.0 * (k + 1) as f64,
                max_relative = 1e-15
            );
        }
        // The top bucket is exactly rho_max regardless of scale.
        assert_eq!(rho_bucket_value(9, 37.5), 37.5);
        // Small caps clamp low buckets to the unit-gain amplifier floor.
        assert_eq!(rho_bucket_value(0, 2.0), 1.0);
    }

    #[test]
    fn hybrid_decode_example() {
        // Heads (β=1, α=1, ρ̂ index 4) → active with ρ = 50 under the
        // default cap.
        let modes = Scheme::Hybrid.decode_action(&[1, 1, 4], 1, 100.0).unwrap();
        assert_eq!(modes.mode(0), Mode::Active);
        assert_relative_eq!(modes.rho(0), 50.0, max_relative = 1e-15);
    }

    #[test]
    fn forced_schemes_ignore_nothing_and_force_everything() {
        let passive = Scheme::Passive.decode_action(&[], 4, 100.0).unwrap();
        for n in 0..4 {
            assert_eq!(passive.mode(n), Mode::Passive);
        }
        let none = Scheme::NoRis.decode_action(&[], 4, 100.0).unwrap();
        for n in 0..4 {
            assert_eq!(none.mode(n), Mode::Idle);
        }
        // Active-passive: β is never decodable to idle.
        let ap = Scheme::ActivePassive.decode_action(&[0, 3, 1, 7], 2, 100.0).unwrap();
        assert_eq!(ap.mode(0), Mode::Passive);
        assert_eq!(ap.mode(1), Mode::Active);
        assert_relative_eq!(ap.rho(1), 80.0, max_relative = 1e-15);
        // Active: both switches forced on.
        let act = Scheme::Active.decode_action(&[0, 9], 2, 100.0).unwrap();
        assert_eq!(act.mode(0), Mode::Active);
        assert_relative_eq!(act.rho(0), 10.0, max_relative = 1e-15);
        assert_relative_eq!(act.rho(1), 100.0, max_relative = 1e-15);
    }

    #[test]
    fn decode_rejects_bad_arity_and_range() {
        assert!(Scheme::Hybrid.decode_action(&[1, 1], 1, 100.0).is_err());
        assert!(Scheme::Hybrid.decode_action(&[2, 0, 0], 1, 100.0).is_err());
        assert!(Scheme::Hybrid.decode_action(&[0, 0, 10], 1, 100.0).is_err());
        assert!(Scheme::Passive.decode_action(&[0], 1, 100.0).is_err());
    }

    #[test]
    fn decode_is_injective_on_unforced_heads() {
        // Distinct hybrid actions over 2 elements give distinct canonical
        // (mode, gain) pairs unless they only differ in ignored heads.
        let a = Scheme::Hybrid.decode_action(&[1, 1, 4, 1, 0, 0], 2, 100.0).unwrap();
        let b = Scheme::Hybrid.decode_action(&[1, 1, 5, 1, 0, 0], 2, 100.0).unwrap();
        assert_ne!(a.rho(0), b.rho(0));
        // Differ only in the ρ̂ head of a passive element: same physical
        // configuration.
        let c = Scheme::Hybrid.decode_action(&[1, 0, 3, 0, 0, 0], 2, 100.0).unwrap();
        let d = Scheme::Hybrid.decode_action(&[1, 0, 8, 0, 0, 0], 2, 100.0).unwrap();
        assert_eq!(c.mode(0), d.mode(0));
        assert_eq!(c.gain(0), d.gain(0));
    }

    #[test]
    fn desk_defaults_validate_and_dimension() {
        let cfg = EnvConfig::default_desk();
        cfg.validate().unwrap();
        // J=2, N=20 → 2·20 + 20 + 2 + 1 = 63.
        assert_eq!(cfg.state_dim(), 63);
        let mut compact = cfg.clone();
        compact.compact_state = true;
        assert_eq!(compact.state_dim(), 6);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = EnvConfig::default_desk();
        cfg.rho_max = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default_desk();
        cfg.e_ref = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EnvConfig::default_desk();
        cfg.kappa = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dbm_conversion_reference_points() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(38.0), 6.309573444801933, max_relative = 1e-15);
    }
}

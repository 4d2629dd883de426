//! The experiment configuration schema: one TOML file describes an entire
//! run — physical layout, fading statistics, system powers (human units:
//! dBm where conventional), environment shaping, PPO hyperparameters, and
//! the sweep/evaluation protocol.
//!
//! Unknown keys are rejected everywhere. Unit conversions to SI happen
//! once, inside [`ExperimentConfig::build_env`]; everything downstream is
//! watts, joules, seconds. Loading a file, serializing the result, and
//! loading that text again yields an identical configuration (defaults
//! materialize on first load).

use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::config::ConfigError;
use crate::agent::{fnv1a_64, PpoConfig};
use crate::channel::{users_on_circle, users_on_circle_random, Geometry, LinkParams, LinkSet};
use crate::env::{dbm_to_watts, EnvConfig, Scheme};
use crate::sysmodel::SystemParams;

/// Full experiment description. Every section has complete defaults, so
/// `ExperimentConfig::default()` is the shipped desk-scale setup and an
/// empty TOML file is a valid config.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub geometry: GeometrySection,
    pub links: LinksSection,
    pub system: SystemSection,
    pub env: EnvSection,
    pub ppo: PpoSection,
    pub sweep: SweepSection,
    pub oracle: OracleSection,
}

/// Run-scale knobs: iteration budget, buffer size, network width, seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Training iterations (one iteration = one buffer + one update).
    pub iterations: u64,
    /// Environment steps collected per iteration.
    pub buffer_size: usize,
    /// Hidden-layer width of both networks (one hidden layer).
    pub hidden_width: usize,
    /// Extra checkpoint every this many iterations (0 = final only).
    pub checkpoint_interval: u64,
    /// Seeds to train; each gets its own metrics file and checkpoint.
    pub seeds: Vec<u64>,
    /// Default output directory (the CLI `--out` flag overrides it).
    pub out_dir: String,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            iterations: 200,
            buffer_size: 512,
            hidden_width: 1024,
            checkpoint_interval: 50,
            seeds: vec![0, 1, 2],
            out_dir: "runs".into(),
        }
    }
}

/// Node positions and array sizes. Users sit on a circle in the z = 0
/// plane centered at the origin, either at equal angular spacing or at
/// seeded random angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub bs: [f64; 3],
    pub ris: [f64; 3],
    pub ehs: [f64; 3],
    pub es: [f64; 3],
    /// Number of users `J`.
    pub users: usize,
    pub user_circle_radius: f64,
    /// Draw user angles uniformly at random (seeded) instead of equal
    /// spacing.
    pub random_user_angles: bool,
    /// RIS elements `N`.
    pub ris_elements: usize,
    /// EHS elements `M`.
    pub ehs_elements: usize,
    pub ris_axis: [f64; 3],
    pub ehs_axis: [f64; 3],
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            bs: [20.0, 0.0, 0.0],
            ris: [5.0, 3.0, 0.0],
            ehs: [5.0, 3.0, 5.0],
            es: [5.0, -2.0, 5.0],
            users: 2,
            user_circle_radius: 0.5,
            random_user_angles: false,
            ris_elements: 20,
            ehs_elements: 20,
            ris_axis: [0.0, 1.0, 0.0],
            ehs_axis: [0.0, 1.0, 0.0],
        }
    }
}

/// One link's large-/small-scale parameters (all four fields required
/// whenever the section appears).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub ref_loss_db: f64,
    pub exponent: f64,
    pub rician_k: f64,
    pub spacing_ratio: f64,
}

impl From<LinkSection> for LinkParams {
    fn from(s: LinkSection) -> Self {
        LinkParams {
            ref_loss_db: s.ref_loss_db,
            exponent: s.exponent,
            rician_k: s.rician_k,
            spacing_ratio: s.spacing_ratio,
        }
    }
}

/// The four modeled links. Defaults: Rayleigh direct link at −30 dB with
/// exponent 3.2; Rician (K = 2) surface links at −20 dB with exponent 2.2
/// and λ/2 element spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinksSection {
    pub ub: LinkSection,
    pub ur: LinkSection,
    pub rb: LinkSection,
    pub es: LinkSection,
}

impl Default for LinksSection {
    fn default() -> Self {
        let surface =
            LinkSection { ref_loss_db: -20.0, exponent: 2.2, rician_k: 2.0, spacing_ratio: 0.5 };
        Self {
            ub: LinkSection {
                ref_loss_db: -30.0,
                exponent: 3.2,
                rician_k: 0.0,
                spacing_ratio: 0.5,
            },
            ur: surface,
            rb: surface,
            es: surface,
        }
    }
}

/// System powers and frame constants, in conventional units: dBm for the
/// power levels usually quoted that way, watts for the tiny harvesting
/// circuit, seconds and bits/Hz elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// Energy-station transmit power (dBm).
    pub es_power_dbm: f64,
    /// Base-station noise power (dBm).
    pub bs_noise_dbm: f64,
    /// Per-element amplifier noise power (dBm).
    pub amp_noise_dbm: f64,
    /// Reflection circuit power (dBm).
    pub reflect_circuit_dbm: f64,
    /// Amplifier DC bias power (dBm).
    pub amp_bias_dbm: f64,
    /// Per-element harvesting circuit power (W).
    pub harvest_circuit_watts: f64,
    /// Amplifier inefficiency ξ ≥ 1.
    pub amp_inefficiency: f64,
    /// RF-to-DC conversion efficiency η ∈ [0, 1].
    pub harvest_efficiency: f64,
    /// Frame length (s).
    pub frame_seconds: f64,
    /// Per-user QoS target (bits/Hz).
    pub q_min: f64,
    /// Per-user transmit power cap (W).
    pub p_max_watts: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            es_power_dbm: 38.0,
            bs_noise_dbm: -80.0,
            amp_noise_dbm: -70.0,
            reflect_circuit_dbm: -10.0,
            amp_bias_dbm: -5.0,
            harvest_circuit_watts: 2.1e-6,
            amp_inefficiency: 1.1,
            harvest_efficiency: 0.8,
            frame_seconds: 1.0,
            q_min: 5.0,
            p_max_watts: 0.1,
        }
    }
}

/// Environment shaping: operating scheme, amplification cap, reward
/// scale and penalty, state-layout variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub scheme: Scheme,
    pub rho_max: f64,
    pub e_ref_joules: f64,
    pub kappa: f64,
    pub compact_state: bool,
    pub no_hardware_baseline: bool,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Hybrid,
            rho_max: 100.0,
            e_ref_joules: 1e-3,
            kappa: 10.0,
            compact_state: false,
            no_hardware_baseline: false,
        }
    }
}

/// PPO hyperparameters (shipped defaults follow the reference setup).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoSection {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub clip_epsilon: f64,
    pub entropy_coeff: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoSection {
    fn default() -> Self {
        let d = PpoConfig::default();
        Self {
            actor_lr: d.actor_lr,
            critic_lr: d.critic_lr,
            clip_epsilon: d.clip_epsilon,
            entropy_coeff: d.entropy_coeff,
            gamma: d.gamma,
            gae_lambda: d.gae_lambda,
            epochs: d.epochs,
            minibatch: d.minibatch,
            normalize_advantages: d.normalize_advantages,
        }
    }
}

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Energy-station transmit power; values in dBm.
    EsPower,
    /// RIS element count; values must be positive integers.
    NElements,
    /// X-coordinate of the RIS and EHS (both slide together); meters.
    RisDistance,
    /// Per-user QoS target; bits/Hz.
    QMin,
}

impl SweepAxis {
    /// Stable lowercase identifier used in CSV columns and directory
    /// names.
    pub fn slug(&self) -> &'static str {
        match self {
            SweepAxis::EsPower => "es_power",
            SweepAxis::NElements => "n_elements",
            SweepAxis::RisDistance => "ris_distance",
            SweepAxis::QMin => "q_min",
        }
    }
}

/// Sweep protocol: the axis, its values, and the held-out evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: SweepAxis,
    /// Axis values (dBm for es-power, count for n-elements, meters for
    /// ris-distance, bits/Hz for q-min).
    pub values: Vec<f64>,
    /// Held-out channel draws per evaluation point.
    pub eval_draws: usize,
    /// Seed of the held-out set (independent of training seeds so every
    /// method sees the same draws).
    pub eval_seed: u64,
    /// Train a fresh policy per axis value; when false, checkpoints must
    /// already exist in the output tree.
    pub train_fresh: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::EsPower,
            values: vec![30.0, 35.0, 40.0, 45.0, 50.0],
            eval_draws: 100,
            eval_seed: 424242,
            train_fresh: true,
        }
    }
}

/// Enumeration-oracle protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Sweep one shared amplification bucket instead of per-element
    /// buckets.
    pub uniform_rho: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { uniform_rho: true }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config from TOML text (`origin` names the
    /// source in error messages).
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source: Box::new(source),
        })?;
        cfg.validate().map_err(|message| ConfigError::Invalid {
            path: origin.to_string(),
            message,
        })?;
        Ok(cfg)
    }

    /// Canonical TOML serialization (defaults materialized).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    /// FNV-1a hash binding a checkpoint to this config and seed.
    pub fn config_hash(&self, seed: u64) -> u64 {
        let canonical = format!("{}\nseed = {seed}\n", self.to_toml_string());
        fnv1a_64(canonical.as_bytes())
    }

    /// Cross-field validation beyond what the schema enforces. Returns a
    /// human-readable message on failure (the caller attaches the file
    /// path).
    pub fn validate(&self) -> Result<(), String> {
        let e = &self.experiment;
        if e.iterations == 0 {
            return Err("experiment.iterations must be >= 1".into());
        }
        if e.buffer_size == 0 {
            return Err("experiment.buffer_size must be >= 1".into());
        }
        if e.hidden_width == 0 {
            return Err("experiment.hidden_width must be >= 1".into());
        }
        if e.seeds.is_empty() {
            return Err("experiment.seeds must list at least one seed".into());
        }
        let mut sorted = e.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != e.seeds.len() {
            return Err("experiment.seeds must be distinct".into());
        }
        if self.ppo.minibatch > e.buffer_size {
            return Err(format!(
                "ppo.minibatch ({}) exceeds experiment.buffer_size ({})",
                self.ppo.minibatch, e.buffer_size
            ));
        }
        self.ppo_config().validate().map_err(|err| format!("ppo: {err}"))?;
        if self.sweep.values.is_empty() {
            return Err("sweep.values must list at least one value".into());
        }
        if self.sweep.eval_draws == 0 {
            return Err("sweep.eval_draws must be >= 1".into());
        }
        if self.sweep.axis == SweepAxis::NElements {
            for &v in &self.sweep.values {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(format!(
                        "sweep axis n-elements needs positive integer values, got {v}"
                    ));
                }
            }
        }
        // Building with a throwaway stream exercises every geometry,
        // link, and system invariant in one place.
        let mut probe = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let env = self.build_env(&mut probe).map_err(|err| err.to_string())?;
        env.validate().map_err(|err| err.to_string())?;
        Ok(())
    }

    /// Assembles the SI-unit environment config. The random stream is
    /// consumed only when `geometry.random_user_angles` is set.
    pub fn build_env<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnvConfig, ConfigError> {
        let g = &self.geometry;
        if g.users == 0 {
            return Err(ConfigError::Invalid {
                path: "<config>".into(),
                message: "geometry.users must be >= 1".into(),
            });
        }
        if !(g.user_circle_radius.is_finite() && g.user_circle_radius > 0.0) {
            return Err(ConfigError::Invalid {
                path: "<config>".into(),
                message: format!(
                    "geometry.user_circle_radius must be finite and > 0, got {}",
                    g.user_circle_radius
                ),
            });
        }
        let user_pos = if g.random_user_angles {
            users_on_circle_random(g.users, g.user_circle_radius, rng)
        } else {
            users_on_circle(g.users, g.user_circle_radius)
        };
        let s = &self.system;
        Ok(EnvConfig {
            geometry: Geometry {
                bs_pos: g.bs,
                ris_pos: g.ris,
                ehs_pos: g.ehs,
                es_pos: g.es,
                user_pos,
                ris_elements: g.ris_elements,
                ehs_elements: g.ehs_elements,
                ris_axis: g.ris_axis,
                ehs_axis: g.ehs_axis,
            },
            links: LinkSet {
                ub: self.links.ub.into(),
                ur: self.links.ur.into(),
                rb: self.links.rb.into(),
                es: self.links.es.into(),
            },
            params: SystemParams {
                sigma_b_sq: dbm_to_watts(s.bs_noise_dbm),
                sigma_f_sq: dbm_to_watts(s.amp_noise_dbm),
                p_c: dbm_to_watts(s.reflect_circuit_dbm),
                p_dc: dbm_to_watts(s.amp_bias_dbm),
                p_b: s.harvest_circuit_watts,
                xi: s.amp_inefficiency,
                eta_eh: s.harvest_efficiency,
                p_s: dbm_to_watts(s.es_power_dbm),
                frame_seconds: s.frame_seconds,
                q_min: s.q_min,
                p_max: s.p_max_watts,
            },
            rho_max: self.env.rho_max,
            e_ref: self.env.e_ref_joules,
            kappa: self.env.kappa,
            scheme: self.env.scheme,
            compact_state: self.env.compact_state,
            no_hardware_baseline: self.env.no_hardware_baseline,
        })
    }

    /// The PPO config for the agent layer.
    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            clip_epsilon: self.ppo.clip_epsilon,
            entropy_coeff: self.ppo.entropy_coeff,
            actor_lr: self.ppo.actor_lr,
            critic_lr: self.ppo.critic_lr,
            gamma: self.ppo.gamma,
            gae_lambda: self.ppo.gae_lambda,
            epochs: self.ppo.epochs,
            minibatch: self.ppo.minibatch,
            normalize_advantages: self.ppo.normalize_advantages,
        }
    }

    /// A copy of this config with the sweep axis pinned to one value.
    pub fn with_axis_value(&self, axis: SweepAxis, value: f64) -> Result<Self, ConfigError> {
        let mut out = self.clone();
        match axis {
            SweepAxis::EsPower => out.system.es_power_dbm = value,
            SweepAxis::NElements => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(ConfigError::Invalid {
                        path: "<config>".into(),
                        message: format!("n-elements value must be a positive integer, got {value}"),
                    });
                }
                out.geometry.ris_elements = value as usize;
            }
            SweepAxis::RisDistance => {
                out.geometry.ris[0] = value;
                out.geometry.ehs[0] = value;
            }
            SweepAxis::QMin => out.system.q_min = value,
        }
        Ok(out)
    }
}

/// Loads an experiment config from a TOML file.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text, &path.display().to_string())
}

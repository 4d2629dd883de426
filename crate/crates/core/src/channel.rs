//! Network geometry and fading channel generation.
//!
//! Four links matter: user → base station (`ub`, the direct link), user →
//! RIS (`ur`), RIS → base station (`rb`), and energy station → harvesting
//! surface (`es`). Large-scale attenuation follows the standard distance
//! power law `gain = 10^(ref_loss_db / 10) · d^(-exponent)`, i.e. a
//! reference loss at 1 m scaled by the path-loss exponent of the link.
//!
//! Small-scale fading:
//!
//! * the direct link is Rayleigh: `h = sqrt(gain) · w` with `w ~ CN(0, 1)`;
//! * every RIS/EHS link is Rician with a uniform-linear-array
//!   steering-vector line-of-sight component:
//!   `h = sqrt(gain) · ( sqrt(K/(K+1)) · a(φ) + sqrt(1/(K+1)) · w )`,
//!   where `a(φ)[k] = exp(-i·2π·spacing_ratio·k·φ)` and `φ` is the cosine
//!   of the angle between the array axis and the direction to the link
//!   endpoint.
//!
//! All sampling takes the random stream as an explicit argument and draws
//! in a fixed documented order, so a given seed reproduces a channel set
//! bit for bit.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from geometry validation and channel sampling.
#[derive(Debug, Error)]
pub enum ChannelError {
    /// Path-loss distance was zero, negative, or non-finite.
    #[error("distance must be positive and finite, got {0}")]
    InvalidDistance(f64),
    /// An array axis with zero length cannot define a steering angle.
    #[error("array axis must have nonzero length")]
    ZeroAxis,
    /// The link endpoint coincides with the array position.
    #[error("link endpoint coincides with the array position")]
    CoincidentEndpoint,
    /// A `LinkParams` field is out of range.
    #[error("invalid link parameters: {0}")]
    InvalidLink(String),
    /// A `Geometry` field is out of range.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
}

/// Node positions and array sizes, in meters / element counts.
///
/// Invariants (checked by [`Geometry::validate`]): at least one user and one
/// element on each surface, all coordinates finite, nonzero array axes, and
/// strictly positive distance on every modeled link (user–BS, user–RIS,
/// RIS–BS, ES–EHS).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Geometry {
    /// Base-station position.
    pub bs_pos: [f64; 3],
    /// RIS array position (reference element).
    pub ris_pos: [f64; 3],
    /// Energy-harvesting surface position (reference element).
    pub ehs_pos: [f64; 3],
    /// Energy-station position.
    pub es_pos: [f64; 3],
    /// One position per user.
    pub user_pos: Vec<[f64; 3]>,
    /// Number of RIS elements (`N`).
    pub ris_elements: usize,
    /// Number of EHS elements (`M`).
    pub ehs_elements: usize,
    /// ULA axis of the RIS array (need not be normalized).
    pub ris_axis: [f64; 3],
    /// ULA axis of the EHS array (need not be normalized).
    pub ehs_axis: [f64; 3],
}

/// Euclidean distance between two points.
pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `count` user positions at equal angular spacing on the circle of the
/// given radius in the `z = 0` plane, centered at the origin. User `j`
/// sits at angle `2πj/count`.
pub fn users_on_circle(count: usize, radius: f64) -> Vec<[f64; 3]> {
    assert!(radius.is_finite() && radius > 0.0, "radius must be finite and > 0");
    (0..count)
        .map(|j| {
            let ang = 2.0 * std::f64::consts::PI * (j as f64) / (count as f64);
            [radius * ang.cos(), radius * ang.sin(), 0.0]
        })
        .collect()
}

/// `count` user positions at independent uniform-random angles on the
/// circle of the given radius in the `z = 0` plane, centered at the origin.
pub fn users_on_circle_random<R: Rng + ?Sized>(
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Vec<[f64; 3]> {
    assert!(radius.is_finite() && radius > 0.0, "radius must be finite and > 0");
    (0..count)
        .map(|_| {
            let ang = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            [radius * ang.cos(), radius * ang.sin(), 0.0]
        })
        .collect()
}

impl Geometry {
    /// Number of users `J`.
    pub fn n_users(&self) -> usize {
        self.user_pos.len()
    }

    /// Checks the structural invariants listed on the type.
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.ris_elements == 0 {
            return Err(ChannelError::InvalidGeometry("ris_elements must be >= 1".into()));
        }
        if self.ehs_elements == 0 {
            return Err(ChannelError::InvalidGeometry("ehs_elements must be >= 1".into()));
        }
        if self.user_pos.is_empty() {
            return Err(ChannelError::InvalidGeometry("at least one user required".into()));
        }
        let all_points = self
            .user_pos
            .iter()
            .chain([&self.bs_pos, &self.ris_pos, &self.ehs_pos, &self.es_pos]);
        for p in all_points {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(ChannelError::InvalidGeometry("non-finite coordinate".into()));
            }
        }
        for axis in [self.ris_axis, self.ehs_axis] {
            if norm3(axis) <= 0.0 || !axis.iter().all(|c| c.is_finite()) {
                return Err(ChannelError::ZeroAxis);
            }
        }
        for (j, u) in self.user_pos.iter().enumerate() {
            if distance(*u, self.bs_pos) <= 0.0 {
                return Err(ChannelError::InvalidGeometry(format!("user {j} coincides with BS")));
            }
            if distance(*u, self.ris_pos) <= 0.0 {
                return Err(ChannelError::InvalidGeometry(format!("user {j} coincides with RIS")));
            }
        }
        if distance(self.ris_pos, self.bs_pos) <= 0.0 {
            return Err(ChannelError::InvalidGeometry("RIS coincides with BS".into()));
        }
        if distance(self.es_pos, self.ehs_pos) <= 0.0 {
            return Err(ChannelError::InvalidGeometry("ES coincides with EHS".into()));
        }
        Ok(())
    }
}

/// Large-scale and small-scale parameters of one link.
///
/// Invariants: `exponent > 0`, `rician_k >= 0`, `spacing_ratio > 0`, all
/// fields finite. `ref_loss_db` is the gain in dB at 1 m (typically
/// negative).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkParams {
    /// Reference gain at 1 m in dB.
    pub ref_loss_db: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// Rician K-factor (0 = pure Rayleigh scattering around the array).
    pub rician_k: f64,
    /// Element spacing over carrier wavelength (`d/λ`).
    pub spacing_ratio: f64,
}

impl LinkParams {
    /// Checks the invariants listed on the type.
    pub fn validate(&self) -> Result<(), ChannelError> {
        let fields = [self.ref_loss_db, self.exponent, self.rician_k, self.spacing_ratio];
        if !fields.iter().all(|f| f.is_finite()) {
            return Err(ChannelError::InvalidLink("non-finite field".into()));
        }
        if self.exponent <= 0.0 {
            return Err(ChannelError::InvalidLink(format!(
                "exponent must be > 0, got {}",
                self.exponent
            )));
        }
        if self.rician_k < 0.0 {
            return Err(ChannelError::InvalidLink(format!(
                "rician_k must be >= 0, got {}",
                self.rician_k
            )));
        }
        if self.spacing_ratio <= 0.0 {
            return Err(ChannelError::InvalidLink(format!(
                "spacing_ratio must be > 0, got {}",
                self.spacing_ratio
            )));
        }
        Ok(())
    }
}

/// Per-link parameters for the four modeled links.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSet {
    /// User → base station (direct). Sampled as Rayleigh; `rician_k` must be 0.
    pub ub: LinkParams,
    /// User → RIS.
    pub ur: LinkParams,
    /// RIS → base station.
    pub rb: LinkParams,
    /// Energy station → energy-harvesting surface.
    pub es: LinkParams,
}

impl LinkSet {
    /// Checks every link plus the direct-link Rayleigh convention.
    pub fn validate(&self) -> Result<(), ChannelError> {
        self.ub.validate()?;
        self.ur.validate()?;
        self.rb.validate()?;
        self.es.validate()?;
        if self.ub.rician_k != 0.0 {
            return Err(ChannelError::InvalidLink(
                "direct link is Rayleigh by convention; set ub.rician_k = 0".into(),
            ));
        }
        Ok(())
    }
}

/// One fading realization of every link in the network.
///
/// Shapes: `h_ub` has one entry per user, `h_ur` is user-major `J × N`,
/// `h_rb` has `N` entries, `h_es` has `M` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct user → BS coefficients, one per user.
    pub h_ub: Vec<Complex64>,
    /// User → RIS coefficients, `h_ur[j][n]`.
    pub h_ur: Vec<Vec<Complex64>>,
    /// RIS → BS coefficients, one per element.
    pub h_rb: Vec<Complex64>,
    /// ES → EHS coefficients, one per harvesting element.
    pub h_es: Vec<Complex64>,
}

impl ChannelSet {
    /// Number of users.
    pub fn n_users(&self) -> usize {
        self.h_ub.len()
    }

    /// Number of RIS elements.
    pub fn n_elements(&self) -> usize {
        self.h_rb.len()
    }

    /// Squared norm of the ES → EHS vector, `‖h_es‖²` — the quantity that
    /// scales the harvested energy budget.
    pub fn h_es_norm_sq(&self) -> f64 {
        self.h_es.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// Linear power gain at `distance_m` meters:
/// `10^(ref_loss_db / 10) · distance_m^(-exponent)`.
///
/// Errors if the distance is not strictly positive and finite.
pub fn path_loss(ref_loss_db: f64, distance_m: f64, exponent: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(ChannelError::InvalidDistance(distance_m));
    }
    Ok(10f64.powf(ref_loss_db / 10.0) * distance_m.powf(-exponent))
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Uniform-linear-array steering vector: element `k` (0-indexed) equals
/// `exp(-i · 2π · spacing_ratio · k · angle_param)`. Every entry has unit
/// modulus.
///
/// Panics if `count == 0` or a parameter is non-finite (programmer error).
pub fn steering_vector(count: usize, spacing_ratio: f64, angle_param: f64) -> Vec<Complex64> {
    assert!(count >= 1, "steering vector needs at least one element");
    assert!(
        spacing_ratio.is_finite() && angle_param.is_finite(),
        "steering parameters must be finite"
    );
    (0..count)
        .map(|k| {
            let phase = -2.0 * std::f64::consts::PI * spacing_ratio * (k as f64) * angle_param;
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

/// Cosine of the angle between `array_axis` and the direction from
/// `array_pos` to `endpoint_pos` — the `angle_param` fed to
/// [`steering_vector`]. Lies in `[-1, 1]`.
///
/// Errors on a zero-length axis or when the endpoint coincides with the
/// array position.
pub fn angle_param_from_geometry(
    array_pos: [f64; 3],
    array_axis: [f64; 3],
    endpoint_pos: [f64; 3],
) -> Result<f64, ChannelError> {
    let axis_norm = norm3(array_axis);
    if axis_norm <= 0.0 || !axis_norm.is_finite() {
        return Err(ChannelError::ZeroAxis);
    }
    let dir = [
        endpoint_pos[0] - array_pos[0],
        endpoint_pos[1] - array_pos[1],
        endpoint_pos[2] - array_pos[2],
    ];
    let dir_norm = norm3(dir);
    if dir_norm <= 0.0 || !dir_norm.is_finite() {
        return Err(ChannelError::CoincidentEndpoint);
    }
    let dot = array_axis[0] * dir[0] + array_axis[1] * dir[1] + array_axis[2] * dir[2];
    // Clamp to guard against round-off pushing |cos| infinitesimally past 1.
    Ok((dot / (axis_norm * dir_norm)).clamp(-1.0, 1.0))
}

/// One complex draw `w ~ CN(0, 1)`: real and imaginary parts independent
/// `N(0, 1/2)`.
fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rayleigh draw with average power `gain`: `sqrt(gain) · w`, `w ~ CN(0,1)`,
/// so `E[|h|²] = gain`. `gain = 0` yields exactly zero.
///
/// Panics if `gain` is negative or non-finite (programmer error).
pub fn sample_rayleigh<R: Rng + ?Sized>(gain: f64, rng: &mut R) -> Complex64 {
    assert!(gain >= 0.0 && gain.is_finite(), "gain must be finite and >= 0");
    standard_complex_normal(rng) * gain.sqrt()
}

/// Rician draw with average per-entry power `gain` around the line-of-sight
/// vector `los` (entries of unit modulus):
/// `sqrt(gain) · ( sqrt(K/(K+1)) · los + sqrt(1/(K+1)) · w )` with
/// `w_i ~ CN(0,1)` i.i.d. `K = 0` reduces to pure scattering; `K → ∞`
/// approaches the deterministic LoS component.
///
/// Panics if `gain < 0`, `rician_k < 0`, or either is non-finite.
pub fn sample_rician<R: Rng + ?Sized>(
    gain: f64,
    rician_k: f64,
    los: &[Complex64],
    rng: &mut R,
) -> Vec<Complex64> {
    assert!(gain >= 0.0 && gain.is_finite(), "gain must be finite and >= 0");
    assert!(rician_k >= 0.0 && rician_k.is_finite(), "rician_k must be finite and >= 0");
    let amp = gain.sqrt();
    let los_scale = (rician_k / (rician_k + 1.0)).sqrt();
    let nlos_scale = (1.0 / (rician_k + 1.0)).sqrt();
    los.iter()
        .map(|a| amp * (los_scale * a + nlos_scale * standard_complex_normal(rng)))
        .collect()
}

/// Draws one [`ChannelSet`] for the given geometry and link parameters.
///
/// The random stream is consumed in a fixed order — `h_ub` for users
/// `0..J`, then each user's `h_ur` row, then `h_rb`, then `h_es` — so equal
/// seeds produce bit-identical channel sets. Changing this order is a
/// breaking change for seed reproducibility.
pub fn sample_channel_set<R: Rng + ?Sized>(
    geometry: &Geometry,
    links: &LinkSet,
    rng: &mut R,
) -> Result<ChannelSet, ChannelError> {
    geometry.validate()?;
    links.validate()?;

    let n = geometry.ris_elements;
    let m = geometry.ehs_elements;

    let mut h_ub = Vec::with_capacity(geometry.n_users());
    for user in &geometry.user_pos {
        let gain = path_loss(
            links.ub.ref_loss_db,
            distance(*user, geometry.bs_pos),
            links.ub.exponent,
        )?;
        h_ub.push(sample_rayleigh(gain, rng));
    }

    let mut h_ur = Vec::with_capacity(geometry.n_users());
    for user in &geometry.user_pos {
        let gain = path_loss(
            links.ur.ref_loss_db,
            distance(*user, geometry.ris_pos),
            links.ur.exponent,
        )?;
        let phi = angle_param_from_geometry(geometry.ris_pos, geometry.ris_axis, *user)?;
        let los = steering_vector(n, links.ur.spacing_ratio, phi);
        h_ur.push(sample_rician(gain, links.ur.rician_k, &los, rng));
    }

    let gain_rb = path_loss(
        links.rb.ref_loss_db,
        distance(geometry.ris_pos, geometry.bs_pos),
        links.rb.exponent,
    )?;
    let phi_rb = angle_param_from_geometry(geometry.ris_pos, geometry.ris_axis, geometry.bs_pos)?;
    let los_rb = steering_vector(n, links.rb.spacing_ratio, phi_rb);
    let h_rb = sample_rician(gain_rb, links.rb.rician_k, &los_rb, rng);

    let gain_es = path_loss(
        links.es.ref_loss_db,
        distance(geometry.ehs_pos, geometry.es_pos),
        links.es.exponent,
    )?;
    let phi_es = angle_param_from_geometry(geometry.ehs_pos, geometry.ehs_axis, geometry.es_pos)?;
    let los_es = steering_vector(m, links.es.spacing_ratio, phi_es);
    let h_es = sample_rician(gain_es, links.es.rician_k, &los_es, rng);

    Ok(ChannelSet { h_ub, h_ur, h_rb, h_es })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_geometry(j: usize, n: usize, m: usize) -> Geometry {
        let user_pos = (0..j)
            .map(|i| {
                let ang = 2.0 * std::f64::consts::PI * (i as f64) / (j as f64);
                [0.5 * ang.cos(), 0.5 * ang.sin(), 0.0]
            })
            .collect();
        Geometry {
            bs_pos: [20.0, 0.0, 0.0],
            ris_pos: [5.0, 3.0, 0.0],
            ehs_pos: [5.0, 3.0, 5.0],
            es_pos: [5.0, -2.0, 5.0],
            user_pos,
            ris_elements: n,
            ehs_elements: m,
            ris_axis: [0.0, 1.0, 0.0],
            ehs_axis: [0.0, 1.0, 0.0],
        }
    }

    fn test_links() -> LinkSet {
        LinkSet {
            ub: LinkParams { ref_loss_db: -30.0, exponent: 3.2, rician_k: 0.0, spacing_ratio: 0.5 },
            ur: LinkParams { ref_loss_db: -20.0, exponent: 2.2, rician_k: 2.0, spacing_ratio: 0.5 },
            rb: LinkParams { ref_loss_db: -20.0, exponent: 2.2, rician_k: 2.0, spacing_ratio: 0.5 },
            es: LinkParams { ref_loss_db: -20.0, exponent: 2.2, rician_k: 2.0, spacing_ratio: 0.5 },
        }
    }

    #[test]
    fn path_loss_reference_distance() {
        // 10^(-2) * 1^(-2.2) = 0.01 exactly.
        assert_eq!(path_loss(-20.0, 1.0, 2.2).unwrap(), 0.01);
    }

    #[test]
    fn path_loss_known_values() {
        // High-precision references computed independently with 30-digit
        // arithmetic: 10^(-3)·20^(-3.2) and 10^(-2)·10^(-2.2).
        assert_relative_eq!(
            path_loss(-30.0, 20.0, 3.2).unwrap(),
            6.86600339566323e-8,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            path_loss(-20.0, 10.0, 2.2).unwrap(),
            6.30957344480193e-5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn path_loss_rejects_bad_distance() {
        assert!(path_loss(-20.0, 0.0, 2.2).is_err());
        assert!(path_loss(-20.0, -1.0, 2.2).is_err());
        assert!(path_loss(-20.0, f64::NAN, 2.2).is_err());
        assert!(path_loss(-20.0, f64::INFINITY, 2.2).is_err());
    }

    #[test]
    fn steering_vector_broadside_is_all_ones() {
        let v = steering_vector(3, 0.5, 0.0);
        for e in v {
            assert_abs_diff_eq!(e.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_vector_half_wavelength_endfire() {
        // spacing 0.5, φ = 1: phases 0, -π, -2π → [1, -1, 1].
        let v = steering_vector(3, 0.5, 1.0);
        assert_abs_diff_eq!(v[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[2].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_vector_quarter_spacing() {
        // spacing 0.25, φ = 1: second element exp(-iπ/2) = -i.
        let v = steering_vector(2, 0.25, 1.0);
        assert_abs_diff_eq!(v[1].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1].im, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_vector_unit_modulus() {
        for &(count, sr, phi) in
            &[(1usize, 0.5, 0.3), (7, 0.25, -0.9), (16, 0.5, 1.0), (5, 1.5, 0.123)]
        {
            for e in steering_vector(count, sr, phi) {
                assert_abs_diff_eq!(e.norm(), 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn angle_param_cardinal_directions() {
        let pos = [1.0, 2.0, 3.0];
        let axis = [0.0, 2.0, 0.0]; // unnormalized on purpose
        // Collinear with the axis → 1.
        assert_abs_diff_eq!(
            angle_param_from_geometry(pos, axis, [1.0, 7.0, 3.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // Orthogonal → 0.
        assert_abs_diff_eq!(
            angle_param_from_geometry(pos, axis, [4.0, 2.0, 3.0]).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        // Anti-collinear → -1.
        assert_abs_diff_eq!(
            angle_param_from_geometry(pos, axis, [1.0, -5.0, 3.0]).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn angle_param_rejects_degenerate_inputs() {
        assert!(matches!(
            angle_param_from_geometry([0.0; 3], [0.0; 3], [1.0, 0.0, 0.0]),
            Err(ChannelError::ZeroAxis)
        ));
        assert!(matches!(
            angle_param_from_geometry([1.0, 1.0, 1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]),
            Err(ChannelError::CoincidentEndpoint)
        ));
    }

    #[test]
    fn rayleigh_zero_gain_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_rayleigh(0.0, &mut rng);
        assert_eq!(h, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rayleigh_power_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &gain in &[1.0, 4.0] {
            let n = 100_000;
            let mean_power: f64 =
                (0..n).map(|_| sample_rayleigh(gain, &mut rng).norm_sqr()).sum::<f64>() / n as f64;
            assert_relative_eq!(mean_power, gain, max_relative = 0.03);
        }
    }

    #[test]
    fn rician_large_k_approaches_los() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let los = steering_vector(8, 0.5, 0.37);
        let h = sample_rician(1.0, 1e9, &los, &mut rng);
        for (hi, ai) in h.iter().zip(&los) {
            assert!((hi - ai).norm() < 1e-4, "entry {hi} vs LoS {ai}");
        }
    }

    #[test]
    fn rician_k0_power_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let los = steering_vector(4, 0.5, 0.2);
        let gain = 2.5;
        let n = 25_000; // 4 entries each → 1e5 scalar draws
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_rician(gain, 0.0, &los, &mut rng)
                .iter()
                .map(|h| h.norm_sqr())
                .sum::<f64>();
        }
        let per_entry = sum / (n as f64 * 4.0);
        assert_relative_eq!(per_entry, gain, max_relative = 0.03);
    }

    #[test]
    fn rician_k2_mean_and_power_split() {
        // |E[h_i]| = sqrt(gain·K/(K+1)) and E[|h_i|²] = gain.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gain = 1.7;
        let k = 2.0;
        let los = steering_vector(4, 0.5, -0.4);
        let n = 50_000;
        let mut mean = vec![Complex64::new(0.0, 0.0); 4];
        let mut power = 0.0;
        for _ in 0..n {
            let h = sample_rician(gain, k, &los, &mut rng);
            for (acc, hi) in mean.iter_mut().zip(&h) {
                *acc += hi;
            }
            power += h.iter().map(|hi| hi.norm_sqr()).sum::<f64>();
        }
        let expected_mean_mag = (gain * k / (k + 1.0)).sqrt();
        for acc in &mean {
            assert_relative_eq!((acc / n as f64).norm(), expected_mean_mag, max_relative = 0.05);
        }
        assert_relative_eq!(power / (n as f64 * 4.0), gain, max_relative = 0.03);
    }

    #[test]
    fn channel_set_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = test_geometry(2, 20, 20);
        let ch = sample_channel_set(&geom, &test_links(), &mut rng).unwrap();
        assert_eq!(ch.h_ub.len(), 2);
        assert_eq!(ch.h_ur.len(), 2);
        assert!(ch.h_ur.iter().all(|row| row.len() == 20));
        assert_eq!(ch.h_rb.len(), 20);
        assert_eq!(ch.h_es.len(), 20);
    }

    #[test]
    fn channel_set_seed_determinism() {
        let geom = test_geometry(2, 8, 6);
        let links = test_links();
        let mut rng1 = ChaCha8Rng::seed_from_u64(12345);
        let mut rng2 = ChaCha8Rng::seed_from_u64(12345);
        let a = sample_channel_set(&geom, &links, &mut rng1).unwrap();
        let b = sample_channel_set(&geom, &links, &mut rng2).unwrap();
        assert_eq!(a, b, "equal seeds must reproduce channels bit for bit");
    }

    #[test]
    fn channel_set_distance_power_scaling() {
        // Two single-user geometries with BS at 20 m vs 5 m: the ratio of
        // mean direct-link powers must follow (20/5)^(-3.2).
        let links = test_links();
        let mut geom_far = test_geometry(1, 2, 2);
        geom_far.user_pos = vec![[0.0, 0.0, 0.0]];
        geom_far.bs_pos = [20.0, 0.0, 0.0];
        let mut geom_near = geom_far.clone();
        geom_near.bs_pos = [5.0, 0.0, 0.0];

        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut p_far = 0.0;
        let mut p_near = 0.0;
        for _ in 0..n {
            p_far += sample_channel_set(&geom_far, &links, &mut rng).unwrap().h_ub[0].norm_sqr();
            p_near += sample_channel_set(&geom_near, &links, &mut rng).unwrap().h_ub[0].norm_sqr();
        }
        let expected = 4.0f64.powf(-3.2);
        assert_relative_eq!(p_far / p_near, expected, max_relative = 0.05);
    }

    #[test]
    fn geometry_validation_rejects_degenerate() {
        let mut g = test_geometry(1, 4, 4);
        g.user_pos[0] = g.bs_pos;
        assert!(g.validate().is_err());

        let mut g = test_geometry(1, 4, 4);
        g.ris_elements = 0;
        assert!(g.validate().is_err());

        let mut g = test_geometry(1, 4, 4);
        g.ris_axis = [0.0; 3];
        assert!(g.validate().is_err());
    }

    #[test]
    fn link_validation() {
        let mut l = test_links();
        l.ur.exponent = -1.0;
        assert!(l.validate().is_err());

        let mut l = test_links();
        l.ub.rician_k = 1.0; // direct link must stay Rayleigh
        assert!(l.validate().is_err());

        let mut l = test_links();
        l.rb.spacing_ratio = 0.0;
        assert!(l.validate().is_err());

        assert!(test_links().validate().is_ok());
    }

    #[test]
    fn h_es_norm_sq_matches_manual_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = sample_channel_set(&test_geometry(1, 4, 6), &test_links(), &mut rng).unwrap();
        let manual: f64 = ch.h_es.iter().map(|h| h.re * h.re + h.im * h.im).sum();
        assert_relative_eq!(ch.h_es_norm_sq(), manual, max_relative = 1e-15);
    }

    #[test]
    fn users_on_circle_spacing_and_radius() {
        let pos = users_on_circle(4, 0.5);
        assert_eq!(pos.len(), 4);
        assert_abs_diff_eq!(pos[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pos[1][1], 0.5, epsilon = 1e-15);
        for p in &pos {
            assert_abs_diff_eq!(p[0] * p[0] + p[1] * p[1], 0.25, epsilon = 1e-15);
            assert_eq!(p[2], 0.0);
        }
    }

    #[test]
    fn random_users_stay_on_circle_and_follow_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let pa = users_on_circle_random(8, 0.5, &mut a);
        let pb = users_on_circle_random(8, 0.5, &mut b);
        assert_eq!(pa, pb);
        for p in &pa {
            assert_abs_diff_eq!(p[0] * p[0] + p[1] * p[1], 0.25, epsilon = 1e-12);
        }
    }
}

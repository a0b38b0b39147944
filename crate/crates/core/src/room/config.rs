use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{AecError, Result};

pub type Point = [f64; 3];

/// Sampled shoebox room with microphone, loudspeaker and talker positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    pub dimensions: Point,
    pub mic_position: Point,
    pub loudspeaker_position: Point,
    pub target_position: Point,
    pub absorption: f64,
    pub max_image_order: usize,
    pub speed_of_sound: f64,
}

impl RoomConfig {
    pub fn target_distance(&self) -> f64 {
        distance(&self.mic_position, &self.target_position)
    }

    /// Polar angle of the talker seen from the microphone, in degrees from
    /// the upward vertical; 90° is level with the microphone.
    pub fn target_elevation_deg(&self) -> f64 {
        elevation_deg(&self.mic_position, &self.target_position)
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |p: &Point| (0..3).all(|i| p[i] > 0.0 && p[i] < self.dimensions[i]);
        if self.dimensions.iter().any(|d| !(*d > 0.0)) {
            return Err(AecError::InvalidConfig("room dimensions must be positive".into()));
        }
        for (name, p) in [
            ("microphone", &self.mic_position),
            ("loudspeaker", &self.loudspeaker_position),
            ("target", &self.target_position),
        ] {
            if !inside(p) {
                return Err(AecError::InvalidConfig(format!("{name} position {p:?} is outside the room")));
            }
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(AecError::InvalidConfig(format!(
                "absorption must be in (0, 1], got {}",
                self.absorption
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(AecError::InvalidConfig("speed of sound must be positive".into()));
        }
        Ok(())
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn elevation_deg(from: &Point, to: &Point) -> f64 {
    let d = distance(from, to);
    ((to[2] - from[2]) / d).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Bounds the room sampler has to respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConstraints {
    pub min_distance: f64,
    pub max_distance: f64,
    pub mean_distance: f64,
    /// Spread of the underlying normal in log-distance.
    pub log_sigma: f64,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub width_range: (f64, f64),
    pub depth_range: (f64, f64),
    pub height_range: (f64, f64),
    pub absorption_range: (f64, f64),
    pub wall_margin: f64,
    /// Loudspeaker position relative to the microphone.
    pub loudspeaker_offset: Point,
    pub max_image_order: usize,
    pub speed_of_sound: f64,
}

impl Default for RoomConstraints {
    fn default() -> Self {
        RoomConstraints {
            min_distance: 0.25,
            max_distance: 8.0,
            mean_distance: 2.5,
            log_sigma: 0.8,
            min_elevation_deg: 45.0,
            max_elevation_deg: 135.0,
            width_range: (2.5, 10.0),
            depth_range: (2.5, 10.0),
            height_range: (2.2, 4.5),
            absorption_range: (0.2, 0.8),
            wall_margin: 0.1,
            loudspeaker_offset: [0.0, 0.0, -0.05],
            max_image_order: 10,
            speed_of_sound: 343.0,
        }
    }
}

const MAX_PLACEMENT_TRIES: usize = 20_000;

impl RoomConstraints {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, lo: f64, hi: f64| {
            if lo <= hi && lo.is_finite() && hi.is_finite() {
                Ok(())
            } else {
                Err(AecError::Infeasible(format!("{name}: min {lo} exceeds max {hi}")))
            }
        };
        ordered("distance", self.min_distance, self.max_distance)?;
        ordered("elevation", self.min_elevation_deg, self.max_elevation_deg)?;
        ordered("width", self.width_range.0, self.width_range.1)?;
        ordered("depth", self.depth_range.0, self.depth_range.1)?;
        ordered("height", self.height_range.0, self.height_range.1)?;
        ordered("absorption", self.absorption_range.0, self.absorption_range.1)?;
        if self.min_elevation_deg < 0.0 || self.max_elevation_deg > 180.0 {
            return Err(AecError::InvalidConfig(format!(
                "elevation bounds must lie in [0, 180] degrees, got [{}, {}]",
                self.min_elevation_deg, self.max_elevation_deg
            )));
        }
        if self.min_distance <= 0.0 {
            return Err(AecError::Infeasible("minimum distance must be positive".into()));
        }
        if !(self.mean_distance > self.min_distance && self.mean_distance < self.max_distance) {
            return Err(AecError::Infeasible(format!(
                "mean distance {} must lie strictly inside [{}, {}]",
                self.mean_distance, self.min_distance, self.max_distance
            )));
        }
        if !(self.absorption_range.0 > 0.0 && self.absorption_range.1 <= 1.0) {
            return Err(AecError::InvalidConfig("absorption range must lie in (0, 1]".into()));
        }
        let diagonal = (self.width_range.1.powi(2) + self.depth_range.1.powi(2) + self.height_range.1.powi(2)).sqrt();
        if self.min_distance + 2.0 * self.wall_margin >= diagonal {
            return Err(AecError::Infeasible(format!(
                "minimum distance {} does not fit in the largest room (diagonal {diagonal:.2} m)",
                self.min_distance
            )));
        }
        Ok(())
    }

    /// Location of the log-normal whose truncation to the distance bounds has
    /// the requested mean, found by bisection on the closed-form truncated mean.
    pub fn log_mu(&self) -> f64 {
        let (mut lo, mut hi) = (self.min_distance.ln() - 5.0, self.max_distance.ln() + 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if truncated_lognormal_mean(mid, self.log_sigma, self.min_distance, self.max_distance) < self.mean_distance {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Mean of a log-normal(mu, sigma) truncated to `[a, b]`.
pub fn truncated_lognormal_mean(mu: f64, sigma: f64, a: f64, b: f64) -> f64 {
    let n = Normal::standard();
    let za = (a.ln() - mu) / sigma;
    let zb = (b.ln() - mu) / sigma;
    let mass = n.cdf(zb) - n.cdf(za);
    if mass <= 0.0 {
        return if zb <= 0.0 { b } else { a };
    }
    (mu + 0.5 * sigma * sigma).exp() * (n.cdf(zb - sigma) - n.cdf(za - sigma)) / mass
}

/// Samples a room deterministically from `seed`.
///
/// The talker distance is drawn first from the truncated log-normal and is
/// never rejected; room size, microphone placement and direction are
/// re-drawn until that distance fits, so the distance distribution is
/// exactly the calibrated one.
pub fn sample_room_config(seed: u64, constraints: &RoomConstraints) -> Result<RoomConfig> {
    constraints.validate()?;
    let c = constraints;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::standard();
    let mu = c.log_mu();
    let (ua, ub) = (
        normal.cdf((c.min_distance.ln() - mu) / c.log_sigma),
        normal.cdf((c.max_distance.ln() - mu) / c.log_sigma),
    );
    let u = rng.random_range(ua..=ub).clamp(1e-300, 1.0 - 1e-16);
    let dist = (mu + c.log_sigma * normal.inverse_cdf(u)).exp().clamp(c.min_distance, c.max_distance);

    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let margin = c.wall_margin;
    for _ in 0..MAX_PLACEMENT_TRIES {
        let dims = [
            uniform(&mut rng, c.width_range),
            uniform(&mut rng, c.depth_range),
            uniform(&mut rng, c.height_range),
        ];
        let mut mic = [0.0; 3];
        for i in 0..3 {
            let lo = margin + c.loudspeaker_offset[i].abs();
            let hi = dims[i] - margin - c.loudspeaker_offset[i].abs();
            if lo >= hi {
                continue;
            }
            mic[i] = rng.random_range(lo..hi);
        }
        let speaker = [
            mic[0] + c.loudspeaker_offset[0],
            mic[1] + c.loudspeaker_offset[1],
            mic[2] + c.loudspeaker_offset[2],
        ];
        let theta = uniform(&mut rng, (c.min_elevation_deg, c.max_elevation_deg)).to_radians();
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let target = [
            mic[0] + dist * theta.sin() * phi.cos(),
            mic[1] + dist * theta.sin() * phi.sin(),
            mic[2] + dist * theta.cos(),
        ];
        let fits = |p: &Point| (0..3).all(|i| p[i] > margin && p[i] < dims[i] - margin);
        if fits(&mic) && fits(&speaker) && fits(&target) {
            let room = RoomConfig {
                dimensions: dims,
                mic_position: mic,
                loudspeaker_position: speaker,
                target_position: target,
                absorption: uniform(&mut rng, c.absorption_range),
                max_image_order: c.max_image_order,
                speed_of_sound: c.speed_of_sound,
            };
            room.validate()?;
            return Ok(room);
        }
    }
    Err(AecError::Infeasible(format!(
        "could not place a talker {dist:.2} m from the microphone within the room bounds"
    )))
}
